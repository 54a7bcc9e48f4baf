//! Central finite-difference gradient checking.
//!
//! The checker only ever calls the forward closure; analytic gradients come from a
//! single vector-Jacobian product with a random probe of the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scalar, Tape, Tensor, Var};
use crate::error::Result;

/// Per-input comparison of analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` per input.
    pub relative_errors: Vec<f64>,
    /// Number of elements perturbed per input.
    pub checked: Vec<usize>,
    /// Analytic and numeric gradients at the perturbed elements, per input.
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    /// Relative error of all checked elements taken as one vector.
    pub fn overall_relative_error(&self) -> f64 {
        let a: Vec<f64> = self.analytic.iter().flatten().copied().collect();
        let n: Vec<f64> = self.numeric.iter().flatten().copied().collect();
        relative_error(&a, &n)
    }
}

/// Default step for central differences at each precision.
pub fn default_step<T: Scalar>() -> f64 {
    match T::PRECISION {
        super::Precision::F32 => 1e-3,
        super::Precision::F64 => 1e-6,
    }
}

/// Relative error between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Compare `build`'s analytic input gradients against central differences.
///
/// `build` records a computation of the given input leaves on a fresh tape and
/// returns its output. At most `max_per_input` elements of each input are
/// perturbed (an evenly strided subset when larger).
pub fn check_gradients<T, F>(
    inputs: &[Tensor<T>],
    build: F,
    step: f64,
    max_per_input: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let probe_f64: Vec<f64> = (0..tape.value(out).numel())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let probe = Tensor::from_f64(tape.shape(out), &probe_f64)?;
    tape.backward_with_seed(out, probe)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; t.numel()], |g| g.to_f64_vec())
        })
        .collect();

    let objective = |perturbed: &[Tensor<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape
            .value(out)
            .data()
            .iter()
            .zip(&probe_f64)
            .map(|(v, p)| v.as_f64() * p)
            .sum())
    };

    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    let mut report = GradCheckReport {
        relative_errors: Vec::new(),
        checked: Vec::new(),
        analytic: Vec::new(),
        numeric: Vec::new(),
    };
    for i in 0..inputs.len() {
        let n = inputs[i].numel();
        let stride = n.div_ceil(max_per_input.max(1)).max(1);
        let idx: Vec<usize> = (0..n).step_by(stride).collect();
        let mut numeric = Vec::with_capacity(idx.len());
        for &j in &idx {
            let orig = inputs[i].data()[j];
            // the perturbation actually representable at this precision
            let plus = T::from_f64(orig.as_f64() + step);
            let minus = T::from_f64(orig.as_f64() - step);
            work[i].data_mut()[j] = plus;
            let fp = objective(&work)?;
            work[i].data_mut()[j] = minus;
            let fm = objective(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push((fp - fm) / (plus.as_f64() - minus.as_f64()));
        }
        let picked: Vec<f64> = idx.iter().map(|&j| analytic[i][j]).collect();
        report.relative_errors.push(relative_error(&picked, &numeric));
        report.checked.push(idx.len());
        report.analytic.push(picked);
        report.numeric.push(numeric);
    }
    Ok(report)
}
