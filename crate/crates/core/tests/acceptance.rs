//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Pass criterion numbers (e.g. `4 8`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use boneage::cli::{train_synthetic, Checkpoint, RunConfig, SyntheticRun, Variant};
use boneage::imageproc::{
    equalization_lut, hand_mask, histogram_equalize, label_components, resize_bilinear, segment_hand,
    AugmentParams, BinaryMask, CannyParams, GrayImage,
};
use boneage::maskrcnn::{box_loss, cls_loss, composite_loss, mask_loss, roi_align, RoiBox};
use boneage::nn::{
    apply_ablation, build_network, AblationSpec, AttentionModule, Bindings, Context, Mode, Network,
    NetworkConfig, ParamStore, ResidualUnit, MODULE_NAMES,
};
use boneage::tensor::gradcheck::{check_gradients, relative_error};
use boneage::tensor::{NormMode, Precision, Scalar, Tape, Tensor, Var};
use boneage::training::{
    make_synthetic, prepare_all, regression_loss, split_dataset, write_log_csv, NesterovSgd,
    PlateauScheduler, RegressionLoss, SyntheticSpec, TrainConfig, Trainer,
};
use boneage::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Verdict);

fn main() {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "gradient suite", Duration::from_secs(60), gradient_suite),
        (2, "attention bounds", Duration::from_secs(10), attention_bounds),
        (3, "oracle equivalences", Duration::from_secs(30), oracle_equivalences),
        (4, "overfit 16 samples", Duration::from_secs(300), overfit),
        (5, "segmentation ablation", Duration::from_secs(1800), segmentation_ablation),
        (6, "attention ablation", Duration::from_secs(1800), attention_ablation),
        (7, "gender ablation", Duration::from_secs(1800), gender_ablation),
        (8, "determinism and persistence", Duration::from_secs(300), determinism),
        (9, "preprocessing and unit examples", Duration::from_secs(60), preprocessing),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| Verdict::new(false, format!("panicked: {}", panic_text(&e))));
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = verdict.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = if in_time { String::new() } else { format!(" over {}s budget", budget.as_secs()) };
        println!(
            "criterion {id} ({name}): {} [{:.1}s{budget_note}] {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            verdict.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn random<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Values bounded away from zero so no kink sits within a finite-difference step.
fn off_kink<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Distinct values 0.01 apart in random order, so max-pool winners are stable.
fn distinct<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_f64(shape, &v).unwrap()
}

fn single_layer_store<T: Scalar>(
    init: impl FnOnce(&mut ParamStore<T>, &mut ParamStore<T>, &mut ChaCha8Rng),
    seed: u64,
) -> (ParamStore<T>, ParamStore<T>) {
    let mut p = ParamStore::new();
    let mut b = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init(&mut p, &mut b, &mut rng);
    // jitter so no BN or bias sits at a symmetric point
    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = *v + T::from_f64(rng.random_range(-0.2..0.2)));
    }
    (p, b)
}

// ---------------------------------------------------------------- criterion 1

fn gradient_suite() -> Verdict {
    type Build = Box<dyn Fn(&mut Tape<f32>, &[Var]) -> Result<Var>>;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases: Vec<(&str, Vec<Tensor<f32>>, Build)> = Vec::new();
    let r = &mut rng;

    cases.push(("add (broadcast)", vec![random(&[3, 4], r, -1.0, 1.0), random(&[4], r, -1.0, 1.0)], Box::new(|t, v| t.add(v[0], v[1]))));
    cases.push(("sub", vec![random(&[3, 4], r, -1.0, 1.0), random(&[3, 4], r, -1.0, 1.0)], Box::new(|t, v| t.sub(v[0], v[1]))));
    cases.push(("hadamard", vec![random(&[2, 5], r, -1.0, 1.0), random(&[2, 5], r, -1.0, 1.0)], Box::new(|t, v| t.hadamard(v[0], v[1]))));
    cases.push(("relu", vec![off_kink(&[12], r)], Box::new(|t, v| Ok(t.relu(v[0])))));
    cases.push(("sigmoid", vec![random(&[12], r, -3.0, 3.0)], Box::new(|t, v| Ok(t.sigmoid(v[0])))));
    cases.push(("affine", vec![random(&[12], r, -1.0, 1.0)], Box::new(|t, v| Ok(t.affine(v[0], -1.7, 0.3)))));
    cases.push(("abs", vec![off_kink(&[12], r)], Box::new(|t, v| Ok(t.map(v[0], boneage::tensor::MapKind::Abs)))));
    cases.push(("square", vec![random(&[12], r, -1.0, 1.0)], Box::new(|t, v| Ok(t.map(v[0], boneage::tensor::MapKind::Square)))));
    cases.push(("matmul", vec![random(&[3, 4], r, -1.0, 1.0), random(&[4, 2], r, -1.0, 1.0)], Box::new(|t, v| t.matmul(v[0], v[1]))));
    cases.push((
        "linear",
        vec![random(&[3, 4], r, -1.0, 1.0), random(&[4, 2], r, -1.0, 1.0), random(&[2], r, -1.0, 1.0)],
        Box::new(|t, v| t.linear(v[0], v[1], v[2])),
    ));
    cases.push(("concat_features", vec![random(&[2, 3], r, -1.0, 1.0), random(&[2, 1], r, -1.0, 1.0)], Box::new(|t, v| t.concat_features(v[0], v[1]))));
    cases.push(("mean (axes)", vec![random(&[2, 3, 4], r, -1.0, 1.0)], Box::new(|t, v| t.mean(v[0], &[0, 2]))));
    cases.push(("mean_all", vec![random(&[2, 3, 4], r, -1.0, 1.0)], Box::new(|t, v| t.mean_all(v[0]))));
    cases.push(("reshape", vec![random(&[2, 6], r, -1.0, 1.0)], Box::new(|t, v| t.reshape(v[0], &[3, 4]))));
    cases.push((
        "conv2d",
        vec![random(&[2, 2, 5, 5], r, -1.0, 1.0), random(&[3, 2, 3, 3], r, -1.0, 1.0), random(&[3], r, -1.0, 1.0)],
        Box::new(|t, v| t.conv2d(v[0], v[1], Some(v[2]), 2, 1)),
    ));
    cases.push(("maxpool2d", vec![distinct(&[1, 2, 5, 5], r)], Box::new(|t, v| t.maxpool2d(v[0], 3, 2, 1))));
    cases.push(("upsample_bilinear", vec![random(&[1, 2, 3, 4], r, -1.0, 1.0)], Box::new(|t, v| t.upsample_bilinear(v[0], 5, 7))));
    cases.push((
        "batchnorm2d (train)",
        vec![random(&[3, 2, 3, 3], r, -1.0, 1.0), random(&[2], r, 0.5, 1.5), random(&[2], r, -0.5, 0.5)],
        Box::new(|t, v| {
            let (mut m, mut s) = (Tensor::zeros(&[2]), Tensor::ones(&[2]));
            t.batchnorm2d(v[0], v[1], v[2], NormMode::Train { running_mean: &mut m, running_var: &mut s })
        }),
    ));
    let (em, ev) = (random::<f32>(&[2], r, -0.3, 0.3), random::<f32>(&[2], r, 0.5, 1.5));
    cases.push((
        "batchnorm2d (eval)",
        vec![random(&[2, 2, 3, 3], r, -1.0, 1.0), random(&[2], r, 0.5, 1.5), random(&[2], r, -0.5, 0.5)],
        Box::new(move |t, v| t.batchnorm2d(v[0], v[1], v[2], NormMode::Eval { running_mean: &em, running_var: &ev })),
    ));
    cases.push(("global_avg_pool", vec![random(&[2, 3, 4, 4], r, -1.0, 1.0)], Box::new(|t, v| t.global_avg_pool(v[0]))));
    cases.push((
        "roi_align",
        vec![random(&[2, 6, 7], r, -1.0, 1.0)],
        Box::new(|t, v| roi_align(t, v[0], &RoiBox::new(0.7, 1.3, 5.9, 5.2).unwrap(), 3, 2, 2)),
    ));
    cases.push(("cls_loss", vec![random(&[5], r, -2.0, 2.0)], Box::new(|t, v| cls_loss(t, v[0], 2))));
    cases.push(("box_loss", vec![Tensor::from_f64(&[4], &[0.2, -1.7, 3.0, 0.45]).unwrap()], Box::new(|t, v| box_loss(t, v[0], [0.0, 0.1, 0.5, 2.5]))));
    let target = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 3 == 0);
    cases.push(("mask_loss", vec![random(&[3, 4], r, -3.0, 3.0)], Box::new(move |t, v| mask_loss(t, v[0], &target))));
    let truth = random::<f32>(&[4, 1], r, -1.0, 1.0);
    cases.push((
        "composite_loss",
        vec![random(&[3], r, -1.0, 1.0), Tensor::from_f64(&[4], &[0.3, -2.0, 0.7, 1.6]).unwrap(), random(&[2, 2], r, -1.0, 1.0), random(&[4, 1], r, -1.0, 1.0)],
        Box::new(move |t, v| {
            let c = cls_loss(t, v[0], 1)?;
            let b = box_loss(t, v[1], [0.0; 4])?;
            let m = mask_loss(t, v[2], &BinaryMask::from_fn(2, 2, |x, _| x == 0))?;
            let g = regression_loss(t, v[3], &truth, RegressionLoss::Mse)?;
            composite_loss(t, c, b, m, g)
        }),
    ));
    let truth = Tensor::<f32>::from_f64(&[4, 1], &[0.0, 1.0, 2.0, 3.0]).unwrap();
    let pred = Tensor::from_f64(&[4, 1], &[0.5, 0.2, 2.9, 2.0]).unwrap();
    let truth2 = truth.clone();
    cases.push(("regression_loss (mae)", vec![pred.clone()], Box::new(move |t, v| regression_loss(t, v[0], &truth, RegressionLoss::Mae))));
    cases.push(("regression_loss (mse)", vec![pred], Box::new(move |t, v| regression_loss(t, v[0], &truth2, RegressionLoss::Mse))));

    let unit = ResidualUnit::new("u", 2, 3, 2);
    let (up, ub) = single_layer_store::<f32>(|p, b, rng| unit.init(p, b, rng).unwrap(), 5);
    let unit_names: Vec<String> = up.names().map(String::from).collect();
    let mut unit_inputs = vec![random(&[2, 2, 6, 6], r, -1.0, 1.0)];
    unit_inputs.extend(up.iter().map(|(_, t)| t.clone()));
    cases.push((
        "residual_unit",
        unit_inputs,
        Box::new(move |t, v| {
            let binds = Bindings::from_vars(unit_names.iter().map(String::as_str).zip(v[1..].iter().copied()));
            let mut buf = ub.clone();
            let mut cx = Context::train(t, &binds, &mut buf);
            unit.forward(&mut cx, v[0])
        }),
    ));

    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for (i, (name, inputs, build)) in cases.iter().enumerate() {
        match check_gradients(inputs, build, 1e-3, 24, 100 + i as u64) {
            Ok(rep) => {
                let err = rep.max_relative_error();
                if err > worst.0 {
                    worst = (err, name);
                }
                if !(err < 1e-3) {
                    failures.push(format!("{name} {err:.2e}"));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }

    let (att_seed, att_err) = attention_module_gradcheck();
    if !(att_err < 1e-3) {
        failures.push(format!("attention_module {att_err:.2e}"));
    }
    let (net_err, net_ok) = full_network_gradcheck();
    let pass = failures.is_empty() && net_ok;
    let detail = format!(
        "{} ops at f32, worst {:.2e} ({}); attention_module at f32 {:.2e} (kink-free seed {}); tiny network at f64 overall {:.2e}{}",
        cases.len(),
        worst.0,
        worst.1,
        att_err,
        att_seed,
        net_err,
        if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
    );
    Verdict::new(pass, detail)
}

/// Inputs and parameters for one attention module, drawn at 32-bit so the 64-bit
/// copy holds exactly the same values.
fn attention_case(seed: u64) -> (AttentionModule, Vec<Tensor<f32>>, Vec<String>, ParamStore<f32>) {
    let module = AttentionModule::new("Att1_1", 2, 1, 2);
    let (p, b) = single_layer_store::<f32>(|p, b, rng| module.init(p, b, rng).unwrap(), seed);
    let names: Vec<String> = p.names().map(String::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA77);
    let mut inputs = vec![random(&[2, 2, 6, 6], &mut rng, -1.0, 1.0)];
    inputs.extend(p.iter().map(|(_, t)| t.clone()));
    (module, inputs, names, b)
}

fn attention_report<T: Scalar>(seed: u64, step: f64) -> boneage::tensor::gradcheck::GradCheckReport {
    let (module, inputs, names, buffers) = attention_case(seed);
    let inputs: Vec<Tensor<T>> = inputs.iter().map(|t| t.cast()).collect();
    let buffers = {
        let mut out = ParamStore::<T>::new();
        for (k, t) in buffers.iter() {
            out.insert(k, t.cast()).unwrap();
        }
        out
    };
    check_gradients(
        &inputs,
        |t, v| {
            let binds = Bindings::from_vars(names.iter().map(String::as_str).zip(v[1..].iter().copied()));
            let mut buf = buffers.clone();
            let mut cx = Context::train(t, &binds, &mut buf);
            Ok(module.forward(&mut cx, v[0], true)?.output)
        },
        step,
        24,
        seed,
    )
    .unwrap()
}

/// The mask branch stacks ReLU and max-pool over batch-normalised activations,
/// so a 1e-3 step often straddles a kink. Seeds are screened with a 64-bit
/// difference at the same step (no kink within reach means it agrees with the
/// analytic gradient to 1e-5); the 32-bit check then runs on the first clean one.
fn attention_module_gradcheck() -> (u64, f64) {
    let seed = (0..64)
        .find(|&s| attention_report::<f64>(s, 1e-3).overall_relative_error() < 1e-5)
        .expect("no kink-free attention case in 64 seeds");
    (seed, attention_report::<f32>(seed, 1e-3).overall_relative_error())
}

/// Whole tiny network at 64-bit. Inputs whose gradient norm is below 1e-4 are
/// held to an absolute bound instead of a relative one.
fn full_network_gradcheck() -> (f64, bool) {
    let cfg = NetworkConfig { age_mean: 0.0, age_scale: 1.0, ..NetworkConfig::tiny() };
    assert_eq!(cfg.precision, Precision::F64);
    let mut net = build_network::<f64>(&cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (_, t) in net.params_mut().iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    let s = cfg.input_size;
    let img = random::<f64>(&[4, 1, s, s], &mut rng, 0.0, 1.0);
    let g = Tensor::from_f64(&[4, 1], &[0.0, 1.0, 1.0, 0.0]).unwrap();
    let names: Vec<String> = net.params().names().map(String::from).collect();
    let mut all = vec![img, g];
    all.extend(net.params().iter().map(|(_, t)| t.clone()));
    let report = check_gradients(
        &all,
        |tape, v| {
            let binds = Bindings::from_vars(names.iter().map(String::as_str).zip(v[2..].iter().copied()));
            let mut n = net.clone();
            Ok(n.forward(tape, &binds, v[0], v[1], Mode::Train, false)?.age)
        },
        1e-6,
        6,
        23,
    )
    .unwrap();
    let per_input_ok = report.analytic.iter().zip(&report.numeric).all(|(a, n)| {
        let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = relative_error(a, n);
        err < 1e-4 || scale < 1e-4 && err * scale < 1e-9
    });
    let overall = report.overall_relative_error();
    (overall, per_input_ok && overall < 1e-4)
}

// ---------------------------------------------------------------- criterion 2

fn attention_bounds() -> Verdict {
    let cfg = NetworkConfig::default();
    let net = build_network::<f32>(&cfg, 31).unwrap();
    let off = apply_ablation(&net, &AblationSpec::without_modules(MODULE_NAMES).unwrap()).unwrap();
    let sizes = cfg.stage_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (mut checked, mut violations, mut ablated_mismatch) = (0usize, 0usize, 0usize);
    for (k, module) in net.modules().iter().enumerate() {
        let stage = (module.name.as_bytes()[3] - b'1') as usize;
        assert!(off.modules()[k].name == module.name);
        assert!(!off.ablation().attention_enabled(&module.name));
        for _ in 0..100 {
            let x = random::<f32>(&[1, module.channels, sizes[stage], sizes[stage]], &mut rng, -2.0, 2.0);
            let (out, trunk) = module_pass(&net, module, &x, true);
            for (&o, &t) in out.iter().zip(&trunk) {
                checked += 1;
                let bounded = t.abs() <= o.abs() && o.abs() <= 2.0 * t.abs();
                let signed = t == 0.0 || o.signum() == t.signum();
                if !(bounded && signed) {
                    violations += 1;
                }
            }
            let (out, _) = module_pass(&off, module, &x, false);
            let (reference, _) = module_pass(&off, module, &x, false);
            let trunk_only = trunk_pass(&off, module, &x);
            if out.iter().zip(&trunk_only).any(|(a, b)| a.to_bits() != b.to_bits()) || out != reference {
                ablated_mismatch += 1;
            }
        }
    }
    Verdict::new(
        violations == 0 && ablated_mismatch == 0,
        format!("{checked} elements over 6 modules x 100 inputs, {violations} bound violations, {ablated_mismatch} ablated mismatches"),
    )
}

fn module_pass(net: &Network<f32>, module: &AttentionModule, x: &Tensor<f32>, attention: bool) -> (Vec<f32>, Vec<f32>) {
    let mut tape = Tape::new();
    let binds = net.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let mut cx = Context::eval(&mut tape, &binds, net.buffers());
    let out = module.forward(&mut cx, xv, attention).unwrap();
    (tape.value(out.output).data().to_vec(), tape.value(out.trunk).data().to_vec())
}

fn trunk_pass(net: &Network<f32>, module: &AttentionModule, x: &Tensor<f32>) -> Vec<f32> {
    let mut tape = Tape::new();
    let binds = net.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let mut cx = Context::eval(&mut tape, &binds, net.buffers());
    let t = module.trunk_forward(&mut cx, xv).unwrap();
    tape.value(t).data().to_vec()
}

// ---------------------------------------------------------------- criterion 3

/// Bilinear value at continuous `(y, x)` with pixel centres at half-integers,
/// written as a tent-kernel sum over every pixel.
fn tent_sample(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let x = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let k = (1.0 - (y - i as f64).abs()).max(0.0) * (1.0 - (x - j as f64).abs()).max(0.0);
            acc += k * plane[i * w + j];
        }
    }
    acc
}

fn brute_roi_align(feat: &Tensor<f64>, roi: &RoiBox, oh: usize, ow: usize, s: usize) -> Vec<f64> {
    let (c, h, w) = (feat.shape()[0], feat.shape()[1], feat.shape()[2]);
    let (bh, bw) = ((roi.y2 - roi.y1) / oh as f64, (roi.x2 - roi.x1) / ow as f64);
    let mut out = Vec::new();
    for ch in 0..c {
        let plane = &feat.data()[ch * h * w..(ch + 1) * h * w];
        for py in 0..oh {
            for px in 0..ow {
                let mut acc = 0.0;
                for sy in 0..s {
                    for sx in 0..s {
                        let y = roi.y1 + bh * (py as f64 + (sy as f64 + 0.5) / s as f64);
                        let x = roi.x1 + bw * (px as f64 + (sx as f64 + 0.5) / s as f64);
                        acc += tent_sample(plane, h, w, y, x);
                    }
                }
                out.push(acc / (s * s) as f64);
            }
        }
    }
    out
}

/// Corner-aligned 1-D interpolation weights from the closed form.
fn corner_weight(o: usize, out: usize, input: usize, i: usize) -> f64 {
    let src = if out == 1 || input == 1 { 0.0 } else { o as f64 * (input - 1) as f64 / (out - 1) as f64 };
    (1.0 - (src - i as f64).abs()).max(0.0)
}

fn oracle_equivalences() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(33);

    let mut roi_err = 0.0f64;
    for _ in 0..200 {
        let (c, h, w) = (rng.random_range(1..4), rng.random_range(1..10), rng.random_range(1..10));
        let feat = random::<f64>(&[c, h, w], &mut rng, -1.0, 1.0);
        let x1 = rng.random_range(-1.0..w as f64);
        let y1 = rng.random_range(-1.0..h as f64);
        let roi = RoiBox::new(x1, y1, x1 + rng.random_range(0.0..w as f64), y1 + rng.random_range(0.0..h as f64)).unwrap();
        let (oh, ow, s) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let mut tape = Tape::new();
        let f = tape.constant(feat.clone());
        let got = roi_align(&mut tape, f, &roi, oh, ow, s).unwrap();
        let want = brute_roi_align(&feat, &roi, oh, ow, s);
        for (a, b) in tape.value(got).data().iter().zip(&want) {
            roi_err = roi_err.max((a - b).abs());
        }
    }

    let mut eq_mismatch = 0;
    for k in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let (lo, hi) = match k % 4 {
            0 => (0u8, 255u8),
            1 => (90, 110),
            2 => (200, 255),
            _ => {
                let v = rng.random();
                (v, v)
            }
        };
        let img = GrayImage::from_fn(w, h, |_, _| rng.random_range(lo..=hi));
        let n = (w * h) as f64;
        let cdf = |v: u8| img.pixels().iter().filter(|&&p| p <= v).count() as f64;
        let min = *img.pixels().iter().min().unwrap();
        let cdf_min = cdf(min);
        let want = GrayImage::from_fn(w, h, |x, y| {
            let v = img.get(x, y);
            if n == cdf_min { v } else { ((cdf(v) - cdf_min) / (n - cdf_min) * 255.0).round() as u8 }
        });
        if histogram_equalize(&img) != want {
            eq_mismatch += 1;
        }
        let lut = equalization_lut(&img);
        assert!(lut.windows(2).all(|p| p[0] <= p[1]));
    }

    let mut up_err = 0.0f64;
    let mut resize_err = 0.0f64;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..8), rng.random_range(1..8));
        let (oh, ow) = (rng.random_range(1..12), rng.random_range(1..12));
        let x = random::<f64>(&[1, 1, h, w], &mut rng, -1.0, 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let up = tape.upsample_bilinear(xv, oh, ow).unwrap();
        let got = tape.value(up).data();
        let img = GrayImage::from_fn(w, h, |_, _| rng.random());
        let resized = resize_bilinear(&img, ow, oh).unwrap();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut want = 0.0;
                let mut want_img = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        let k = corner_weight(oy, oh, h, i) * corner_weight(ox, ow, w, j);
                        want += k * x.data()[i * w + j];
                        want_img += k * img.get(j, i) as f64;
                    }
                }
                up_err = up_err.max((got[oy * ow + ox] - want).abs());
                resize_err = resize_err.max((resized.get(ox, oy) as f64 - want_img).abs());
            }
        }
    }

    let pass = roi_err <= 1e-6 && eq_mismatch == 0 && up_err <= 1e-6 && resize_err <= 0.5 + 1e-6;
    Verdict::new(
        pass,
        format!(
            "roi_align max abs err {roi_err:.1e} over 200 boxes; equalization {eq_mismatch}/100 mismatches; \
             upsample max err {up_err:.1e}; 8-bit resize within {resize_err:.3} of exact"
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn overfit() -> Verdict {
    let spec = SyntheticSpec { seed: 41, ..SyntheticSpec::default() };
    let pairs: Vec<_> = make_synthetic(&spec, 16).unwrap().into_iter().map(|c| (c.image, c.sample)).collect();
    let data = prepare_all(&pairs, true, &CannyParams::default()).unwrap();
    let cfg = NetworkConfig::default();
    assert_eq!((cfg.input_size, cfg.widths, cfg.feature_width), (64, [8, 16, 32], 16));
    let net = build_network::<f32>(&cfg, 42).unwrap();
    let config = TrainConfig { batch_size: 16, epochs: 200, augment: None, seed: 43, ..TrainConfig::default() };
    let mut trainer = Trainer::new(net, config).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        // validating on the training set makes val_mae the eval-mode train MAE
        last = trainer.run_epoch(&data, &data).unwrap().val_mae;
        if last < 1.0 {
            break;
        }
    }
    Verdict::new(last < 1.0, format!("train MAE {last:.3} months after {} epochs", trainer.epochs_done))
}

// ---------------------------------------------------------- criteria 5, 6, 7

const SEEDS: [u64; 3] = [0, 1, 2];

fn suite_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    // random crops rescale the disc and would erase the radius signal
    cfg.augment = AugmentParams { crop_min: 1.0, ..cfg.augment };
    cfg.train.augment = Some(cfg.augment.clone());
    cfg.train.epochs = 30;
    cfg
}

fn val_maes(run: &SyntheticRun, variant: Variant) -> Vec<f64> {
    SEEDS
        .iter()
        .map(|&seed| train_synthetic(run, &suite_config(), &variant.ablation(), seed).unwrap().val_mae)
        .collect()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

// criteria 5 and 6 compare against the same full-model runs
static FULL_RUNS: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();

fn full_runs() -> &'static [f64] {
    FULL_RUNS.get_or_init(|| val_maes(&SyntheticRun::default(), Variant::Full))
}

fn segmentation_ablation() -> Verdict {
    let full = full_runs();
    let raw = val_maes(&SyntheticRun::default(), Variant::NoSegmentation);
    let wins = full.iter().zip(&raw).filter(|(f, r)| f < r).count();
    Verdict::new(wins == 3, format!("masked {} vs unmasked {} val MAE; masked better in {wins}/3", fmt(full), fmt(&raw)))
}

fn attention_ablation() -> Verdict {
    let full = full_runs();
    let cut = val_maes(&SyntheticRun::default(), Variant::NoDeepAttention);
    let wins = full.iter().zip(&cut).filter(|(f, c)| f <= c).count();
    Verdict::new(wins >= 2, format!("full {} vs without Att3_2/Att3_3 {} val MAE; full no worse in {wins}/3", fmt(full), fmt(&cut)))
}

fn gender_ablation() -> Verdict {
    let offset = 48.0;
    let run = SyntheticRun {
        spec: SyntheticSpec { gender_offset: offset, label_noise: 3.0, ..SyntheticRun::default().spec },
        ..SyntheticRun::default()
    };
    let with = val_maes(&run, Variant::Full);
    let without = val_maes(&run, Variant::NoGender);
    let wins = with.iter().zip(&without).filter(|(a, b)| a < b).count();
    let gaps: Vec<f64> = with.iter().zip(&without).map(|(a, b)| b - a).collect();
    let gap_ok = gaps.iter().all(|g| *g >= 0.25 * offset);
    Verdict::new(
        wins == 3 && gap_ok,
        format!(
            "offset {offset} months: with gender {} vs without {}; gaps {} (need >= {})",
            fmt(&with),
            fmt(&without),
            fmt(&gaps),
            0.25 * offset
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn determinism() -> Verdict {
    let run = SyntheticRun { count: 40, ..SyntheticRun::default() };
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 3;
    let train_once = || {
        let out = train_synthetic(&run, &cfg, &AblationSpec::default(), 7).unwrap();
        let mut csv = Vec::new();
        write_log_csv(&mut csv, &out.log).unwrap();
        (csv, out.trainer)
    };
    let (log_a, trainer_a) = train_once();
    let (log_b, trainer_b) = train_once();
    let logs_equal = log_a == log_b && log_a.len() > 40;
    let params_equal = trainer_a.net == trainer_b.net;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ck = Checkpoint::from_trainer(&trainer_a);
    ck.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let resaved = loaded.encode() == bytes;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = cfg.network.input_size;
    let img = random::<f32>(&[5, 1, s, s], &mut rng, 0.0, 1.0);
    let g = Tensor::from_f64(&[5, 1], &[1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let before = trainer_a.net.predict(&img, &g, true).unwrap();
    let after = loaded.network.predict(&img, &g, true).unwrap();
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let forward_equal = bits(&before.0) == bits(&after.0) && before.1 == after.1;

    let mut classes = Vec::new();
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"ABA0");
    classes.push(matches!(Checkpoint::decode(&bad), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&2u32.to_le_bytes());
    classes.push(matches!(Checkpoint::decode(&bad), Err(Error::UnsupportedVersion { .. })));
    classes.push(matches!(Checkpoint::decode(&bytes[..bytes.len() - 5]), Err(Error::Truncated(_))));
    classes.push(matches!(Checkpoint::decode(&bytes[..bytes.len() / 3]), Err(Error::Truncated(_))));
    let other = NetworkConfig { feature_width: 8, ..cfg.network.clone() };
    classes.push(matches!(loaded.check_config(&other), Err(Error::ConfigMismatch(_))));
    let rejections = classes.iter().filter(|&&c| c).count();

    let pass = logs_equal && params_equal && resaved && forward_equal && rejections == classes.len();
    Verdict::new(
        pass,
        format!(
            "logs identical: {logs_equal}, weights identical: {params_equal}, save-load-save byte-identical: {resaved}, \
             forward bitwise equal after reload: {forward_equal}, corruptions rejected with the right error: {rejections}/{}",
            classes.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn preprocessing() -> Verdict {
    let spec = SyntheticSpec { image_size: 96, tag_count: 3, border_bars: true, seed: 91, ..SyntheticSpec::default() };
    let cases = make_synthetic(&spec, 20).unwrap();
    let canny = CannyParams::default();
    let (mut one_blob, mut tag_total, mut tag_zeroed, mut min_iou) = (0, 0usize, 0usize, 1.0f64);
    for c in &cases {
        let mask = hand_mask(&c.image, &canny).unwrap();
        let (masked, mask2) = segment_hand(&c.image, &canny).unwrap();
        assert_eq!(mask, mask2);
        let (_, sizes) = label_components(&mask);
        let near_disc = (0..mask.height()).all(|y| {
            (0..mask.width()).all(|x| !mask.get(x, y) || within(&c.hand, x, y, 1))
        });
        if sizes.len() == 1 && near_disc {
            one_blob += 1;
        }
        min_iou = min_iou.min(mask.iou(&c.hand));
        for y in 0..c.tags.height() {
            for x in 0..c.tags.width() {
                if c.tags.get(x, y) {
                    tag_total += 1;
                    if masked.get(x, y) == 0 {
                        tag_zeroed += 1;
                    }
                }
            }
        }
    }
    let zeroed = tag_zeroed as f64 / tag_total as f64;
    let (units_ok, unit_notes) = unit_examples();
    Verdict::new(
        one_blob == 20 && zeroed >= 0.99 && units_ok,
        format!(
            "{one_blob}/20 masks are the single disc blob (min IoU {min_iou:.3}); {:.2}% of tag pixels zeroed; unit examples: {unit_notes}",
            100.0 * zeroed
        ),
    )
}

fn within(mask: &BinaryMask, x: usize, y: usize, r: usize) -> bool {
    let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
    let (x1, y1) = ((x + r).min(mask.width() - 1), (y + r).min(mask.height() - 1));
    (y0..=y1).any(|yy| (x0..=x1).any(|xx| mask.get(xx, yy)))
}

fn unit_examples() -> (bool, String) {
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    let mut s = PlateauScheduler::new(0.01, 5);
    let improving: Vec<f64> = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.25].iter().map(|&v| s.step(v)).collect();
    check("scheduler improving", improving.iter().all(|&lr| lr == 0.01));
    let mut s = PlateauScheduler::new(0.01, 5);
    let flat: Vec<f64> = (0..6).map(|_| s.step(5.0)).collect();
    check("scheduler flat", flat[..5].iter().all(|&lr| lr == 0.01) && flat[5] == 0.01 / 10.0);
    let mut s = PlateauScheduler::new(0.01, 5);
    let stalled: Vec<f64> = [5.0, 5.0, 5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0].iter().map(|&v| s.step(v)).collect();
    check("scheduler reset", stalled[..8].iter().all(|&lr| lr == 0.01) && stalled[8] == 0.001);

    let items: Vec<usize> = (0..100).collect();
    let (tr, va) = split_dataset(&items, 5).unwrap();
    let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
    all.sort();
    check("split 90/10", tr.len() == 90 && va.len() == 10);
    check("split partition", all == items && tr.iter().all(|i| !va.contains(i)));
    check("split seeded", split_dataset(&items, 5).unwrap() == (tr, va));

    let loss = |pred: &[f64], truth: &[f64]| {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::from_f64(&[pred.len(), 1], pred).unwrap());
        let t = Tensor::from_f64(&[truth.len(), 1], truth).unwrap();
        let l = regression_loss(&mut tape, p, &t, RegressionLoss::Mae).unwrap();
        tape.backward(l).unwrap();
        (tape.value(l).data()[0], tape.grad(p).unwrap().data().to_vec())
    };
    check("loss 2.5", loss(&[10.0, 20.0], &[12.0, 17.0]).0 == 2.5);
    check("loss zero", loss(&[3.0, 4.0], &[3.0, 4.0]).0 == 0.0);
    let (l, g) = loss(&[5.0], &[9.0]);
    check("loss sign", l == 4.0 && g == vec![-1.0]);

    let step = |p: f64, grad: f64, v: f64, lr: f64, mu: f64, wd: f64| {
        let mut params = ParamStore::<f64>::new();
        params.insert("p", Tensor::scalar(p)).unwrap();
        let mut opt = NesterovSgd::new(lr, mu, wd);
        opt.velocities.insert("p", Tensor::scalar(v)).unwrap();
        let grads = [("p".to_string(), Tensor::scalar(grad))].into_iter().collect();
        opt.step(&mut params, &grads).unwrap();
        (params.get("p").unwrap().data()[0], opt.velocities.get("p").unwrap().data()[0], opt, params, grads)
    };
    let (p, v, ..) = step(1.0, 0.0, 0.0, 0.01, 0.9, 1e-4);
    check("nesterov decay step", (p - 0.9999981).abs() < 1e-12 && (v - 1e-4).abs() < 1e-15);
    let (p, v, ..) = step(2.0, 0.0, 0.5, 0.1, 0.9, 0.0);
    check("nesterov zero grad", p == 2.0 - 0.1 * 0.9 * 0.45 && v == 0.9 * 0.5);
    let (_, _, mut opt, mut params, grads) = step(3.0, 1.0, 0.0, 0.1, 0.9, 0.0);
    opt.step(&mut params, &grads).unwrap();
    check("nesterov two steps", (params.get("p").unwrap().data()[0] - (3.0 - 0.461)).abs() < 1e-12);

    let ok = failed.is_empty();
    (ok, if ok { "all pass".into() } else { format!("failing {}", failed.join(", ")) })
}
