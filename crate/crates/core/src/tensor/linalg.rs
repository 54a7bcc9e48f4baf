use super::{Backward, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

struct MatmulBackward {
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Scalar> Backward<T> for MatmulBackward {
    fn op_name(&self) -> &'static str {
        "matmul"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let (a, b) = (inputs[0].data(), inputs[1].data());
        let g = grad.data();
        let (one, zero) = (T::one(), T::zero());
        // dA = G · Bᵀ
        let ga = needs[0].then(|| {
            let mut out = vec![zero; m * k];
            let bt = (1, n as isize);
            T::gemm(m, n, k, one, g, (n as isize, 1), b, bt, zero, &mut out, (k as isize, 1));
            Tensor::new(&[m, k], out).expect("shape")
        });
        // dB = Aᵀ · G
        let gb = needs[1].then(|| {
            let mut out = vec![zero; k * n];
            let at = (1, k as isize);
            T::gemm(k, m, n, one, a, at, g, (n as isize, 1), zero, &mut out, (n as isize, 1));
            Tensor::new(&[k, n], out).expect("shape")
        });
        vec![ga, gb]
    }
}

impl<T: Scalar> Tape<T> {
    /// `[m, k] · [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            av.data(),
            (k as isize, 1),
            bv.data(),
            (n as isize, 1),
            T::zero(),
            &mut out,
            (n as isize, 1),
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.record(value, vec![a, b], Box::new(MatmulBackward { m, k, n })))
    }

    /// Fully connected layer: `x · w + bias` with `x: [N, in]`, `w: [in, out]`,
    /// `bias: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, bias)
    }
}
