//! Adam with bias correction.

use crate::{NnError, Real, Result, Tensor};

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(
        params: &[Tensor<T>],
        lr: f64,
        (beta1, beta2): (f64, f64),
        eps: f64,
    ) -> Result<Self> {
        if !(lr > 0.0)
            || !(0.0..1.0).contains(&beta1)
            || !(0.0..1.0).contains(&beta2)
            || !(eps > 0.0)
        {
            return Err(NnError::Config(format!(
                "adam needs lr > 0, betas in [0, 1), eps > 0; got lr {lr}, betas ({beta1}, {beta2}), eps {eps}"
            )));
        }
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.shape().to_vec());
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)` for every parameter.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Config(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut());
            for (((pv, &gv), mv), vv) in iter {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64([v.len()], v).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![vec1(&[1.0, -2.0])];
        let mut adam = Adam::new(&p, 0.1, (0.9, 0.999), 1e-8).unwrap();
        adam.step(&mut p, &[vec1(&[3.0, 0.5])]).unwrap();
        let before = p.clone();
        let m_before = adam.first_moments()[0].clone();
        adam.step(&mut p, &[vec1(&[0.0, 0.0])]).unwrap();
        assert_ne!(p, before, "momentum still moves the parameters");
        for (a, b) in adam.first_moments()[0].data().iter().zip(m_before.data()) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }

        let mut q = vec![vec1(&[1.0, -2.0])];
        let mut fresh = Adam::new(&q, 0.1, (0.9, 0.999), 1e-8).unwrap();
        fresh.step(&mut q, &[vec1(&[0.0, 0.0])]).unwrap();
        assert_eq!(q[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let g = [3.0, -1e-3, 1e-9];
        let mut p = vec![vec1(&[0.0; 3])];
        let mut adam = Adam::new(&p, 0.001, (0.9, 0.999), 1e-8).unwrap();
        adam.step(&mut p, &[vec1(&g)]).unwrap();
        for (pv, gv) in p[0].data().iter().zip(g) {
            let want = -0.001 * gv / (gv.abs() + 1e-8);
            assert!((pv - want).abs() < 1e-15, "{pv} vs {want}");
        }
        assert!((p[0].data()[0] + 0.001).abs() < 1e-11);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut w = vec![vec1(&[1.0, 1.0])];
        let mut adam = Adam::new(&w, 0.01, (0.9, 0.999), 1e-8).unwrap();
        for _ in 0..2000 {
            let grad = w[0].clone();
            adam.step(&mut w, &[grad]).unwrap();
        }
        let norm = w[0].data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        assert!(Adam::<f64>::new(&[], 0.0, (0.9, 0.999), 1e-8).is_err());
        assert!(Adam::<f64>::new(&[], 0.1, (1.0, 0.999), 1e-8).is_err());
    }
}
