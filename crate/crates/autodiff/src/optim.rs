use crate::{Element, ParamSet};

/// Bias-corrected Adam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 2.5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step<T: Element>(&self, params: &mut ParamSet<T>) {
        params.step += 1;
        let t = params.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one, eps) = (T::one(), T::from_f64(self.eps));
        let step_size = T::from_f64(self.lr / c1);
        let c2 = T::from_f64(c2);
        for p in params.iter_mut() {
            let data = p.value.data_mut();
            for j in 0..data.len() {
                let g = p.grad[j];
                p.m[j] = b1 * p.m[j] + (one - b1) * g;
                p.v[j] = b2 * p.v[j] + (one - b2) * g * g;
                data[j] = data[j] - step_size * p.m[j] / ((p.v[j] / c2).sqrt() + eps);
            }
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn zero_gradient_leaves_values() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("w", Tensor::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap()).unwrap();
        let before = ps.clone();
        Adam::default().step(&mut ps);
        assert_eq!(ps.get("w").unwrap().value, before.get("w").unwrap().value);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("w", Tensor::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap()).unwrap();
        ps.param_mut(id).grad = vec![3.0, -0.01, 1e-3];
        let adam = Adam::with_lr(0.1);
        adam.step(&mut ps);
        let w = ps.value(id).data();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        for (new, (old, g)) in w.iter().zip([(1.0, 3.0), (-2.0, -0.01), (0.5, 1e-3)]) {
            let expected = old - 0.1 * g / (f64::abs(g) + 1e-8);
            assert!((new - expected).abs() < 1e-12);
        }
        assert!(ps.param(id).grad.iter().all(|&g| g == 0.0));
    }
}
