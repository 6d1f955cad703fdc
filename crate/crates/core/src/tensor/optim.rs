use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// RMSProp accumulators keyed by parameter name.
///
/// `acc <- decay * acc + (1 - decay) * g^2`
/// `param <- param - lr * g / sqrt(acc + eps)`
#[derive(Clone, Debug)]
pub struct RmsPropState {
    pub learning_rate: f32,
    pub decay: f32,
    pub epsilon: f32,
    accumulators: BTreeMap<String, Tensor>,
}

impl RmsPropState {
    pub fn new(learning_rate: f32, decay: f32, epsilon: f32) -> Self {
        RmsPropState { learning_rate, decay, epsilon, accumulators: BTreeMap::new() }
    }

    pub fn accumulator(&self, name: &str) -> Option<&Tensor> {
        self.accumulators.get(name)
    }

    /// Applies one update to every parameter. Each parameter must have a
    /// gradient of matching length.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor)>,
        grads: &BTreeMap<String, Vec<f32>>,
    ) -> Result<()> {
        for (name, param) in params {
            let g = grads.get(name).ok_or_else(|| Error::MissingGrad(name.to_string()))?;
            if g.len() != param.numel() {
                return Err(Error::shape("rmsprop_step", &[param.shape(), &[g.len()]]));
            }
            let acc =
                self.accumulators.entry(name.to_string()).or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
            let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
            for ((p, a), &gv) in param.data_mut().iter_mut().zip(acc.data_mut()).zip(g) {
                *a = decay * *a + (1.0 - decay) * gv * gv;
                *p -= lr * gv / (*a + eps).sqrt();
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Vec<f32>>, max_norm: f32) -> f32 {
    let norm = grads.values().flat_map(|g| g.iter()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f32) -> (String, Tensor) {
        ("w".to_string(), Tensor::vector(vec![v]))
    }

    fn grads(g: f32) -> BTreeMap<String, Vec<f32>> {
        BTreeMap::from([("w".to_string(), vec![g])])
    }

    #[test]
    fn first_step_magnitude() {
        let (name, mut p) = one_param(0.0);
        let mut st = RmsPropState::new(0.001, 0.9, 1e-8);
        st.step([(name.as_str(), &mut p)], &grads(1.0)).unwrap();
        // 0.001 / sqrt(0.1)
        assert!((p.item() + 0.0031623).abs() < 1e-6, "{}", p.item());
    }

    #[test]
    fn zero_grad_is_noop() {
        let (name, mut p) = one_param(0.7);
        let mut st = RmsPropState::new(0.001, 0.9, 1e-8);
        st.step([(name.as_str(), &mut p)], &grads(0.0)).unwrap();
        assert_eq!(p.item(), 0.7);
    }

    #[test]
    fn accumulator_after_two_steps() {
        let (name, mut p) = one_param(0.0);
        let mut st = RmsPropState::new(0.001, 0.9, 1e-8);
        for _ in 0..2 {
            st.step([(name.as_str(), &mut p)], &grads(1.0)).unwrap();
        }
        // 0.9 * 0.1 + 0.1
        assert!((st.accumulator("w").unwrap().item() - 0.19).abs() < 1e-7);
    }

    #[test]
    fn missing_grad_is_error() {
        let (name, mut p) = one_param(0.0);
        let mut st = RmsPropState::new(0.001, 0.9, 1e-8);
        let err = st.step([(name.as_str(), &mut p)], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingGrad(n) if n == "w"));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = BTreeMap::from([("a".to_string(), vec![3.0, 4.0])]);
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g["a"][0] - 0.6).abs() < 1e-6 && (g["a"][1] - 0.8).abs() < 1e-6);
    }
}
