use ndarray::{ArrayD, Zip};

use super::{ModelWeights, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F: Real> {
    pub step: u64,
    pub m: Vec<ArrayD<F>>,
    pub v: Vec<ArrayD<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(weights: &ModelWeights<F>) -> Self {
        let zeros: Vec<ArrayD<F>> = weights
            .tensors
            .iter()
            .map(|t| ArrayD::zeros(t.value.raw_dim()))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<F: Real>(
    weights: &mut ModelWeights<F>,
    grads: &ModelWeights<F>,
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::lit(cfg.beta1);
    let b2 = F::lit(cfg.beta2);
    let one = F::one();
    let correction1 = one - b1.powi(t);
    let correction2 = one - b2.powi(t);
    let lr = F::lit(cfg.learning_rate);
    let eps = F::lit(cfg.epsilon);
    for (((w, g), m), v) in weights
        .tensors
        .iter_mut()
        .zip(grads.tensors.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        Zip::from(&mut w.value)
            .and(&g.value)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = ModelWeights::<f64>::init(1);
        let before = w.clone();
        let g = ModelWeights::<f64>::zeros();
        let mut state = AdamState::new(&w);
        adam_step(&mut w, &g, &mut state, &AdamConfig::default());
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_closed_form() {
        let mut w = ModelWeights::<f64>::zeros();
        let mut g = ModelWeights::<f64>::zeros();
        g.get_mut("enc1.bias").unwrap()[[0]] = 0.3;
        g.get_mut("enc1.bias").unwrap()[[1]] = -2.0;
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&w);
        adam_step(&mut w, &g, &mut state, &cfg);
        // After bias correction m̂ = g and v̂ = g², so Δ = −lr·g/(|g| + ε).
        let b = w.get("enc1.bias").unwrap();
        let expect = |g: f64| -0.01 * g / (g.abs() + 1e-8);
        assert!((b[[0]] - expect(0.3)).abs() < 1e-15);
        assert!((b[[1]] - expect(-2.0)).abs() < 1e-15);
        assert_eq!(b[[2]], 0.0);
    }

    #[test]
    fn deterministic_with_cloned_state() {
        let w0 = ModelWeights::<f32>::init(2);
        let g = ModelWeights::<f32>::init(3);
        let mut s1 = AdamState::new(&w0);
        let mut w1 = w0.clone();
        adam_step(&mut w1, &g, &mut s1, &AdamConfig::default());
        let mut s2 = s1.clone();
        let mut w2 = w1.clone();
        adam_step(&mut w1, &g, &mut s1, &AdamConfig::default());
        adam_step(&mut w2, &g, &mut s2, &AdamConfig::default());
        assert_eq!(w1, w2);
        assert_eq!(s1, s2);
    }
}
