use super::MdnParams;
use crate::real::Real;

/// First and second moment estimates with the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u32,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn step(&self) -> u32 {
        self.step
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [T], grads: &[T], hp: AdamHyper) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(state.m.len(), params.len());
    state.step += 1;
    let b1 = T::cst(hp.beta1);
    let b2 = T::cst(hp.beta2);
    let c1 = T::cst(1.0 - hp.beta1);
    let c2 = T::cst(1.0 - hp.beta2);
    let t = state.step as i32;
    let m_corr = T::cst(1.0 / (1.0 - hp.beta1.powi(t)));
    let v_corr = T::cst(1.0 / (1.0 - hp.beta2.powi(t)));
    let lr = T::cst(hp.learning_rate);
    let eps = T::cst(hp.epsilon);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        *p -= lr * (*m * m_corr) / ((*v * v_corr).sqrt() + eps);
    }
}

impl<T: Real> MdnParams<T> {
    pub fn adam_update(&mut self, state: &mut AdamState<T>, grads: &MdnParams<T>, hp: AdamHyper) {
        adam_step(state, self.as_mut_slice(), grads.as_slice(), hp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HP: AdamHyper = AdamHyper { learning_rate: 0.1, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut s, &mut p, &[0.0; 3], HP);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_hand_computation() {
        // m = 0.1, v = 0.001; bias corrected both are 1
        let mut s = AdamState::new(1);
        let mut p = vec![0.0f64];
        adam_step(&mut s, &mut p, &[1.0], HP);
        let expect = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = AdamState::new(2);
            let mut p = vec![0.5f32, 0.25];
            for _ in 0..5 {
                let g = [p[0] * 2.0, -p[1]];
                adam_step(&mut s, &mut p, &g, HP);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
