use super::Weights;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        let mut m = like.clone();
        for t in m.tensors_mut() {
            t.fill(0.0);
        }
        AdamState { v: m.clone(), m, t: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Weights, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// One bias-corrected Adam update. Gradients are clipped first.
pub fn adam_step(params: &mut Weights, grads: &mut Weights, state: &mut AdamState, hp: &AdamHyper) {
    clip_global_norm(grads, hp.clip_norm);
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let (b1, b2) = (hp.beta1, hp.beta2);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;

    fn hyper(lr: f64) -> AdamHyper {
        AdamHyper {
            learning_rate: lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }

    fn filled(arch: &Architecture, value: f64) -> Weights {
        let mut w = Weights::zeros(arch);
        for t in w.tensors_mut() {
            t.fill(value);
        }
        w
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let arch = Architecture::new(3, 2);
        let mut p = filled(&arch, 0.25);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let mut g = Weights::zeros(&arch);
        adam_step(&mut p, &mut g, &mut state, &hyper(1e-3));
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let arch = Architecture::new(1, 1);
        let mut p = Weights::zeros(&arch);
        let mut state = AdamState::new(&p);
        let mut g = Weights::zeros(&arch);
        g.dense_b[0] = 1.0;
        adam_step(&mut p, &mut g, &mut state, &hyper(1e-3));
        let want = 0.001 / (1.0 + 1e-8);
        assert!((p.dense_b[0] + want).abs() < 1e-15);
        assert!(p.dense_w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_gradient_steps_stay_at_learning_rate() {
        let arch = Architecture::new(1, 1);
        let mut p = Weights::zeros(&arch);
        let mut state = AdamState::new(&p);
        for _ in 0..10 {
            let mut g = Weights::zeros(&arch);
            g.dense_b[0] = 1.0;
            adam_step(&mut p, &mut g, &mut state, &hyper(1e-3));
        }
        assert!((p.dense_b[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn clipping_scales_norm_fifty_to_five() {
        let arch = Architecture::new(1, 1);
        let mut g = Weights::zeros(&arch);
        g.dense_w[0] = 30.0;
        g.dense_b[0] = 40.0;
        let norm = clip_global_norm(&mut g, 5.0);
        assert_eq!(norm, 50.0);
        assert!((g.dense_w[0] - 3.0).abs() < 1e-12);
        assert!((g.dense_b[0] - 4.0).abs() < 1e-12);

        let mut small = Weights::zeros(&arch);
        small.dense_b[0] = 2.0;
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small.dense_b[0], 2.0);
        clip_global_norm(&mut small, f64::INFINITY);
        assert_eq!(small.dense_b[0], 2.0);
    }

    #[test]
    fn clipping_happens_before_moments() {
        let arch = Architecture::new(1, 1);
        let mut p = Weights::zeros(&arch);
        let mut state = AdamState::new(&p);
        let mut g = Weights::zeros(&arch);
        g.dense_b[0] = 50.0;
        adam_step(&mut p, &mut g, &mut state, &hyper(1e-3));
        assert!((state.m.dense_b[0] - 0.1 * 5.0).abs() < 1e-12);
        assert!((state.v.dense_b[0] - 0.001 * 25.0).abs() < 1e-12);
    }
}
