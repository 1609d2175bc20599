use super::model::Weights;
use super::{NnError, TrainHyper};

/// First and second moment estimates for every tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`:
///
/// ```text
/// m = b1*m + (1-b1)*g        v = b2*v + (1-b2)*g^2
/// p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// ```
pub fn adam_step(
    params: &mut Weights,
    grads: &Weights,
    state: &mut AdamState,
    hyper: &TrainHyper,
    lr: f64,
) -> Result<(), NnError> {
    let shape = params.shapes();
    if grads.shapes() != shape || state.m.shapes() != shape || state.v.shapes() != shape {
        return Err(NnError::ShapeMismatch);
    }
    state.t += 1;
    let (b1, b2, eps) = (hyper.beta1, hyper.beta2, hyper.epsilon);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((p, g), m), v) in tensors {
        for i in 0..p.len() {
            let gi = g[i] as f64;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            p[i] = (p[i] as f64 - step) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Dense;

    fn scalar(x: f32) -> Weights {
        Weights {
            char_embed: vec![],
            provider_embed: vec![],
            layers: vec![Dense {
                inputs: 1,
                outputs: 1,
                weight: vec![x],
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(0.0), &mut s, &TrainHyper::default(), 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // t=1: m = 0.1g, v = 0.001g^2, m_hat = g, v_hat = g^2,
        // delta = -lr * g / (|g| + eps)
        let (g, lr, eps) = (0.5f64, 0.01f64, 1e-8f64);
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(g as f32), &mut s, &TrainHyper::default(), lr).unwrap();
        let expected = (1.0 - lr * g / (g.abs() + eps)) as f32;
        assert_eq!(p.layers[0].weight[0], expected);
        assert!((s.m.layers[0].weight[0] as f64 - 0.1 * g).abs() < 1e-7);
        assert!((s.v.layers[0].weight[0] as f64 - 0.001 * g * g).abs() < 1e-9);
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let (g1, g2, lr) = (0.5f64, -0.2f64, 0.01f64);
        let h = TrainHyper::default();
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(g1 as f32), &mut s, &h, lr).unwrap();
        let p1 = p.layers[0].weight[0] as f64;
        adam_step(&mut p, &scalar(g2 as f32), &mut s, &h, lr).unwrap();
        let m = 0.9 * (0.1 * g1) + 0.1 * g2;
        let v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.9f64.powi(2));
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let expected = p1 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.layers[0].weight[0] as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let h = TrainHyper::default();
        let run = || {
            let mut p = scalar(0.3);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &scalar(0.25), &mut s, &h, 1e-3).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
        let mut p = scalar(0.3);
        let mut s = AdamState::new(&p);
        let mut g = scalar(0.1);
        g.layers[0].bias.push(0.0);
        assert!(matches!(adam_step(&mut p, &g, &mut s, &h, 1e-3), Err(NnError::ShapeMismatch)));
    }
}
