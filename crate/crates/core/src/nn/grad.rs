//! Sigmoid cross-entropy and its hand-derived gradients.

use super::model::{sigmoid, ModelParams, Trace, Weights};
use super::NnError;
use crate::codes::ICD_POSITIONS;
use crate::dataset::ClaimFeatures;

/// One training example: encoded claim plus the label indices that are on.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: ClaimFeatures,
    pub labels: Vec<usize>,
}

/// `-sum_j [y log s(z) + (1-y) log(1-s(z))]` in the overflow-free form
/// `max(z,0) - z*y + ln(1+exp(-|z|))`.
pub fn loss(logits: &[f64], targets: &[f64]) -> Result<f64, NnError> {
    if logits.len() != targets.len() {
        return Err(NnError::LengthMismatch {
            logits: logits.len(),
            targets: targets.len(),
        });
    }
    Ok(logits.iter().zip(targets).map(|(&z, &y)| term(z, y)).sum())
}

#[inline]
fn term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Loss of one claim given its positive label indices (sorted ascending).
fn sparse_loss(logits: &[f64], labels: &[usize]) -> f64 {
    let mut positives = labels.iter().peekable();
    let mut total = 0.0;
    for (j, &z) in logits.iter().enumerate() {
        let y = if positives.peek() == Some(&&j) {
            positives.next();
            1.0
        } else {
            0.0
        };
        total += term(z, y);
    }
    total
}

/// Mean loss over a batch, forward pass only.
pub fn batch_loss(model: &ModelParams, batch: &[Example]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut trace = Trace::default();
    let mut total = 0.0;
    for ex in batch {
        check_example(model, ex)?;
        model.forward_trace(&ex.features, &mut trace);
        total += sparse_loss(&trace.logits, &ex.labels);
    }
    Ok(total / batch.len() as f64)
}

fn check_example(model: &ModelParams, ex: &Example) -> Result<(), NnError> {
    model.check_features(&ex.features)?;
    if ex.labels.iter().any(|&j| j >= model.label_count()) || !ex.labels.is_sorted() {
        return Err(NnError::BadFeatures);
    }
    Ok(())
}

/// Gradient buffers in f64, mirroring [`Weights`].
struct Accum {
    char_embed: Vec<Vec<f64>>,
    provider_embed: Vec<f64>,
    weight: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl Accum {
    fn new(w: &Weights) -> Self {
        Accum {
            char_embed: w.char_embed.iter().map(|t| vec![0.0; t.len()]).collect(),
            provider_embed: vec![0.0; w.provider_embed.len()],
            weight: w.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: w.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn into_weights(self, shape: &Weights, scale: f64) -> Weights {
        let cast = |v: Vec<f64>| v.into_iter().map(|x| (x * scale) as f32).collect::<Vec<f32>>();
        let mut out = shape.zeros_like();
        out.char_embed = self.char_embed.into_iter().map(cast).collect();
        out.provider_embed = cast(self.provider_embed);
        for ((layer, w), b) in out.layers.iter_mut().zip(self.weight).zip(self.bias) {
            layer.weight = cast(w);
            layer.bias = cast(b);
        }
        out
    }
}

/// Fixed-order dot product with four running sums.
#[inline]
fn dot(w: &[f32], d: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut wc = w.chunks_exact(4);
    let mut dc = d.chunks_exact(4);
    for (a, b) in (&mut wc).zip(&mut dc) {
        for l in 0..4 {
            acc[l] += a[l] as f64 * b[l];
        }
    }
    let mut tail = 0.0;
    for (&a, &b) in wc.remainder().iter().zip(dc.remainder()) {
        tail += a as f64 * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Batch-mean loss and its exact gradient with respect to every tensor.
/// Embedding rows the batch never reads get exactly zero gradient.
pub fn backward(model: &ModelParams, batch: &[Example]) -> Result<(f64, Weights), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    for ex in batch {
        check_example(model, ex)?;
    }
    let w = &model.weights;
    let dc = model.dims.char_dim;
    let dp = model.dims.provider_dim;
    let mut acc = Accum::new(w);
    let mut trace = Trace::default();
    let mut delta: Vec<f64> = Vec::new();
    let mut back: Vec<f64> = Vec::new();
    let mut total = 0.0;

    for ex in batch {
        model.forward_trace(&ex.features, &mut trace);
        total += sparse_loss(&trace.logits, &ex.labels);

        // d loss / d logit = sigmoid(z) - y
        delta.clear();
        delta.extend(trace.logits.iter().map(|&z| sigmoid(z)));
        for &j in &ex.labels {
            delta[j] -= 1.0;
        }

        for li in (0..4).rev() {
            let layer = &w.layers[li];
            let input: &[f64] = if li == 0 { &trace.input } else { &trace.hidden[li - 1] };
            for (b, &d) in acc.bias[li].iter_mut().zip(&delta) {
                *b += d;
            }
            let gw = &mut acc.weight[li];
            for (i, &x) in input.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (g, &d) in gw[i * layer.outputs..(i + 1) * layer.outputs].iter_mut().zip(&delta) {
                    *g += x * d;
                }
            }
            back.clear();
            for (i, &x) in input.iter().enumerate() {
                // hidden inputs are post-ReLU: zero means the unit was off
                let gate = li == 0 || x > 0.0;
                back.push(if gate {
                    dot(&layer.weight[i * layer.outputs..(i + 1) * layer.outputs], &delta)
                } else {
                    0.0
                });
            }
            std::mem::swap(&mut delta, &mut back);
        }

        // delta now holds d loss / d pooled input
        for code in &ex.features.icd_indices {
            for (pos, &ch) in code.iter().enumerate() {
                let row = &mut acc.char_embed[pos][ch as usize * dc..(ch as usize + 1) * dc];
                for (g, &d) in row.iter_mut().zip(&delta[pos * dc..(pos + 1) * dc]) {
                    *g += d;
                }
            }
        }
        let p = ex.features.provider_index;
        for (g, &d) in acc.provider_embed[p * dp..(p + 1) * dp]
            .iter_mut()
            .zip(&delta[ICD_POSITIONS * dc..])
        {
            *g += d;
        }
    }

    let n = batch.len() as f64;
    Ok((total / n, acc.into_weights(w, 1.0 / n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_cost_ln2_per_label() {
        for targets in [[0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]] {
            let l = loss(&[0.0; 3], &targets).unwrap();
            assert!((l - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn saturation_limits() {
        assert!(loss(&[20.0], &[1.0]).unwrap() < 1e-8);
        assert!((loss(&[20.0], &[0.0]).unwrap() - 20.0).abs() < 1e-8);
        assert!(loss(&[-800.0], &[0.0]).unwrap().is_finite());
        assert!((loss(&[-800.0], &[1.0]).unwrap() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(loss(&[0.0], &[1.0, 0.0]), Err(NnError::LengthMismatch { .. })));
    }

    #[test]
    fn sparse_matches_dense() {
        let z = [0.3, -1.2, 4.0, 0.0, -0.7];
        let dense = loss(&z, &[0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sparse_loss(&z, &[1, 4]), dense);
    }

    #[test]
    fn dot_matches_naive() {
        let w: Vec<f32> = (0..11).map(|i| i as f32 * 0.25 - 1.0).collect();
        let d: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = w.iter().zip(&d).map(|(&a, &b)| a as f64 * b).sum();
        assert!((dot(&w, &d) - naive).abs() < 1e-12);
    }
}
