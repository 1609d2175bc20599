use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dims, NnError};
use crate::codes::{CptCode, CHAR_VOCAB, ICD_POSITIONS};
use crate::dataset::{ClaimFeatures, Vocabularies};
use crate::predict::{top_k_indices, PredictError, Predictor, Query, Suggestion};

/// Fully connected layer. `weight` is `inputs x outputs`, row-major by input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// `out = bias + x * W`, summed over inputs in ascending order.
    pub(crate) fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().map(|&b| b as f64));
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w as f64;
            }
        }
    }
}

/// Every learnable tensor. Also used for gradients and optimizer moments.
///
/// Tensor order (used by the model file and the optimizer): the seven
/// per-position character tables, the provider table, then weight and bias
/// of each dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// One `CHAR_VOCAB x char_dim` table per ICD character position.
    pub char_embed: Vec<Vec<f32>>,
    /// `(provider_count + 1) x provider_dim`; the last row is the unknown provider.
    pub provider_embed: Vec<f32>,
    pub layers: Vec<Dense>,
}

impl Weights {
    pub fn zeros(dims: &Dims, providers: usize, labels: usize) -> Self {
        let widths = dims.layer_widths(labels);
        Weights {
            char_embed: vec![vec![0.0; CHAR_VOCAB * dims.char_dim]; ICD_POSITIONS],
            provider_embed: vec![0.0; (providers + 1) * dims.provider_dim],
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut w = self.clone();
        for t in w.tensors_mut() {
            t.fill(0.0);
        }
        w
    }

    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = self.char_embed.iter().map(Vec::as_slice).collect();
        out.push(&self.provider_embed);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = self.char_embed.iter_mut().map(Vec::as_mut_slice).collect();
        out.push(&mut self.provider_embed);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// A trained or freshly initialized network bound to its vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub vocabs: Vocabularies,
    pub weights: Weights,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    pub input: Vec<f64>,
    /// Post-ReLU outputs of the three hidden layers.
    pub hidden: [Vec<f64>; 3],
    pub logits: Vec<f64>,
}

impl ModelParams {
    /// Uniform weights in `±1/sqrt(fan_in)` (embedding tables use fan-in 1),
    /// zero biases.
    pub fn init(vocabs: &Vocabularies, dims: Dims, seed: u64) -> Result<Self, NnError> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Weights::zeros(&dims, vocabs.provider_count(), vocabs.label_count());
        let mut fill = |t: &mut [f32], scale: f32| {
            for v in t {
                *v = rng.gen_range(-scale..=scale);
            }
        };
        for table in &mut weights.char_embed {
            fill(table, 1.0);
        }
        fill(&mut weights.provider_embed, 1.0);
        for layer in &mut weights.layers {
            fill(&mut layer.weight, 1.0 / (layer.inputs as f32).sqrt());
        }
        Ok(ModelParams {
            dims,
            vocabs: vocabs.clone(),
            weights,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        self.vocabs.fingerprint()
    }

    pub fn label_count(&self) -> usize {
        self.vocabs.label_count()
    }

    pub fn check_vocabs(&self, vocabs: &Vocabularies) -> Result<(), NnError> {
        if vocabs.fingerprint() == self.fingerprint() {
            Ok(())
        } else {
            Err(NnError::VocabMismatch)
        }
    }

    pub(crate) fn check_features(&self, f: &ClaimFeatures) -> Result<(), NnError> {
        if f.fingerprint != self.fingerprint() {
            return Err(NnError::VocabMismatch);
        }
        if f.icd_indices.is_empty() {
            return Err(NnError::NoDiagnoses);
        }
        if f.provider_index > self.vocabs.unk_provider()
            || f.icd_indices.iter().flatten().any(|&i| i as usize >= CHAR_VOCAB)
        {
            return Err(NnError::BadFeatures);
        }
        Ok(())
    }

    /// Raw output scores, one per label. ICDs are pooled in sorted order so
    /// the result does not depend on the order they are listed in.
    pub fn forward(&self, features: &ClaimFeatures) -> Result<Vec<f64>, NnError> {
        self.check_features(features)?;
        let mut trace = Trace::default();
        self.forward_trace(features, &mut trace);
        Ok(trace.logits)
    }

    /// Forward pass without validation; callers check features first.
    pub(crate) fn forward_trace(&self, features: &ClaimFeatures, trace: &mut Trace) {
        let dc = self.dims.char_dim;
        let dp = self.dims.provider_dim;
        let mut icds = features.icd_indices.clone();
        icds.sort_unstable();

        let x = &mut trace.input;
        x.clear();
        x.resize(ICD_POSITIONS * dc + dp, 0.0);
        for code in &icds {
            for (pos, &ch) in code.iter().enumerate() {
                let row = &self.weights.char_embed[pos][ch as usize * dc..(ch as usize + 1) * dc];
                for (acc, &w) in x[pos * dc..(pos + 1) * dc].iter_mut().zip(row) {
                    *acc += w as f64;
                }
            }
        }
        let p = features.provider_index;
        let prov = &self.weights.provider_embed[p * dp..(p + 1) * dp];
        for (acc, &w) in x[ICD_POSITIONS * dc..].iter_mut().zip(prov) {
            *acc = w as f64;
        }

        let layers = &self.weights.layers;
        let [h1, h2, h3] = &mut trace.hidden;
        layers[0].apply(&trace.input, h1);
        relu(h1);
        layers[1].apply(h1, h2);
        relu(h2);
        layers[2].apply(h2, h3);
        relu(h3);
        layers[3].apply(h3, &mut trace.logits);
    }

    /// The `k` most probable labels with their sigmoid probabilities. Ties go
    /// to the lower label index.
    pub fn predict_topk(&self, features: &ClaimFeatures, k: usize) -> Result<Vec<(CptCode, f64)>, NnError> {
        if k == 0 {
            return Err(NnError::ZeroK);
        }
        let logits = self.forward(features)?;
        Ok(top_k_indices(&logits, k)
            .into_iter()
            .map(|j| (self.vocabs.label(j).clone(), probability(logits[j])))
            .collect())
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid kept strictly inside (0, 1).
fn probability(z: f64) -> f64 {
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    sigmoid(z).clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

impl Predictor for ModelParams {
    fn method(&self) -> &'static str {
        "nn"
    }

    fn predict(&self, query: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        let features = self.vocabs.features(&query.provider_id, &query.icds);
        let top = self.predict_topk(&features, k).map_err(|e| match e {
            NnError::ZeroK => PredictError::ZeroK,
            NnError::NoDiagnoses => PredictError::NoDiagnoses,
            _ => PredictError::VocabMismatch,
        })?;
        Ok(top.into_iter().map(|(cpt, score)| Suggestion { cpt, score }).collect())
    }

    fn label_space(&self) -> Option<Vec<CptCode>> {
        Some(self.vocabs.labels().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::IcdCode;

    pub(crate) fn vocabs(labels: usize) -> Vocabularies {
        let labels = (0..labels).map(|i| CptCode::parse(&format!("{:05}", 10000 + i)).unwrap()).collect();
        Vocabularies::from_parts(labels, vec!["p0".into(), "p1".into()], 3)
    }

    fn features(v: &Vocabularies, icds: &[&str]) -> ClaimFeatures {
        let codes: Vec<IcdCode> = icds.iter().map(|s| IcdCode::normalize(s).unwrap()).collect();
        v.features("p1", &codes)
    }

    #[test]
    fn shapes_follow_dims() {
        let v = vocabs(300);
        let m = ModelParams::init(&v, Dims::default(), 1).unwrap();
        assert_eq!(m.dims.input_len(), 72);
        assert_eq!(m.weights.layers[0].inputs, 72);
        let last = &m.weights.layers[3];
        assert_eq!((last.inputs, last.outputs, last.bias.len()), (128, 300, 300));
        assert_eq!(m.weights.provider_embed.len(), 3 * 16);
        assert_eq!(m.weights.char_embed.len(), 7);
        assert!(m.weights.char_embed.iter().all(|t| t.len() == 37 * 8));
        assert!(m.weights.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_is_deterministic() {
        let v = vocabs(5);
        let a = ModelParams::init(&v, Dims::default(), 3).unwrap();
        assert_eq!(a, ModelParams::init(&v, Dims::default(), 3).unwrap());
        assert_ne!(a, ModelParams::init(&v, Dims::default(), 4).unwrap());
        let bad = Dims { char_dim: 0, ..Dims::default() };
        assert!(matches!(ModelParams::init(&v, bad, 3), Err(NnError::BadDims(_))));
    }

    #[test]
    fn zero_model_gives_zero_logits_and_index_order() {
        let v = vocabs(6);
        let mut m = ModelParams::init(&v, Dims::default(), 3).unwrap();
        m.weights = m.weights.zeros_like();
        let f = features(&v, &["E119", "A00"]);
        assert!(m.forward(&f).unwrap().iter().all(|&z| z == 0.0));
        let top = m.predict_topk(&f, 3).unwrap();
        let idx: Vec<_> = top.iter().map(|(c, _)| v.label_of(c).unwrap()).collect();
        assert_eq!(idx, [0, 1, 2]);
        assert!(top.iter().all(|&(_, p)| p == 0.5));
        assert_eq!(m.predict_topk(&f, 50).unwrap().len(), 6);
    }

    #[test]
    fn biased_label_ranks_first() {
        let v = vocabs(4);
        let mut m = ModelParams::init(&v, Dims::default(), 3).unwrap();
        m.weights = m.weights.zeros_like();
        m.weights.layers[3].bias = vec![-3.0, -3.0, 3.0, -3.0];
        let top = m.predict_topk(&features(&v, &["E119"]), 2).unwrap();
        assert_eq!(v.label_of(&top[0].0), Some(2));
        let expected = 1.0 / (1.0 + (-3.0f64).exp());
        assert!((top[0].1 - expected).abs() < 1e-12);
        assert!((top[0].1 - 0.9526).abs() < 1e-4);
    }

    #[test]
    fn icd_order_does_not_change_logits() {
        let v = vocabs(5);
        let m = ModelParams::init(&v, Dims::default(), 11).unwrap();
        let a = features(&v, &["E119", "A00", "Z99ZZ99"]);
        let mut b = a.clone();
        b.icd_indices.reverse();
        let (la, lb) = (m.forward(&a).unwrap(), m.forward(&b).unwrap());
        assert!(la.iter().zip(&lb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_foreign_features() {
        let v = vocabs(5);
        let m = ModelParams::init(&v, Dims::default(), 1).unwrap();
        let other = vocabs(6);
        assert!(matches!(m.forward(&features(&other, &["E119"])), Err(NnError::VocabMismatch)));
        assert!(matches!(m.check_vocabs(&other), Err(NnError::VocabMismatch)));
        let empty = v.features("p0", std::iter::empty());
        assert!(matches!(m.forward(&empty), Err(NnError::NoDiagnoses)));
    }

    #[test]
    fn probabilities_stay_open_interval() {
        assert!(probability(800.0) < 1.0);
        assert!(probability(-800.0) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
