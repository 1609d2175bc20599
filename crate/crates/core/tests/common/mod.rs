//! Test-only oracles, written independently of the library code paths they
//! check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cptsuggest::codes::{CptCode, CHAR_VOCAB};
use cptsuggest::dataset::Vocabularies;
use cptsuggest::nn::{Dims, Example, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain forward pass: returns logits and the on/off pattern of every hidden unit.
pub fn naive_forward(m: &ModelParams, ex: &Example) -> (Vec<f64>, Vec<bool>) {
    let dc = m.dims.char_dim;
    let dp = m.dims.provider_dim;
    let w = &m.weights;
    let mut x = vec![0.0f64; 7 * dc + dp];
    for code in &ex.features.icd_indices {
        for p in 0..7 {
            for c in 0..dc {
                x[p * dc + c] += w.char_embed[p][code[p] as usize * dc + c] as f64;
            }
        }
    }
    for c in 0..dp {
        x[7 * dc + c] = w.provider_embed[ex.features.provider_index * dp + c] as f64;
    }
    let mut pattern = Vec::new();
    for (li, layer) in w.layers.iter().enumerate() {
        let mut z = vec![0.0f64; layer.outputs];
        for j in 0..layer.outputs {
            z[j] = layer.bias[j] as f64;
            for i in 0..layer.inputs {
                z[j] += x[i] * layer.weight[i * layer.outputs + j] as f64;
            }
        }
        if li < 3 {
            for v in &mut z {
                pattern.push(*v > 0.0);
                *v = v.max(0.0);
            }
        }
        x = z;
    }
    (x, pattern)
}

/// `-sum log Bernoulli` written directly with sigmoid and logs.
pub fn naive_loss(logits: &[f64], labels: &[usize]) -> f64 {
    logits
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let s = 1.0 / (1.0 + (-z).exp());
            if labels.contains(&j) {
                -s.ln()
            } else {
                -(1.0 - s).ln()
            }
        })
        .sum()
}

pub fn naive_batch(m: &ModelParams, batch: &[Example]) -> (f64, Vec<bool>) {
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for ex in batch {
        let (z, p) = naive_forward(m, ex);
        total += naive_loss(&z, &ex.labels);
        pattern.extend(p);
    }
    (total / batch.len() as f64, pattern)
}

pub struct ToyCase {
    pub model: ModelParams,
    pub batch: Vec<Example>,
}

/// Random model with every dimension at most 4, at most 5 labels and a
/// batch of at most 3 claims drawn from a 2-ICD vocabulary.
pub fn toy_case(seed: u64) -> ToyCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_labels = rng.gen_range(2..=5);
    let labels = (0..n_labels).map(|i| CptCode::parse(&format!("{}", 20000 + i)).unwrap()).collect();
    let providers = (0..rng.gen_range(1..=3)).map(|i| format!("p{i}")).collect();
    let vocabs = Vocabularies::from_parts(labels, providers, 2);
    let dims = Dims {
        char_dim: rng.gen_range(1..=4),
        provider_dim: rng.gen_range(1..=4),
        hidden: [rng.gen_range(2..=4), rng.gen_range(2..=4), rng.gen_range(2..=4)],
    };
    let mut model = ModelParams::init(&vocabs, dims, seed).unwrap();
    for t in model.weights.tensors_mut() {
        for v in t {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let icd_pool: Vec<[u8; 7]> = (0..2)
        .map(|_| {
            let len = rng.gen_range(3..=7);
            std::array::from_fn(|p| if p < len { rng.gen_range(0..36) } else { 36 })
        })
        .collect();
    let batch = (0..rng.gen_range(1..=3))
        .map(|_| {
            let mut icds = vec![icd_pool[0], icd_pool[1]];
            icds.truncate(rng.gen_range(1..=2));
            let labels: BTreeSet<usize> = (0..n_labels).filter(|_| rng.gen_bool(0.4)).collect();
            Example {
                features: cptsuggest::dataset::ClaimFeatures {
                    icd_indices: icds,
                    provider_index: rng.gen_range(0..=vocabs.unk_provider()),
                    fingerprint: vocabs.fingerprint(),
                },
                labels: labels.into_iter().collect(),
            }
        })
        .collect();
    assert!(CHAR_VOCAB == 37);
    ToyCase { model, batch }
}

/// Central differences at step `h` for every parameter. `None` when some
/// perturbation flips a ReLU, where the derivative is not defined.
pub fn finite_differences(case: &ToyCase, h: f32) -> Option<Vec<Vec<f64>>> {
    let (_, base_pattern) = naive_batch(&case.model, &case.batch);
    let mut m = case.model.clone();
    let lens: Vec<usize> = m.weights.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, &len) in lens.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = m.weights.tensors()[ti][i];
            let (up, down) = (orig + h, orig - h);
            m.weights.tensors_mut()[ti][i] = up;
            let (lp, pp) = naive_batch(&m, &case.batch);
            m.weights.tensors_mut()[ti][i] = down;
            let (lm, pm) = naive_batch(&m, &case.batch);
            m.weights.tensors_mut()[ti][i] = orig;
            if pp != base_pattern || pm != base_pattern {
                return None;
            }
            *gi = (lp - lm) / (up as f64 - down as f64);
        }
        out.push(g);
    }
    Some(out)
}

/// `|a - n| / max(|a|, |n|)` over a whole tensor (0 when both vanish).
pub fn tensor_relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Every itemset with its count, by enumerating all subsets of the item universe.
pub fn brute_force_itemsets(transactions: &[Vec<String>], min_count: u64) -> BTreeMap<Vec<String>, u64> {
    let universe: Vec<String> = transactions.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    assert!(universe.len() <= 16);
    let masks: Vec<u32> = transactions
        .iter()
        .map(|t| t.iter().map(|it| 1u32 << universe.iter().position(|u| u == it).unwrap()).fold(0, |a, b| a | b))
        .collect();
    let mut out = BTreeMap::new();
    for subset in 1u32..(1 << universe.len()) {
        let count = masks.iter().filter(|&&m| m & subset == subset).count() as u64;
        if count >= min_count {
            let items = (0..universe.len()).filter(|i| subset >> i & 1 == 1).map(|i| universe[i].clone()).collect();
            out.insert(items, count);
        }
    }
    out
}

pub struct Registry {
    pub claims: Vec<cptsuggest::dataset::Claim>,
    pub truth: cptsuggest::dataset::GroundTruth,
    pub rules: std::path::PathBuf,
}

/// Writes `demo.nn`, `demo.bayes` and `demo.apriori` trained on a small
/// synthetic corpus into `dir`, plus the corpus's rules file.
pub fn small_registry(dir: &std::path::Path) -> Registry {
    use cptsuggest::dataset::{generate_synthetic, SyntheticSpec};
    use cptsuggest::nn::{save_model, train, TrainHyper};

    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 40,
        n_cpts: 40,
        n_claims: 1500,
        seed: 9,
        ..SyntheticSpec::default()
    };
    let (claims, truth) = generate_synthetic(&spec).unwrap();
    let vocabs = Vocabularies::build(&claims, 1).unwrap();
    let dims = Dims {
        char_dim: 4,
        provider_dim: 4,
        hidden: [16, 16, 16],
    };
    let hyper = TrainHyper {
        epochs: 2,
        ..TrainHyper::default()
    };
    let (model, _) = train(&claims, &[], &vocabs, dims, &hyper).unwrap();
    save_model(&model, dir.join("demo.nn")).unwrap();
    cptsuggest::bayes::BayesModel::fit(&claims, &vocabs, 1.0)
        .unwrap()
        .save(dir.join("demo.bayes"))
        .unwrap();
    cptsuggest::apriori::mine_rules(&claims, 0.005, 0.2)
        .unwrap()
        .save(dir.join("demo.apriori"))
        .unwrap();
    let rules = dir.join("rules.txt");
    truth.constraints.save(&rules).unwrap();
    Registry { claims, truth, rules }
}
