mod common;

use common::*;
use cptsuggest::nn::{backward, batch_loss, loss, Example};

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let case = toy_case(seed);
        let Some(numeric) = finite_differences(&case, 1e-3) else {
            continue;
        };
        let (_, grads) = backward(&case.model, &case.batch).unwrap();
        for (ti, (a, n)) in grads.tensors().iter().zip(&numeric).enumerate() {
            let err = tensor_relative_error(a, n);
            assert!(err < 1e-4, "seed {seed} tensor {ti}: relative error {err:e}");
        }
        checked += 1;
    }
    assert!(seed < 40, "too many models hit a ReLU kink ({seed} drawn)");
}

#[test]
fn loss_matches_direct_bernoulli_formula() {
    let case = toy_case(77);
    let (oracle, _) = naive_batch(&case.model, &case.batch);
    let got = batch_loss(&case.model, &case.batch).unwrap();
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");

    let z = [0.8, -2.5, 0.03, 3.7, -0.4];
    let dense = loss(&z, &[1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
    assert!((dense - naive_loss(&z, &[0, 3, 4])).abs() < 1e-6);
}

#[test]
fn forward_matches_naive_oracle() {
    for seed in 100..110 {
        let case = toy_case(seed);
        for ex in &case.batch {
            let got = case.model.forward(&ex.features).unwrap();
            let (want, _) = naive_forward(&case.model, ex);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn duplicated_claim_keeps_mean_gradient() {
    let case = toy_case(5);
    let one = vec![case.batch[0].clone()];
    let three = vec![case.batch[0].clone(); 3];
    let (l1, g1) = backward(&case.model, &one).unwrap();
    let (l3, g3) = backward(&case.model, &three).unwrap();
    assert!((l1 - l3).abs() < 1e-12);
    for (a, b) in g1.tensors().iter().zip(g3.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-6), "{x} vs {y}");
        }
    }
}

#[test]
fn unread_embedding_rows_get_zero_gradient() {
    let case = toy_case(9);
    let (_, g) = backward(&case.model, &case.batch).unwrap();
    let dc = case.model.dims.char_dim;
    for pos in 0..7 {
        let used: Vec<usize> = case
            .batch
            .iter()
            .flat_map(|e| e.features.icd_indices.iter().map(|c| c[pos] as usize))
            .collect();
        for row in 0..37 {
            if !used.contains(&row) {
                assert!(g.char_embed[pos][row * dc..(row + 1) * dc].iter().all(|&v| v == 0.0));
            }
        }
    }
    let dp = case.model.dims.provider_dim;
    let used: Vec<usize> = case.batch.iter().map(|e| e.features.provider_index).collect();
    for row in 0..case.model.vocabs.unk_provider() + 1 {
        if !used.contains(&row) {
            assert!(g.provider_embed[row * dp..(row + 1) * dp].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn pad_pseudo_icd_adds_exactly_its_rows() {
    // Toy model with two labels: adding an all-PAD code shifts the pooled
    // input by the PAD rows of each position table.
    let mut seed = 200;
    let case = loop {
        let c = toy_case(seed);
        if c.model.label_count() == 2 {
            break c;
        }
        seed += 1;
    };
    let mut m = case.model.clone();
    let single = Example {
        features: cptsuggest::dataset::ClaimFeatures {
            icd_indices: vec![case.batch[0].features.icd_indices[0]],
            ..case.batch[0].features.clone()
        },
        labels: vec![],
    };
    let mut padded = single.clone();
    padded.features.icd_indices.push([36; 7]);

    let dc = m.dims.char_dim;
    let mut shifted = m.clone();
    // Oracle: fold the PAD rows into the single code's own rows instead.
    let code = single.features.icd_indices[0];
    for p in 0..7 {
        for c in 0..dc {
            let pad = m.weights.char_embed[p][36 * dc + c];
            let idx = code[p] as usize * dc + c;
            shifted.weights.char_embed[p][idx] = m.weights.char_embed[p][idx] + pad;
        }
    }
    let (want, _) = naive_forward(&shifted, &single);
    let got = m.forward(&padded.features).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-5, "{g} vs {w}");
    }

    // With zero PAD rows the extra code changes nothing.
    for p in 0..7 {
        for c in 0..dc {
            m.weights.char_embed[p][36 * dc + c] = 0.0;
        }
    }
    let a = m.forward(&single.features).unwrap();
    let b = m.forward(&padded.features).unwrap();
    assert_eq!(a, b);
}
