mod common;

use std::collections::BTreeMap;

use ndarray::{array, Array1, Array2};
use rand::Rng;

use gap_core::graph::parse_edge_list;
use gap_core::model::{forward, pair_embed, static_embedding, ModelParams};
use gap_core::neighborhood::NeighborhoodSeq;
use gap_core::rng::seeded;
use gap_core::trainer::{adam_step, grad_check, random_instance, sgd_step, AdamState, GradCheckConfig, GradientSet};

use common::naive_forward;

fn random_params(n: usize, d: usize, seed: u64) -> ModelParams {
    let mut rng = seeded(seed);
    let mut embeddings = Array2::from_shape_fn((n + 1, d), |_| rng.random_range(-1.0..1.0));
    embeddings.row_mut(n).fill(0.0);
    let attn = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    ModelParams { embeddings, attn }
}

#[test]
fn forward_matches_straight_line_recomputation() {
    let (n, d, len) = (6, 4, 3);
    for seed in 0..20 {
        let p = random_params(n, d, seed);
        let mut rng = seeded(seed + 100);
        let vs = rng.random_range(1..=len);
        let vt = rng.random_range(1..=len);
        let ids_s: Vec<usize> = (0..vs).map(|i| (i * 2 + seed as usize) % n).collect();
        let ids_t: Vec<usize> = (0..vt).map(|i| (i + 1 + seed as usize) % n).collect();
        let ss = NeighborhoodSeq::from_ids(0, &ids_s, len, n).unwrap();
        let st = NeighborhoodSeq::from_ids(1, &ids_t, len, n).unwrap();
        let state = forward(&p, &ss, &st, 1.0, &mut rng, false).unwrap();
        let oracle = naive_forward(&p, &ids_s, &ids_t);
        for i in 0..vs {
            for j in 0..vt {
                assert!((state.align[[i, j]] - oracle.align[i][j]).abs() < 1e-12);
            }
        }
        for (a, b) in [
            (&state.attn_s, &oracle.attn_s),
            (&state.attn_t, &oracle.attn_t),
            (&state.r_s, &oracle.r_s),
            (&state.r_t, &oracle.r_t),
        ] {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
        let full = state.alignment_full();
        assert!(full[[len - 1, len - 1]] == f64::NEG_INFINITY || (vs == len && vt == len));
    }
}

#[test]
fn static_embedding_averages_incident_pairs() {
    let g = parse_edge_list("u v\nu w\nv w\n", true).unwrap();
    let id = |l: &str| g.id_map().get(l).unwrap();
    let (u, v, w) = (id("u"), id("v"), id("w"));
    let p = random_params(g.num_nodes(), 5, 9);
    let len = 4;
    let mut rng = seeded(1);
    let got = static_embedding(&p, &g, u, len, &mut rng).unwrap();
    let (a, _) = pair_embed(&p, &g, u, v, len, &mut rng).unwrap();
    let (b, _) = pair_embed(&p, &g, u, w, len, &mut rng).unwrap();
    let expected = (&a + &b) / 2.0;
    for (x, y) in got.iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn static_embedding_counts_incoming_edges_as_target_side() {
    let g = parse_edge_list("a b\n", true).unwrap();
    let (a, b) = (g.id_map().get("a").unwrap(), g.id_map().get("b").unwrap());
    let p = random_params(2, 3, 4);
    let mut rng = seeded(2);
    let got = static_embedding(&p, &g, b, 3, &mut rng).unwrap();
    let (_, r_b) = pair_embed(&p, &g, a, b, 3, &mut rng).unwrap();
    for (x, y) in got.iter().zip(r_b.iter()) {
        assert!((x - y).abs() < 1e-14);
    }
}

/// Textbook bias-corrected adaptive-moment update of one scalar, skipping
/// steps where the scalar receives no gradient.
fn scalar_adam(x0: f64, grads: &[Option<f64>], lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        if let Some(g) = *g {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        out.push(x);
    }
    out
}

#[test]
fn adam_trajectory_matches_scalar_reference() {
    let mut p = ModelParams {
        embeddings: array![[0.3], [0.0]],
        attn: array![[-0.7]],
    };
    let lr = 0.05;
    let row_grads = [Some(0.5), Some(-1.5), None, Some(2.0), Some(0.01), Some(-0.2), None, Some(3.0), Some(-0.9), Some(0.4)];
    let dense_grads: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
    let want_row = scalar_adam(0.3, &row_grads, lr);
    let want_dense = scalar_adam(-0.7, &dense_grads.iter().map(|&g| Some(g)).collect::<Vec<_>>(), lr);

    let mut state = AdamState::new(&p);
    for step in 0..10 {
        let mut rows = BTreeMap::new();
        if let Some(g) = row_grads[step] {
            rows.insert(0, Array1::from_elem(1, g));
        }
        // a gradient on the PAD row must be ignored
        rows.insert(1, Array1::from_elem(1, 1.0));
        let grads = GradientSet {
            rows,
            dense: vec![Array2::from_elem((1, 1), dense_grads[step])],
        };
        adam_step(&mut p, &grads, &mut state, lr).unwrap();
        assert!((p.embeddings[[0, 0]] - want_row[step]).abs() < 1e-12);
        assert!((p.attn[[0, 0]] - want_dense[step]).abs() < 1e-12);
        assert_eq!(p.embeddings[[1, 0]], 0.0);
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut p = ModelParams {
        embeddings: array![[1.0], [0.0]],
        attn: array![[0.0]],
    };
    let mut state = AdamState::new(&p);
    let mut rows = BTreeMap::new();
    rows.insert(0, Array1::from_elem(1, -3.7));
    let grads = GradientSet {
        rows,
        dense: vec![Array2::from_elem((1, 1), 0.02)],
    };
    adam_step(&mut p, &grads, &mut state, 1e-3).unwrap();
    assert!((p.embeddings[[0, 0]] - (1.0 + 1e-3)).abs() < 1e-6);
    assert!((p.attn[[0, 0]] + 1e-3).abs() < 1e-6);
}

#[test]
fn small_gradient_step_lowers_the_objective() {
    for seed in 0..10 {
        let cfg = GradCheckConfig::default();
        let (g, inst) = random_instance(&cfg, seed).unwrap();
        let mut p = ModelParams::init(g.num_nodes(), cfg.dim, seed).unwrap();
        let (before, grads) = inst.analytic(&p).unwrap();
        assert!(before > 0.0);
        sgd_step(&mut p, &grads, 1e-6).unwrap();
        let after = inst.loss(&p).unwrap();
        assert!(after < before, "seed {seed}: {after} !< {before}");
    }
}

#[test]
fn five_node_gradients_match_finite_differences() {
    let cfg = GradCheckConfig {
        nodes: 5,
        dim: 4,
        neighborhood: 3,
    };
    for seed in 0..5 {
        let report = grad_check(&cfg, seed).unwrap();
        assert!(report.passed, "{report:?}");
        let names: Vec<&str> = report.blocks.iter().map(|b| b.0.as_str()).collect();
        assert_eq!(names[0], "embeddings");
        for (_, err) in &report.blocks {
            assert!(*err < 1e-4);
        }
        assert_eq!(report.pad_grad_max, 0.0);
    }
}
