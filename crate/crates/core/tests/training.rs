use gap_core::checkpoint::Checkpoint;
use gap_core::eval::link_prediction;
use gap_core::graph::{parse_edge_list, split_edges, EdgeSplit};
use gap_core::model::ModelParams;
use gap_core::trainer::{train, train_mlp, OptimizerKind, TrainConfig};

fn two_cliques() -> EdgeSplit {
    let mut text = String::new();
    for base in [0, 5] {
        for a in 0..5 {
            for b in a + 1..5 {
                text.push_str(&format!("{} {}\n", base + a, base + b));
            }
        }
    }
    text.push_str("4 5\n");
    let g = parse_edge_list(&text, false).unwrap();
    assert_eq!((g.num_nodes(), g.num_edges()), (10, 21));
    split_edges(&g, 1.0, 0.25, 7).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        neighborhood: 5,
        dim: 16,
        dropout_keep: 1.0,
        learning_rate: 0.01,
        batch_size: 4,
        max_epochs: 50,
        patience: 50,
        seed: 3,
        optimizer: OptimizerKind::Adam,
    }
}

#[test]
fn two_cliques_become_separable() {
    let split = two_cliques();
    assert_eq!(split.valid_edges.len(), 5);
    let out = train(&split, &small_config()).unwrap();
    assert_eq!(out.history.len(), 50);
    let best = out.best_epoch.unwrap();
    let best_auc = out.history.iter().find(|r| r.epoch == best).unwrap().valid_auc;
    assert!(best_auc >= 0.9, "validation AUC {best_auc}");
    let first = out.history.first().unwrap().mean_loss;
    let last = out.history.last().unwrap().mean_loss;
    assert!(last < first, "loss {first} -> {last}");
    assert_eq!(out.params.embeddings.row(10).iter().filter(|&&x| x != 0.0).count(), 0);
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let split = two_cliques();
    let cfg = TrainConfig {
        max_epochs: 0,
        ..small_config()
    };
    let out = train(&split, &cfg).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.params, ModelParams::init(10, cfg.dim, cfg.seed).unwrap());
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let split = two_cliques();
    let cfg = TrainConfig {
        max_epochs: 8,
        dropout_keep: 0.7,
        ..small_config()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(&split, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let strip = |h: &[gap_core::trainer::EpochRecord]| -> Vec<(usize, u64, u64)> {
        h.iter().map(|r| (r.epoch, r.mean_loss.to_bits(), r.valid_auc.to_bits())).collect()
    };
    assert_eq!(strip(&a.history), strip(&b.history));
    let text = |p: ModelParams| Checkpoint::Gap { params: p, neighborhood: cfg.neighborhood }.to_text();
    assert_eq!(text(a.params), text(b.params));
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let split = two_cliques();
    let cfg = TrainConfig {
        patience: 2,
        max_epochs: 40,
        ..small_config()
    };
    let out = train(&split, &cfg).unwrap();
    let best = out.best_epoch.unwrap();
    let best_auc = out.history.iter().find(|r| r.epoch == best).unwrap().valid_auc;
    assert!(out.history.iter().all(|r| r.valid_auc <= best_auc));
    assert!(out.history.len() <= 40);
    let auc = link_prediction(&out.params, &split, cfg.neighborhood, 0);
    // the split has no test edges
    assert!(auc.is_err());
}

#[test]
fn sgd_and_feed_forward_variants_reduce_loss() {
    let split = two_cliques();
    let sgd = train(
        &split,
        &TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.05,
            ..small_config()
        },
    )
    .unwrap();
    assert!(sgd.history.last().unwrap().mean_loss < sgd.history[0].mean_loss);
    let mlp = train_mlp(&split, &small_config()).unwrap();
    assert!(mlp.history.last().unwrap().mean_loss < mlp.history[0].mean_loss);
}
