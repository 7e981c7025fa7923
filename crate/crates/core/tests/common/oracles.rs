//! Independent dense re-implementations checked against the library.

use gcnssl::graph::adjacency_dense;
use gcnssl::ssl::{fused_link_loss, link_target, positive_weight, sampled_link_loss, weighted_link_loss};
use gcnssl::{normalize_adjacency, GcnModel, ModelConfig, ModelInput, Result, Rng, Tape, Tensor};

use super::{
    dense_adjacency, dense_features, dense_matmul, dense_normalized, max_abs_diff, naive_link_loss,
    rand_tensor, random_graph, random_graph_with, to_dense, Dense,
};

fn relu(m: Dense) -> Dense {
    m.into_iter()
        .map(|r| r.into_iter().map(|x| x.max(0.0)).collect())
        .collect()
}

fn softmax(m: Dense) -> Dense {
    m.into_iter()
        .map(|r| {
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|x| (x - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// Worst entry-wise difference between the sparse forward pass and the
/// dense reference over `graphs` random graphs with at most 20 nodes.
pub fn forward_equivalence(graphs: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..graphs {
        let mut rng = Rng::new(1000 + seed);
        let features = 1 + rng.below(8);
        let g = random_graph(&mut rng, 20, features);
        let cfg = ModelConfig {
            hidden: 1 + rng.below(6),
            ..ModelConfig::default()
        };
        let model = GcnModel::<f64>::classifier(g.num_features(), g.num_classes(), cfg, &mut rng)?;
        let a = dense_normalized(&g);
        worst = worst.max(max_abs_diff(&to_dense(&normalize_adjacency::<f64>(&g).matrix().to_dense()), &a));

        let theta1 = to_dense(model.theta1());
        let theta2 = to_dense(model.theta2().expect("classifier"));
        let h = relu(dense_matmul(&a, &dense_matmul(&dense_features(&g), &theta1)));
        let z = dense_matmul(&a, &dense_matmul(&h, &theta2));
        let p = softmax(z);

        let input = ModelInput::from_graph(&g);
        worst = worst.max(max_abs_diff(&to_dense(&model.embeddings(&input)?), &h));
        worst = worst.max(max_abs_diff(&to_dense(&model.predict(&input)?), &p));
    }
    Ok(worst)
}

/// Worst absolute difference between the library link losses (plain and
/// fused) and the naive formula on random logits of magnitude ≤ 8.
pub fn loss_vs_naive(graphs: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..graphs {
        let mut rng = Rng::new(2000 + seed);
        let g = random_graph(&mut rng, 16, 2);
        let n = g.num_nodes();
        let w = positive_weight(&g)?;
        let target = link_target::<f64>(&g);
        let dense_target = dense_adjacency(&g);

        let x = rand_tensor(&mut rng, n, n).map(|v| 8.0 * v);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let loss = weighted_link_loss(&mut tape, xv, &target, w)?;
        let naive = naive_link_loss(&to_dense(&x), &dense_target, w);
        worst = worst.max((tape.value(loss).item()? - naive).abs());

        let d = 1 + rng.below(4);
        let h = rand_tensor(&mut rng, n, d).map(|v| 2.0 * v);
        let hd = to_dense(&h);
        let logits = dense_matmul(&hd, &to_dense(&h.transpose()));
        let hv = tape.constant(h);
        let fused = fused_link_loss(&mut tape, hv, &target, w)?;
        let naive = naive_link_loss(&logits, &dense_target, w);
        worst = worst.max((tape.value(fused).item()? - naive).abs());
    }
    Ok(worst)
}

/// Graphs on which `positive_weight` differs from `(N² − nnz) / nnz` with
/// `nnz` counted on the dense binary adjacency.
pub fn positive_weight_mismatches(graphs: u64) -> Result<usize> {
    let mut bad = 0;
    for seed in 0..graphs {
        let mut rng = Rng::new(3000 + seed);
        let g = random_graph(&mut rng, 30, 1);
        let dense = adjacency_dense::<f64>(&g, 64)?;
        let nnz = dense.data().iter().filter(|&&v| v != 0.0).count() as f64;
        let n2 = (g.num_nodes() * g.num_nodes()) as f64;
        if positive_weight(&g)? != (n2 - nnz) / nnz {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Relative gap between the mean of `draws` sampled link losses and the
/// full loss, worst over `graphs` graphs.
pub fn sampled_expectation_gap(graphs: u64, draws: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..graphs {
        let mut rng = Rng::new(4000 + seed);
        let n = 20 + rng.below(21);
        let g = random_graph_with(&mut rng, n, 1, 0.1);
        let h: Tensor<f64> = rand_tensor(&mut rng, n, 4);
        let target = link_target::<f64>(&g);
        let w = positive_weight(&g)?;
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let full = fused_link_loss(&mut tape, hv, &target, w)?;
        let full = tape.value(full).item()?;
        let mut sampler = Rng::new(seed).fork("negatives");
        let mut total = 0.0;
        for _ in 0..draws {
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let l = sampled_link_loss(&mut tape, hv, &g, 5, &mut sampler)?;
            total += tape.value(l).item()?;
        }
        worst = worst.max(((total / draws as f64) - full).abs() / full);
    }
    Ok(worst)
}

/// Worst relative difference in `t` and `p` between [`paired_t_test`] and
/// statrs on `cases` random paired samples.
pub fn ttest_vs_statrs(cases: u64) -> Result<f64> {
    use gcnssl::paired_t_test;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::statistics::Statistics;

    let mut worst = 0.0f64;
    for seed in 0..cases {
        let mut rng = Rng::new(5000 + seed);
        let n = 3 + rng.below(18);
        let shift = rng.uniform_range(-0.05, 0.05);
        let a: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.75, 0.85)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + shift + rng.uniform_range(-0.02, 0.02)).collect();
        let ours = paired_t_test(&b, &a)?;

        let d: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        let t = d.iter().mean() / (d.iter().std_dev() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
        let p = 2.0 * dist.cdf(-t.abs());

        worst = worst
            .max(((ours.t - t) / t).abs())
            .max(((ours.p_value - p) / p).abs());
    }
    Ok(worst)
}
