//! One gradient check per differentiable operation and loss, parameterized by seed.

use std::sync::Arc;

use gcnssl::model::{l2_penalty, masked_cross_entropy};
use gcnssl::numeric::PairTerm;
use gcnssl::ssl::{fused_link_loss, link_decoder_logits, link_target, positive_weight, sampled_link_loss, weighted_link_loss};
use gcnssl::{GcnModel, ModelConfig, ModelInput, Result, Rng, SparseMatrix, SplitKind};

use super::{gradcheck, gradcheck_model, probe, rand_away_from_zero, rand_sparse, rand_tensor, random_graph};

pub struct Case {
    pub name: &'static str,
    pub check: fn(u64) -> Result<f64>,
}

fn dims(rng: &mut Rng) -> (usize, usize, usize) {
    (2 + rng.below(4), 2 + rng.below(4), 1 + rng.below(4))
}

fn matmul(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, k, c) = dims(&mut rng);
    let inputs = vec![rand_tensor(&mut rng, r, k), rand_tensor(&mut rng, k, c)];
    gradcheck(inputs, |t, s, ids| {
        let (a, b) = (t.param(s, ids[0]), t.param(s, ids[1]));
        let m = t.matmul(a, b)?;
        probe(t, m, seed)
    })
}

fn gram(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (n, d, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, n, d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        let g = t.gram(h);
        probe(t, g, seed)
    })
}

fn spmm(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, k, c) = dims(&mut rng);
    let sparse = Arc::new(rand_sparse(&mut rng, r, k, 0.5));
    gradcheck(vec![rand_tensor(&mut rng, k, c)], |t, s, ids| {
        let d = t.param(s, ids[0]);
        let m = t.spmm(Arc::clone(&sparse), d)?;
        probe(t, m, seed)
    })
}

fn add_row(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let inputs = vec![rand_tensor(&mut rng, r, c), rand_tensor(&mut rng, 1, c)];
    gradcheck(inputs, |t, s, ids| {
        let (x, b) = (t.param(s, ids[0]), t.param(s, ids[1]));
        let y = t.add_row(x, b)?;
        probe(t, y, seed)
    })
}

fn add(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let inputs = vec![rand_tensor(&mut rng, r, c), rand_tensor(&mut rng, r, c)];
    gradcheck(inputs, |t, s, ids| {
        let (a, b) = (t.param(s, ids[0]), t.param(s, ids[1]));
        let y = t.add(a, b)?;
        probe(t, y, seed)
    })
}

fn mul(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let inputs = vec![rand_tensor(&mut rng, r, c), rand_tensor(&mut rng, r, c)];
    gradcheck(inputs, |t, s, ids| {
        let (a, b) = (t.param(s, ids[0]), t.param(s, ids[1]));
        let y = t.mul(a, b)?;
        probe(t, y, seed)
    })
}

fn scale(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let factor = rng.uniform_range(-3.0, 3.0);
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.scale(x, factor);
        probe(t, y, seed)
    })
}

fn relu(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_away_from_zero(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.relu(x);
        probe(t, y, seed)
    })
}

fn elu(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let alpha = rng.uniform_range(0.5, 2.0);
    gradcheck(vec![rand_away_from_zero(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.elu(x, alpha);
        probe(t, y, seed)
    })
}

fn sigmoid(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, r, c).map(|x| 4.0 * x)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.sigmoid(x);
        probe(t, y, seed)
    })
}

fn softmax_rows(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, r, c).map(|x| 3.0 * x)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.softmax_rows(x);
        probe(t, y, seed)
    })
}

fn dropout(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let rate = rng.uniform_range(0.1, 0.7);
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.dropout(x, rate, &mut Rng::new(seed).fork("mask"), true)?;
        probe(t, y, seed)
    })
}

fn sum(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.sigmoid(x);
        Ok(t.sum(y))
    })
}

fn mean(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let y = t.sigmoid(x);
        Ok(t.mean(y))
    })
}

fn sum_squares(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        Ok(t.sum_squares(x))
    })
}

fn picked_nll(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, _) = dims(&mut rng);
    let mut picks = vec![(0, rng.below(c))];
    for i in 1..r {
        if rng.bernoulli(0.7) {
            picks.push((i, rng.below(c)));
        }
    }
    gradcheck(vec![rand_tensor(&mut rng, r, c)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let p = t.softmax_rows(x);
        t.picked_nll(p, picks.clone(), 1e-12)
    })
}

fn symmetric_target(rng: &mut Rng, n: usize) -> Arc<SparseMatrix<f64>> {
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(0.4) {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(n, n, triplets).unwrap().into_symmetric().unwrap())
}

fn weighted_bce(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let n = 2 + rng.below(5);
    let target = symmetric_target(&mut rng, n);
    let w = rng.uniform_range(0.5, 5.0);
    gradcheck(vec![rand_tensor(&mut rng, n, n).map(|x| 3.0 * x)], |t, s, ids| {
        let x = t.param(s, ids[0]);
        t.weighted_bce(x, Arc::clone(&target), w)
    })
}

fn gram_weighted_bce(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (n, d, _) = dims(&mut rng);
    let target = symmetric_target(&mut rng, n + 1);
    let w = rng.uniform_range(0.5, 5.0);
    gradcheck(vec![rand_tensor(&mut rng, n + 1, d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        t.gram_weighted_bce(h, Arc::clone(&target), w)
    })
}

fn pair_bce(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (n, d, _) = dims(&mut rng);
    let terms: Vec<PairTerm<f64>> = (0..3 * n)
        .map(|_| PairTerm {
            i: rng.below(n) as u32,
            j: rng.below(n) as u32,
            positive: rng.bernoulli(0.5),
            weight: rng.uniform_range(0.1, 3.0),
        })
        .collect();
    let scale = rng.uniform_range(0.1, 2.0);
    gradcheck(vec![rand_tensor(&mut rng, n, d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        t.pair_bce(h, terms.clone(), scale)
    })
}

fn masked_ce(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 10, 4);
    let nodes = g.split().nodes(SplitKind::Train).to_vec();
    gradcheck(vec![rand_tensor(&mut rng, g.num_nodes(), g.num_classes())], |t, s, ids| {
        let x = t.param(s, ids[0]);
        let p = t.softmax_rows(x);
        masked_cross_entropy(t, p, g.labels(), &nodes)
    })
}

fn l2(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (r, c, k) = dims(&mut rng);
    let w = rng.uniform_range(1e-3, 1.0);
    let inputs = vec![rand_tensor(&mut rng, r, c), rand_tensor(&mut rng, c, k)];
    gradcheck(inputs, |t, s, ids| l2_penalty(t, s, ids, w))
}

fn link_loss(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 9, 3);
    let target = link_target::<f64>(&g);
    let w = positive_weight(&g)?;
    let d = 1 + rng.below(4);
    gradcheck(vec![rand_tensor(&mut rng, g.num_nodes(), d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        let logits = link_decoder_logits(t, h);
        weighted_link_loss(t, logits, &target, w)
    })
}

fn fused_link(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 9, 3);
    let target = link_target::<f64>(&g);
    let w = positive_weight(&g)?;
    let d = 1 + rng.below(4);
    gradcheck(vec![rand_tensor(&mut rng, g.num_nodes(), d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        fused_link_loss(t, h, &target, w)
    })
}

fn sampled_link(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 9, 3);
    let d = 1 + rng.below(4);
    gradcheck(vec![rand_tensor(&mut rng, g.num_nodes(), d)], |t, s, ids| {
        let h = t.param(s, ids[0]);
        sampled_link_loss(t, h, &g, 3, &mut Rng::new(seed).fork("negatives"))
    })
}

fn model_config(rng: &mut Rng) -> ModelConfig {
    ModelConfig {
        hidden: 2 + rng.below(4),
        dropout: 0.3,
        bias: rng.bernoulli(0.5),
    }
}

/// Zero-initialized biases put nodes without input exactly on the ReLU kink.
fn nonzero_biases(model: &mut GcnModel<f64>, rng: &mut Rng) {
    for p in model.store_mut().iter_mut() {
        if p.name().starts_with("bias") {
            let (r, c) = p.shape();
            p.value = rand_away_from_zero(rng, r, c);
        }
    }
}

fn classifier_objective(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 10, 5);
    let cfg = model_config(&mut rng);
    let mut model = GcnModel::<f64>::classifier(g.num_features(), g.num_classes(), cfg, &mut rng)?;
    nonzero_biases(&mut model, &mut rng);
    let input = ModelInput::from_graph(&g);
    let train = g.split().nodes(SplitKind::Train).to_vec();
    gradcheck_model(&mut model, |m, t| {
        let p = m.classify(t, &input, &mut Rng::new(seed).fork("dropout"), true)?;
        let ce = masked_cross_entropy(t, p, g.labels(), &train)?;
        let decay = l2_penalty(t, m.store(), &m.penalized(false), 5e-4)?;
        t.add(ce, decay)
    })
}

fn pretext_objective(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let g = random_graph(&mut rng, 10, 5);
    let cfg = model_config(&mut rng);
    let mut model = GcnModel::<f64>::encoder(g.num_features(), cfg, &mut rng)?;
    nonzero_biases(&mut model, &mut rng);
    let input = ModelInput::from_graph(&g);
    let target = link_target::<f64>(&g);
    let w = positive_weight(&g)?;
    gradcheck_model(&mut model, |m, t| {
        let h = m.encode(t, &input, &mut Rng::new(seed).fork("dropout"), true)?;
        fused_link_loss(t, h, &target, w)
    })
}

pub fn all() -> Vec<Case> {
    macro_rules! cases {
        ($($f:ident),* $(,)?) => {
            vec![$(Case { name: stringify!($f), check: $f }),*]
        };
    }
    cases![
        matmul,
        gram,
        spmm,
        add_row,
        add,
        mul,
        scale,
        relu,
        elu,
        sigmoid,
        softmax_rows,
        dropout,
        sum,
        mean,
        sum_squares,
        picked_nll,
        weighted_bce,
        gram_weighted_bce,
        pair_bce,
        masked_ce,
        l2,
        link_loss,
        fused_link,
        sampled_link,
        classifier_objective,
        pretext_objective,
    ]
}

/// Worst relative error of `case` over the seeds `0..instances`.
pub fn worst(case: &Case, instances: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        worst = worst.max((case.check)(seed)?);
    }
    Ok(worst)
}
