#![allow(dead_code)]

pub mod cases;
pub mod oracles;

use std::path::PathBuf;

use gcnssl::numeric::{ParamId, ParamStore};
use gcnssl::{GcnModel, Graph, GraphParts, Result, Rng, SparseMatrix, Split, Tape, Tensor, Var};

/// Central-difference step.
pub const H: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Compares tape gradients of `f` with respect to every input with central
/// finite differences.
pub fn gradcheck<F>(inputs: Vec<Tensor<f64>>, f: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[ParamId]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("x{i}"), t))
        .collect();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &store, &ids)?;
    tape.backward(loss, &mut store)?;
    let analytic: Vec<f64> = ids
        .iter()
        .flat_map(|&id| store.get(id).grad().data().to_vec())
        .collect();
    let value = |store: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store, &ids)?;
        tape.value(loss).item()
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    for &id in &ids {
        for e in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data()[e];
            store.get_mut(id).value.data_mut()[e] = orig + H;
            let up = value(&store)?;
            store.get_mut(id).value.data_mut()[e] = orig - H;
            let down = value(&store)?;
            store.get_mut(id).value.data_mut()[e] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

/// [`gradcheck`] over the parameters of a model.
pub fn gradcheck_model<F>(model: &mut GcnModel<f64>, f: F) -> Result<f64>
where
    F: Fn(&GcnModel<f64>, &mut Tape<f64>) -> Result<Var>,
{
    model.store_mut().zero_grad();
    let mut tape = Tape::new();
    let loss = f(model, &mut tape)?;
    tape.backward(loss, model.store_mut())?;
    let ids: Vec<ParamId> = model.store().iter().map(|p| p.id()).collect();
    let analytic: Vec<f64> = model
        .store()
        .iter()
        .flat_map(|p| p.grad().data().to_vec())
        .collect();
    let value = |m: &GcnModel<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(m, &mut tape)?;
        tape.value(loss).item()
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    for &id in &ids {
        for e in 0..model.store().get(id).value.len() {
            let orig = model.store().get(id).value.data()[e];
            model.store_mut().get_mut(id).value.data_mut()[e] = orig + H;
            let up = value(model)?;
            model.store_mut().get_mut(id).value.data_mut()[e] = orig - H;
            let down = value(model)?;
            model.store_mut().get_mut(id).value.data_mut()[e] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

pub fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.uniform_range(-1.0, 1.0))
}

/// Entries with magnitude in `[0.05, 1)`, away from activation kinks.
pub fn rand_away_from_zero(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| {
        let m = rng.uniform_range(0.05, 1.0);
        if rng.bernoulli(0.5) {
            m
        } else {
            -m
        }
    })
}

pub fn rand_sparse(rng: &mut Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix<f64> {
    let mut triplets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.bernoulli(density) {
                triplets.push((r, c, rng.uniform_range(-1.0, 1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, triplets).unwrap()
}

/// `Σ v ⊙ C` for a fixed random `C`, turning any tensor into a scalar with
/// a non-uniform gradient.
pub fn probe(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(v).shape();
    let weights = rand_tensor(&mut Rng::new(seed ^ 0x5eed), r, c);
    let w = tape.constant(weights);
    let m = tape.mul(v, w)?;
    Ok(tape.sum(m))
}

/// Graph with `n` nodes, each pair linked with probability `density`,
/// real-valued features with about half the entries nonzero, three classes
/// and every node labeled.
pub fn random_graph_with(rng: &mut Rng, n: usize, features: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.bernoulli(density) {
                edges.push((u, v));
            }
        }
    }
    let mut triplets = Vec::new();
    for r in 0..n {
        for c in 0..features {
            if rng.bernoulli(0.5) {
                triplets.push((r, c, rng.uniform_range(-1.0, 1.0)));
            }
        }
    }
    let classes = 3;
    let labels = (0..n).map(|_| Some(rng.below(classes) as u32)).collect();
    let by = |k: usize| (0..n).filter(|i| i % 3 == k).collect::<Vec<_>>();
    Graph::new(GraphParts {
        name: "random".into(),
        num_nodes: n,
        num_classes: classes,
        edges,
        features: SparseMatrix::from_triplets(n, features, triplets).unwrap(),
        labels,
        split: Split {
            train: by(0),
            val: by(1),
            test: by(2),
        },
    })
    .unwrap()
}

/// Random graph with 3 to `max_nodes` nodes and at least one edge.
pub fn random_graph(rng: &mut Rng, max_nodes: usize, features: usize) -> Graph {
    loop {
        let n = 3 + rng.below(max_nodes - 2);
        let density = rng.uniform_range(0.1, 0.6);
        let g = random_graph_with(rng, n, features, density);
        if g.num_edges() > 0 {
            return g;
        }
    }
}

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(t: &Tensor<f64>) -> Dense {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn dense_matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` from the edge list.
pub fn dense_normalized(g: &Graph) -> Dense {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(u, v) in g.edges() {
        a[u as usize][v as usize] = 1.0;
        a[v as usize][u as usize] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

pub fn dense_features(g: &Graph) -> Dense {
    to_dense(&g.features().to_dense())
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// Naive weighted cross-entropy: `−mean[W·t·ln σ(x) + (1−t)·ln(1−σ(x))]`.
pub fn naive_link_loss(logits: &Dense, target: &Dense, w: f64) -> f64 {
    let n = logits.len() * logits[0].len();
    let mut total = 0.0;
    for (lr, tr) in logits.iter().zip(target) {
        for (&x, &t) in lr.iter().zip(tr) {
            let s = 1.0 / (1.0 + (-x).exp());
            total += w * t * s.ln() + (1.0 - t) * (1.0 - s).ln();
        }
    }
    -total / n as f64
}

pub fn dense_adjacency(g: &Graph) -> Dense {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u as usize][v as usize] = 1.0;
        a[v as usize][u as usize] = 1.0;
    }
    a
}
