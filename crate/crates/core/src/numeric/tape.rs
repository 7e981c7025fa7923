//! Reverse-mode differentiation over a closed set of matrix operations.
//!
//! Every operation appends a node holding its forward value and enough
//! context to apply its backward rule. [`Tape::backward`] walks the nodes in
//! reverse and adds the resulting gradients into the parameters of a
//! [`ParamStore`]. Calling it twice without resetting the store accumulates
//! the gradients twice.

use std::sync::Arc;

use super::{dot, ParamId, ParamStore, Real, Rng, SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Handle of a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// One term of a pairwise link loss: the logit is `h[i] · h[j]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerm<T> {
    pub i: u32,
    pub j: u32,
    pub positive: bool,
    pub weight: T,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Gram(Var),
    Spmm(Arc<SparseMatrix<T>>, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Elu(Var, T),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Dropout(Var, Vec<T>),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    PickedNll {
        probs: Var,
        picks: Vec<(usize, usize)>,
        floor: T,
    },
    WeightedBce {
        logits: Var,
        target: Arc<SparseMatrix<T>>,
        pos_weight: T,
        sigmoid: Tensor<T>,
    },
    GramBce {
        h: Var,
        target: Arc<SparseMatrix<T>>,
        pos_weight: T,
        /// Row-major upper triangle, diagonal included.
        sigmoid: Vec<T>,
    },
    PairBce {
        h: Var,
        terms: Vec<PairTerm<T>>,
        scale: T,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Numerically stable logistic function; never exponentiates a positive argument.
#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `(ln(1 + e^-|x|), sigmoid(x))` from one exponential; the softplus of
/// `±x` is `max(±x, 0)` plus the first component.
#[inline]
fn softplus_tail_and_sigmoid<T: Real>(x: T) -> (T, T) {
    let e = (-x.abs()).exp();
    let s = if x >= T::zero() {
        T::one() / (T::one() + e)
    } else {
        e / (T::one() + e)
    };
    (e.ln_1p(), s)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; no gradient is propagated into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `h · hᵀ`, exactly symmetric.
    pub fn gram(&mut self, h: Var) -> Var {
        let out = self.value(h).gram();
        self.push(out, Op::Gram(h))
    }

    /// `s · d` for a constant sparse `s`.
    pub fn spmm(&mut self, s: Arc<SparseMatrix<T>>, d: Var) -> Result<Var> {
        let out = s.spmm(self.value(d))?;
        Ok(self.push(out, Op::Spmm(s, d)))
    }

    /// Adds the 1×C row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Dimension {
                op: "add_row",
                left: xv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b)).map_err(|_| Error::Dimension {
            op: "add",
            left: self.value(a).shape(),
            right: self.value(b).shape(),
        })?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.check_same_shape("mul", bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x))
    }

    pub fn elu(&mut self, x: Var, alpha: T) -> Var {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { alpha * v.exp_m1() });
        self.push(out, Op::Elu(x, alpha))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Inverted dropout. In inference mode, or with `rate == 0`, this records
    /// nothing and returns `x`.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        check_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data)?;
        Ok(self.push(out, Op::Dropout(x, mask)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = T::of(xv.len().max(1) as f64);
        let out = Tensor::scalar(xv.sum() / n);
        self.push(out, Op::Mean(x))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|&v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    /// Mean of `-ln(max(probs[r][c], floor))` over the picked `(r, c)` cells.
    pub fn picked_nll(&mut self, probs: Var, picks: Vec<(usize, usize)>, floor: T) -> Result<Var> {
        let pv = self.value(probs);
        if picks.is_empty() {
            return Err(Error::Usage("negative log-likelihood over zero picks".into()));
        }
        if let Some(&(r, c)) = picks.iter().find(|&&(r, c)| r >= pv.rows() || c >= pv.cols()) {
            return Err(Error::Dimension {
                op: "picked_nll",
                left: pv.shape(),
                right: (r, c),
            });
        }
        let n = T::of(picks.len() as f64);
        let total: T = picks.iter().map(|&(r, c)| -pv.get(r, c).max(floor).ln()).sum();
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::PickedNll {
                probs,
                picks,
                floor,
            },
        ))
    }

    /// Mean over every entry of the positively-weighted binary cross-entropy
    /// between `sigmoid(logits)` and the binary pattern `target`:
    /// `pos_weight · t · softplus(-x) + (1 - t) · softplus(x)`.
    pub fn weighted_bce(
        &mut self,
        logits: Var,
        target: Arc<SparseMatrix<T>>,
        pos_weight: T,
    ) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "weighted_bce",
                left: lv.shape(),
                right: target.shape(),
            });
        }
        let mut sig = Tensor::zeros(lv.rows(), lv.cols());
        let mut total = 0.0f64;
        for r in 0..lv.rows() {
            let mut pos = target.row_cols(r).iter().peekable();
            let mut row_total = 0.0f64;
            for (c, (&x, s)) in lv.row(r).iter().zip(sig.row_mut(r)).enumerate() {
                let (tail, sig) = softplus_tail_and_sigmoid(x);
                *s = sig;
                let term = if pos.next_if(|&&p| p as usize == c).is_some() {
                    pos_weight * ((-x).max(T::zero()) + tail)
                } else {
                    x.max(T::zero()) + tail
                };
                row_total += term.to_f64_lossless();
            }
            total += row_total;
        }
        let n = lv.len().max(1) as f64;
        Ok(self.push(
            Tensor::scalar(T::of(total / n)),
            Op::WeightedBce {
                logits,
                target,
                pos_weight,
                sigmoid: sig,
            },
        ))
    }

    /// Same value as `weighted_bce(gram(h), target, pos_weight)` for a
    /// symmetric `target`, computed over the upper triangle only and without
    /// materializing the N × N logits.
    pub fn gram_weighted_bce(
        &mut self,
        h: Var,
        target: Arc<SparseMatrix<T>>,
        pos_weight: T,
    ) -> Result<Var> {
        let hv = self.value(h);
        let n = hv.rows();
        if target.shape() != (n, n) {
            return Err(Error::Dimension {
                op: "gram_weighted_bce",
                left: hv.shape(),
                right: target.shape(),
            });
        }
        if !target.is_symmetric() {
            return Err(Error::Usage(
                "the fused link loss needs a target marked symmetric".into(),
            ));
        }
        let t = hv.transpose();
        let mut sigmoid = Vec::with_capacity(n * (n + 1) / 2);
        let mut logits = vec![T::zero(); n];
        let mut total = 0.0f64;
        for i in 0..n {
            let row = &mut logits[i..];
            row.fill(T::zero());
            for (k, &a) in hv.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in row.iter_mut().zip(&t.row(k)[i..]) {
                    *o += a * b;
                }
            }
            let mut pos = target.row_cols(i).iter().skip_while(|&&c| (c as usize) < i).peekable();
            let mut row_total = 0.0f64;
            for (j, &x) in (i..n).zip(row.iter()) {
                let (tail, s) = softplus_tail_and_sigmoid(x);
                sigmoid.push(s);
                let term = if pos.next_if(|&&p| p as usize == j).is_some() {
                    pos_weight * ((-x).max(T::zero()) + tail)
                } else {
                    x.max(T::zero()) + tail
                };
                let mult = if j == i { 1.0 } else { 2.0 };
                row_total += mult * term.to_f64_lossless();
            }
            total += row_total;
        }
        let cells = (n * n).max(1) as f64;
        Ok(self.push(
            Tensor::scalar(T::of(total / cells)),
            Op::GramBce {
                h,
                target,
                pos_weight,
                sigmoid,
            },
        ))
    }

    /// `scale · Σ weight · bce(h[i]·h[j], positive)` over the given pairs.
    pub fn pair_bce(&mut self, h: Var, terms: Vec<PairTerm<T>>, scale: T) -> Result<Var> {
        let hv = self.value(h);
        if let Some(t) = terms
            .iter()
            .find(|t| t.i as usize >= hv.rows() || t.j as usize >= hv.rows())
        {
            return Err(Error::Dimension {
                op: "pair_bce",
                left: hv.shape(),
                right: (t.i as usize, t.j as usize),
            });
        }
        let total: T = terms
            .iter()
            .map(|t| {
                let x = dot(hv.row(t.i as usize), hv.row(t.j as usize));
                t.weight * if t.positive { softplus(-x) } else { softplus(x) }
            })
            .sum();
        Ok(self.push(Tensor::scalar(scale * total), Op::PairBce { h, terms, scale }))
    }

    /// Propagates from the scalar `loss` and adds every parameter gradient
    /// into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                store.get_mut(*id).accumulate_grad(&g)?;
            }
        }
        Ok(())
    }

    /// Gradient of the scalar `loss` with respect to every recorded value
    /// (`None` where it does not depend on that value).
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor<T>>>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn backward_node(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(bv)?)?;
                accumulate(grads, *b, av.t_matmul(g)?)?;
            }
            Op::Gram(h) => {
                let sym = g.plus_transpose()?;
                accumulate(grads, *h, sym.matmul(self.value(*h))?)?;
            }
            Op::Spmm(s, d) => accumulate(grads, *d, s.t_spmm(g)?)?,
            Op::AddRow(x, bias) => {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, g.clone())?;
                accumulate(grads, *bias, gb)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, zip_with(g, bv, |gi, bi| gi * bi))?;
                accumulate(grads, *b, zip_with(g, av, |gi, ai| gi * ai))?;
            }
            Op::Scale(x, f) => accumulate(grads, *x, g.map(|v| v * *f))?,
            Op::Relu(x) => {
                let xv = self.value(*x);
                accumulate(
                    grads,
                    *x,
                    zip_with(g, xv, |gi, xi| if xi > T::zero() { gi } else { T::zero() }),
                )?;
            }
            Op::Elu(x, alpha) => {
                let xv = self.value(*x);
                accumulate(
                    grads,
                    *x,
                    zip_with(g, xv, |gi, xi| {
                        if xi > T::zero() {
                            gi
                        } else {
                            gi * *alpha * xi.exp()
                        }
                    }),
                )?;
            }
            Op::Sigmoid(x) => {
                accumulate(
                    grads,
                    *x,
                    zip_with(g, &node.value, |gi, yi| gi * yi * (T::one() - yi)),
                )?;
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = dot(yr, gr);
                    for ((o, &yi), &gi) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yi * (gi - inner);
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::Dropout(x, mask) => {
                let data = g.data().iter().zip(mask).map(|(&gi, &m)| gi * m).collect();
                accumulate(grads, *x, Tensor::from_vec(g.rows(), g.cols(), data)?)?;
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                accumulate(grads, *x, Tensor::filled(r, c, g.data()[0]))?;
            }
            Op::Mean(x) => {
                let (r, c) = self.value(*x).shape();
                let n = T::of((r * c).max(1) as f64);
                accumulate(grads, *x, Tensor::filled(r, c, g.data()[0] / n))?;
            }
            Op::SumSquares(x) => {
                let two_g = g.data()[0] + g.data()[0];
                accumulate(grads, *x, self.value(*x).map(|v| two_g * v))?;
            }
            Op::PickedNll {
                probs,
                picks,
                floor,
            } => {
                let pv = self.value(*probs);
                let coef = g.data()[0] / T::of(picks.len() as f64);
                let mut dp = Tensor::zeros(pv.rows(), pv.cols());
                for &(r, c) in picks {
                    let p = pv.get(r, c);
                    if p > *floor {
                        let cur = dp.get(r, c);
                        dp.set(r, c, cur - coef / p);
                    }
                }
                accumulate(grads, *probs, dp)?;
            }
            Op::WeightedBce {
                logits,
                target,
                pos_weight,
                sigmoid,
            } => {
                let coef = g.data()[0] / T::of(sigmoid.len().max(1) as f64);
                let mut dl = sigmoid.map(|s| coef * s);
                for r in 0..dl.rows() {
                    let row = dl.row_mut(r);
                    for &c in target.row_cols(r) {
                        let s = sigmoid.get(r, c as usize);
                        row[c as usize] = coef * *pos_weight * (s - T::one());
                    }
                }
                accumulate(grads, *logits, dl)?;
            }
            Op::GramBce {
                h,
                target,
                pos_weight,
                sigmoid,
            } => {
                let hv = self.value(*h);
                let n = hv.rows();
                let two_coef = T::of(2.0) * g.data()[0] / T::of((n * n).max(1) as f64);
                let mut dh = Tensor::zeros(n, hv.cols());
                let mut at = 0;
                for i in 0..n {
                    let mut pos = target.row_cols(i).iter().skip_while(|&&c| (c as usize) < i).peekable();
                    for j in i..n {
                        let s = sigmoid[at];
                        at += 1;
                        let d = if pos.next_if(|&&p| p as usize == j).is_some() {
                            *pos_weight * (s - T::one())
                        } else {
                            s
                        };
                        let d = two_coef * d;
                        if d == T::zero() {
                            continue;
                        }
                        if i == j {
                            for (o, &v) in dh.row_mut(i).iter_mut().zip(hv.row(i)) {
                                *o += d * v;
                            }
                            continue;
                        }
                        let (lo, hi) = dh.data_mut().split_at_mut(j * hv.cols());
                        let (di, dj) = (&mut lo[i * hv.cols()..(i + 1) * hv.cols()], &mut hi[..hv.cols()]);
                        for ((oi, oj), (&vi, &vj)) in di.iter_mut().zip(dj).zip(hv.row(i).iter().zip(hv.row(j))) {
                            *oi += d * vj;
                            *oj += d * vi;
                        }
                    }
                }
                accumulate(grads, *h, dh)?;
            }
            Op::PairBce { h, terms, scale } => {
                let hv = self.value(*h);
                let coef = g.data()[0] * *scale;
                let mut dh = Tensor::zeros(hv.rows(), hv.cols());
                for t in terms {
                    let (i, j) = (t.i as usize, t.j as usize);
                    let s = sigmoid_scalar(dot(hv.row(i), hv.row(j)));
                    let dx = coef * t.weight * if t.positive { s - T::one() } else { s };
                    for (o, &v) in dh.row_mut(i).iter_mut().zip(hv.row(j)) {
                        *o += dx * v;
                    }
                    for (o, &v) in dh.row_mut(j).iter_mut().zip(hv.row(i)) {
                        *o += dx * v;
                    }
                }
                accumulate(grads, *h, dh)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn zip_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("shapes checked at record time")
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
