//! Siamese relation head.
//!
//! Query and code embeddings are combined as
//!
//! ```text
//! r = tanh(W1 · [q, c, q − c, q ⊙ c])      W1: d × 4d
//! s = sigmoid(W2 · r)                       W2: 1 × d
//! ```
//!
//! [`Matcher::relation`] evaluates this literally for a single pair. Scoring
//! many pairs goes through [`Matcher::score_grid`], which splits W1 into its
//! four d × d column blocks `[A | B | C | D]` and uses
//! `W1·x = (A + C)·q + (B − C)·c + D·(q ⊙ c)`, so the per-pair cost is one
//! d × d product instead of a d × 4d one.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::encoder::outer;
use crate::error::{Error, Result};

/// Probability score kept as its logit so losses never take `log(0)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score {
    pub logit: f64,
}

impl Score {
    pub fn from_logit(logit: f64) -> Self {
        Score { logit }
    }

    /// Inverse of [`Score::prob`]; `p` must lie in (0, 1).
    pub fn from_prob(p: f64) -> Self {
        Score {
            logit: (p / (1.0 - p)).ln(),
        }
    }

    pub fn prob(&self) -> f64 {
        sigmoid(self.logit)
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

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `[q, c, q − c, q ⊙ c]`
pub fn relation_input(q: ArrayView1<f64>, c: ArrayView1<f64>) -> Result<Array1<f64>> {
    if q.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: c.len(),
        });
    }
    let d = q.len();
    let mut x = Array1::zeros(4 * d);
    x.slice_mut(s![0..d]).assign(&q);
    x.slice_mut(s![d..2 * d]).assign(&c);
    x.slice_mut(s![2 * d..3 * d]).assign(&(&q - &c));
    x.slice_mut(s![3 * d..4 * d]).assign(&(&q * &c));
    Ok(x)
}

/// `tanh(W1 · [q, c, q − c, q ⊙ c])`
pub fn relation(q: ArrayView1<f64>, c: ArrayView1<f64>, w1: ArrayView2<f64>) -> Result<Array1<f64>> {
    let x = relation_input(q, c)?;
    if w1.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: w1.ncols(),
            got: x.len(),
        });
    }
    Ok(w1.dot(&x).mapv(f64::tanh))
}

/// `W2 · r` as a [`Score`].
pub fn score(r: ArrayView1<f64>, w2: ArrayView1<f64>) -> Result<Score> {
    if r.len() != w2.len() {
        return Err(Error::DimensionMismatch {
            expected: w2.len(),
            got: r.len(),
        });
    }
    Ok(Score::from_logit(w2.dot(&r)))
}

/// Relation embedding plus what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationEmbedding {
    pub r: Array1<f64>,
    input: Array1<f64>,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherGradient {
    pub w1: Array2<f64>,
    pub w2: Array1<f64>,
    pub q: Array1<f64>,
    pub c: Array1<f64>,
}

/// Parameters `W1` (d × 4d) and `W2` (d), stored flat: W1 row-major, then W2.
#[derive(Debug, Clone, PartialEq)]
pub struct Matcher {
    dim: usize,
    params: Vec<f64>,
    generation: u64,
}

impl Matcher {
    /// Uniform(−a, a) with `a = sqrt(6 / (fan_in + fan_out))` for both layers.
    pub fn init(dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("matcher dimension must be >= 2, got {dim}")));
        }
        let a1 = (6.0 / (4 * dim + dim) as f64).sqrt();
        let a2 = (6.0 / (dim + 1) as f64).sqrt();
        let mut params = Vec::with_capacity(4 * dim * dim + dim);
        params.extend((0..4 * dim * dim).map(|_| rng.random_range(-a1..a1)));
        params.extend((0..dim).map(|_| rng.random_range(-a2..a2)));
        Ok(Matcher {
            dim,
            params,
            generation: 0,
        })
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array1<f64>) -> Result<Self> {
        let d = w2.len();
        if w1.dim() != (d, 4 * d) {
            return Err(Error::DimensionMismatch {
                expected: 4 * d,
                got: w1.ncols(),
            });
        }
        let mut params: Vec<f64> = w1.iter().copied().collect();
        params.extend(w2.iter().copied());
        Self::from_flat(d, params)
    }

    pub fn from_flat(dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != 4 * dim * dim + dim {
            return Err(Error::DimensionMismatch {
                expected: 4 * dim * dim + dim,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "matcher parameter".into(),
            });
        }
        Ok(Matcher {
            dim,
            params,
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.dim, 4 * self.dim), &self.params[..4 * self.dim * self.dim])
            .expect("layout checked at construction")
    }

    pub fn w2(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[4 * self.dim * self.dim..])
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access invalidates every cached forward pass.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn relation(&self, q: ArrayView1<f64>, c: ArrayView1<f64>) -> Result<RelationEmbedding> {
        self.check_dim(q.len())?;
        self.check_dim(c.len())?;
        let input = relation_input(q, c)?;
        let r = self.w1().dot(&input).mapv(f64::tanh);
        Ok(RelationEmbedding {
            r,
            input,
            generation: self.generation,
        })
    }

    pub fn score(&self, rel: &RelationEmbedding) -> Result<Score> {
        score(rel.r.view(), self.w2())
    }

    /// Gradients of `upstream · s` where `s` is the sigmoid score.
    pub fn gradient(&self, rel: &RelationEmbedding, upstream: f64) -> Result<MatcherGradient> {
        let s = self.score(rel)?.prob();
        self.backward(rel, upstream * s * (1.0 - s))
    }

    /// Gradients of `dlogit · (W2 · r)`.
    pub fn backward(&self, rel: &RelationEmbedding, dlogit: f64) -> Result<MatcherGradient> {
        if rel.generation != self.generation || rel.r.len() != self.dim {
            return Err(Error::StaleCache);
        }
        let d = self.dim;
        let w2_grad = &rel.r * dlogit;
        let dh = (&self.w2() * dlogit) * rel.r.mapv(|v| 1.0 - v * v);
        let w1_grad = outer(dh.view(), rel.input.view());
        let dx = self.w1().t().dot(&dh);
        let q = rel.input.slice(s![0..d]);
        let c = rel.input.slice(s![d..2 * d]);
        let (b1, b2, b3, b4) = (
            dx.slice(s![0..d]),
            dx.slice(s![d..2 * d]),
            dx.slice(s![2 * d..3 * d]),
            dx.slice(s![3 * d..4 * d]),
        );
        let q_grad = &b1 + &b3 + &(&c * &b4);
        let c_grad = &b2 - &b3 + &(&q * &b4);
        Ok(MatcherGradient {
            w1: w1_grad,
            w2: w2_grad,
            q: q_grad,
            c: c_grad,
        })
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    fn blocks(&self) -> FoldedBlocks {
        let d = self.dim;
        let w1 = self.w1();
        let a = w1.slice(s![.., 0..d]);
        let b = w1.slice(s![.., d..2 * d]);
        let c = w1.slice(s![.., 2 * d..3 * d]);
        FoldedBlocks {
            query: &a + &c,
            code: &b - &c,
            product: w1.slice(s![.., 3 * d..4 * d]).to_owned(),
        }
    }

    /// Precomputes the code-side terms for scoring many queries against a
    /// fixed set of codes.
    pub fn index_codes(&self, codes: &[Array1<f64>]) -> Result<CodeIndex> {
        for c in codes {
            self.check_dim(c.len())?;
        }
        let blocks = self.blocks();
        let code_terms = codes.iter().map(|c| blocks.code.dot(c)).collect();
        Ok(CodeIndex {
            generation: self.generation,
            codes: codes.to_vec(),
            code_terms,
            blocks,
        })
    }

    /// Logits of `q` against every indexed code.
    pub fn score_against(&self, index: &CodeIndex, q: ArrayView1<f64>) -> Result<Vec<f64>> {
        if index.generation != self.generation {
            return Err(Error::StaleCache);
        }
        self.check_dim(q.len())?;
        let q_term = index.blocks.query.dot(&q);
        let w2 = self.w2();
        let mut prod = Array1::zeros(self.dim);
        Ok(index
            .codes
            .iter()
            .zip(&index.code_terms)
            .map(|(c, c_term)| {
                ndarray::Zip::from(&mut prod).and(&q).and(c).for_each(|p, a, b| *p = a * b);
                let h = index.blocks.product.dot(&prod) + &q_term + c_term;
                h.iter().zip(w2.iter()).map(|(hv, w)| hv.tanh() * w).sum()
            })
            .collect())
    }

    /// Forward pass over every (query, code) combination.
    pub fn score_grid(&self, queries: &[Array1<f64>], codes: &[Array1<f64>]) -> Result<ScoreGrid> {
        for v in queries.iter().chain(codes) {
            self.check_dim(v.len())?;
        }
        let blocks = self.blocks();
        let q_terms: Vec<Array1<f64>> = queries.iter().map(|q| blocks.query.dot(q)).collect();
        let c_terms: Vec<Array1<f64>> = codes.iter().map(|c| blocks.code.dot(c)).collect();
        let (nq, nc, d) = (queries.len(), codes.len(), self.dim);
        let mut relations = Array2::zeros((nq * nc, d));
        let mut logits = Array2::zeros((nq, nc));
        let w2 = self.w2();
        for i in 0..nq {
            for j in 0..nc {
                let prod = &queries[i] * &codes[j];
                let h = blocks.product.dot(&prod) + &q_terms[i] + &c_terms[j];
                let r = h.mapv(f64::tanh);
                logits[[i, j]] = w2.dot(&r);
                relations.row_mut(i * nc + j).assign(&r);
            }
        }
        Ok(ScoreGrid {
            generation: self.generation,
            queries: queries.to_vec(),
            codes: codes.to_vec(),
            relations,
            logits,
            blocks,
        })
    }
}

#[derive(Debug, Clone)]
struct FoldedBlocks {
    /// A + C
    query: Array2<f64>,
    /// B − C
    code: Array2<f64>,
    /// D
    product: Array2<f64>,
}

/// Code-side cache for [`Matcher::score_against`].
#[derive(Debug, Clone)]
pub struct CodeIndex {
    generation: u64,
    codes: Vec<Array1<f64>>,
    code_terms: Vec<Array1<f64>>,
    blocks: FoldedBlocks,
}

impl CodeIndex {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Forward cache for all query × code pairs.
#[derive(Debug, Clone)]
pub struct ScoreGrid {
    generation: u64,
    queries: Vec<Array1<f64>>,
    codes: Vec<Array1<f64>>,
    relations: Array2<f64>,
    pub logits: Array2<f64>,
    blocks: FoldedBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridGradient {
    /// Laid out like [`Matcher::params`].
    pub matcher: Vec<f64>,
    pub queries: Vec<Array1<f64>>,
    pub codes: Vec<Array1<f64>>,
}

impl ScoreGrid {
    pub fn score(&self, i: usize, j: usize) -> Score {
        Score::from_logit(self.logits[[i, j]])
    }

    /// Backpropagates `Σ dlogits[i, j] · logit[i, j]`. Zero entries are skipped.
    pub fn backward(&self, matcher: &Matcher, dlogits: ArrayView2<f64>) -> Result<GridGradient> {
        if self.generation != matcher.generation {
            return Err(Error::StaleCache);
        }
        let (nq, nc) = self.logits.dim();
        if dlogits.dim() != (nq, nc) {
            return Err(Error::DimensionMismatch {
                expected: nq * nc,
                got: dlogits.len(),
            });
        }
        let d = matcher.dim;
        let w2 = matcher.w2();
        let mut w2_grad = Array1::<f64>::zeros(d);
        let mut product_grad = Array2::<f64>::zeros((d, d));
        let mut q_sum: Vec<Array1<f64>> = vec![Array1::zeros(d); nq];
        let mut c_sum: Vec<Array1<f64>> = vec![Array1::zeros(d); nc];
        let mut q_grads: Vec<Array1<f64>> = vec![Array1::zeros(d); nq];
        let mut c_grads: Vec<Array1<f64>> = vec![Array1::zeros(d); nc];

        for i in 0..nq {
            for j in 0..nc {
                let g = dlogits[[i, j]];
                if g == 0.0 {
                    continue;
                }
                let r = self.relations.row(i * nc + j);
                w2_grad.scaled_add(g, &r);
                let dh = ndarray::Zip::from(&w2).and(&r).map_collect(|w, rv| g * w * (1.0 - rv * rv));
                let prod = &self.queries[i] * &self.codes[j];
                add_outer(product_grad.view_mut(), dh.view(), prod.view());
                q_sum[i] += &dh;
                c_sum[j] += &dh;
                let t = self.blocks.product.t().dot(&dh);
                q_grads[i] += &(&self.codes[j] * &t);
                c_grads[j] += &(&self.queries[i] * &t);
            }
        }

        // dA = Σ_i Hq_i ⊗ q_i, dB = Σ_j Hc_j ⊗ c_j, dC = dA − dB
        let mut a_grad = Array2::<f64>::zeros((d, d));
        for i in 0..nq {
            add_outer(a_grad.view_mut(), q_sum[i].view(), self.queries[i].view());
            q_grads[i] += &self.blocks.query.t().dot(&q_sum[i]);
        }
        let mut b_grad = Array2::<f64>::zeros((d, d));
        for j in 0..nc {
            add_outer(b_grad.view_mut(), c_sum[j].view(), self.codes[j].view());
            c_grads[j] += &self.blocks.code.t().dot(&c_sum[j]);
        }
        let c_block_grad = &a_grad - &b_grad;

        let mut w1_grad = Array2::<f64>::zeros((d, 4 * d));
        w1_grad.slice_mut(s![.., 0..d]).assign(&a_grad);
        w1_grad.slice_mut(s![.., d..2 * d]).assign(&b_grad);
        w1_grad.slice_mut(s![.., 2 * d..3 * d]).assign(&c_block_grad);
        w1_grad.slice_mut(s![.., 3 * d..4 * d]).assign(&product_grad);
        let mut flat: Vec<f64> = w1_grad.iter().copied().collect();
        flat.extend(w2_grad.iter().copied());

        Ok(GridGradient {
            matcher: flat,
            queries: q_grads,
            codes: c_grads,
        })
    }
}

fn add_outer(mut out: ArrayViewMut2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, av) in out.rows_mut().into_iter().zip(a.iter()) {
        row.scaled_add(*av, &b);
    }
}
