//! Faithful traces and trace-preserving conditional expectations.
//!
//! The images of the matrix units of an embedded subalgebra have pairwise
//! disjoint supports, so they are already orthogonal for every trace inner
//! product `⟨x, y⟩ = τ(x*y)`. Gram–Schmidt therefore reduces to normalization,
//! and the orthogonal projection onto the subalgebra is a weighted average of
//! the diagonal copies of each source block. Compositions of such averages are
//! again averages, which lets `E_{n,m}` be stored exactly in the same form.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::algebra::{AlgebraElement, BlockAlgebra, C64};
use crate::bratteli::{default_trace_weights, Embedding, InductiveSequence};
use crate::error::{bail, Result};

/// Pivot below which a normalization constant signals numerical breakdown.
pub const PIVOT_TOL: f64 = 1e-12;

/// A faithful tracial state `τ(x) = Σᵢ wᵢ Tr(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    algebra: Arc<BlockAlgebra>,
    weights: Vec<f64>,
}

impl TraceState {
    pub fn new(algebra: Arc<BlockAlgebra>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != algebra.num_blocks() {
            bail!(Domain, "expected {} trace weights", algebra.num_blocks());
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            bail!(Domain, "trace weight {i} is {}; trace is not faithful", weights[i]);
        }
        let total: f64 = weights
            .iter()
            .zip(algebra.block_sizes())
            .map(|(w, &k)| w * k as f64)
            .sum();
        if (total - 1.0).abs() > 1e-12 {
            bail!(Domain, "trace weights give τ(1) = {total}, expected 1");
        }
        Ok(Self { algebra, weights })
    }

    /// Weights proportional to block size.
    pub fn canonical(algebra: &Arc<BlockAlgebra>) -> Self {
        Self {
            algebra: algebra.clone(),
            weights: default_trace_weights(algebra),
        }
    }

    /// The trace the sequence assigns to level `n`.
    pub fn of_level(seq: &InductiveSequence, n: usize) -> Result<Self> {
        Self::new(seq.algebra(n).clone(), seq.trace_weights(n).to_vec())
    }

    pub fn algebra(&self) -> &Arc<BlockAlgebra> {
        &self.algebra
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval(&self, x: &AlgebraElement) -> Result<C64> {
        if !x.algebra().same_shape(&self.algebra) {
            bail!(
                Structure,
                "trace on {} applied to element of {}",
                self.algebra,
                x.algebra()
            );
        }
        Ok(x.block_traces().iter().zip(&self.weights).map(|(t, w)| t * *w).sum())
    }

    /// `τ ∘ ι` for an embedding `ι` into this trace's algebra.
    pub fn restrict(&self, embedding: &Embedding) -> Result<Self> {
        if !embedding.target().same_shape(&self.algebra) {
            bail!(Structure, "embedding does not land in {}", self.algebra);
        }
        let mut weights = vec![0.0; embedding.source().num_blocks()];
        for (j, list) in embedding.placements().iter().enumerate() {
            for &(i, _) in list {
                weights[i] += self.weights[j];
            }
        }
        Ok(Self {
            algebra: embedding.source().clone(),
            weights,
        })
    }
}

/// A conditional expectation onto an embedded subalgebra, stored as a convex
/// combination of the diagonal copies of each source block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalExpectation {
    embedding: Embedding,
    /// Parallel to `embedding.placements()`: the weight of each copy. The
    /// weights of the copies of one source block sum to one.
    coeffs: Vec<Vec<f64>>,
}

/// The τ-orthogonal projection of `ambient` onto the image of `sub`.
pub fn trace_preserving_ce(
    ambient: &Arc<BlockAlgebra>,
    sub: &Embedding,
    tau: &TraceState,
) -> Result<ConditionalExpectation> {
    if !sub.target().same_shape(ambient) || !tau.algebra().same_shape(ambient) {
        bail!(Structure, "embedding, trace, and ambient algebra disagree");
    }
    let mut norms = vec![0.0; sub.source().num_blocks()];
    for (j, list) in sub.placements().iter().enumerate() {
        for &(i, _) in list {
            norms[i] += tau.weights()[j];
        }
    }
    if let Some(i) = norms.iter().position(|&d| d < PIVOT_TOL) {
        bail!(Numeric, "Gram pivot for source block {i} is {:.3e}", norms[i]);
    }
    let coeffs = sub
        .placements()
        .iter()
        .enumerate()
        .map(|(j, list)| list.iter().map(|&(i, _)| tau.weights()[j] / norms[i]).collect())
        .collect();
    Ok(ConditionalExpectation {
        embedding: sub.clone(),
        coeffs,
    })
}

impl ConditionalExpectation {
    pub fn identity(algebra: &Arc<BlockAlgebra>) -> Self {
        Self {
            embedding: Embedding::identity(algebra),
            coeffs: vec![vec![1.0]; algebra.num_blocks()],
        }
    }

    pub fn ambient(&self) -> &Arc<BlockAlgebra> {
        self.embedding.target()
    }

    pub fn subalgebra(&self) -> &Arc<BlockAlgebra> {
        self.embedding.source()
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    /// `E(x)` as an element of the subalgebra.
    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if !x.algebra().same_shape(self.ambient()) {
            bail!(
                Structure,
                "expectation on {} applied to element of {}",
                self.ambient(),
                x.algebra()
            );
        }
        let sub = self.subalgebra();
        let mut out = AlgebraElement::zero(sub);
        let sizes = sub.block_sizes();
        for (j, (list, ws)) in self.embedding.placements().iter().zip(&self.coeffs).enumerate() {
            for (&(i, off), &w) in list.iter().zip(ws) {
                let k = sizes[i];
                let view = x.block(j).view((off, off), (k, k));
                out.blocks_mut()[i].zip_apply(&view, |a, b| *a += b * w);
            }
        }
        Ok(out)
    }

    /// `ι(E(x))`, the projection inside the ambient algebra.
    pub fn project(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        self.embedding.apply(&self.apply(x)?)
    }

    /// Hilbert–Schmidt adjoint of [`Self::apply`]: subalgebra → ambient.
    pub fn adjoint_apply(&self, y: &AlgebraElement) -> Result<AlgebraElement> {
        if !y.algebra().same_shape(self.subalgebra()) {
            bail!(Structure, "adjoint expects an element of {}", self.subalgebra());
        }
        let sizes = self.subalgebra().block_sizes();
        let blocks = self
            .embedding
            .placements()
            .iter()
            .zip(&self.coeffs)
            .zip(self.ambient().block_sizes())
            .map(|((list, ws), &l)| {
                let mut out = DMatrix::<C64>::zeros(l, l);
                for (&(i, off), &w) in list.iter().zip(ws) {
                    let k = sizes[i];
                    out.view_mut((off, off), (k, k))
                        .zip_apply(y.block(i), |a, b| *a = b * w);
                }
                out
            })
            .collect();
        AlgebraElement::new(self.ambient().clone(), blocks)
    }

    /// `inner ∘ self`: first `self` (onto the middle algebra), then `inner`.
    pub fn then(&self, inner: &ConditionalExpectation) -> Result<ConditionalExpectation> {
        if !self.subalgebra().same_shape(inner.ambient()) {
            bail!(Structure, "expectations are not composable");
        }
        let embedding = inner.embedding.then(&self.embedding)?;
        let coeffs = self
            .embedding
            .placements()
            .iter()
            .zip(&self.coeffs)
            .map(|(list, ws)| {
                list.iter()
                    .zip(ws)
                    .flat_map(|(&(b, _), &wb)| inner.coeffs[b].iter().map(move |&wa| wa * wb))
                    .collect()
            })
            .collect();
        Ok(ConditionalExpectation { embedding, coeffs })
    }

    /// Largest coefficient deviation between two expectations with the same
    /// placements, or `None` if the placements differ.
    pub fn coefficient_distance(&self, other: &ConditionalExpectation) -> Option<f64> {
        if self.embedding != other.embedding {
            return None;
        }
        Some(
            self.coeffs
                .iter()
                .flatten()
                .zip(other.coeffs.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// `E_{m+1,m} ∘ ⋯ ∘ E_{n,n−1}` from a list of stage expectations
/// `stages[k]: A_{k+1} → A_k`; the identity when `n = m`.
pub fn compose_ce(stages: &[ConditionalExpectation], n: usize, m: usize) -> Result<ConditionalExpectation> {
    if m > n || n > stages.len() {
        bail!(
            Domain,
            "cannot compose expectations from level {n} to {m} over {} steps",
            stages.len()
        );
    }
    if n == m {
        let alg = if n < stages.len() {
            stages[n].subalgebra()
        } else {
            stages[n - 1].ambient()
        };
        return Ok(ConditionalExpectation::identity(alg));
    }
    let mut e = stages[n - 1].clone();
    for k in (m..n - 1).rev() {
        e = e.then(&stages[k])?;
    }
    Ok(e)
}

/// Stage expectations `E_{n+1,n}` of a sequence with every composite
/// `E_{n,m}` precomputed.
#[derive(Debug, Clone)]
pub struct ExpectationChain {
    stages: Vec<ConditionalExpectation>,
    /// `composed[n][m] = E_{n,m}` for `m ≤ n`.
    composed: Vec<Vec<ConditionalExpectation>>,
}

impl ExpectationChain {
    /// Each `E_{n+1,n}` projects with the trace the sequence assigns to `A_{n+1}`.
    pub fn new(seq: &InductiveSequence) -> Result<Self> {
        let stages = (0..seq.depth())
            .map(|n| {
                let tau = TraceState::of_level(seq, n + 1)?;
                trace_preserving_ce(seq.algebra(n + 1), seq.embedding(n), &tau)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_stages(stages)
    }

    /// Stage expectations induced by one trace `μ` on `A_N`: `E_{n+1,n}` uses
    /// the restriction of `μ` to `A_{n+1}`.
    pub fn restricted(seq: &InductiveSequence, mu: &TraceState) -> Result<Self> {
        let n_top = seq.depth();
        if !mu.algebra().same_shape(seq.algebra(n_top)) {
            bail!(Domain, "μ must live on the top algebra {}", seq.algebra(n_top));
        }
        let stages = (0..n_top)
            .map(|n| {
                let tau = mu.restrict(&seq.embedding_between(n + 1, n_top)?)?;
                trace_preserving_ce(seq.algebra(n + 1), seq.embedding(n), &tau)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_stages(stages)
    }

    pub fn from_stages(stages: Vec<ConditionalExpectation>) -> Result<Self> {
        let depth = stages.len();
        let mut composed = Vec::with_capacity(depth + 1);
        for n in 0..=depth {
            let mut row = vec![ConditionalExpectation::identity(if n < depth {
                stages[n].subalgebra()
            } else {
                stages[n - 1].ambient()
            })];
            // Build E_{n,m} for m = n−1 down to 0 incrementally.
            let mut current: Option<ConditionalExpectation> = None;
            for m in (0..n).rev() {
                let next = match current {
                    None => stages[m].clone(),
                    Some(e) => e.then(&stages[m])?,
                };
                row.push(next.clone());
                current = Some(next);
            }
            row.reverse();
            composed.push(row);
        }
        Ok(Self { stages, composed })
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// `E_{n+1,n}`.
    pub fn stage(&self, n: usize) -> &ConditionalExpectation {
        &self.stages[n]
    }

    pub fn stages(&self) -> &[ConditionalExpectation] {
        &self.stages
    }

    /// `E_{n,m}`.
    pub fn composed(&self, n: usize, m: usize) -> Result<&ConditionalExpectation> {
        if m > n || n > self.depth() {
            bail!(Domain, "no expectation from level {n} to level {m}");
        }
        Ok(&self.composed[n][m])
    }
}

/// The μ-preserving projection of `A_N` onto `A_m` in one step.
pub fn one_shot_expectation(seq: &InductiveSequence, mu: &TraceState, m: usize) -> Result<ConditionalExpectation> {
    let top = seq.depth();
    let emb = seq.embedding_between(m, top)?;
    trace_preserving_ce(seq.algebra(top), &emb, mu)
}
