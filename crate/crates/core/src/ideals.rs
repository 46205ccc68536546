//! Ideals of AF algebras through Bratteli data: coherent block subsets, the
//! Fell metric, unitized stages `(I ∩ Aₙ)~`, and the ideal-to-quantum-metric
//! map with its Lipschitz certificate.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{op_norm, AlgebraElement, BlockAlgebra, C64};
use crate::bratteli::{Embedding, FamilySpec, InductiveSequence};
use crate::error::{bail, Result};
use crate::propinquity::compare_sequences_bound;

/// `{i : every edge out of block i lands in S_{n+1}}`.
pub fn intersect_down(seq: &InductiveSequence, n: usize, upper: &[usize]) -> Vec<usize> {
    let step = seq.step(n);
    let rows = seq.algebra(n).num_blocks();
    let cols = seq.algebra(n + 1).num_blocks();
    (0..rows)
        .filter(|&i| (0..cols).all(|j| step.get(i, j) == 0 || upper.contains(&j)))
        .collect()
}

/// JSON form of an ideal: one block-index list per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealDescriptor {
    pub levels: Vec<Vec<usize>>,
}

/// An ideal truncated at the depth of its sequence, stored as the block
/// subsets `Sₙ` with `I ∩ Aₙ = ⊕_{i∈Sₙ} M_{kᵢ}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdealSpec {
    levels: Vec<Vec<usize>>,
    shape: Vec<Vec<usize>>,
}

impl IdealSpec {
    pub fn new(seq: &InductiveSequence, levels: Vec<Vec<usize>>) -> Result<Self> {
        if levels.len() != seq.depth() + 1 {
            bail!(
                Domain,
                "ideal lists {} levels, sequence has {}",
                levels.len(),
                seq.depth() + 1
            );
        }
        let mut sorted = Vec::with_capacity(levels.len());
        for (n, mut s) in levels.into_iter().enumerate() {
            s.sort_unstable();
            s.dedup();
            let blocks = seq.algebra(n).num_blocks();
            if let Some(&i) = s.iter().find(|&&i| i >= blocks) {
                bail!(Domain, "level {n} names block {i}, A{n} has {blocks} blocks");
            }
            sorted.push(s);
        }
        for n in 0..seq.depth() {
            let down = intersect_down(seq, n, &sorted[n + 1]);
            if down != sorted[n] {
                bail!(
                    Domain,
                    "ideal is incoherent at level {n}: expected {down:?}, got {:?}",
                    sorted[n]
                );
            }
        }
        Ok(Self {
            levels: sorted,
            shape: shape_of(seq),
        })
    }

    pub fn from_descriptor(seq: &InductiveSequence, d: &IdealDescriptor) -> Result<Self> {
        Self::new(seq, d.levels.clone())
    }

    /// The ideal whose top stage is `top`, with lower stages derived.
    pub fn from_top(seq: &InductiveSequence, top: Vec<usize>) -> Result<Self> {
        let depth = seq.depth();
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = top;
        levels[depth].sort_unstable();
        levels[depth].dedup();
        for n in (0..depth).rev() {
            levels[n] = intersect_down(seq, n, &levels[n + 1]);
        }
        Self::new(seq, levels)
    }

    pub fn full(seq: &InductiveSequence) -> Self {
        let levels = seq.algebras().iter().map(|a| (0..a.num_blocks()).collect()).collect();
        Self {
            levels,
            shape: shape_of(seq),
        }
    }

    pub fn zero(seq: &InductiveSequence) -> Self {
        Self {
            levels: vec![Vec::new(); seq.depth() + 1],
            shape: shape_of(seq),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &[usize] {
        &self.levels[n]
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn descriptor(&self) -> IdealDescriptor {
        IdealDescriptor {
            levels: self.levels.clone(),
        }
    }

    fn check_sequence(&self, seq: &InductiveSequence) -> Result<()> {
        if self.shape != shape_of(seq) {
            bail!(Domain, "ideal was built over a different sequence");
        }
        Ok(())
    }

    /// Block subset used for the unitized stage: level 0 is always `ℂ1`.
    fn stage_subset(&self, n: usize) -> &[usize] {
        if n == 0 {
            &[]
        } else {
            &self.levels[n]
        }
    }
}

fn shape_of(seq: &InductiveSequence) -> Vec<Vec<usize>> {
    seq.algebras().iter().map(|a| a.block_sizes().to_vec()).collect()
}

/// Samples a coherent ideal by keeping each top-level block with probability
/// `density` and intersecting down.
pub fn random_ideal<R: Rng + ?Sized>(seq: &InductiveSequence, density: f64, rng: &mut R) -> IdealSpec {
    let top = (0..seq.algebra(seq.depth()).num_blocks())
        .filter(|_| rng.gen_bool(density.clamp(0.0, 1.0)))
        .collect();
    IdealSpec::from_top(seq, top).expect("derived levels are coherent")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FellValue {
    /// `2^{-n}` at the first disagreement `n`, or 0 when none is stored.
    pub value: f64,
    pub resolved: bool,
    pub first_disagreement: Option<usize>,
    /// Certified upper bound on the true metric value.
    pub bound: f64,
}

/// `m(I, J) = 2^{-min{n : I∩Aₙ ≠ J∩Aₙ}}` on the stored levels.
pub fn fell_metric(i: &IdealSpec, j: &IdealSpec) -> Result<FellValue> {
    if i.shape != j.shape {
        bail!(Domain, "ideals live over different sequences");
    }
    let depth = i.depth();
    Ok(match (0..=depth).find(|&n| i.levels[n] != j.levels[n]) {
        Some(n) => {
            let v = 0.5f64.powi(n as i32);
            FellValue {
                value: v,
                resolved: true,
                first_disagreement: Some(n),
                bound: v,
            }
        }
        None => FellValue {
            value: 0.0,
            resolved: false,
            first_disagreement: None,
            bound: 0.5f64.powi(depth as i32),
        },
    })
}

/// `(I ∩ Aₙ)~` realized as `⊕_{i∈Sₙ} M_{kᵢ} ⊕ ℂ` via `(b, λ) ↦ (b + λpₙ, λ)`.
#[derive(Debug, Clone)]
pub struct UnitizedStage {
    level: usize,
    subset: Vec<usize>,
    ambient: Arc<BlockAlgebra>,
    algebra: Arc<BlockAlgebra>,
}

pub fn unitize_stage(seq: &InductiveSequence, ideal: &IdealSpec, n: usize) -> Result<UnitizedStage> {
    ideal.check_sequence(seq)?;
    if n > seq.depth() {
        bail!(Domain, "level {n} exceeds depth {}", seq.depth());
    }
    let ambient = seq.algebra(n).clone();
    let subset = ideal.stage_subset(n).to_vec();
    let mut sizes: Vec<usize> = subset.iter().map(|&i| ambient.block_sizes()[i]).collect();
    sizes.push(1);
    let algebra = BlockAlgebra::new(sizes, format!("I{n}~"))?;
    Ok(UnitizedStage {
        level: n,
        subset,
        ambient,
        algebra,
    })
}

impl UnitizedStage {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn ambient(&self) -> &Arc<BlockAlgebra> {
        &self.ambient
    }

    pub fn algebra(&self) -> &Arc<BlockAlgebra> {
        &self.algebra
    }

    /// `pₙ`, the sum of the identities of the blocks in `Sₙ`.
    pub fn stage_unit(&self) -> AlgebraElement {
        let mut p = AlgebraElement::zero(&self.ambient);
        for &i in &self.subset {
            let k = self.ambient.block_sizes()[i];
            p.blocks_mut()[i] = DMatrix::identity(k, k);
        }
        p
    }

    fn check_support(&self, b: &AlgebraElement) -> Result<()> {
        if !b.algebra().same_shape(&self.ambient) {
            bail!(Domain, "element of {} is not in A{}", b.algebra(), self.level);
        }
        for (i, blk) in b.blocks().iter().enumerate() {
            if !self.subset.contains(&i) && blk.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                bail!(Domain, "element has support on block {i} outside the ideal stage");
            }
        }
        Ok(())
    }

    pub fn realize(&self, b: &AlgebraElement, lambda: C64) -> Result<AlgebraElement> {
        self.check_support(b)?;
        let mut blocks: Vec<DMatrix<C64>> = self
            .subset
            .iter()
            .map(|&i| {
                let k = self.ambient.block_sizes()[i];
                b.block(i) + DMatrix::identity(k, k) * lambda
            })
            .collect();
        blocks.push(DMatrix::from_element(1, 1, lambda));
        AlgebraElement::new(self.algebra.clone(), blocks)
    }

    /// Inverse of [`realize`](Self::realize).
    pub fn pair(&self, x: &AlgebraElement) -> Result<(AlgebraElement, C64)> {
        if !x.algebra().same_shape(&self.algebra) {
            bail!(Domain, "element of {} is not in {}", x.algebra(), self.algebra);
        }
        let r = self.subset.len();
        let lambda = x.block(r)[(0, 0)];
        let mut b = AlgebraElement::zero(&self.ambient);
        for (pos, &i) in self.subset.iter().enumerate() {
            let k = self.ambient.block_sizes()[i];
            b.blocks_mut()[i] = x.block(pos) - DMatrix::identity(k, k) * lambda;
        }
        Ok((b, lambda))
    }

    /// `max{‖b + λpₙ‖, |λ|}`.
    pub fn pair_norm(&self, b: &AlgebraElement, lambda: C64) -> Result<f64> {
        self.check_support(b)?;
        let shifted = b.add(&self.stage_unit().scale_complex(lambda))?;
        Ok(op_norm(&shifted).max(lambda.norm()))
    }
}

/// Norm of `c ↦ xc` on the algebra with its Hilbert–Schmidt inner product,
/// from the singular values of the explicit matrix.
pub fn left_multiplication_norm(x: &AlgebraElement) -> Result<f64> {
    let alg = x.algebra();
    let d: usize = alg.block_sizes().iter().map(|k| k * k).sum();
    let mut m = DMatrix::<C64>::zeros(d, d);
    let mut e = vec![C64::new(0.0, 0.0); d];
    for col in 0..d {
        e[col] = C64::new(1.0, 0.0);
        let c = AlgebraElement::from_flat(alg, &e)?;
        let image = x.mul(&c)?.to_flat();
        m.column_mut(col).copy_from_slice(&image);
        e[col] = C64::new(0.0, 0.0);
    }
    Ok(m.singular_values().max())
}

/// `Ĩₙ → Ĩₙ₊₁`, `(b, λ) ↦ (ι(b), λ)` on the realized stages.
pub fn unitized_embedding(seq: &InductiveSequence, ideal: &IdealSpec, n: usize) -> Result<Embedding> {
    if n >= seq.depth() {
        bail!(Domain, "step {n} needs n < depth {}", seq.depth());
    }
    let lower = unitize_stage(seq, ideal, n)?;
    let upper = unitize_stage(seq, ideal, n + 1)?;
    let scalar = lower.subset.len();
    let sizes = lower.ambient.block_sizes();
    let original = seq.embedding(n).placements();
    let mut placements: Vec<Vec<(usize, usize)>> = upper
        .subset
        .iter()
        .map(|&t| {
            let mut list = Vec::new();
            for &(src, off) in &original[t] {
                match lower.subset.iter().position(|&i| i == src) {
                    Some(pos) => list.push((pos, off)),
                    None => list.extend((0..sizes[src]).map(|d| (scalar, off + d))),
                }
            }
            list
        })
        .collect();
    placements.push(vec![(scalar, 0)]);
    Embedding::from_placements(lower.algebra.clone(), upper.algebra.clone(), placements)
}

/// The chain `Ĩ₀ = ℂ1 ⊆ Ĩ₁ ⊆ … ⊆ Ĩ_N` with the β schedule of `seq` and
/// default trace weights, ready for [`LipNormChain::new`](crate::lipnorms::LipNormChain::new).
pub fn ideal_to_cqms(seq: &InductiveSequence, ideal: &IdealSpec) -> Result<InductiveSequence> {
    ideal.check_sequence(seq)?;
    let stages = (0..=seq.depth())
        .map(|n| unitize_stage(seq, ideal, n))
        .collect::<Result<Vec<_>>>()?;
    let embeddings = (0..seq.depth())
        .map(|n| unitized_embedding(seq, ideal, n))
        .collect::<Result<Vec<_>>>()?;
    let algebras: Vec<Arc<BlockAlgebra>> = stages.iter().map(|s| s.algebra.clone()).collect();
    let family = FamilySpec::Custom {
        block_sizes: algebras.iter().map(|a| a.block_sizes().to_vec()).collect(),
        multiplicities: embeddings
            .iter()
            .map(|e| e.multiplicities().entries().to_vec())
            .collect(),
    };
    InductiveSequence::from_embeddings(family, algebras, embeddings, seq.beta_schedule().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    pub bound: f64,
    pub fell: FellValue,
    /// Highest level at which the two unitized chains coincide.
    pub agreement_level: usize,
}

/// Certified propinquity bound between the unitized chains of `i` and `j`,
/// compared against the Fell metric. Requires `β(j) ≤ 2^{-j-5}`.
pub fn lipschitz_certificate(seq: &InductiveSequence, i: &IdealSpec, j: &IdealSpec) -> Result<LipschitzCertificate> {
    i.check_sequence(seq)?;
    j.check_sequence(seq)?;
    let depth = seq.depth();
    for (k, &b) in seq.betas().iter().enumerate() {
        if b > 0.5f64.powi(k as i32 + 5) {
            bail!(Certificate, "β({k}) = {b:e} exceeds 2^-{}", k + 5);
        }
    }
    if seq.beta_schedule().tail_beyond() > 0.5f64.powi(depth as i32 + 4) {
        bail!(Certificate, "β tail beyond level {depth} exceeds 2^-{}", depth + 4);
    }
    let fell = fell_metric(i, j)?;
    let agreement_level = match fell.first_disagreement {
        Some(n) => n.saturating_sub(1),
        None => depth,
    };
    let ci = ideal_to_cqms(seq, i)?;
    let cj = ideal_to_cqms(seq, j)?;
    for k in 0..=agreement_level {
        if !ci.algebra(k).same_shape(cj.algebra(k)) || ci.trace_weights(k) != cj.trace_weights(k) {
            bail!(
                Certificate,
                "unitized stages differ at level {k} below the first disagreement"
            );
        }
        if k < agreement_level && ci.embedding(k).placements() != cj.embedding(k).placements() {
            bail!(
                Certificate,
                "unitized embeddings differ at step {k} below the first disagreement"
            );
        }
    }
    let cross = vec![Some(0.0); agreement_level + 1];
    let bound = compare_sequences_bound(&ci, &cj, &cross)?;
    Ok(LipschitzCertificate {
        bound,
        fell,
        agreement_level,
    })
}
