//! Bratteli data: multiplicity matrices, their canonical realizations as
//! unital *-monomorphisms, β schedules, and the named AF families.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, BlockAlgebra, C64};
use crate::error::{bail, QmsError, Result};

/// Hard limits on the size of generated sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_depth: usize,
    /// Upper bound on `Σ kᵢ²` at every level.
    pub max_dimension: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_depth: 16,
            max_dimension: 4096,
        }
    }
}

/// Edge multiplicities `m[i][j]` of source block `i` inside target block `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicityMatrix {
    source: Arc<BlockAlgebra>,
    target: Arc<BlockAlgebra>,
    mult: Vec<Vec<usize>>,
}

impl MultiplicityMatrix {
    /// Validates shape, unitality `Σᵢ m[i][j]·kᵢ = lⱼ`, and injectivity (every
    /// source block appears in some target block).
    pub fn new(source: Arc<BlockAlgebra>, target: Arc<BlockAlgebra>, mult: Vec<Vec<usize>>) -> Result<Self> {
        let (r, s) = (source.num_blocks(), target.num_blocks());
        if mult.len() != r || mult.iter().any(|row| row.len() != s) {
            bail!(Diagram, "multiplicity matrix must be {r}x{s}");
        }
        for j in 0..s {
            let filled: usize = (0..r).map(|i| mult[i][j] * source.block_sizes()[i]).sum();
            let l = target.block_sizes()[j];
            if filled != l {
                bail!(
                    Diagram,
                    "target block {j} of size {l} receives total size {filled}; embedding is not unital"
                );
            }
        }
        if let Some(i) = (0..r).find(|&i| mult[i].iter().all(|&m| m == 0)) {
            bail!(Diagram, "source block {i} has no edges; embedding is not injective");
        }
        Ok(Self { source, target, mult })
    }

    pub fn source(&self) -> &Arc<BlockAlgebra> {
        &self.source
    }

    pub fn target(&self) -> &Arc<BlockAlgebra> {
        &self.target
    }

    pub fn entries(&self) -> &[Vec<usize>] {
        &self.mult
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.mult[i][j]
    }

    /// Product along `self` then `next`: `(A→B)(B→C) = A→C`.
    pub fn then(&self, next: &MultiplicityMatrix) -> Result<Self> {
        if !self.target.same_shape(&next.source) {
            bail!(Structure, "multiplicity matrices are not composable");
        }
        let r = self.source.num_blocks();
        let s = next.target.num_blocks();
        let mid = self.target.num_blocks();
        let mult = (0..r)
            .map(|i| {
                (0..s)
                    .map(|k| (0..mid).map(|j| self.mult[i][j] * next.mult[j][k]).sum())
                    .collect()
            })
            .collect();
        Self::new(self.source.clone(), next.target.clone(), mult)
    }
}

/// A concrete unital *-monomorphism between block algebras given by
/// block-diagonal copy placements.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    source: Arc<BlockAlgebra>,
    target: Arc<BlockAlgebra>,
    /// For each target block, the `(source block, diagonal offset)` copies.
    placements: Vec<Vec<(usize, usize)>>,
}

/// Places `m[i][j]` copies of block `i` into block `j`, ordered by `i`
/// ascending and then copy index ascending.
pub fn realize_embedding(m: &MultiplicityMatrix) -> Embedding {
    let sizes = m.source.block_sizes();
    let placements = (0..m.target.num_blocks())
        .map(|j| {
            let mut offset = 0;
            let mut out = Vec::new();
            for (i, &k) in sizes.iter().enumerate() {
                for _ in 0..m.mult[i][j] {
                    out.push((i, offset));
                    offset += k;
                }
            }
            out
        })
        .collect();
    Embedding {
        source: m.source.clone(),
        target: m.target.clone(),
        placements,
    }
}

impl Embedding {
    pub fn identity(algebra: &Arc<BlockAlgebra>) -> Self {
        Self {
            source: algebra.clone(),
            target: algebra.clone(),
            placements: (0..algebra.num_blocks()).map(|i| vec![(i, 0)]).collect(),
        }
    }

    /// Builds an embedding from explicit placements, checking that each target
    /// block is tiled exactly and every source block is used.
    pub fn from_placements(
        source: Arc<BlockAlgebra>,
        target: Arc<BlockAlgebra>,
        placements: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if placements.len() != target.num_blocks() {
            bail!(Diagram, "expected placements for {} target blocks", target.num_blocks());
        }
        let mut used = vec![false; source.num_blocks()];
        for (j, list) in placements.iter().enumerate() {
            let mut covered = 0;
            let mut sorted = list.clone();
            sorted.sort_by_key(|&(_, off)| off);
            for &(i, off) in &sorted {
                if i >= source.num_blocks() {
                    bail!(Diagram, "placement refers to missing source block {i}");
                }
                if off != covered {
                    bail!(Diagram, "placements in target block {j} overlap or leave gaps");
                }
                covered += source.block_sizes()[i];
                used[i] = true;
            }
            if covered != target.block_sizes()[j] {
                bail!(Diagram, "target block {j} is not filled by its placements");
            }
        }
        if let Some(i) = used.iter().position(|&u| !u) {
            bail!(Diagram, "source block {i} is not placed anywhere");
        }
        Ok(Self {
            source,
            target,
            placements,
        })
    }

    pub fn source(&self) -> &Arc<BlockAlgebra> {
        &self.source
    }

    pub fn target(&self) -> &Arc<BlockAlgebra> {
        &self.target
    }

    pub fn placements(&self) -> &[Vec<(usize, usize)>] {
        &self.placements
    }

    /// Multiplicity matrix counted from the placements.
    pub fn multiplicities(&self) -> MultiplicityMatrix {
        let mut mult = vec![vec![0; self.target.num_blocks()]; self.source.num_blocks()];
        for (j, list) in self.placements.iter().enumerate() {
            for &(i, _) in list {
                mult[i][j] += 1;
            }
        }
        MultiplicityMatrix {
            source: self.source.clone(),
            target: self.target.clone(),
            mult,
        }
    }

    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if !x.algebra().same_shape(&self.source) {
            bail!(
                Structure,
                "element of {} given to embedding from {}",
                x.algebra(),
                self.source
            );
        }
        let sizes = self.source.block_sizes();
        let blocks = self
            .placements
            .iter()
            .zip(self.target.block_sizes())
            .map(|(list, &l)| {
                let mut out = DMatrix::<C64>::zeros(l, l);
                for &(i, off) in list {
                    let k = sizes[i];
                    out.view_mut((off, off), (k, k)).copy_from(x.block(i));
                }
                out
            })
            .collect();
        AlgebraElement::new(self.target.clone(), blocks)
    }

    /// Hilbert–Schmidt adjoint: sums the diagonal compressions of `y` onto
    /// every copy of each source block.
    pub fn adjoint_apply(&self, y: &AlgebraElement) -> Result<AlgebraElement> {
        if !y.algebra().same_shape(&self.target) {
            bail!(
                Structure,
                "element of {} given to adjoint into {}",
                y.algebra(),
                self.target
            );
        }
        let mut out = AlgebraElement::zero(&self.source);
        let sizes = self.source.block_sizes();
        for (j, list) in self.placements.iter().enumerate() {
            for &(i, off) in list {
                let k = sizes[i];
                let view = y.block(j).view((off, off), (k, k));
                out.blocks_mut()[i] += view;
            }
        }
        Ok(out)
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &Embedding) -> Result<Embedding> {
        if !self.target.same_shape(&next.source) {
            bail!(Structure, "embeddings are not composable");
        }
        let placements = next
            .placements
            .iter()
            .map(|list| {
                list.iter()
                    .flat_map(|&(b, off_b)| self.placements[b].iter().map(move |&(a, off_a)| (a, off_b + off_a)))
                    .collect()
            })
            .collect();
        Ok(Embedding {
            source: self.source.clone(),
            target: next.target.clone(),
            placements,
        })
    }
}

/// How the β schedule is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSpec {
    /// `β(j) = 1/dim(Aⱼ)^exponent`; `tail` is required for custom diagrams.
    DimPower {
        exponent: f64,
        #[serde(default)]
        tail: Option<f64>,
    },
    /// `β(j) = scale·ratioʲ`.
    Geometric { scale: f64, ratio: f64 },
    /// Listed values for `j < N` plus a certified bound on `Σ_{j≥N} β(j)`.
    Explicit { values: Vec<f64>, tail: f64 },
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::DimPower {
            exponent: 2.0,
            tail: None,
        }
    }
}

/// A summable weight sequence truncated to `β(0) … β(N−1)` together with a
/// certified bound for the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    values: Vec<f64>,
    tail_beyond: f64,
}

impl BetaSchedule {
    pub fn new(values: Vec<f64>, tail_beyond: f64) -> Result<Self> {
        if values.is_empty() {
            bail!(Domain, "β schedule needs at least one value");
        }
        if let Some(j) = values.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            bail!(Domain, "β({j}) = {} is not a positive real", values[j]);
        }
        if !(tail_beyond >= 0.0 && tail_beyond.is_finite()) {
            bail!(Domain, "β tail bound {tail_beyond} is not a finite nonnegative real");
        }
        Ok(Self { values, tail_beyond })
    }

    /// `β(j) = scale·ratioʲ` for `j < depth`, with the exact geometric tail.
    pub fn geometric(scale: f64, ratio: f64, depth: usize) -> Result<Self> {
        if !(scale > 0.0) || !(ratio > 0.0 && ratio < 1.0) {
            bail!(Domain, "geometric β needs scale > 0 and 0 < ratio < 1");
        }
        let values = (0..depth).map(|j| scale * ratio.powi(j as i32)).collect();
        Self::new(values, scale * ratio.powi(depth as i32) / (1.0 - ratio))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_beyond(&self) -> f64 {
        self.tail_beyond
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Certified upper bound for `Σ_{j≥n} β(j)`.
    pub fn tail(&self, n: usize) -> f64 {
        let stored: f64 = self.values.iter().skip(n).sum();
        stored + self.tail_beyond
    }
}

/// Which family produced a sequence, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum FamilySpec {
    Uhf {
        rate: usize,
    },
    EffrosShen {
        terms: Vec<usize>,
    },
    Commutative {},
    /// `A₀ = ℂ`, `Aₙ = Mₙ ⊕ ℂ`: the unitized compact operators.
    Compacts {},
    Custom {
        block_sizes: Vec<Vec<usize>>,
        multiplicities: Vec<Vec<Vec<usize>>>,
    },
}

/// JSON description of an inductive sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDescriptor {
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(default)]
    pub beta: BetaSpec,
    pub depth: usize,
    /// Optional per-level trace weights; normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_weights: Option<Vec<Vec<f64>>>,
}

impl SequenceDescriptor {
    pub fn build(&self, caps: &Caps) -> Result<InductiveSequence> {
        let seq = match &self.family {
            FamilySpec::Uhf { rate } => uhf_with_caps(*rate, self.depth, &self.beta, caps)?,
            FamilySpec::EffrosShen { terms } => effros_shen_with_caps(terms, self.depth, &self.beta, caps)?,
            FamilySpec::Commutative {} => commutative_with_caps(self.depth, &self.beta, caps)?,
            FamilySpec::Compacts {} => compacts_with_caps(self.depth, &self.beta, caps)?,
            FamilySpec::Custom {
                block_sizes,
                multiplicities,
            } => {
                if block_sizes.len() != self.depth + 1 {
                    bail!(
                        Domain,
                        "custom diagram lists {} levels, depth {} needs {}",
                        block_sizes.len(),
                        self.depth,
                        self.depth + 1
                    );
                }
                check_caps(block_sizes, caps)?;
                let mut algebras = Vec::new();
                for (n, sizes) in block_sizes.iter().enumerate() {
                    algebras.push(BlockAlgebra::new(sizes.clone(), format!("A{n}"))?);
                }
                let beta = schedule_from_spec(&self.beta, &algebras, None)?;
                InductiveSequence::new(self.family.clone(), algebras, multiplicities.clone(), beta)?
            }
        };
        match &self.trace_weights {
            None => Ok(seq),
            Some(per_level) => {
                if per_level.len() != seq.depth() + 1 {
                    bail!(Domain, "trace_weights must list one vector per level");
                }
                let mut seq = seq;
                for (n, w) in per_level.iter().enumerate() {
                    seq = seq.with_trace_weights(n, w.clone())?;
                }
                Ok(seq)
            }
        }
    }
}

/// The chain `A₀ ⊆ A₁ ⊆ … ⊆ A_N` with realized embeddings, β schedule, and
/// the trace weights used for conditional expectations.
#[derive(Debug, Clone)]
pub struct InductiveSequence {
    family: FamilySpec,
    algebras: Vec<Arc<BlockAlgebra>>,
    steps: Vec<MultiplicityMatrix>,
    embeddings: Vec<Embedding>,
    beta: BetaSchedule,
    trace_weights: Vec<Vec<f64>>,
}

impl InductiveSequence {
    pub fn new(
        family: FamilySpec,
        algebras: Vec<Arc<BlockAlgebra>>,
        mults: Vec<Vec<Vec<usize>>>,
        beta: BetaSchedule,
    ) -> Result<Self> {
        if algebras.len() < 2 {
            bail!(Domain, "an inductive sequence needs depth at least 1");
        }
        if algebras[0].block_sizes() != [1] {
            bail!(Diagram, "A0 must be the scalars, got {}", algebras[0]);
        }
        if mults.len() + 1 != algebras.len() {
            bail!(Diagram, "need one multiplicity matrix per step");
        }
        let steps = mults
            .into_iter()
            .enumerate()
            .map(|(n, m)| {
                MultiplicityMatrix::new(algebras[n].clone(), algebras[n + 1].clone(), m)
                    .map_err(|e| QmsError::Diagram(format!("step {n}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(family, algebras, steps, None, beta)
    }

    /// Builds a sequence from explicitly realized embeddings, keeping their
    /// placements instead of the lexicographic realization.
    pub fn from_embeddings(
        family: FamilySpec,
        algebras: Vec<Arc<BlockAlgebra>>,
        embeddings: Vec<Embedding>,
        beta: BetaSchedule,
    ) -> Result<Self> {
        if algebras.len() < 2 || algebras[0].block_sizes() != [1] {
            bail!(Diagram, "an inductive sequence needs A0 = C and depth at least 1");
        }
        if embeddings.len() + 1 != algebras.len() {
            bail!(Diagram, "need one embedding per step");
        }
        for (n, e) in embeddings.iter().enumerate() {
            if !e.source().same_shape(&algebras[n]) || !e.target().same_shape(&algebras[n + 1]) {
                bail!(Diagram, "embedding {n} does not map A{n} into A{}", n + 1);
            }
        }
        let steps = embeddings
            .iter()
            .enumerate()
            .map(|(n, e)| {
                let m = e.multiplicities();
                MultiplicityMatrix::new(algebras[n].clone(), algebras[n + 1].clone(), m.mult)
                    .map_err(|e| QmsError::Diagram(format!("step {n}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(family, algebras, steps, Some(embeddings), beta)
    }

    fn from_steps(
        family: FamilySpec,
        algebras: Vec<Arc<BlockAlgebra>>,
        steps: Vec<MultiplicityMatrix>,
        embeddings: Option<Vec<Embedding>>,
        beta: BetaSchedule,
    ) -> Result<Self> {
        let depth = steps.len();
        if beta.len() < depth {
            bail!(
                Domain,
                "β schedule has {} values, depth {depth} needs {depth}",
                beta.len()
            );
        }
        let beta = if beta.len() > depth {
            // Fold surplus listed values into the certified tail.
            let surplus: f64 = beta.values[depth..].iter().sum();
            BetaSchedule::new(beta.values[..depth].to_vec(), beta.tail_beyond + surplus)?
        } else {
            beta
        };
        let embeddings = embeddings.unwrap_or_else(|| steps.iter().map(realize_embedding).collect());
        let trace_weights = algebras.iter().map(|a| default_trace_weights(a)).collect();
        Ok(Self {
            family,
            algebras,
            steps,
            embeddings,
            beta,
            trace_weights,
        })
    }

    pub fn family(&self) -> &FamilySpec {
        &self.family
    }

    /// Number of steps `N`.
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn algebra(&self, n: usize) -> &Arc<BlockAlgebra> {
        &self.algebras[n]
    }

    pub fn algebras(&self) -> &[Arc<BlockAlgebra>] {
        &self.algebras
    }

    /// Multiplicities of `A_n → A_{n+1}`.
    pub fn step(&self, n: usize) -> &MultiplicityMatrix {
        &self.steps[n]
    }

    /// Realized `A_n → A_{n+1}`.
    pub fn embedding(&self, n: usize) -> &Embedding {
        &self.embeddings[n]
    }

    /// Realized `A_m → A_n` for `m ≤ n`.
    pub fn embedding_between(&self, m: usize, n: usize) -> Result<Embedding> {
        self.check_levels(m, n)?;
        let mut e = Embedding::identity(&self.algebras[m]);
        for k in m..n {
            e = e.then(&self.embeddings[k])?;
        }
        Ok(e)
    }

    /// Pushes an element of `A_m` up to `A_n`.
    pub fn embed(&self, x: &AlgebraElement, m: usize, n: usize) -> Result<AlgebraElement> {
        self.check_levels(m, n)?;
        let mut y = x.clone();
        for k in m..n {
            y = self.embeddings[k].apply(&y)?;
        }
        Ok(y)
    }

    pub fn beta(&self, j: usize) -> f64 {
        self.beta.values[j]
    }

    pub fn betas(&self) -> &[f64] {
        self.beta.values()
    }

    pub fn beta_schedule(&self) -> &BetaSchedule {
        &self.beta
    }

    /// Certified upper bound for `Σ_{j≥n} β(j)`.
    pub fn beta_tail(&self, n: usize) -> f64 {
        self.beta.tail(n)
    }

    pub fn trace_weights(&self, n: usize) -> &[f64] {
        &self.trace_weights[n]
    }

    pub fn with_beta(mut self, beta: BetaSchedule) -> Result<Self> {
        let family = self.family.clone();
        let algebras = std::mem::take(&mut self.algebras);
        let steps = std::mem::take(&mut self.steps);
        let weights = std::mem::take(&mut self.trace_weights);
        let mut out = Self::from_steps(family, algebras, steps, Some(self.embeddings), beta)?;
        out.trace_weights = weights;
        Ok(out)
    }

    /// Replaces the trace weights at level `n`, normalizing so that `τ(1) = 1`.
    pub fn with_trace_weights(mut self, n: usize, weights: Vec<f64>) -> Result<Self> {
        if n > self.depth() {
            bail!(Domain, "level {n} exceeds depth {}", self.depth());
        }
        self.trace_weights[n] = normalize_trace_weights(&self.algebras[n], weights)?;
        Ok(self)
    }

    fn check_levels(&self, m: usize, n: usize) -> Result<()> {
        if m > n || n > self.depth() {
            bail!(Domain, "levels {m} → {n} out of range for depth {}", self.depth());
        }
        Ok(())
    }
}

/// `wᵢ = kᵢ / Σ kⱼ²`, the unique trace on a full matrix algebra and the
/// dimension-proportional trace in general.
pub fn default_trace_weights(algebra: &BlockAlgebra) -> Vec<f64> {
    let dim = algebra.dim() as f64;
    algebra.block_sizes().iter().map(|&k| k as f64 / dim).collect()
}

pub fn normalize_trace_weights(algebra: &BlockAlgebra, weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.len() != algebra.num_blocks() {
        bail!(
            Domain,
            "expected {} trace weights, got {}",
            algebra.num_blocks(),
            weights.len()
        );
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        bail!(Domain, "trace weights must be positive and finite");
    }
    let total: f64 = weights
        .iter()
        .zip(algebra.block_sizes())
        .map(|(w, &k)| w * k as f64)
        .sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn check_caps(block_sizes: &[Vec<usize>], caps: &Caps) -> Result<()> {
    let depth = block_sizes.len().saturating_sub(1);
    if depth > caps.max_depth {
        bail!(Capacity, "depth {depth} exceeds cap {}", caps.max_depth);
    }
    for (n, sizes) in block_sizes.iter().enumerate() {
        let dim = sizes
            .iter()
            .try_fold(0usize, |acc, &k| k.checked_mul(k).and_then(|s| acc.checked_add(s)));
        match dim {
            Some(d) if d <= caps.max_dimension => {}
            _ => bail!(
                Capacity,
                "level {n} has dimension beyond the cap {}",
                caps.max_dimension
            ),
        }
    }
    Ok(())
}

fn check_depth(depth: usize, caps: &Caps) -> Result<()> {
    if depth == 0 {
        bail!(Domain, "depth must be at least 1");
    }
    if depth > caps.max_depth {
        bail!(Capacity, "depth {depth} exceeds cap {}", caps.max_depth);
    }
    Ok(())
}

/// Builds the schedule; `power_tail` computes the certified dim-power tail
/// beyond the last level when the family admits a closed form.
fn schedule_from_spec(
    spec: &BetaSpec,
    algebras: &[Arc<BlockAlgebra>],
    power_tail: Option<&dyn Fn(f64) -> f64>,
) -> Result<BetaSchedule> {
    let depth = algebras.len() - 1;
    match spec {
        BetaSpec::DimPower { exponent, tail } => {
            if !(*exponent > 1.0) {
                bail!(Domain, "dim_power exponent must exceed 1 for summability");
            }
            let values = algebras[..depth]
                .iter()
                .map(|a| (a.dim() as f64).powf(-exponent))
                .collect();
            let tail = match (tail, power_tail) {
                (Some(t), _) => *t,
                (None, Some(f)) => f(*exponent),
                (None, None) => bail!(
                    Domain,
                    "a custom diagram with a dim_power β needs an explicit certified tail"
                ),
            };
            BetaSchedule::new(values, tail)
        }
        BetaSpec::Geometric { scale, ratio } => BetaSchedule::geometric(*scale, *ratio, depth),
        BetaSpec::Explicit { values, tail } => {
            if values.len() < depth {
                bail!(
                    Domain,
                    "explicit β lists {} values, depth {depth} needs more",
                    values.len()
                );
            }
            BetaSchedule::new(values.clone(), *tail)
        }
    }
}

/// `A₀ = ℂ`, `Aₙ = M_{rateⁿ}`, each step with multiplicity `rate`.
pub fn family_uhf(rate: usize, depth: usize, beta: &BetaSpec) -> Result<InductiveSequence> {
    uhf_with_caps(rate, depth, beta, &Caps::default())
}

pub fn uhf_with_caps(rate: usize, depth: usize, beta: &BetaSpec, caps: &Caps) -> Result<InductiveSequence> {
    if rate < 2 {
        bail!(Domain, "UHF rate must be at least 2");
    }
    check_depth(depth, caps)?;
    let mut sizes = vec![vec![1usize]];
    for _ in 0..depth {
        let last = sizes.last().unwrap()[0];
        match last.checked_mul(rate) {
            Some(k) => sizes.push(vec![k]),
            None => bail!(Capacity, "UHF block size overflows"),
        }
    }
    check_caps(&sizes, caps)?;
    let algebras = sizes
        .iter()
        .map(|s| BlockAlgebra::new(s.clone(), format!("M{}", s[0])))
        .collect::<Result<Vec<_>>>()?;
    let r = rate as f64;
    let n = depth as f64;
    // dim(A_j) = rate^{2j}, so the tail is geometric.
    let tail = |k: f64| r.powf(-2.0 * n * k) / (1.0 - r.powf(-2.0 * k));
    let schedule = schedule_from_spec(beta, &algebras, Some(&tail))?;
    let mults = vec![vec![vec![rate]]; depth];
    InductiveSequence::new(FamilySpec::Uhf { rate }, algebras, mults, schedule)
}

/// Continued-fraction denominators `q₀ = 1, q₁ = a₁, qₙ = aₙqₙ₋₁ + qₙ₋₂`.
pub fn continued_fraction_denominators(terms: &[usize], depth: usize) -> Result<Vec<usize>> {
    let mut q = vec![1usize];
    let mut prev = 0usize;
    for n in 1..=depth {
        let a = terms[n - 1];
        let next = a
            .checked_mul(q[n - 1])
            .and_then(|x| x.checked_add(prev))
            .ok_or_else(|| QmsError::Capacity("continued-fraction denominator overflows".into()))?;
        prev = q[n - 1];
        q.push(next);
    }
    Ok(q)
}

/// `A₀ = ℂ`, `Aₙ = M_{qₙ} ⊕ M_{qₙ₋₁}`; step `n → n+1` (n ≥ 1) has
/// multiplicities `[[aₙ₊₁, 1], [1, 0]]` and `A₀ → A₁` has `[[a₁, 1]]`.
pub fn family_effros_shen(terms: &[usize], depth: usize, beta: &BetaSpec) -> Result<InductiveSequence> {
    effros_shen_with_caps(terms, depth, beta, &Caps::default())
}

pub fn effros_shen_with_caps(terms: &[usize], depth: usize, beta: &BetaSpec, caps: &Caps) -> Result<InductiveSequence> {
    if terms.is_empty() {
        bail!(Domain, "continued fraction has no terms");
    }
    if terms.contains(&0) {
        bail!(Domain, "continued-fraction terms must be positive");
    }
    check_depth(depth, caps)?;
    if depth > terms.len() {
        bail!(Domain, "depth {depth} needs at least {depth} continued-fraction terms");
    }
    let q = continued_fraction_denominators(terms, depth)?;
    let mut sizes = vec![vec![1usize]];
    for n in 1..=depth {
        sizes.push(vec![q[n], q[n - 1]]);
    }
    check_caps(&sizes, caps)?;
    let algebras = sizes
        .iter()
        .enumerate()
        .map(|(n, s)| BlockAlgebra::new(s.clone(), format!("ES{n}")))
        .collect::<Result<Vec<_>>>()?;
    let mut mults = vec![vec![vec![terms[0], 1]]];
    for n in 1..depth {
        mults.push(vec![vec![terms[n], 1], vec![1, 0]]);
    }
    // D_{j+2} ≥ 4 D_j because q_{j+2} ≥ 2 q_j for any positive terms; the
    // unknown a_{N+1} ≥ 1 gives D_{N+1} ≥ (q_N + q_{N-1})² + q_N².
    let d_n = algebras[depth].dim() as f64;
    let (qn, qp) = (q[depth] as f64, q[depth - 1] as f64);
    let d_next = (qn + qp).powi(2) + qn * qn;
    let tail = move |k: f64| (d_n.powf(-k) + d_next.powf(-k)) / (1.0 - 4f64.powf(-k));
    let schedule = schedule_from_spec(beta, &algebras, Some(&tail))?;
    InductiveSequence::new(
        FamilySpec::EffrosShen { terms: terms.to_vec() },
        algebras,
        mults,
        schedule,
    )
}

/// `Aₙ = ℂⁿ⁺¹`, each step duplicating the last coordinate.
pub fn family_commutative(depth: usize, beta: &BetaSpec) -> Result<InductiveSequence> {
    commutative_with_caps(depth, beta, &Caps::default())
}

pub fn commutative_with_caps(depth: usize, beta: &BetaSpec, caps: &Caps) -> Result<InductiveSequence> {
    check_depth(depth, caps)?;
    let sizes: Vec<Vec<usize>> = (0..=depth).map(|n| vec![1; n + 1]).collect();
    check_caps(&sizes, caps)?;
    let algebras = sizes
        .iter()
        .enumerate()
        .map(|(n, s)| BlockAlgebra::new(s.clone(), format!("C{}", n + 1)))
        .collect::<Result<Vec<_>>>()?;
    let mults = (0..depth)
        .map(|n| {
            (0..=n)
                .map(|i| {
                    let mut row = vec![0; n + 2];
                    row[i] = 1;
                    if i == n {
                        row[n + 1] = 1;
                    }
                    row
                })
                .collect()
        })
        .collect();
    // Σ_{j≥N} (j+1)^{-k} ≤ (N+1)^{-k} + ∫_{N+1}^∞ x^{-k} dx.
    let m = (depth + 1) as f64;
    let tail = move |k: f64| m.powf(-k) + m.powf(1.0 - k) / (k - 1.0);
    let schedule = schedule_from_spec(beta, &algebras, Some(&tail))?;
    InductiveSequence::new(FamilySpec::Commutative {}, algebras, mults, schedule)
}

/// `A₀ = ℂ`, `Aₙ = Mₙ ⊕ ℂ`; `Mₙ ⊕ ℂ → Mₙ₊₁ ⊕ ℂ` with multiplicities
/// `[[1, 0], [1, 1]]` and `ℂ → M₁ ⊕ ℂ` with `[[1, 1]]`.
pub fn family_compacts(depth: usize, beta: &BetaSpec) -> Result<InductiveSequence> {
    compacts_with_caps(depth, beta, &Caps::default())
}

pub fn compacts_with_caps(depth: usize, beta: &BetaSpec, caps: &Caps) -> Result<InductiveSequence> {
    check_depth(depth, caps)?;
    let mut sizes = vec![vec![1usize]];
    for n in 1..=depth {
        sizes.push(vec![n, 1]);
    }
    check_caps(&sizes, caps)?;
    let algebras = sizes
        .iter()
        .enumerate()
        .map(|(n, s)| BlockAlgebra::new(s.clone(), format!("K{n}")))
        .collect::<Result<Vec<_>>>()?;
    let mut mults = vec![vec![vec![1, 1]]];
    for _ in 1..depth {
        mults.push(vec![vec![1, 0], vec![1, 1]]);
    }
    // dim(A_j) = j² + 1 > j², so the tail is dominated by Σ_{j≥N} j^{-2k}.
    let nf = depth as f64;
    let tail = move |k: f64| nf.powf(-2.0 * k) + nf.powf(1.0 - 2.0 * k) / (2.0 * k - 1.0);
    let schedule = schedule_from_spec(beta, &algebras, Some(&tail))?;
    InductiveSequence::new(FamilySpec::Compacts {}, algebras, mults, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{op_norm, random_element};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sizes(seq: &InductiveSequence) -> Vec<Vec<usize>> {
        seq.algebras().iter().map(|a| a.block_sizes().to_vec()).collect()
    }

    #[test]
    fn scalar_and_car_embeddings() {
        let c = BlockAlgebra::scalars();
        let m2 = BlockAlgebra::new(vec![2], "M2").unwrap();
        let m4 = BlockAlgebra::new(vec![4], "M4").unwrap();
        let e = realize_embedding(&MultiplicityMatrix::new(c.clone(), m2.clone(), vec![vec![2]]).unwrap());
        let x = AlgebraElement::scalar(&c, 3.0);
        assert_eq!(
            e.apply(&x)
                .unwrap()
                .max_abs_diff(&AlgebraElement::scalar(&m2, 3.0))
                .unwrap(),
            0.0
        );

        let e = realize_embedding(&MultiplicityMatrix::new(m2.clone(), m4, vec![vec![2]]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_element(&m2, &mut rng);
        let y = e.apply(&a).unwrap();
        let b = y.block(0);
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(b[(r, c)], a.block(0)[(r, c)]);
            assert_eq!(b[(r + 2, c + 2)], a.block(0)[(r, c)]);
            assert_eq!(b[(r + 2, c)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn commutative_duplication_coordinates() {
        let c2 = BlockAlgebra::new(vec![1, 1], "C2").unwrap();
        let c3 = BlockAlgebra::new(vec![1, 1, 1], "C3").unwrap();
        let m = MultiplicityMatrix::new(c2.clone(), c3, vec![vec![1, 1, 0], vec![0, 0, 1]]).unwrap();
        let e = realize_embedding(&m);
        let x = AlgebraElement::from_real_values(&c2, &[2.0, -5.0]).unwrap();
        let y = AlgebraElement::from_real_values(&c2, &[0.5, 3.0]).unwrap();
        assert_eq!(e.apply(&x).unwrap().real_values().unwrap(), vec![2.0, 2.0, -5.0]);
        let lhs = e.apply(&x.mul(&y).unwrap()).unwrap();
        let rhs = e.apply(&x).unwrap().mul(&e.apply(&y).unwrap()).unwrap();
        assert_eq!(lhs.real_values().unwrap(), rhs.real_values().unwrap());
        let one = e.apply(&AlgebraElement::unit(&c2)).unwrap();
        assert_eq!(one.real_values().unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn unitality_violation_is_diagram_error() {
        let c = BlockAlgebra::scalars();
        let m2 = BlockAlgebra::new(vec![2], "M2").unwrap();
        let err = MultiplicityMatrix::new(c, m2, vec![vec![1]]).unwrap_err();
        assert!(matches!(err, QmsError::Diagram(_)));
    }

    #[test]
    fn uhf_sizes() {
        let seq = family_uhf(2, 3, &BetaSpec::default()).unwrap();
        assert_eq!(sizes(&seq), vec![vec![1], vec![2], vec![4], vec![8]]);
        let seq = family_uhf(3, 2, &BetaSpec::default()).unwrap();
        assert_eq!(sizes(&seq), vec![vec![1], vec![3], vec![9]]);
    }

    #[test]
    fn uhf_tail_matches_direct_sum() {
        let seq = family_uhf(2, 1, &BetaSpec::default()).unwrap();
        assert_eq!(seq.beta(0), 1.0);
        // Σ_{j≥0} 16^{-j} = 16/15.
        let direct: f64 = (0..60).map(|j| 16f64.powi(-j)).sum();
        assert!((seq.beta_tail(0) - direct).abs() < 1e-12);
        assert!((seq.beta_tail(0) - 16.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn effros_shen_golden_is_fibonacci() {
        let seq = family_effros_shen(&[1; 8], 4, &BetaSpec::default()).unwrap();
        // Independent recursion over pairs (q_n, q_{n-1}).
        let mut expect = vec![vec![1]];
        let (mut a, mut b) = (1usize, 1usize);
        expect.push(vec![a, b]);
        for _ in 2..=4 {
            let next = a + b;
            b = a;
            a = next;
            expect.push(vec![a, b]);
        }
        assert_eq!(sizes(&seq), expect);
        assert_eq!(expect[4], vec![5, 3]);
        let seq = family_effros_shen(&[2], 1, &BetaSpec::default()).unwrap();
        assert_eq!(sizes(&seq), vec![vec![1], vec![2, 1]]);
        assert!(matches!(
            family_effros_shen(&[], 1, &BetaSpec::default()),
            Err(QmsError::Domain(_))
        ));
    }

    #[test]
    fn effros_shen_nongolden_unital() {
        let seq = family_effros_shen(&[2, 1, 3, 1], 4, &BetaSpec::default()).unwrap();
        assert_eq!(seq.algebra(4).block_sizes(), &[14, 11]);
    }

    #[test]
    fn commutative_sizes_and_first_step() {
        let seq = family_commutative(2, &BetaSpec::default()).unwrap();
        assert_eq!(sizes(&seq), vec![vec![1], vec![1, 1], vec![1, 1, 1]]);
        let x = AlgebraElement::scalar(seq.algebra(0), 7.0);
        assert_eq!(seq.embed(&x, 0, 1).unwrap().real_values().unwrap(), vec![7.0, 7.0]);
    }

    #[test]
    fn tails_dominate_long_direct_sums() {
        // Compare with a direct sum over a longer prefix of the same family.
        for k in [1.5, 2.0, 3.0] {
            let spec = BetaSpec::DimPower {
                exponent: k,
                tail: None,
            };
            let short = family_commutative(3, &spec).unwrap();
            let direct: f64 = (0..200_000).map(|j| ((j + 1) as f64).powf(-k)).sum();
            assert!(short.beta_tail(0) >= direct - 1e-12, "k={k}");

            let es_short = family_effros_shen(&[1; 12], 2, &spec).unwrap();
            let es_long = family_effros_shen(&[1; 12], 8, &spec).unwrap();
            assert!(es_short.beta_tail(0) + 1e-15 >= es_long.betas().iter().sum::<f64>());

            let k_short = family_compacts(2, &spec).unwrap();
            let direct: f64 = 1.0 + (1..200_000u64).map(|j| ((j * j + 1) as f64).powf(-k)).sum::<f64>();
            assert!(k_short.beta_tail(0) >= direct - 1e-12, "k={k}");
        }
    }

    #[test]
    fn geometric_schedule() {
        let s = BetaSchedule::geometric(1.0 / 32.0, 0.5, 6).unwrap();
        for n in 0..=6 {
            let exact = 2f64.powi(-(n as i32) - 4);
            assert!((s.tail(n) - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn caps_enforced() {
        let caps = Caps {
            max_depth: 16,
            max_dimension: 64,
        };
        assert!(matches!(
            uhf_with_caps(2, 4, &BetaSpec::default(), &caps),
            Err(QmsError::Capacity(_))
        ));
        assert!(uhf_with_caps(2, 3, &BetaSpec::default(), &caps).is_ok());
    }

    #[test]
    fn composition_agrees_with_product_matrix() {
        let seq = family_effros_shen(&[1, 2, 1, 1], 4, &BetaSpec::default()).unwrap();
        for m in 0..4 {
            for n in m..=4 {
                let composed = seq.embedding_between(m, n).unwrap();
                let mut product = MultiplicityMatrix::new(
                    seq.algebra(m).clone(),
                    seq.algebra(m).clone(),
                    (0..seq.algebra(m).num_blocks())
                        .map(|i| (0..seq.algebra(m).num_blocks()).map(|j| (i == j) as usize).collect())
                        .collect(),
                )
                .unwrap();
                for k in m..n {
                    product = product.then(seq.step(k)).unwrap();
                }
                assert_eq!(composed.multiplicities().entries(), product.entries());
            }
        }
    }

    #[test]
    fn embeddings_are_isometric() {
        let seq = family_effros_shen(&[1; 5], 5, &BetaSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 0..5 {
            let x = random_element(seq.algebra(n), &mut rng);
            let y = seq.embed(&x, n, n + 1).unwrap();
            assert!((op_norm(&x) - op_norm(&y)).abs() < 1e-10);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"family":"effros_shen","params":{"terms":[1,1,1,1]},
                       "beta":{"kind":"geometric","scale":0.03125,"ratio":0.5},"depth":3}"#;
        let d: SequenceDescriptor = serde_json::from_str(json).unwrap();
        let seq = d.build(&Caps::default()).unwrap();
        assert_eq!(seq.algebra(3).block_sizes(), &[3, 2]);
        assert_eq!(seq.beta(2), 1.0 / 128.0);
        let back: SequenceDescriptor = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn custom_dim_power_needs_tail() {
        let d = SequenceDescriptor {
            family: FamilySpec::Custom {
                block_sizes: vec![vec![1], vec![1, 1]],
                multiplicities: vec![vec![vec![1, 1]]],
            },
            beta: BetaSpec::default(),
            depth: 1,
            trace_weights: None,
        };
        assert!(matches!(d.build(&Caps::default()), Err(QmsError::Domain(_))));
    }

    #[test]
    fn trace_weight_override_is_normalized() {
        let d = SequenceDescriptor {
            family: FamilySpec::Commutative {},
            beta: BetaSpec::default(),
            depth: 1,
            trace_weights: Some(vec![vec![5.0], vec![1.0, 3.0]]),
        };
        let seq = d.build(&Caps::default()).unwrap();
        assert_eq!(seq.trace_weights(0), &[1.0]);
        assert_eq!(seq.trace_weights(1), &[0.25, 0.75]);
    }
}
