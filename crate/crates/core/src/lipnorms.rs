//! β-weighted Lip-norms built from conditional expectations.
//!
//! Every Lip-norm here has the form `L(a) = max_m ‖T_m a‖ / s_m` for linear
//! maps `T_m` that vanish on scalars. Keeping the maps explicit (with their
//! Hilbert–Schmidt adjoints) is what the state-distance solver and the bridge
//! maximizer in other modules need.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{jordan_lie, op_norm, AlgebraElement, BlockAlgebra};
use crate::bratteli::{realize_embedding, InductiveSequence, MultiplicityMatrix};
use crate::error::{bail, Result};
use crate::expectations::{
    one_shot_expectation, trace_preserving_ce, ConditionalExpectation, ExpectationChain, TraceState,
};
use crate::state_metrics::{mk_distance, sample_states_with, QuantumState, SolverOptions, StateKind};

/// A real-linear map on self-adjoint elements together with its adjoint for
/// the real Hilbert–Schmidt pairing `Re Tr(x*y)`.
pub trait ResidualMap: fmt::Debug + Send + Sync {
    fn domain(&self) -> &Arc<BlockAlgebra>;
    fn codomain(&self) -> &Arc<BlockAlgebra>;
    fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement>;
    fn adjoint(&self, y: &AlgebraElement) -> Result<AlgebraElement>;
}

/// `x ↦ x − ι(E(x))` for a conditional expectation `E` onto `ι(B)`.
#[derive(Debug, Clone)]
pub struct ExpectationResidual {
    ce: ConditionalExpectation,
}

impl ExpectationResidual {
    pub fn new(ce: ConditionalExpectation) -> Self {
        Self { ce }
    }

    pub fn expectation(&self) -> &ConditionalExpectation {
        &self.ce
    }
}

impl ResidualMap for ExpectationResidual {
    fn domain(&self) -> &Arc<BlockAlgebra> {
        self.ce.ambient()
    }

    fn codomain(&self) -> &Arc<BlockAlgebra> {
        self.ce.ambient()
    }

    fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        x.sub(&self.ce.project(x)?)
    }

    fn adjoint(&self, y: &AlgebraElement) -> Result<AlgebraElement> {
        let pulled = self.ce.embedding().adjoint_apply(y)?;
        y.sub(&self.ce.adjoint_apply(&pulled)?)
    }
}

/// One term `‖T a‖ / scale` of a residual Lip-norm.
#[derive(Debug, Clone)]
pub struct LipTerm {
    pub map: Arc<dyn ResidualMap>,
    pub scale: f64,
    /// Set when `T a = a − c(a)·1`, i.e. the expectation lands in the scalars.
    pub to_scalars: bool,
}

impl LipTerm {
    pub fn expectation(ce: ConditionalExpectation, scale: f64) -> Self {
        let to_scalars = ce.subalgebra().dim() == 1;
        Self {
            map: Arc::new(ExpectationResidual::new(ce)),
            scale,
            to_scalars,
        }
    }
}

/// A seminorm on self-adjoint elements of one algebra.
pub trait LipNorm: Send + Sync {
    fn algebra(&self) -> &Arc<BlockAlgebra>;
    fn eval(&self, a: &AlgebraElement) -> Result<f64>;
}

/// `L(a) = max_m ‖T_m a‖ / s_m`, zero when there are no terms.
#[derive(Debug, Clone)]
pub struct ResidualLipNorm {
    algebra: Arc<BlockAlgebra>,
    terms: Vec<LipTerm>,
}

impl ResidualLipNorm {
    pub fn new(algebra: Arc<BlockAlgebra>, terms: Vec<LipTerm>) -> Result<Self> {
        for (m, t) in terms.iter().enumerate() {
            if !t.map.domain().same_shape(&algebra) {
                bail!(Structure, "term {m} acts on {}, not {}", t.map.domain(), algebra);
            }
            if !(t.scale > 0.0 && t.scale.is_finite()) {
                bail!(Domain, "term {m} has scale {}", t.scale);
            }
        }
        Ok(Self { algebra, terms })
    }

    pub fn terms(&self) -> &[LipTerm] {
        &self.terms
    }

    /// Index of a term projecting onto the scalars, if any.
    pub fn scalar_term(&self) -> Option<usize> {
        self.terms.iter().position(|t| t.to_scalars)
    }

    /// `T_m a` for every term, on the symmetrized input.
    pub fn residuals(&self, a: &AlgebraElement) -> Result<Vec<AlgebraElement>> {
        let a = self.prepare(a)?;
        self.terms.iter().map(|t| t.map.apply(&a)).collect()
    }

    fn prepare(&self, a: &AlgebraElement) -> Result<AlgebraElement> {
        if !a.algebra().same_shape(&self.algebra) {
            bail!(
                Domain,
                "Lip-norm on {} evaluated at an element of {}",
                self.algebra,
                a.algebra()
            );
        }
        Ok(a.symmetrized())
    }
}

impl LipNorm for ResidualLipNorm {
    fn algebra(&self) -> &Arc<BlockAlgebra> {
        &self.algebra
    }

    fn eval(&self, a: &AlgebraElement) -> Result<f64> {
        let a = self.prepare(a)?;
        let mut best = 0.0f64;
        for t in &self.terms {
            best = best.max(op_norm(&t.map.apply(&a)?) / t.scale);
        }
        Ok(best)
    }
}

/// `β(j)` with the convention `β(−1) = ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaWeight {
    Finite(f64),
    Infinite,
}

impl BetaWeight {
    pub fn at(seq: &InductiveSequence, j: isize) -> Self {
        if j < 0 {
            BetaWeight::Infinite
        } else {
            BetaWeight::Finite(seq.beta(j as usize))
        }
    }

    /// `1/β`, with `1/∞ = 0`.
    pub fn recip(self) -> f64 {
        match self {
            BetaWeight::Finite(b) => 1.0 / b,
            BetaWeight::Infinite => 0.0,
        }
    }
}

/// The stage Lip-norms `L_n(a) = max_{m<n} ‖a − E_{n,m}(a)‖ / β(m)`.
#[derive(Debug, Clone)]
pub struct LipNormChain {
    seq: InductiveSequence,
    expectations: ExpectationChain,
    levels: Vec<ResidualLipNorm>,
}

impl LipNormChain {
    /// Stage expectations taken from the sequence's per-level traces.
    pub fn new(seq: InductiveSequence) -> Result<Self> {
        let expectations = ExpectationChain::new(&seq)?;
        Self::with_expectations(seq, expectations)
    }

    pub fn with_expectations(seq: InductiveSequence, expectations: ExpectationChain) -> Result<Self> {
        if expectations.depth() != seq.depth() {
            bail!(Domain, "expectation chain depth does not match the sequence");
        }
        let levels = (0..=seq.depth())
            .map(|n| {
                let terms = (0..n)
                    .map(|m| Ok(LipTerm::expectation(expectations.composed(n, m)?.clone(), seq.beta(m))))
                    .collect::<Result<Vec<_>>>()?;
                ResidualLipNorm::new(seq.algebra(n).clone(), terms)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seq,
            expectations,
            levels,
        })
    }

    pub fn sequence(&self) -> &InductiveSequence {
        &self.seq
    }

    pub fn expectations(&self) -> &ExpectationChain {
        &self.expectations
    }

    pub fn depth(&self) -> usize {
        self.seq.depth()
    }

    pub fn level(&self, n: usize) -> Result<&ResidualLipNorm> {
        self.levels
            .get(n)
            .ok_or_else(|| crate::QmsError::Domain(format!("level {n} exceeds depth {}", self.depth())))
    }

    pub fn eval(&self, n: usize, a: &AlgebraElement) -> Result<f64> {
        self.level(n)?.eval(a)
    }
}

pub fn chain_lipnorm(chain: &LipNormChain, n: usize, a: &AlgebraElement) -> Result<f64> {
    chain.eval(n, a)
}

/// `L_μ(a) = max_m ‖a − E_m(a)‖ / β(m)` with `E_m` the μ-preserving
/// projection of `A_N` onto `A_m`.
#[derive(Debug, Clone)]
pub struct TraceLipNorm {
    seq: InductiveSequence,
    projections: Vec<ConditionalExpectation>,
}

impl TraceLipNorm {
    pub fn new(seq: InductiveSequence, mu: &TraceState) -> Result<Self> {
        if !mu.algebra().same_shape(seq.algebra(seq.depth())) {
            bail!(Domain, "μ must be a trace on the top algebra");
        }
        let projections = (0..seq.depth())
            .map(|m| one_shot_expectation(&seq, mu, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seq, projections })
    }

    /// Evaluates at `a ∈ A_n`; the terms with `m ≥ n` vanish.
    pub fn eval(&self, n: usize, a: &AlgebraElement) -> Result<f64> {
        if n > self.seq.depth() || !a.algebra().same_shape(self.seq.algebra(n)) {
            bail!(Domain, "element does not belong to level {n}");
        }
        let x = self.seq.embed(&a.symmetrized(), n, self.seq.depth())?;
        let mut best = 0.0f64;
        for m in 0..n {
            let r = x.sub(&self.projections[m].project(&x)?)?;
            best = best.max(op_norm(&r) / self.seq.beta(m));
        }
        Ok(best)
    }

    /// The one-shot projection `A_N → A_m`.
    pub fn projection(&self, m: usize) -> &ConditionalExpectation {
        &self.projections[m]
    }
}

pub fn trace_lipnorm(lip: &TraceLipNorm, n: usize, a: &AlgebraElement) -> Result<f64> {
    lip.eval(n, a)
}

/// `L(a) = 4ⁿ ‖a − τ(a)1‖` on `M_{2ⁿ}` as a residual Lip-norm.
pub fn car_lipnorm(n: usize) -> Result<ResidualLipNorm> {
    let k = 1usize << n;
    let alg = BlockAlgebra::new(vec![k], format!("M{k}"))?;
    let scalars = BlockAlgebra::scalars();
    let emb = realize_embedding(&MultiplicityMatrix::new(scalars, alg.clone(), vec![vec![k]])?);
    let ce = trace_preserving_ce(&alg, &emb, &TraceState::canonical(&alg))?;
    ResidualLipNorm::new(alg, vec![LipTerm::expectation(ce, 0.25f64.powi(n as i32))])
}

/// `4ⁿ ‖a − τ(a)1‖` with `τ` the normalized trace on `M_{2ⁿ}`.
pub fn car_counterexample_lipnorm(n: usize, a: &AlgebraElement) -> Result<f64> {
    let k = 1usize << n;
    if a.algebra().block_sizes() != [k] {
        bail!(
            Domain,
            "the CAR Lip-norm at level {n} lives on M{k}, got {}",
            a.algebra()
        );
    }
    let a = a.symmetrized();
    let tau = a.block(0).trace().re / k as f64;
    Ok(4f64.powi(n as i32) * op_norm(&a.shift(tau)))
}

/// `max{L(a∘b), L({a,b})} − [C(‖a‖L(b) + ‖b‖L(a)) + D·L(a)L(b)]`.
pub fn quasi_leibniz_residual(
    lip: &dyn LipNorm,
    a: &AlgebraElement,
    b: &AlgebraElement,
    c: f64,
    d: f64,
) -> Result<f64> {
    let (jordan, lie) = jordan_lie(a, b)?;
    let lhs = lip.eval(&jordan)?.max(lip.eval(&lie)?);
    let (la, lb) = (lip.eval(a)?, lip.eval(b)?);
    Ok(lhs - (c * (op_norm(a) * lb + op_norm(b) * la) + d * la * lb))
}

/// `(empirical_lower, certified_upper)` for the diameter of the state space of
/// level `n`: the upper bound is `2β(0)`, the lower bound the best
/// state-distance lower estimate over `sample_count` sampled pairs.
pub fn diameter_estimate(
    chain: &LipNormChain,
    n: usize,
    sample_count: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let lip = chain.level(n)?;
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let alg = lip.algebra();
    let kind = if alg.is_commutative() {
        StateKind::Vertex
    } else {
        StateKind::Pure
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = sample_states_with(alg, 2 * sample_count.max(1), kind, &mut rng)?;
    if kind == StateKind::Pure {
        // Opposite corners of the diagonal make a far-apart first pair.
        let last = alg.num_blocks() - 1;
        let len = states.len();
        states[0] = QuantumState::basis(alg, 0, 0)?;
        states[len - 1] = QuantumState::basis(alg, last, alg.block_sizes()[last] - 1)?;
    }
    let mut best = 0.0f64;
    for (p, q) in pair_indices(states.len(), sample_count.max(1), &mut rng) {
        best = best.max(mk_distance(lip, &states[p], &states[q], opts)?.lower);
    }
    Ok((best, 2.0 * chain.sequence().beta(0)))
}

/// Distinct index pairs, starting with `(0, len−1)` and then drawn at random.
fn pair_indices(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = vec![(0, len - 1)];
    while out.len() < count {
        let p = rng.gen_range(0..len);
        let q = rng.gen_range(0..len);
        if p != q {
            out.push((p, q));
        }
    }
    out
}
