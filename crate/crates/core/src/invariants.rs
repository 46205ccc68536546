//! Sampled invariant checks. Each check reports the worst violation seen
//! against its tolerance; the CLI `verify` command and the acceptance runner
//! both aggregate these.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    dist_to_scalars, hermitian_eigenvalues, op_norm, random_element, random_self_adjoint, AlgebraElement,
};
use crate::bratteli::{family_commutative, BetaSchedule, BetaSpec, InductiveSequence};
use crate::error::Result;
use crate::expectations::{trace_preserving_ce, ConditionalExpectation, ExpectationChain, TraceState};
use crate::ideals::{
    fell_metric, ideal_to_cqms, lipschitz_certificate, random_ideal, unitize_stage, unitized_embedding, IdealSpec,
};
use crate::lipnorms::{diameter_estimate, quasi_leibniz_residual, LipNorm, LipNormChain, TraceLipNorm};
use crate::propinquity::{
    car_bridge_length, evident_bridge_length, min_shift_s0, propinquity_from_bridge, propinquity_upper, psi_window,
    s0_seminorm, BridgeOptions, PropTarget, TunnelLipNorm,
};
use crate::state_metrics::{
    lp_mk_distance, mk_distance, sample_states_with, state_gap, QuantumState, SolverOptions, StateKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    /// Largest violation measure seen; the check passes when it is at most
    /// `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub detail: String,
}

/// Running maximum of a violation measure with the context of the worst case.
#[derive(Debug)]
struct Worst {
    value: f64,
    samples: usize,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            samples: 0,
            at: String::new(),
        }
    }

    fn record(&mut self, v: f64, at: impl FnOnce() -> String) {
        self.samples += 1;
        if v > self.value || v.is_nan() {
            self.value = v;
            self.at = at();
        }
    }

    fn finish(self, suite: &str, name: &str, tolerance: f64) -> CheckOutcome {
        let worst = if self.samples == 0 { 0.0 } else { self.value };
        CheckOutcome {
            suite: suite.into(),
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
            samples: self.samples,
            detail: self.at,
        }
    }
}

/// Sample sizes and solver settings shared by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Random elements per level for the cheap checks.
    pub samples: usize,
    /// Random pairs per level for the quasi-Leibniz checks.
    pub pairs: usize,
    /// State pairs for solver checks and diameter estimates.
    pub state_pairs: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub bridge: BridgeOptions,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            pairs: 200,
            state_pairs: 20,
            seed: 0,
            solver: SolverOptions::default(),
            bridge: BridgeOptions::default(),
        }
    }
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// A random self-adjoint element with operator norm drawn from `[0.1, 10]`.
fn scaled_self_adjoint(alg: &std::sync::Arc<crate::BlockAlgebra>, rng: &mut ChaCha8Rng) -> AlgebraElement {
    let s = 10f64.powf(rng.gen_range(-1.0..1.0));
    random_self_adjoint(alg, rng).scale(s)
}

/// `|L_{n+1}(ι a) − Lₙ(a)|` on random `a ∈ Aₙ`.
pub fn stage_equality(chain: &LipNormChain, per_level: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 1);
    let seq = chain.sequence();
    let mut w = Worst::new();
    for n in 0..chain.depth() {
        for s in 0..per_level {
            let a = scaled_self_adjoint(seq.algebra(n), &mut rng);
            let up = seq.embed(&a, n, n + 1)?;
            let d = (chain.eval(n + 1, &up)? - chain.eval(n, &a)?).abs();
            w.record(d, || format!("level {n}, sample {s}"));
        }
    }
    Ok(w.finish("lipnorms", "stage equality", 1e-9))
}

/// Quasi-Leibniz `(2, 0)` residual on random pairs at levels `1..=N`.
pub fn quasi_leibniz(chain: &LipNormChain, per_level: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 2);
    let mut w = Worst::new();
    for n in 1..=chain.depth() {
        let lip = chain.level(n)?;
        let alg = lip.algebra().clone();
        for s in 0..per_level {
            let a = scaled_self_adjoint(&alg, &mut rng);
            let b = scaled_self_adjoint(&alg, &mut rng);
            let r = quasi_leibniz_residual(lip, &a, &b, 2.0, 0.0)?;
            w.record(r, || format!("level {n}, pair {s}"));
        }
    }
    Ok(w.finish("lipnorms", "quasi-Leibniz (2,0)", 1e-9))
}

/// Homogeneity, triangle inequality, null space, and continuity.
pub fn seminorm_axioms(chain: &LipNormChain, per_level: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 3);
    let seq = chain.sequence();
    let (mut homog, mut tri, mut null, mut cont) = (Worst::new(), Worst::new(), Worst::new(), Worst::new());
    for n in 0..=chain.depth() {
        let alg = seq.algebra(n);
        for s in 0..per_level {
            let a = scaled_self_adjoint(alg, &mut rng);
            let b = scaled_self_adjoint(alg, &mut rng);
            let t: f64 = rng.gen_range(-5.0..5.0);
            let (la, lb) = (chain.eval(n, &a)?, chain.eval(n, &b)?);
            homog.record((chain.eval(n, &a.scale(t))? - t.abs() * la).abs(), || {
                format!("level {n}, sample {s}")
            });
            tri.record(chain.eval(n, &a.add(&b)?)? - la - lb, || {
                format!("level {n}, sample {s}")
            });
            let scalar = AlgebraElement::scalar(alg, t);
            null.record(chain.eval(n, &scalar)?, || format!("scalar at level {n}"));
            // Small Lip-norm forces closeness to the scalars: dist ≤ β(0)·L.
            if n >= 1 {
                let excess = dist_to_scalars(&a)? - seq.beta(0) * la;
                null.record(excess, || format!("level {n}, sample {s}"));
            }
            let p = random_self_adjoint(alg, &mut rng).scale(1e-8);
            let jump = (chain.eval(n, &a.add(&p)?)? - la).abs();
            let allowed = chain.eval(n, &p)? + 1e-12;
            cont.record(jump - allowed, || format!("level {n}, sample {s}"));
        }
    }
    Ok(vec![
        homog.finish("lipnorms", "homogeneity", 1e-9),
        tri.finish("lipnorms", "triangle inequality", 1e-9),
        null.finish("lipnorms", "null space", 1e-8),
        cont.finish("lipnorms", "continuity", 1e-9),
    ])
}

/// Empirical state-space diameter against `2β(0)` at levels `1..=N`.
pub fn diameter_bound(chain: &LipNormChain, pairs: usize, seed: u64, opts: &SolverOptions) -> Result<CheckOutcome> {
    let mut w = Worst::new();
    for n in 1..=chain.depth() {
        let (lower, upper) = diameter_estimate(chain, n, pairs, seed.wrapping_add(n as u64), opts)?;
        w.record(lower - upper, || format!("level {n}: {lower:.9} vs {upper:.9}"));
    }
    Ok(w.finish("lipnorms", "diameter ≤ 2β(0)", 1e-6))
}

/// The two-point space `ℂ²` over `ℂ` attains the diameter `2β(0)`.
pub fn two_point_diameter(beta0: f64, opts: &SolverOptions) -> Result<CheckOutcome> {
    let seq = family_commutative(1, &BetaSpec::default())?.with_beta(BetaSchedule::new(vec![beta0], 0.0)?)?;
    let chain = LipNormChain::new(seq)?;
    let lip = chain.level(1)?;
    let alg = lip.algebra().clone();
    let (p, q) = (QuantumState::point(&alg, 0)?, QuantumState::point(&alg, 1)?);
    let bracket = mk_distance(lip, &p, &q, opts)?;
    let exact = lp_mk_distance(lip, &p, &q)?;
    let target = 2.0 * beta0;
    let mut w = Worst::new();
    w.record((bracket.lower - target).abs(), || {
        format!("solver lower {:.9}", bracket.lower)
    });
    w.record((exact - target).abs(), || format!("LP value {exact:.9}"));
    Ok(w.finish("lipnorms", "two-point diameter attained", 1e-6))
}

/// Lip-ball sample normalized to `L = 1`, or `None` for a scalar draw.
fn lip_sphere_point(lip: &dyn LipNorm, rng: &mut ChaCha8Rng) -> Result<Option<AlgebraElement>> {
    let b = random_self_adjoint(lip.algebra(), rng);
    let l = lip.eval(&b)?;
    Ok((l > 1e-12).then(|| b.scale(1.0 / l)))
}

/// Bridge lengths against `β(n)` and two-sided witness validity.
pub fn bridge_checks(
    chain: &LipNormChain,
    opts: &BridgeOptions,
    witness_samples: usize,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let seq = chain.sequence();
    let mut rng = rng_for(seed, 4);
    let (mut length, mut partner_lip, mut partner_dist, mut inclusion) =
        (Worst::new(), Worst::new(), Worst::new(), Worst::new());
    for n in 0..chain.depth() {
        let opts = BridgeOptions {
            seed: opts.seed.wrapping_add(n as u64),
            ..*opts
        };
        let report = evident_bridge_length(chain, n, &opts)?;
        length.record(report.empirical_lower - report.certified_upper, || {
            format!(
                "step {n}: {:.9} vs β = {:.9}",
                report.empirical_lower, report.certified_upper
            )
        });
        let stage = chain.expectations().stage(n);
        for s in 0..witness_samples {
            if let Some(b) = lip_sphere_point(chain.level(n + 1)?, &mut rng)? {
                let e = stage.apply(&b)?;
                partner_lip.record(chain.eval(n, &e)? - 1.0, || format!("step {n}, sample {s}"));
                let d = op_norm(&b.sub(&stage.project(&b)?)?);
                partner_dist.record(d - seq.beta(n), || format!("step {n}, sample {s}"));
            }
            if let Some(a) = lip_sphere_point(chain.level(n)?, &mut rng)? {
                let up = seq.embed(&a, n, n + 1)?;
                inclusion.record(chain.eval(n + 1, &up)? - 1.0, || format!("step {n}, sample {s}"));
            }
        }
    }
    Ok(vec![
        length.finish("propinquity", "bridge length ≤ β(n)", 1e-6),
        partner_lip.finish("propinquity", "bridge partner Lip-ball", 1e-9),
        partner_dist.finish("propinquity", "bridge partner distance", 1e-9),
        inclusion.finish("propinquity", "inclusion partner Lip-ball", 1e-9),
    ])
}

/// Certified and empirical CAR bridge lengths for the given levels.
pub fn car_checks(levels: &[usize], opts: &BridgeOptions) -> Result<Vec<CheckOutcome>> {
    let (mut cert, mut prop, mut emp) = (Worst::new(), Worst::new(), Worst::new());
    for &n in levels {
        let r = car_bridge_length(n, opts)?;
        let exact = 4f64.powi(-(n as i32));
        cert.record((r.certified_upper - exact).abs() / exact, || format!("n = {n}"));
        let p = propinquity_from_bridge(r.certified_upper);
        prop.record((p - 4.0 * exact).abs() / exact, || format!("n = {n}"));
        emp.record(r.empirical_lower - exact, || {
            format!("n = {n}: {:.9}", r.empirical_lower)
        });
    }
    Ok(vec![
        cert.finish("propinquity", "CAR certified bridge 4^-n", f64::EPSILON),
        prop.finish("propinquity", "CAR propinquity 4·4^-n", f64::EPSILON),
        emp.finish("propinquity", "CAR empirical ≤ 4^-n", 1e-6),
    ])
}

#[derive(Default)]
struct AxiomWorst {
    idempotence: Option<Worst>,
    fixing: Option<Worst>,
    bimodule: Option<Worst>,
    positivity: Option<Worst>,
    contractivity: Option<Worst>,
    trace: Option<Worst>,
}

fn slot(w: &mut Option<Worst>) -> &mut Worst {
    w.get_or_insert_with(Worst::new)
}

fn record_axioms(
    acc: &mut AxiomWorst,
    label: &str,
    ce: &ConditionalExpectation,
    tau: &TraceState,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let amb = ce.ambient();
    let sub = ce.subalgebra();
    for s in 0..count {
        let x = random_element(amb, rng);
        let ex = ce.apply(&x)?;
        let at = || format!("{label}, input {s}");
        slot(&mut acc.idempotence).record(ce.apply(&ce.project(&x)?)?.max_abs_diff(&ex)?, at);
        let s1 = random_element(sub, rng);
        let s2 = random_element(sub, rng);
        let up1 = ce.embedding().apply(&s1)?;
        let up2 = ce.embedding().apply(&s2)?;
        slot(&mut acc.fixing).record(ce.apply(&up1)?.max_abs_diff(&s1)?, at);
        let lhs = ce.apply(&up1.mul(&x)?.mul(&up2)?)?;
        let rhs = s1.mul(&ex)?.mul(&s2)?;
        slot(&mut acc.bimodule).record(lhs.max_abs_diff(&rhs)?, at);
        let e_pos = ce.apply(&x.adjoint().mul(&x)?)?;
        let min_eig = e_pos
            .symmetrized()
            .blocks()
            .iter()
            .flat_map(hermitian_eigenvalues)
            .fold(f64::INFINITY, f64::min);
        slot(&mut acc.positivity).record((-min_eig).max(e_pos.self_adjoint_defect()), at);
        slot(&mut acc.contractivity).record(op_norm(&ex) - op_norm(&x), at);
        let d = (tau.eval(&ce.project(&x)?)? - tau.eval(&x)?).norm();
        slot(&mut acc.trace).record(d, at);
    }
    Ok(())
}

/// Conditional-expectation axioms on `count` random inputs per expectation;
/// each item pairs an expectation with the trace it should preserve.
pub fn expectation_axioms(
    items: &[(String, ConditionalExpectation, TraceState)],
    count: usize,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 5);
    let mut acc = AxiomWorst::default();
    for (label, ce, tau) in items {
        record_axioms(&mut acc, label, ce, tau, count, &mut rng)?;
    }
    let fin = |w: Option<Worst>, name: &str| w.unwrap_or_else(Worst::new).finish("expectations", name, 1e-9);
    Ok(vec![
        fin(acc.idempotence, "idempotence"),
        fin(acc.fixing, "subalgebra fixed"),
        fin(acc.bimodule, "bimodule identity"),
        fin(acc.positivity, "positivity"),
        fin(acc.contractivity, "contractivity"),
        fin(acc.trace, "trace preservation"),
    ])
}

/// The stage expectations of a chain, each with the trace of its ambient level.
pub fn chain_expectation_items(
    seq: &InductiveSequence,
    chain: &ExpectationChain,
    prefix: &str,
) -> Result<Vec<(String, ConditionalExpectation, TraceState)>> {
    (0..chain.depth())
        .map(|n| {
            Ok((
                format!("{prefix} E[{},{n}]", n + 1),
                chain.stage(n).clone(),
                TraceState::of_level(seq, n + 1)?,
            ))
        })
        .collect()
}

/// Trace-induced Lip-norm against the chain built from restricted traces, and
/// composed expectations against one-shot projections.
pub fn trace_comparison(
    seq: &InductiveSequence,
    mu: &TraceState,
    per_level: usize,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 6);
    let restricted = ExpectationChain::restricted(seq, mu)?;
    let chain = LipNormChain::with_expectations(seq.clone(), restricted.clone())?;
    let trace_lip = TraceLipNorm::new(seq.clone(), mu)?;
    let top = seq.depth();
    let (mut lip, mut comp) = (Worst::new(), Worst::new());
    for n in 0..=top {
        for s in 0..per_level {
            let a = scaled_self_adjoint(seq.algebra(n), &mut rng);
            let d = (trace_lip.eval(n, &a)? - chain.eval(n, &a)?).abs();
            lip.record(d, || format!("level {n}, sample {s}"));
        }
    }
    for n in 1..=top {
        let mu_n = mu.restrict(&seq.embedding_between(n, top)?)?;
        for m in 0..n {
            let composed = restricted.composed(n, m)?;
            let one_shot = trace_preserving_ce(seq.algebra(n), &seq.embedding_between(m, n)?, &mu_n)?;
            for s in 0..per_level.min(20) {
                let x = random_element(seq.algebra(n), &mut rng);
                let d = composed.apply(&x)?.max_abs_diff(&one_shot.apply(&x)?)?;
                comp.record(d, || format!("E[{n},{m}], input {s}"));
            }
        }
    }
    Ok(vec![
        lip.finish("expectations", "trace Lip-norm equals chain Lip-norm", 1e-9),
        comp.finish("expectations", "composed equals one-shot", 1e-9),
    ])
}

/// The `S₀` comparison bound on `ψₙ`-windows and window dominance.
pub fn s0_checks(chain: &LipNormChain, per_level: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 7);
    let seq = chain.sequence();
    let top = chain.depth();
    let (mut bound, mut dominance) = (Worst::new(), Worst::new());
    for n in 0..=top {
        for s in 0..per_level {
            let mut a = random_self_adjoint(seq.algebra(n), &mut rng);
            let l = chain.eval(n, &a)?;
            if l > 1e-12 {
                a = a.scale(1.0 / l);
            }
            let ln = chain.eval(n, &a)?;
            let (_, value) = min_shift_s0(chain, n, &a, top)?;
            let factor = crate::propinquity::lip_compare_factor(seq, n);
            bound.record(value - factor * ln, || format!("level {n}, sample {s}"));
            let w = psi_window(chain, n, &a, top)?;
            let s0 = s0_seminorm(chain, &w)?;
            for (k, (x, _)) in w.entries().iter().enumerate() {
                dominance.record(chain.eval(k, x)? - s0, || format!("level {n}, entry {k}"));
            }
        }
    }
    Ok(vec![
        bound.finish("propinquity", "S0 comparison bound", 1e-8),
        dominance.finish("propinquity", "S0 dominates stage Lip-norms", 1e-12),
    ])
}

/// Tunnel Lip-norms are `(2, 0)`-quasi-Leibniz on the direct sum.
pub fn tunnel_quasi_leibniz(chain: &LipNormChain, per_level: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 8);
    let seq = chain.sequence();
    let mut w = Worst::new();
    for n in 0..chain.depth() {
        let tunnel = TunnelLipNorm::new(chain, n, 2.0 * seq.beta(n))?;
        for s in 0..per_level {
            // Near-coherent pairs keep the gap term active but finite.
            let draw = |rng: &mut ChaCha8Rng| -> Result<AlgebraElement> {
                let a = scaled_self_adjoint(seq.algebra(n), rng);
                let noise = random_self_adjoint(seq.algebra(n + 1), rng).scale(rng.gen_range(0.0..0.5));
                let b = seq.embed(&a, n, n + 1)?.add(&noise)?;
                tunnel.join(&a, &b)
            };
            let x = draw(&mut rng)?;
            let y = draw(&mut rng)?;
            let r = quasi_leibniz_residual(&tunnel, &x, &y, 2.0, 0.0)?;
            w.record(r, || format!("step {n}, pair {s}"));
        }
    }
    Ok(w.finish("propinquity", "tunnel quasi-Leibniz (2,0)", 1e-9))
}

/// `bound(n → ∞) ≤ bound(n → m) + bound(m → ∞)`.
pub fn propinquity_monotone(seq: &InductiveSequence) -> Result<CheckOutcome> {
    let mut w = Worst::new();
    for n in 0..=seq.depth() {
        for m in n..=seq.depth() {
            let direct = propinquity_upper(seq, n, PropTarget::Limit)?;
            let split =
                propinquity_upper(seq, n, PropTarget::Level(m))? + propinquity_upper(seq, m, PropTarget::Limit)?;
            w.record(direct - split, || format!("{n} → {m} → limit"));
        }
    }
    Ok(w.finish("propinquity", "bound monotone", 1e-12))
}

/// Solver brackets on sampled state pairs: witness validity, boundedness,
/// metric axioms, and agreement with the LP value on commutative levels.
pub fn solver_checks(chain: &LipNormChain, pairs: usize, seed: u64, opts: &SolverOptions) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 9);
    let seq = chain.sequence();
    let diam = 2.0 * seq.beta(0);
    let (mut lp, mut cert, mut wit_lip, mut wit_gap, mut bounded, mut sym, mut tri) = (
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
    );
    let levels: Vec<usize> = (1..=chain.depth()).collect();
    for s in 0..pairs {
        let n = levels[s % levels.len()];
        let lip = chain.level(n)?;
        let alg = lip.algebra().clone();
        let kind = if alg.is_commutative() {
            StateKind::Mixed
        } else {
            StateKind::Pure
        };
        let states = sample_states_with(&alg, 3, kind, &mut rng)?;
        let (phi, psi, chi) = (&states[0], &states[1], &states[2]);
        let fwd = mk_distance(lip, phi, psi, opts)?;
        let at = || format!("level {n}, pair {s}");
        wit_lip.record(lip.eval(&fwd.witness)? - 1.0, at);
        wit_gap.record((state_gap(phi, psi, &fwd.witness)? - fwd.lower).abs(), at);
        bounded.record(fwd.upper - diam, at);
        if alg.is_commutative() {
            let exact = lp_mk_distance(lip, phi, psi)?;
            lp.record((fwd.lower - exact).abs(), at);
            cert.record(exact - fwd.upper, at);
        }
        // Metric axioms on a subset to keep the cost down.
        if s % 4 == 0 {
            let back = mk_distance(lip, psi, phi, opts)?;
            sym.record((fwd.lower - back.lower).abs(), at);
            let pc = mk_distance(lip, phi, chi, opts)?;
            let cq = mk_distance(lip, chi, psi, opts)?;
            tri.record(fwd.lower - pc.lower - cq.lower, at);
        }
    }
    let mut out = vec![
        wit_lip.finish("state_metrics", "witness in Lip-ball", 1e-9),
        wit_gap.finish("state_metrics", "witness attains lower", 1e-10),
        bounded.finish("state_metrics", "upper ≤ 2β(0)", 1e-9),
        sym.finish("state_metrics", "symmetry", 2.0 * opts.tol),
        tri.finish("state_metrics", "triangle", 3.0 * opts.tol),
    ];
    if lp.samples > 0 {
        out.push(lp.finish("state_metrics", "solver vs LP oracle", 1.1 * opts.tol));
        out.push(cert.finish("state_metrics", "upper certifies LP value", 1e-9));
    }
    Ok(out)
}

/// Pair-formula norms against left-multiplication norms, and isometry of the
/// unitized embeddings, on `count` random elements spread over the levels.
pub fn unitization_checks(
    seq: &InductiveSequence,
    ideal: &IdealSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 10);
    let (mut norm, mut iso) = (Worst::new(), Worst::new());
    let stages = (0..=seq.depth())
        .map(|n| unitize_stage(seq, ideal, n))
        .collect::<Result<Vec<_>>>()?;
    let embeddings = (0..seq.depth())
        .map(|n| unitized_embedding(seq, ideal, n))
        .collect::<Result<Vec<_>>>()?;
    for s in 0..count {
        let n = s % stages.len();
        let stage = &stages[n];
        let x = random_element(stage.algebra(), &mut rng);
        let (b, lambda) = stage.pair(&x)?;
        let pair = stage.pair_norm(&b, lambda)?;
        let left = crate::ideals::left_multiplication_norm(&x)?;
        norm.record((pair - left).abs(), || format!("level {n}, element {s}"));
        if n < seq.depth() {
            let y = embeddings[n].apply(&x)?;
            let (b_up, mu) = stages[n + 1].pair(&y)?;
            let up = stages[n + 1].pair_norm(&b_up, mu)?;
            iso.record((pair - up).abs(), || format!("level {n}, element {s}"));
        }
    }
    Ok(vec![
        norm.finish("ideals", "pair norm equals left-multiplication norm", 1e-9),
        iso.finish("ideals", "unitized embedding isometric", 1e-9),
    ])
}

/// Lipschitz certificates on random ideal pairs and the ultrametric
/// inequality on all sampled triples. `seq` must satisfy `β(j) ≤ 2^{-j-5}`.
pub fn fell_lipschitz(seq: &InductiveSequence, pairs: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng_for(seed, 11);
    let mut ideals = Vec::with_capacity(2 * pairs);
    let (mut cert, mut ultra) = (Worst::new(), Worst::new());
    for s in 0..pairs {
        let i = random_ideal(seq, rng.gen(), &mut rng);
        let j = if s % 2 == 0 {
            random_ideal(seq, rng.gen(), &mut rng)
        } else {
            perturb_top(seq, &i, &mut rng)?
        };
        let c = lipschitz_certificate(seq, &i, &j)?;
        let reference = if c.fell.resolved { c.fell.value } else { c.fell.bound };
        cert.record(c.bound - reference, || {
            format!("pair {s}: {:?}", c.fell.first_disagreement)
        });
        ideals.push(i);
        ideals.push(j);
    }
    let m: Vec<Vec<f64>> = ideals
        .iter()
        .map(|x| {
            ideals
                .iter()
                .map(|y| fell_metric(x, y).map(|f| f.value))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    for x in 0..ideals.len() {
        for y in 0..ideals.len() {
            ultra.record((m[x][y] - m[y][x]).abs(), || format!("symmetry ({x}, {y})"));
            for z in 0..ideals.len() {
                ultra.record(m[x][z] - m[x][y].max(m[y][z]), || format!("triple ({x}, {y}, {z})"));
            }
        }
    }
    Ok(vec![
        cert.finish("ideals", "Fell-Lipschitz certificate", 1e-9),
        ultra.finish("ideals", "Fell ultrametric", 0.0),
    ])
}

/// Flips one random top-level block of `ideal`, so the pair tends to agree
/// on more levels than two independent draws.
fn perturb_top(seq: &InductiveSequence, ideal: &IdealSpec, rng: &mut ChaCha8Rng) -> Result<IdealSpec> {
    let blocks = seq.algebra(seq.depth()).num_blocks();
    let flip = rng.gen_range(0..blocks);
    let mut top: Vec<usize> = ideal.level(seq.depth()).to_vec();
    match top.iter().position(|&b| b == flip) {
        Some(p) => {
            top.remove(p);
        }
        None => top.push(flip),
    }
    IdealSpec::from_top(seq, top)
}

/// Stage equality, quasi-Leibniz, seminorm axioms, diameter, and bridges.
pub fn lipnorm_suite(chain: &LipNormChain, cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![
        stage_equality(chain, cfg.samples, cfg.seed)?,
        quasi_leibniz(chain, cfg.pairs, cfg.seed)?,
    ];
    out.extend(seminorm_axioms(chain, cfg.samples, cfg.seed)?);
    out.push(diameter_bound(chain, cfg.state_pairs, cfg.seed, &cfg.solver)?);
    out.extend(bridge_checks(chain, &cfg.bridge, cfg.samples, cfg.seed)?);
    Ok(out)
}

fn capped_beta(seq: &InductiveSequence) -> Result<InductiveSequence> {
    seq.clone()
        .with_beta(BetaSchedule::geometric(1.0 / 32.0, 0.5, seq.depth())?)
}

fn relabel(mut outcomes: Vec<CheckOutcome>, suffix: &str) -> Vec<CheckOutcome> {
    for o in &mut outcomes {
        o.name = format!("{} [{suffix}]", o.name);
    }
    outcomes
}

/// Every suite on one sequence and a list of ideals. Fell checks run on a
/// copy with `β(j) = 2^{-j-5}` when the configured β exceeds that cap.
pub fn verify_all(seq: &InductiveSequence, ideals: &[IdealSpec], cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    let chain = LipNormChain::new(seq.clone())?;
    let mut out = lipnorm_suite(&chain, cfg)?;
    out.push(two_point_diameter(seq.beta(0), &cfg.solver)?);
    out.extend(car_checks(&[1, 2, 3], &cfg.bridge)?);

    let mut items = chain_expectation_items(seq, chain.expectations(), "chain")?;
    for (k, ideal) in ideals.iter().enumerate() {
        let iseq = ideal_to_cqms(seq, ideal)?;
        let ichain = LipNormChain::new(iseq.clone())?;
        items.extend(chain_expectation_items(
            &iseq,
            ichain.expectations(),
            &format!("ideal {k}"),
        )?);
        out.extend(relabel(lipnorm_suite(&ichain, cfg)?, &format!("ideal {k}")));
        out.extend(unitization_checks(seq, ideal, cfg.samples, cfg.seed)?);
    }
    out.extend(expectation_axioms(&items, cfg.samples, cfg.seed)?);
    out.extend(trace_comparison(
        seq,
        &TraceState::of_level(seq, seq.depth())?,
        cfg.samples,
        cfg.seed,
    )?);
    out.extend(s0_checks(&chain, cfg.samples, cfg.seed)?);
    out.push(tunnel_quasi_leibniz(&chain, cfg.samples, cfg.seed)?);
    out.push(propinquity_monotone(seq)?);
    out.extend(solver_checks(&chain, cfg.state_pairs, cfg.seed, &cfg.solver)?);
    out.extend(fell_lipschitz(&capped_beta(seq)?, cfg.state_pairs, cfg.seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bratteli::{family_compacts, family_uhf};

    fn all_pass(outcomes: &[CheckOutcome]) {
        for o in outcomes {
            assert!(
                o.passed,
                "{} / {}: worst {:e} > {:e} at {}",
                o.suite, o.name, o.worst, o.tolerance, o.detail
            );
        }
    }

    #[test]
    fn small_suites_pass() {
        let seq = family_uhf(2, 2, &BetaSpec::default()).unwrap();
        let cfg = SuiteConfig {
            samples: 8,
            pairs: 20,
            state_pairs: 4,
            ..SuiteConfig::default()
        };
        let ideals = vec![IdealSpec::full(&seq)];
        let out = verify_all(&seq, &ideals, &cfg).unwrap();
        assert!(out.len() > 30);
        all_pass(&out);
    }

    #[test]
    fn compacts_ideal_suites_pass() {
        let seq = family_compacts(3, &BetaSpec::default()).unwrap();
        let cfg = SuiteConfig {
            samples: 6,
            pairs: 10,
            state_pairs: 4,
            ..SuiteConfig::default()
        };
        let ideal = IdealSpec::from_top(&seq, vec![0]).unwrap();
        all_pass(&verify_all(&seq, &[ideal], &cfg).unwrap());
    }

    #[test]
    fn violations_are_reported() {
        let mut w = Worst::new();
        w.record(0.5, || "bad".into());
        w.record(0.1, || "fine".into());
        let o = w.finish("s", "n", 1e-3);
        assert!(!o.passed);
        assert_eq!(o.detail, "bad");
        assert_eq!(o.samples, 2);
        let mut w = Worst::new();
        w.record(f64::NAN, || "nan".into());
        assert!(!w.finish("s", "n", 1.0).passed);
    }
}
