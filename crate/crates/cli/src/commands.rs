//! One function per subcommand; each fills a [`Report`].

use std::time::Instant;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qms_core::algebra::{op_norm, random_self_adjoint, AlgebraElement};
use qms_core::ideals::{fell_metric, ideal_to_cqms, lipschitz_certificate};
use qms_core::invariants::verify_all;
use qms_core::lipnorms::{car_lipnorm, quasi_leibniz_residual};
use qms_core::propinquity::{
    car_bridge_length, evident_bridge_length, lip_compare_factor, min_shift_s0, propinquity_from_bridge,
    propinquity_upper,
};
use qms_core::state_metrics::{commutative_mk_oracle, mk_distance, sample_states_with};
use qms_core::{
    BlockAlgebra, IdealSpec, InductiveSequence, LipNorm, LipNormChain, PropTarget, ResidualLipNorm, StateKind,
};

use crate::config::{ElementSpec, ExperimentConfig, LipMode};
use crate::error::{CliError, Result};
use crate::report::{Report, ReportRow};

const STAGE_TOL: f64 = 1e-9;
const BRIDGE_TOL: f64 = 1e-6;
const S0_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Describe,
    Lipnorm,
    MkDist,
    Bridge,
    Bound,
    S0,
    IdealMap,
    Fell,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Describe => "describe",
            Command::Lipnorm => "lipnorm",
            Command::MkDist => "mk-dist",
            Command::Bridge => "bridge",
            Command::Bound => "bound",
            Command::S0 => "s0",
            Command::IdealMap => "ideal-map",
            Command::Fell => "fell",
            Command::Verify => "verify",
        }
    }
}

/// Everything a command needs, built once from a validated config.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub seed: u64,
    pub seq: InductiveSequence,
    pub ideals: Vec<IdealSpec>,
}

impl Context<'_> {
    /// An independent stream per (command, level), so rows do not depend on
    /// the order in which other rows were computed.
    fn rng(&self, salt: u64, level: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((salt << 32) | level as u64);
        rng
    }

    fn chain(&self) -> Result<LipNormChain> {
        LipNormChain::new(self.seq.clone()).map_err(|e| CliError::numeric("lipnorm_chain", e))
    }

    fn elements(&self) -> Result<Vec<(usize, AlgebraElement)>> {
        self.config
            .elements
            .iter()
            .enumerate()
            .map(|(k, e)| Ok((k, e.to_element(&self.seq)?)))
            .collect()
    }
}

pub fn run_command(cmd: Command, ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    report.summary = json!({
        "sequence": ctx.config.sequence,
        "block_sizes": ctx.seq.algebras().iter().map(|a| a.block_sizes().to_vec()).collect::<Vec<_>>(),
        "lipnorm": ctx.config.lipnorm,
    });
    match cmd {
        Command::Describe => describe(ctx, report),
        Command::Lipnorm => lipnorm(ctx, report),
        Command::MkDist => mk_dist(ctx, report),
        Command::Bridge => bridge(ctx, report),
        Command::Bound => bound(ctx, report),
        Command::S0 => s0(ctx, report),
        Command::IdealMap => ideal_map(ctx, report),
        Command::Fell => fell(ctx, report),
        Command::Verify => verify(ctx, report),
    }
}

fn element_json(a: &AlgebraElement) -> Value {
    json!({
        "block_sizes": a.algebra().block_sizes(),
        "coords": ElementSpec::from_element(0, a),
    })
}

fn scaled_self_adjoint(alg: &std::sync::Arc<BlockAlgebra>, rng: &mut ChaCha8Rng) -> AlgebraElement {
    let s = 10f64.powf(rng.gen_range(-1.0..1.0));
    random_self_adjoint(alg, rng).scale(s)
}

fn levels(ctx: &Context<'_>) -> std::ops::RangeInclusive<usize> {
    match ctx.config.lipnorm {
        LipMode::Chain => 0..=ctx.seq.depth(),
        LipMode::Car => 1..=ctx.seq.depth(),
    }
}

/// The Lip-norm the metric commands use at level `n`.
fn level_lip(ctx: &Context<'_>, chain: &LipNormChain, n: usize) -> Result<ResidualLipNorm> {
    match ctx.config.lipnorm {
        LipMode::Chain => chain.level(n).cloned(),
        LipMode::Car => car_lipnorm(n),
    }
    .map_err(|e| CliError::numeric(format!("lipnorm level {n}"), e))
}

fn describe(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let seq = &ctx.seq;
    let t = Instant::now();
    for n in 0..=seq.depth() {
        let alg = seq.algebra(n);
        report.push(
            ReportRow::new("dimension", Some(n))
                .certified(alg.dim() as f64)
                .timed(t),
        );
        report.push(
            ReportRow::new("blocks", Some(n))
                .certified(alg.num_blocks() as f64)
                .timed(t),
        );
        if n < seq.depth() {
            report.push(ReportRow::new("beta", Some(n)).certified(seq.beta(n)).timed(t));
        }
        report.push(
            ReportRow::new("beta_tail", Some(n))
                .certified(seq.beta_tail(n))
                .timed(t),
        );
    }
    let steps: Vec<&[Vec<usize>]> = (0..seq.depth()).map(|n| seq.step(n).entries()).collect();
    let weights: Vec<&[f64]> = (0..=seq.depth()).map(|n| seq.trace_weights(n)).collect();
    if let Value::Object(m) = &mut report.summary {
        m.insert("multiplicities".into(), json!(steps));
        m.insert("betas".into(), json!(seq.betas()));
        m.insert("trace_weights".into(), json!(weights));
    }
    Ok(())
}

fn lipnorm(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let chain = ctx.chain()?;
    let seq = &ctx.seq;
    for (k, a) in ctx.elements()? {
        let t = Instant::now();
        let name = format!("lipnorm[element {k}]");
        let n = ctx.config.elements[k].level;
        let value = match ctx.config.lipnorm {
            LipMode::Chain => chain.eval(n, &a),
            LipMode::Car => car_lipnorm(n).and_then(|l| l.eval(&a)),
        }
        .map_err(|e| CliError::numeric(name.as_str(), e))?;
        report.push(ReportRow::new(name, Some(n)).empirical(value).timed(t));
    }
    for n in levels(ctx) {
        let t = Instant::now();
        let lip = level_lip(ctx, &chain, n)?;
        let alg = lip.algebra().clone();
        let mut rng = ctx.rng(1, n);
        let (mut max_l, mut sum_l) = (0.0f64, 0.0);
        let mut ql = (f64::NEG_INFINITY, None);
        for _ in 0..ctx.config.samples {
            let a = scaled_self_adjoint(&alg, &mut rng);
            let b = scaled_self_adjoint(&alg, &mut rng);
            let la = lip
                .eval(&a)
                .map_err(|e| CliError::numeric(format!("lipnorm level {n}"), e))?;
            max_l = max_l.max(la);
            sum_l += la;
            if ctx.config.lipnorm == LipMode::Chain {
                let r = quasi_leibniz_residual(&lip, &a, &b, 2.0, 0.0)
                    .map_err(|e| CliError::numeric(format!("quasi_leibniz level {n}"), e))?;
                if r > ql.0 {
                    ql = (r, Some((a, b)));
                }
            }
        }
        let mean = sum_l / ctx.config.samples as f64;
        report.push(ReportRow::new("lipnorm_mean", Some(n)).empirical(mean).timed(t));
        report.push(ReportRow::new("lipnorm_max", Some(n)).empirical(max_l).timed(t));
        if let (r, Some((a, b))) = ql {
            let w = json!({"a": element_json(&a), "b": element_json(&b)});
            report.push(
                ReportRow::new("quasi_leibniz_residual", Some(n))
                    .certified(0.0)
                    .empirical(r.max(0.0))
                    .tolerance(STAGE_TOL)
                    .witness(w)
                    .timed(t),
            );
        }
        if ctx.config.lipnorm == LipMode::Chain && n > 0 {
            let t = Instant::now();
            let lower = seq.algebra(n - 1).clone();
            let mut worst = (0.0f64, None);
            for _ in 0..ctx.config.samples {
                let a = scaled_self_adjoint(&lower, &mut rng);
                let up = seq
                    .embed(&a, n - 1, n)
                    .map_err(|e| CliError::numeric("stage_equality", e))?;
                let d = (chain.eval(n, &up).and_then(|u| Ok(u - chain.eval(n - 1, &a)?)))
                    .map_err(|e| CliError::numeric("stage_equality", e))?
                    .abs();
                if d >= worst.0 {
                    worst = (d, Some(a));
                }
            }
            let mut row = ReportRow::new("stage_equality", Some(n))
                .certified(0.0)
                .empirical(worst.0)
                .tolerance(STAGE_TOL);
            if let Some(a) = worst.1 {
                row = row.witness(element_json(&a));
            }
            report.push(row.timed(t));
        }
    }
    Ok(())
}

fn mk_dist(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let chain = ctx.chain()?;
    let opts = ctx.config.solver_options();
    let pairs = ctx.config.suite.state_pairs;
    for n in levels(ctx).filter(|&n| n > 0) {
        let lip = level_lip(ctx, &chain, n)?;
        let alg = lip.algebra().clone();
        let kind = if alg.is_commutative() {
            StateKind::Vertex
        } else {
            StateKind::Pure
        };
        let mut rng = ctx.rng(2, n);
        let states = sample_states_with(&alg, 2 * pairs, kind, &mut rng)
            .map_err(|e| CliError::numeric(format!("mk_distance level {n}"), e))?;
        let mut diameter = 0.0f64;
        for k in 0..pairs {
            let t = Instant::now();
            let name = format!("mk_distance[{k}]");
            let (phi, psi) = (&states[2 * k], &states[2 * k + 1]);
            let b = mk_distance(&lip, phi, psi, &opts).map_err(|e| CliError::numeric(name.as_str(), e))?;
            diameter = diameter.max(b.lower);
            let w = json!({
                "iterations": b.iterations,
                "converged": b.converged,
                "witness": element_json(&b.witness),
            });
            report.push(
                ReportRow::new(name, Some(n))
                    .certified(b.upper)
                    .empirical(b.lower)
                    .tolerance(opts.tol)
                    .witness(w)
                    .timed(t),
            );
            if alg.is_commutative() && ctx.config.lipnorm == LipMode::Chain {
                let t = Instant::now();
                let name = format!("mk_lp_oracle[{k}]");
                let exact =
                    commutative_mk_oracle(&chain, n, phi, psi).map_err(|e| CliError::numeric(name.as_str(), e))?;
                let tol = 1.1 * opts.tol;
                report.push(
                    ReportRow::new(name, Some(n))
                        .certified(exact)
                        .empirical(b.lower)
                        .tolerance(tol)
                        .check((b.lower - exact).abs() <= tol)
                        .timed(t),
                );
            }
        }
        let bound = match ctx.config.lipnorm {
            LipMode::Chain => 2.0 * ctx.seq.beta(0),
            LipMode::Car => 2.0 * 0.25f64.powi(n as i32),
        };
        report.push(
            ReportRow::new("diameter", Some(n))
                .certified(bound)
                .empirical(diameter)
                .tolerance(BRIDGE_TOL),
        );
    }
    Ok(())
}

fn bridge(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let opts = ctx.config.bridge_options(ctx.seed);
    match ctx.config.lipnorm {
        LipMode::Chain => {
            let chain = ctx.chain()?;
            for n in 0..ctx.seq.depth() {
                let t = Instant::now();
                let r = evident_bridge_length(&chain, n, &opts).map_err(|e| CliError::numeric("bridge_length", e))?;
                let partner_l = chain
                    .eval(n, &r.witness_partner)
                    .map_err(|e| CliError::numeric("bridge_partner_lipnorm", e))?;
                let w = json!({
                    "element": element_json(&r.witness_element),
                    "partner": element_json(&r.witness_partner),
                });
                report.push(
                    ReportRow::new("bridge_length", Some(n))
                        .certified(r.certified_upper)
                        .empirical(r.empirical_lower)
                        .tolerance(BRIDGE_TOL)
                        .witness(w)
                        .timed(t),
                );
                report.push(
                    ReportRow::new("bridge_partner_lipnorm", Some(n))
                        .certified(1.0)
                        .empirical(partner_l)
                        .tolerance(STAGE_TOL)
                        .timed(t),
                );
            }
        }
        LipMode::Car => {
            for n in 1..=ctx.seq.depth() {
                let t = Instant::now();
                let r = car_bridge_length(n, &opts).map_err(|e| CliError::numeric("car_bridge_length", e))?;
                let w = json!({
                    "element": element_json(&r.witness_element),
                    "partner": element_json(&r.witness_partner),
                });
                report.push(
                    ReportRow::new("car_bridge_length", Some(n))
                        .certified(r.certified_upper)
                        .empirical(r.empirical_lower)
                        .tolerance(BRIDGE_TOL)
                        .check(r.certified_upper == 0.25f64.powi(n as i32))
                        .witness(w)
                        .timed(t),
                );
            }
        }
    }
    Ok(())
}

fn bound(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let seq = &ctx.seq;
    match ctx.config.lipnorm {
        LipMode::Chain => {
            for n in 0..=seq.depth() {
                let t = Instant::now();
                let limit = propinquity_upper(seq, n, PropTarget::Limit)
                    .map_err(|e| CliError::numeric("propinquity_to_limit", e))?;
                report.push(
                    ReportRow::new("propinquity_to_limit", Some(n))
                        .certified(limit)
                        .timed(t),
                );
                if n < seq.depth() {
                    let step = propinquity_upper(seq, n, PropTarget::Level(n + 1))
                        .map_err(|e| CliError::numeric("propinquity_step", e))?;
                    report.push(
                        ReportRow::new("propinquity_step", Some(n))
                            .certified(step)
                            .check(step <= limit)
                            .timed(t),
                    );
                }
                if n > 0 {
                    report.push(ReportRow::new("lip_compare_factor", Some(n)).certified(lip_compare_factor(seq, n)));
                }
            }
        }
        LipMode::Car => {
            for n in 1..=seq.depth() {
                let exact = 0.25f64.powi(n as i32);
                let p = propinquity_from_bridge(exact);
                report.push(
                    ReportRow::new("car_propinquity", Some(n))
                        .certified(p)
                        .check(p == 4.0 * exact),
                );
            }
        }
    }
    Ok(())
}

fn s0(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let chain = ctx.chain()?;
    let seq = &ctx.seq;
    let len = seq.depth();
    let check = |n: usize, a: &AlgebraElement| -> Result<(f64, f64, f64)> {
        let q = |e| CliError::numeric(format!("s0 level {n}"), e);
        let (lambda, value) = min_shift_s0(&chain, n, a, len).map_err(q)?;
        let bound = lip_compare_factor(seq, n) * chain.eval(n, a).map_err(q)?;
        Ok((lambda, value, bound))
    };
    for (k, a) in ctx.elements()? {
        let n = ctx.config.elements[k].level;
        if n == 0 {
            continue;
        }
        let t = Instant::now();
        let (lambda, value, bound) = check(n, &a)?;
        report.push(
            ReportRow::new(format!("s0[element {k}]"), Some(n))
                .certified(bound)
                .empirical(value)
                .tolerance(S0_TOL)
                .witness(json!({"lambda": lambda}))
                .timed(t),
        );
    }
    for n in 1..=len {
        let t = Instant::now();
        let mut rng = ctx.rng(3, n);
        let mut worst: Option<(f64, f64, f64, AlgebraElement)> = None;
        for _ in 0..ctx.config.samples {
            let a = scaled_self_adjoint(seq.algebra(n), &mut rng);
            let (lambda, value, bound) = check(n, &a)?;
            if worst.as_ref().is_none_or(|w| value - bound > w.1 - w.2) {
                worst = Some((lambda, value, bound, a));
            }
        }
        if let Some((lambda, value, bound, a)) = worst {
            report.push(
                ReportRow::new("s0_min_shift", Some(n))
                    .certified(bound)
                    .empirical(value)
                    .tolerance(S0_TOL)
                    .witness(json!({"lambda": lambda, "element": element_json(&a), "scale": op_norm(&a)}))
                    .timed(t),
            );
        }
    }
    Ok(())
}

/// Configured ideals, padded with the full ideal so there is a pair to compare.
fn ideal_list(ctx: &Context<'_>) -> Vec<(String, IdealSpec)> {
    let mut out: Vec<(String, IdealSpec)> = ctx
        .ideals
        .iter()
        .enumerate()
        .map(|(k, i)| (k.to_string(), i.clone()))
        .collect();
    if out.len() < 2 {
        out.push(("full".into(), IdealSpec::full(&ctx.seq)));
    }
    out
}

fn ideal_map(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let list = ideal_list(ctx);
    let mut maps = Vec::new();
    for (label, ideal) in &list {
        let t = Instant::now();
        let name = format!("unitized_dimension[{label}]");
        let iseq = ideal_to_cqms(&ctx.seq, ideal).map_err(|e| CliError::numeric(name.as_str(), e))?;
        for n in 0..=iseq.depth() {
            report.push(
                ReportRow::new(name.as_str(), Some(n))
                    .certified(iseq.algebra(n).dim() as f64)
                    .timed(t),
            );
        }
        maps.push(json!({
            "ideal": label,
            "levels": ideal.levels(),
            "block_sizes": iseq.algebras().iter().map(|a| a.block_sizes().to_vec()).collect::<Vec<_>>(),
        }));
    }
    for (i, (li, a)) in list.iter().enumerate() {
        for (lj, b) in &list[i + 1..] {
            let t = Instant::now();
            let name = format!("lipschitz[{li},{lj}]");
            let cert = lipschitz_certificate(&ctx.seq, a, b).map_err(|e| CliError::numeric(name.as_str(), e))?;
            report.push(
                ReportRow::new(name, Some(cert.agreement_level))
                    .certified(cert.fell.bound)
                    .empirical(cert.bound)
                    .tolerance(STAGE_TOL)
                    .witness(json!(cert))
                    .timed(t),
            );
        }
    }
    if let Value::Object(m) = &mut report.summary {
        m.insert("ideals".into(), Value::Array(maps));
    }
    Ok(())
}

fn fell(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let list = ideal_list(ctx);
    let metric = |a: &IdealSpec, b: &IdealSpec, name: &str| fell_metric(a, b).map_err(|e| CliError::numeric(name, e));
    for (i, (li, a)) in list.iter().enumerate() {
        for (lj, b) in &list[i + 1..] {
            let t = Instant::now();
            let name = format!("fell[{li},{lj}]");
            let v = metric(a, b, &name)?;
            report.push(
                ReportRow::new(name, v.first_disagreement)
                    .certified(v.bound)
                    .empirical(v.value)
                    .check(v.resolved || v.value == 0.0)
                    .witness(json!(v))
                    .timed(t),
            );
        }
    }
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (a, _) in list.iter().enumerate() {
        for b in 0..list.len() {
            for c in 0..list.len() {
                let m = |x: usize, y: usize| metric(&list[x].1, &list[y].1, "fell_ultrametric").map(|v| v.value);
                worst = worst.max(m(a, c)? - m(a, b)?.max(m(b, c)?));
                worst = worst.max((m(a, b)? - m(b, a)?).abs());
            }
        }
    }
    report.push(
        ReportRow::new("fell_ultrametric", None)
            .certified(0.0)
            .empirical(worst)
            .timed(t),
    );
    Ok(())
}

fn verify(ctx: &Context<'_>, report: &mut Report) -> Result<()> {
    let cfg = ctx.config.suite_config(ctx.seed);
    let t = Instant::now();
    let outcomes = verify_all(&ctx.seq, &ctx.ideals, &cfg).map_err(|e| CliError::numeric("verify", e))?;
    let secs = t.elapsed().as_secs_f64() / outcomes.len().max(1) as f64;
    for o in outcomes {
        let mut row = ReportRow::new(format!("{}/{}", o.suite, o.name), None)
            .empirical(o.worst)
            .tolerance(o.tolerance)
            .check(o.passed)
            .witness(json!({"samples": o.samples, "detail": o.detail}));
        row.seconds = secs;
        report.push(row);
    }
    Ok(())
}
