//! Evident bridges and tunnels between consecutive stages, certified
//! propinquity upper bounds, and the `S₀` seminorm on finite coherence
//! windows.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    op_norm, random_self_adjoint, spectral_midpoint, top_eigenpair, AlgebraElement, BlockAlgebra, C64,
};
use crate::bratteli::{Embedding, InductiveSequence};
use crate::error::{bail, Result};
use crate::lipnorms::{
    car_lipnorm, BetaWeight, ExpectationResidual, LipNorm, LipNormChain, ResidualLipNorm, ResidualMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeOptions {
    /// Total ascent iterations shared by all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            budget: 2000,
            restarts: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeReport {
    pub level: usize,
    pub certified_upper: f64,
    /// Best `‖b − E(b)‖` found over the Lip ball; a lower estimate only.
    pub empirical_lower: f64,
    /// The maximizing `b`, normalized to `L(b) = 1`.
    pub witness_element: AlgebraElement,
    /// `E(b)` in the smaller algebra.
    pub witness_partner: AlgebraElement,
}

/// Maximizes `‖T b‖` over `{b : L(b) ≤ 1}` by normalized subgradient ascent
/// with radial rescaling onto the Lip sphere, from random restarts.
pub fn maximize_residual_ratio(
    lip: &ResidualLipNorm,
    target: &dyn ResidualMap,
    opts: &BridgeOptions,
) -> Result<(f64, AlgebraElement)> {
    let alg = lip.algebra();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = opts.restarts.max(1);
    let per_restart = (opts.budget / restarts).max(1);
    let mut best = 0.0f64;
    let mut best_b = AlgebraElement::zero(alg);
    for _ in 0..restarts {
        let b0 = random_self_adjoint(alg, &mut rng);
        let l0 = lip.eval(&b0)?;
        if l0 <= 1e-12 {
            continue;
        }
        let mut b = b0.scale(1.0 / l0);
        let mut f = op_norm(&target.apply(&b)?);
        let mut step = 0.5 * b.frobenius_norm();
        for _ in 0..per_restart {
            let x = target.apply(&b)?;
            let (blk, lambda, v) = top_eigenpair(&x);
            let mut sub = AlgebraElement::zero(target.codomain());
            let outer = &v * v.adjoint() * C64::new(lambda.signum(), 0.0);
            sub.blocks_mut()[blk] = outer;
            let grad = target.adjoint(&sub.symmetrized())?.symmetrized();
            let gn = grad.frobenius_norm();
            if gn <= 1e-300 {
                break;
            }
            let mut cand = b.clone();
            cand.axpy(step / gn, &grad)?;
            let lc = lip.eval(&cand)?;
            if lc <= 1e-12 {
                step *= 0.5;
                continue;
            }
            let cand = cand.scale(1.0 / lc);
            let fc = op_norm(&target.apply(&cand)?);
            if fc > f {
                b = cand;
                f = fc;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
        }
        if f > best {
            best = f;
            best_b = b;
        }
    }
    Ok((best, best_b))
}

/// Length estimate of the evident bridge `A_n ⊆ A_{n+1}` with certified bound
/// `β(n)`: partners are `a ↦ a` and `b ↦ E_{n+1,n}(b)`.
pub fn evident_bridge_length(chain: &LipNormChain, n: usize, opts: &BridgeOptions) -> Result<BridgeReport> {
    if n >= chain.depth() {
        bail!(Domain, "bridge level {n} needs n < depth {}", chain.depth());
    }
    let stage = chain.expectations().stage(n).clone();
    let target = ExpectationResidual::new(stage.clone());
    let (value, b) = maximize_residual_ratio(chain.level(n + 1)?, &target, opts)?;
    Ok(BridgeReport {
        level: n,
        certified_upper: chain.sequence().beta(n),
        empirical_lower: value,
        witness_partner: stage.apply(&b)?,
        witness_element: b,
    })
}

/// The bridge from `ℂ` to `(M_{2ⁿ}, 4ⁿ‖a − τ(a)1‖)`, certified by `4⁻ⁿ`.
pub fn car_bridge_length(n: usize, opts: &BridgeOptions) -> Result<BridgeReport> {
    let lip = car_lipnorm(n)?;
    let term = &lip.terms()[0];
    let (value, b) = maximize_residual_ratio(&lip, term.map.as_ref(), opts)?;
    let k = 1usize << n;
    let tau = b.block(0).trace().re / k as f64;
    Ok(BridgeReport {
        level: n,
        certified_upper: 0.25f64.powi(n as i32),
        empirical_lower: value,
        witness_partner: AlgebraElement::scalar(&BlockAlgebra::scalars(), tau),
        witness_element: b,
    })
}

/// Propinquity bound from a bridge of the given length (twice the tunnel
/// length, which is at most twice the bridge length).
pub fn propinquity_from_bridge(length: f64) -> f64 {
    4.0 * length
}

/// `L^r(a, b) = max{L_n(a), L_{n+1}(b), ‖ι(a) − b‖ / r}` on `A_n ⊕ A_{n+1}`.
#[derive(Debug, Clone)]
pub struct TunnelLipNorm {
    sum: Arc<BlockAlgebra>,
    lower: ResidualLipNorm,
    upper: ResidualLipNorm,
    embedding: Embedding,
    r: f64,
}

impl TunnelLipNorm {
    pub fn new(chain: &LipNormChain, n: usize, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            bail!(Domain, "tunnel radius must be positive, got {r}");
        }
        if n >= chain.depth() {
            bail!(Domain, "tunnel level {n} needs n < depth {}", chain.depth());
        }
        let seq = chain.sequence();
        Ok(Self {
            sum: seq.algebra(n).direct_sum(seq.algebra(n + 1)),
            lower: chain.level(n)?.clone(),
            upper: chain.level(n + 1)?.clone(),
            embedding: seq.embedding(n).clone(),
            r,
        })
    }

    pub fn eval_pair(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
        let gap = op_norm(&self.embedding.apply(&a.symmetrized())?.sub(&b.symmetrized())?);
        Ok(self.lower.eval(a)?.max(self.upper.eval(b)?).max(gap / self.r))
    }

    pub fn join(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
        a.join(b, &self.sum)
    }
}

impl LipNorm for TunnelLipNorm {
    fn algebra(&self) -> &Arc<BlockAlgebra> {
        &self.sum
    }

    fn eval(&self, x: &AlgebraElement) -> Result<f64> {
        let (a, b) = x.split(self.lower.algebra(), self.upper.algebra())?;
        self.eval_pair(&a, &b)
    }
}

pub fn tunnel_lipnorm(chain: &LipNormChain, n: usize, r: f64, a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    TunnelLipNorm::new(chain, n, r)?.eval_pair(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropTarget {
    Level(usize),
    Limit,
}

/// `4 Σ_{j=n}^{m−1} β(j)` towards level `m`, or `4·Σ_{j≥n} β(j)` towards the
/// inductive limit.
pub fn propinquity_upper(seq: &InductiveSequence, n: usize, target: PropTarget) -> Result<f64> {
    if n > seq.depth() {
        bail!(Domain, "level {n} exceeds depth {}", seq.depth());
    }
    match target {
        PropTarget::Level(m) => {
            if m < n || m > seq.depth() {
                bail!(Domain, "target level {m} must lie in [{n}, {}]", seq.depth());
            }
            Ok(4.0 * seq.betas()[n..m].iter().sum::<f64>())
        }
        PropTarget::Limit => Ok(4.0 * seq.beta_tail(n)),
    }
}

/// Consecutive pairs `(a_k, a'_k) ∈ A_k × A_{k+1}` for `k = start, start+1, …`
/// with `a'_k = a_{k+1}`.
#[derive(Debug, Clone)]
pub struct CoherenceWindow {
    start: usize,
    entries: Vec<(AlgebraElement, AlgebraElement)>,
}

impl CoherenceWindow {
    pub fn new(seq: &InductiveSequence, start: usize, entries: Vec<(AlgebraElement, AlgebraElement)>) -> Result<Self> {
        if entries.is_empty() {
            bail!(Domain, "a window needs at least one entry");
        }
        if start + entries.len() > seq.depth() {
            bail!(
                Domain,
                "window [{start}, {}) exceeds depth {}",
                start + entries.len(),
                seq.depth()
            );
        }
        for (i, (a, b)) in entries.iter().enumerate() {
            let k = start + i;
            if !a.algebra().same_shape(seq.algebra(k)) || !b.algebra().same_shape(seq.algebra(k + 1)) {
                bail!(Domain, "entry {i} does not lie in A{k} × A{}", k + 1);
            }
        }
        for i in 0..entries.len() - 1 {
            let d = entries[i].1.max_abs_diff(&entries[i + 1].0)?;
            if d > 1e-12 {
                bail!(
                    Domain,
                    "window is incoherent between entries {i} and {} ({d:.3e})",
                    i + 1
                );
            }
        }
        Ok(Self { start, entries })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn entries(&self) -> &[(AlgebraElement, AlgebraElement)] {
        &self.entries
    }
}

/// `max_k max{L_k(a_k), L_{k+1}(a'_k), ‖a_k − a'_k‖ / (2β(k))}` over the window.
pub fn s0_seminorm(chain: &LipNormChain, w: &CoherenceWindow) -> Result<f64> {
    let seq = chain.sequence();
    let mut best = 0.0f64;
    for (i, (a, b)) in w.entries().iter().enumerate() {
        let k = w.start() + i;
        best = best.max(tunnel_lipnorm(chain, k, 2.0 * seq.beta(k), a, b)?);
    }
    Ok(best)
}

/// The truncation of `ψ_n(a) = ((0,0), …, (0,a), (a,a), …)` to `len`
/// entries starting at level 0.
pub fn psi_window(chain: &LipNormChain, n: usize, a: &AlgebraElement, len: usize) -> Result<CoherenceWindow> {
    let seq = chain.sequence();
    if n > seq.depth() || !a.algebra().same_shape(seq.algebra(n)) {
        bail!(Domain, "element does not lie in A{n}");
    }
    if len < n.max(1) {
        bail!(Domain, "window of length {len} does not reach level {n}");
    }
    if len > seq.depth() {
        bail!(Domain, "window of length {len} exceeds depth {}", seq.depth());
    }
    let a = a.symmetrized();
    let entries = (0..len)
        .map(|k| {
            let first = if k < n {
                AlgebraElement::zero(seq.algebra(k))
            } else {
                seq.embed(&a, n, k)?
            };
            let second = if k + 1 < n {
                AlgebraElement::zero(seq.algebra(k + 1))
            } else {
                seq.embed(&a, n, k + 1)?
            };
            Ok((first, second))
        })
        .collect::<Result<Vec<_>>>()?;
    CoherenceWindow::new(seq, 0, entries)
}

/// `min_λ S₀(ψ_n(a − λ1))`, attained at the spectral midpoint of `a`;
/// returns `(λ, value)`.
pub fn min_shift_s0(chain: &LipNormChain, n: usize, a: &AlgebraElement, len: usize) -> Result<(f64, f64)> {
    let a = a.require_self_adjoint()?;
    let lambda = spectral_midpoint(&a)?;
    let value = s0_seminorm(chain, &psi_window(chain, n, &a.shift(lambda), len)?)?;
    Ok((lambda, value))
}

/// `max{1, 2β(0)/β(n−1)}` with `β(−1) = ∞`.
pub fn lip_compare_factor(seq: &InductiveSequence, n: usize) -> f64 {
    let inv = BetaWeight::at(seq, n as isize - 1).recip();
    (2.0 * seq.beta(0) * inv).max(1.0)
}

/// `min_N [4·tail_a(N) + cross(N) + 4·tail_b(N)]` over the levels where a
/// cross bound is known.
pub fn compare_sequences_bound(a: &InductiveSequence, b: &InductiveSequence, cross: &[Option<f64>]) -> Result<f64> {
    let limit = a.depth().min(b.depth());
    let best = cross
        .iter()
        .enumerate()
        .take(limit + 1)
        .filter_map(|(n, c)| c.map(|c| 4.0 * a.beta_tail(n) + c + 4.0 * b.beta_tail(n)))
        .fold(f64::INFINITY, f64::min);
    if best.is_infinite() {
        bail!(Domain, "no level carries a cross bound");
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::dist_to_scalars;
    use crate::bratteli::{family_commutative, family_uhf, BetaSchedule, BetaSpec};
    use rand::SeedableRng;

    fn commutative_chain(depth: usize, betas: Vec<f64>) -> LipNormChain {
        let seq = family_commutative(depth, &BetaSpec::default())
            .unwrap()
            .with_beta(BetaSchedule::new(betas, 1.0).unwrap())
            .unwrap();
        LipNormChain::new(seq).unwrap()
    }

    #[test]
    fn bridge_from_scalars_to_two_points() {
        // Lip ball of ℂ²: |b₁ − b₂|/2 ≤ 1, so sup ‖b − mean(b)‖ = 1.
        let chain = commutative_chain(1, vec![1.0]);
        let r = evident_bridge_length(&chain, 0, &BridgeOptions::default()).unwrap();
        assert!((r.empirical_lower - 1.0).abs() < 1e-9);
        assert_eq!(r.certified_upper, 1.0);
        let partner = chain.sequence().embed(&r.witness_partner, 0, 1).unwrap();
        assert!(op_norm(&r.witness_element.sub(&partner).unwrap()) <= 1.0 + 1e-12);
    }

    #[test]
    fn car_bridges() {
        for n in 1..=3 {
            let r = car_bridge_length(n, &BridgeOptions::default()).unwrap();
            let exact = 0.25f64.powi(n as i32);
            assert_eq!(r.certified_upper, exact);
            assert_eq!(propinquity_from_bridge(r.certified_upper), 4.0 * exact);
            assert!(r.empirical_lower <= exact + 1e-12);
            assert!(r.empirical_lower >= exact * (1.0 - 1e-9));
        }
    }

    #[test]
    fn tunnel_examples() {
        let chain = commutative_chain(1, vec![1.0]);
        let seq = chain.sequence();
        let one = AlgebraElement::unit(seq.algebra(0));
        let zero = AlgebraElement::zero(seq.algebra(1));
        let v = tunnel_lipnorm(&chain, 0, 2.0, &one, &zero).unwrap();
        assert_eq!(v, 0.5);
        assert!(matches!(
            tunnel_lipnorm(&chain, 0, 0.0, &one, &zero),
            Err(crate::QmsError::Domain(_))
        ));

        let chain = LipNormChain::new(family_uhf(2, 2, &BetaSpec::default()).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_self_adjoint(chain.sequence().algebra(1), &mut rng);
        let up = chain.sequence().embed(&a, 1, 2).unwrap();
        let v = tunnel_lipnorm(&chain, 1, 2.0 * chain.sequence().beta(1), &a, &up).unwrap();
        assert!((v - chain.eval(1, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn propinquity_bounds() {
        let seq = family_commutative(6, &BetaSpec::default())
            .unwrap()
            .with_beta(BetaSchedule::geometric(1.0 / 32.0, 0.5, 6).unwrap())
            .unwrap();
        assert_eq!(propinquity_upper(&seq, 2, PropTarget::Level(2)).unwrap(), 0.0);
        for n in 0..=6 {
            let oracle = 4.0 * (n..200).map(|j| 2f64.powi(-(j as i32) - 5)).sum::<f64>();
            let v = propinquity_upper(&seq, n, PropTarget::Limit).unwrap();
            assert!((v - oracle).abs() < 1e-15);
            assert!((v - 4.0 * 2f64.powi(-(n as i32) - 4)).abs() < 1e-15);
        }
        assert!(propinquity_upper(&seq, 3, PropTarget::Level(2)).is_err());
    }

    #[test]
    fn windows() {
        let chain = LipNormChain::new(family_uhf(2, 4, &BetaSpec::default()).unwrap()).unwrap();
        let seq = chain.sequence();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_self_adjoint(seq.algebra(2), &mut rng);
        let ln = chain.eval(2, &a).unwrap();

        // Constant window from level 2.
        let entries = (2..4)
            .map(|k| (seq.embed(&a, 2, k).unwrap(), seq.embed(&a, 2, k + 1).unwrap()))
            .collect();
        let w = CoherenceWindow::new(seq, 2, entries).unwrap();
        assert!((s0_seminorm(&chain, &w).unwrap() - ln).abs() < 1e-12);

        // ψ₂(a) window.
        let w = psi_window(&chain, 2, &a, 4).unwrap();
        let expect = ln.max(op_norm(&a) / (2.0 * seq.beta(1)));
        assert!((s0_seminorm(&chain, &w).unwrap() - expect).abs() < 1e-12);

        // ψ₀ is the constant window.
        let s = AlgebraElement::scalar(seq.algebra(0), 2.0);
        let w = psi_window(&chain, 0, &s, 3).unwrap();
        assert_eq!(s0_seminorm(&chain, &w).unwrap(), 0.0);

        // Zero window.
        let z = AlgebraElement::zero(seq.algebra(3));
        assert_eq!(
            s0_seminorm(&chain, &psi_window(&chain, 3, &z, 4).unwrap()).unwrap(),
            0.0
        );

        assert!(psi_window(&chain, 3, &z, 2).is_err());
        let bad = vec![
            (
                AlgebraElement::zero(seq.algebra(0)),
                AlgebraElement::unit(seq.algebra(1)),
            ),
            (
                AlgebraElement::zero(seq.algebra(1)),
                AlgebraElement::zero(seq.algebra(2)),
            ),
        ];
        assert!(matches!(
            CoherenceWindow::new(seq, 0, bad),
            Err(crate::QmsError::Domain(_))
        ));
    }

    #[test]
    fn scalar_shift_matches_grid_scan() {
        let chain = commutative_chain(3, vec![1.0, 0.5, 0.25]);
        let seq = chain.sequence();
        let a = AlgebraElement::from_real_values(seq.algebra(2), &[0.3, -0.7, 1.1]).unwrap();
        let (lambda, value) = min_shift_s0(&chain, 2, &a, 3).unwrap();
        let mut scan = f64::INFINITY;
        let mut t = -2.0;
        while t <= 2.0 {
            let w = psi_window(&chain, 2, &a.shift(t), 3).unwrap();
            scan = scan.min(s0_seminorm(&chain, &w).unwrap());
            t += 1e-3;
        }
        assert!((value - scan).abs() < 2e-3);
        assert!((lambda - 0.2).abs() < 1e-12);
        let bound = lip_compare_factor(seq, 2) * chain.eval(2, &a).unwrap();
        assert!(value <= bound + 1e-12);
        assert!(dist_to_scalars(&a).unwrap() <= value * 2.0 * seq.beta(1) + 1e-12);
    }

    #[test]
    fn factor_uses_infinite_beta_below_zero() {
        let seq = family_commutative(2, &BetaSpec::default()).unwrap();
        assert_eq!(lip_compare_factor(&seq, 0), 1.0);
        assert_eq!(lip_compare_factor(&seq, 1), 2.0);
    }

    #[test]
    fn sequence_comparison() {
        let seq = family_commutative(6, &BetaSpec::default())
            .unwrap()
            .with_beta(BetaSchedule::geometric(1.0 / 32.0, 0.5, 6).unwrap())
            .unwrap();
        let identical: Vec<Option<f64>> = vec![Some(0.0); 7];
        let v = compare_sequences_bound(&seq, &seq, &identical).unwrap();
        assert!((v - 8.0 * seq.beta_tail(6)).abs() < 1e-15);
        // Agreement up to level 1 only: bound 8·tail(1) = 2^{-2}.
        let cross = vec![Some(0.0), Some(0.0), None, None];
        let v = compare_sequences_bound(&seq, &seq, &cross).unwrap();
        assert_eq!(v, 0.25);
        assert!(compare_sequences_bound(&seq, &seq, &[None]).is_err());
    }
}
