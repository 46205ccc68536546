//! States on block algebras and the Monge–Kantorovich distance of a residual
//! Lip-norm.
//!
//! `mk(φ, ψ) = sup{⟨g, a⟩ : ‖T_m a‖ ≤ s_m ∀m}` with `g = ρ_φ − ρ_ψ` is solved by
//! a restarted primal–dual hybrid gradient method. Every primal iterate gives
//! a feasible witness after rescaling, and every dual iterate gives a
//! certified upper bound after its residual is absorbed by the scalar term,
//! so the reported bracket is valid at any stopping point.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    clip_spectrum, hermitian_eigenvalues, hermitian_part, random_self_adjoint, trace_norm, AlgebraElement,
    BlockAlgebra, C64,
};
use crate::error::{bail, Result};
use crate::lipnorms::{LipNorm, LipNormChain, ResidualLipNorm};
use crate::lp;

/// A state given by block density matrices, `φ(a) = Σᵢ Tr(ρᵢ aᵢ)`.
#[derive(Debug, Clone)]
pub struct QuantumState {
    density: AlgebraElement,
}

impl QuantumState {
    pub fn new(algebra: Arc<BlockAlgebra>, densities: Vec<DMatrix<C64>>) -> Result<Self> {
        let rho = AlgebraElement::new(algebra, densities)?;
        if rho.self_adjoint_defect() > 1e-10 {
            bail!(Domain, "density matrices must be Hermitian");
        }
        let rho = rho.symmetrized();
        let mut total = 0.0;
        for (i, b) in rho.blocks().iter().enumerate() {
            let ev = hermitian_eigenvalues(b);
            if ev[0] < -1e-10 {
                bail!(Domain, "density block {i} has eigenvalue {:.3e}", ev[0]);
            }
            total += b.trace().re;
        }
        if (total - 1.0).abs() > 1e-10 {
            bail!(Domain, "densities have total trace {total}, expected 1");
        }
        Ok(Self { density: rho })
    }

    /// The point evaluation at block `i` of a commutative algebra.
    pub fn point(algebra: &Arc<BlockAlgebra>, i: usize) -> Result<Self> {
        if !algebra.is_commutative() {
            bail!(Domain, "point evaluations need a commutative algebra");
        }
        if i >= algebra.num_blocks() {
            bail!(Domain, "point {i} out of range");
        }
        let mut rho = AlgebraElement::zero(algebra);
        rho.blocks_mut()[i][(0, 0)] = C64::new(1.0, 0.0);
        Ok(Self { density: rho })
    }

    /// The vector state of the `j`-th standard basis vector of block `i`.
    pub fn basis(algebra: &Arc<BlockAlgebra>, i: usize, j: usize) -> Result<Self> {
        if i >= algebra.num_blocks() || j >= algebra.block_sizes()[i] {
            bail!(Domain, "basis vector ({i}, {j}) out of range for {algebra}");
        }
        let mut rho = AlgebraElement::zero(algebra);
        rho.blocks_mut()[i][(j, j)] = C64::new(1.0, 0.0);
        Ok(Self { density: rho })
    }

    pub fn algebra(&self) -> &Arc<BlockAlgebra> {
        self.density.algebra()
    }

    /// The densities packed as an element of the algebra.
    pub fn density(&self) -> &AlgebraElement {
        &self.density
    }

    pub fn eval(&self, a: &AlgebraElement) -> Result<C64> {
        self.density.check_same_algebra(a)?;
        Ok(self
            .density
            .blocks()
            .iter()
            .zip(a.blocks())
            .map(|(r, x)| (r * x).trace())
            .sum())
    }

    /// `φ(a)` for self-adjoint `a` (the real part of [`Self::eval`]).
    pub fn eval_real(&self, a: &AlgebraElement) -> Result<f64> {
        Ok(self.eval(a)?.re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    /// Rank-one densities supported in one block.
    Pure,
    /// Normalized Wishart densities.
    Mixed,
    /// Point evaluations of a commutative algebra, cycling through the points.
    Vertex,
}

pub fn sample_states(
    algebra: &Arc<BlockAlgebra>,
    count: usize,
    kind: StateKind,
    seed: u64,
) -> Result<Vec<QuantumState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_states_with(algebra, count, kind, &mut rng)
}

pub fn sample_states_with<R: Rng + ?Sized>(
    algebra: &Arc<BlockAlgebra>,
    count: usize,
    kind: StateKind,
    rng: &mut R,
) -> Result<Vec<QuantumState>> {
    if count == 0 {
        bail!(Domain, "state count must be at least 1");
    }
    if kind == StateKind::Vertex && !algebra.is_commutative() {
        bail!(Domain, "vertex states exist only on commutative algebras");
    }
    (0..count)
        .map(|s| match kind {
            StateKind::Vertex => QuantumState::point(algebra, s % algebra.num_blocks()),
            StateKind::Pure => {
                let i = rng.gen_range(0..algebra.num_blocks());
                let k = algebra.block_sizes()[i];
                let v = nalgebra::DVector::<C64>::from_fn(k, |_, _| gaussian_c64(rng));
                let v = &v / C64::new(v.norm(), 0.0);
                let mut blocks: Vec<DMatrix<C64>> =
                    algebra.block_sizes().iter().map(|&k| DMatrix::zeros(k, k)).collect();
                blocks[i] = hermitian_part(&(&v * v.adjoint()));
                QuantumState::new(algebra.clone(), blocks)
            }
            StateKind::Mixed => {
                let mut blocks: Vec<DMatrix<C64>> = algebra
                    .block_sizes()
                    .iter()
                    .map(|&k| {
                        let g = DMatrix::<C64>::from_fn(k, k, |_, _| gaussian_c64(rng));
                        hermitian_part(&(&g * g.adjoint()))
                    })
                    .collect();
                let total: f64 = blocks.iter().map(|b| b.trace().re).sum();
                for b in &mut blocks {
                    *b /= C64::new(total, 0.0);
                }
                QuantumState::new(algebra.clone(), blocks)
            }
        })
        .collect()
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target gap between certified upper and lower bounds.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 10_000,
        }
    }
}

/// A certified bracket `lower ≤ mk(φ, ψ) ≤ upper`.
#[derive(Debug, Clone)]
pub struct MkBracket {
    pub lower: f64,
    pub upper: f64,
    /// An element with `L ≤ 1` and `φ(w) − ψ(w) = lower`.
    pub witness: AlgebraElement,
    pub iterations: usize,
    pub converged: bool,
}

/// Primal–dual iterate: `a` in the algebra, one dual variable per term.
#[derive(Clone)]
struct Iterate {
    a: AlgebraElement,
    y: Vec<AlgebraElement>,
}

struct Problem<'a> {
    lip: &'a ResidualLipNorm,
    g: AlgebraElement,
    scalar_term: usize,
    /// `s_scalar · ‖g‖₁`, valid for every feasible point.
    trivial_upper: f64,
}

impl Problem<'_> {
    fn forward(&self, a: &AlgebraElement) -> Result<Vec<AlgebraElement>> {
        self.lip.terms().iter().map(|t| t.map.apply(a)).collect()
    }

    fn backward(&self, y: &[AlgebraElement]) -> Result<AlgebraElement> {
        let mut out = AlgebraElement::zero(self.lip.algebra());
        for (t, yi) in self.lip.terms().iter().zip(y) {
            out.axpy(1.0, &t.map.adjoint(yi)?)?;
        }
        Ok(out)
    }

    /// Rescales `a` onto the Lip sphere, returning `(value, witness)`.
    fn lower_from(&self, a: &AlgebraElement) -> Result<Option<(f64, AlgebraElement)>> {
        let l = self.lip.eval(a)?;
        if !(l > 0.0 && l.is_finite()) {
            return Ok(None);
        }
        let w = a.scale(1.0 / l);
        let v = self.g.hs_inner(&w)?;
        Ok(Some(if v >= 0.0 { (v, w) } else { (-v, w.scale(-1.0)) }))
    }

    /// `Σ s_m ‖y_m‖₁` after adding `g − Σ T_m† y_m` to the scalar term's dual.
    fn upper_from(&self, y: &[AlgebraElement]) -> Result<f64> {
        let r = self.g.sub(&self.backward(y)?)?;
        let mut total = 0.0;
        for (m, (t, yi)) in self.lip.terms().iter().zip(y).enumerate() {
            let norm = if m == self.scalar_term {
                trace_norm(&yi.add(&r)?)
            } else {
                trace_norm(yi)
            };
            total += t.scale * norm;
        }
        Ok(total.min(self.trivial_upper))
    }
}

/// Estimates `‖K‖` for `K a = (T_m a)_m` by power iteration on `K†K`.
fn operator_norm_estimate(problem: &Problem) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b_6e_6f_72);
    let mut x = random_self_adjoint(problem.lip.algebra(), &mut rng);
    let mut est = 0.0;
    for _ in 0..50 {
        let kx = problem.forward(&x)?;
        let ktkx = problem.backward(&kx)?;
        let n = ktkx.frobenius_norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        est = n / x.frobenius_norm();
        x = ktkx.scale(1.0 / n);
    }
    Ok(est.sqrt())
}

/// Certified bracket for `mk_L(φ, ψ)`.
pub fn mk_distance(
    lip: &ResidualLipNorm,
    phi: &QuantumState,
    psi: &QuantumState,
    opts: &SolverOptions,
) -> Result<MkBracket> {
    if !(opts.tol > 0.0) {
        bail!(Domain, "solver tolerance must be positive");
    }
    if !phi.algebra().same_shape(lip.algebra()) || !psi.algebra().same_shape(lip.algebra()) {
        bail!(Domain, "states and Lip-norm live on different algebras");
    }
    let g = phi.density().sub(psi.density())?;
    let zero = AlgebraElement::zero(lip.algebra());
    if trace_norm(&g) <= 1e-15 {
        return Ok(MkBracket {
            lower: 0.0,
            upper: 0.0,
            witness: zero,
            iterations: 0,
            converged: true,
        });
    }
    let Some(scalar_term) = lip.scalar_term() else {
        bail!(
            Domain,
            "distinct states are at infinite distance for a Lip-norm without a scalar term"
        );
    };
    let radius = lip.terms()[scalar_term].scale;
    let problem = Problem {
        lip,
        trivial_upper: radius * trace_norm(&g),
        g,
        scalar_term,
    };
    let k_norm = operator_norm_estimate(&problem)? * 1.05 + 1e-12;
    let eta = 0.95 / k_norm;

    let mut best_lower = 0.0;
    let mut witness = zero.clone();
    let mut best_upper = problem.trivial_upper;

    let mut current = Iterate {
        a: zero.clone(),
        y: lip
            .terms()
            .iter()
            .map(|t| AlgebraElement::zero(t.map.codomain()))
            .collect(),
    };
    let mut kx = problem.forward(&current.a)?;
    // Primal weight ω balances step sizes: τ = ηω, σ = η/ω.
    let mut omega = radius / problem.g.frobenius_norm().max(1e-300);
    let mut restart_point = current.clone();
    let mut sum = current.clone();
    let mut sum_count = 0usize;
    let mut gap_at_restart = f64::INFINITY;
    let mut last_candidate_gap = f64::INFINITY;
    let check_every = 16;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let (tau, sigma) = (eta * omega, eta / omega);
        // Primal step: a ← a − τ(K†y − g).
        let kty = problem.backward(&current.y)?;
        let mut a_next = current.a.clone();
        a_next.axpy(-tau, &kty)?;
        a_next.axpy(tau, &problem.g)?;
        let kx_next = problem.forward(&a_next)?;
        // Dual step on the extrapolation 2a⁺ − a; prox of the ball indicator's
        // conjugate is v − clip(v, σ s).
        for (m, t) in lip.terms().iter().enumerate() {
            let mut v = current.y[m].clone();
            v.axpy(2.0 * sigma, &kx_next[m])?;
            v.axpy(-sigma, &kx[m])?;
            let clipped = clip_spectrum(&v, sigma * t.scale);
            current.y[m] = v.sub(&clipped)?;
        }
        current.a = a_next;
        kx = kx_next;
        sum.a.axpy(1.0, &current.a)?;
        for (s, y) in sum.y.iter_mut().zip(&current.y) {
            s.axpy(1.0, y)?;
        }
        sum_count += 1;

        if iterations % check_every != 0 && iterations != opts.max_iter {
            continue;
        }
        let average = Iterate {
            a: sum.a.scale(1.0 / sum_count as f64),
            y: sum.y.iter().map(|y| y.scale(1.0 / sum_count as f64)).collect(),
        };
        let mut candidate_gaps = Vec::with_capacity(2);
        for it in [&current, &average] {
            let up = problem.upper_from(&it.y)?;
            let low = problem.lower_from(&it.a)?;
            if up < best_upper {
                best_upper = up;
            }
            let low_val = if let Some((v, w)) = low {
                if v > best_lower {
                    best_lower = v;
                    witness = w;
                }
                v
            } else {
                0.0
            };
            candidate_gaps.push(up - low_val);
        }
        if best_upper - best_lower <= opts.tol {
            converged = true;
            break;
        }
        let (use_average, cand_gap) = if candidate_gaps[1] < candidate_gaps[0] {
            (true, candidate_gaps[1])
        } else {
            (false, candidate_gaps[0])
        };
        let restart = cand_gap <= 0.2 * gap_at_restart
            || (cand_gap <= 0.8 * gap_at_restart && cand_gap > last_candidate_gap)
            || sum_count >= 2048;
        last_candidate_gap = cand_gap;
        if restart {
            let next = if use_average { average } else { current.clone() };
            let da = next.a.sub(&restart_point.a)?.frobenius_norm();
            let dy = next
                .y
                .iter()
                .zip(&restart_point.y)
                .map(|(p, q)| p.sub(q).map(|d| d.frobenius_norm().powi(2)))
                .sum::<Result<f64>>()?
                .sqrt();
            if da > 1e-14 && dy > 1e-14 {
                omega = (0.5 * (da / dy).ln() + 0.5 * omega.ln()).exp();
            }
            current = next;
            kx = problem.forward(&current.a)?;
            restart_point = current.clone();
            sum = Iterate {
                a: AlgebraElement::zero(lip.algebra()),
                y: current.y.iter().map(|y| AlgebraElement::zero(y.algebra())).collect(),
            };
            sum_count = 0;
            gap_at_restart = cand_gap;
            last_candidate_gap = f64::INFINITY;
        }
    }
    Ok(MkBracket {
        lower: best_lower,
        upper: best_upper.max(best_lower),
        witness,
        iterations,
        converged,
    })
}

/// Exact distance on a commutative algebra by linear programming.
///
/// With `a = u − 2s·1` and `u ∈ [0, 4s]` (`s` the scalar term's scale) the
/// box contains a translate of every optimal point, and the constraints
/// `|(T_m u)ᵢ| ≤ s_m` have nonnegative right-hand sides.
pub fn lp_mk_distance(lip: &ResidualLipNorm, phi: &QuantumState, psi: &QuantumState) -> Result<f64> {
    let alg = lip.algebra();
    if !alg.is_commutative() {
        bail!(Domain, "the exact oracle needs a commutative algebra, got {alg}");
    }
    if !phi.algebra().same_shape(alg) || !psi.algebra().same_shape(alg) {
        bail!(Domain, "states and Lip-norm live on different algebras");
    }
    let d = alg.num_blocks();
    let c: Vec<f64> = (0..d)
        .map(|i| phi.density().block(i)[(0, 0)].re - psi.density().block(i)[(0, 0)].re)
        .collect();
    if c.iter().all(|&v| v.abs() <= 1e-15) {
        return Ok(0.0);
    }
    let Some(s) = lip.scalar_term() else {
        bail!(Domain, "Lip-norm has no scalar term; distance is infinite");
    };
    let radius = lip.terms()[s].scale;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for t in lip.terms() {
        // Columns of T_m from the point basis.
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                let x = AlgebraElement::from_real_values(alg, &e)?;
                t.map.apply(&x)?.real_values()
            })
            .collect::<Result<_>>()?;
        let out_dim = cols[0].len();
        for r in 0..out_dim {
            let row: Vec<f64> = (0..d).map(|i| cols[i][r]).collect();
            rows.push(row.clone());
            rhs.push(t.scale);
            rows.push(row.iter().map(|v| -v).collect());
            rhs.push(t.scale);
        }
    }
    for i in 0..d {
        let mut row = vec![0.0; d];
        row[i] = 1.0;
        rows.push(row);
        rhs.push(4.0 * radius);
    }
    Ok(lp::maximize(&c, &rows, &rhs)?.value)
}

/// [`lp_mk_distance`] for level `n` of a chain.
pub fn commutative_mk_oracle(chain: &LipNormChain, n: usize, phi: &QuantumState, psi: &QuantumState) -> Result<f64> {
    lp_mk_distance(chain.level(n)?, phi, psi)
}

/// `|φ(a) − ψ(a)|` computed directly from the states.
pub fn state_gap(phi: &QuantumState, psi: &QuantumState, a: &AlgebraElement) -> Result<f64> {
    Ok((phi.eval_real(a)? - psi.eval_real(a)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bratteli::{family_commutative, family_uhf, BetaSchedule, BetaSpec};

    fn commutative_chain(depth: usize) -> LipNormChain {
        let betas = (0..depth).map(|j| 0.5f64.powi(j as i32)).collect();
        let seq = family_commutative(depth, &BetaSpec::default())
            .unwrap()
            .with_beta(BetaSchedule::new(betas, 1.0).unwrap())
            .unwrap();
        LipNormChain::new(seq).unwrap()
    }

    #[test]
    fn identical_states_are_at_distance_zero() {
        let chain = commutative_chain(2);
        let alg = chain.sequence().algebra(2).clone();
        let s = sample_states(&alg, 1, StateKind::Mixed, 1).unwrap();
        let b = mk_distance(chain.level(2).unwrap(), &s[0], &s[0], &SolverOptions::default()).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        assert_eq!(commutative_mk_oracle(&chain, 2, &s[0], &s[0]).unwrap(), 0.0);
    }

    #[test]
    fn two_points_reach_the_diameter() {
        let chain = commutative_chain(1);
        let alg = chain.sequence().algebra(1).clone();
        let (p, q) = (
            QuantumState::point(&alg, 0).unwrap(),
            QuantumState::point(&alg, 1).unwrap(),
        );
        // sup{|a₁ − a₂| : |a₁ − a₂|/2 ≤ 1} = 2.
        let b = mk_distance(chain.level(1).unwrap(), &p, &q, &SolverOptions::default()).unwrap();
        assert!(b.converged);
        assert!((b.lower - 2.0).abs() < 1e-6 && b.upper >= b.lower);
        assert!((b.upper - 2.0).abs() <= 1e-4);
        assert!((commutative_mk_oracle(&chain, 1, &p, &q).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solver_matches_lp_on_three_points() {
        let chain = commutative_chain(2);
        let alg = chain.sequence().algebra(2).clone();
        let states = sample_states(&alg, 6, StateKind::Mixed, 7).unwrap();
        let opts = SolverOptions::default();
        for pair in states.chunks(2) {
            let b = mk_distance(chain.level(2).unwrap(), &pair[0], &pair[1], &opts).unwrap();
            let exact = commutative_mk_oracle(&chain, 2, &pair[0], &pair[1]).unwrap();
            assert!(b.lower <= exact + 1e-9 && exact <= b.upper + 1e-9, "{b:?} vs {exact}");
            assert!((b.lower - exact).abs() <= opts.tol + 1e-6);
            let l = chain.eval(2, &b.witness).unwrap();
            assert!(l <= 1.0 + 1e-9);
            assert!((state_gap(&pair[0], &pair[1], &b.witness).unwrap() - b.lower).abs() < 1e-10);
        }
    }

    #[test]
    fn noncommutative_bracket_is_consistent() {
        let chain = LipNormChain::new(family_uhf(2, 2, &BetaSpec::default()).unwrap()).unwrap();
        let alg = chain.sequence().algebra(2).clone();
        let states = sample_states(&alg, 2, StateKind::Pure, 3).unwrap();
        let b = mk_distance(
            chain.level(2).unwrap(),
            &states[0],
            &states[1],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(b.lower <= b.upper);
        assert!(b.upper <= 2.0 * chain.sequence().beta(0) + 1e-9);
        assert!(b.converged, "{b:?}");
    }

    #[test]
    fn sampling_contracts() {
        let alg = BlockAlgebra::new(vec![2], "M2").unwrap();
        let s = sample_states(&alg, 3, StateKind::Pure, 5).unwrap();
        for st in &s {
            let ev = hermitian_eigenvalues(st.density().block(0));
            assert!(ev[0].abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        }
        let again = sample_states(&alg, 3, StateKind::Pure, 5).unwrap();
        for (a, b) in s.iter().zip(&again) {
            assert_eq!(a.density().max_abs_diff(b.density()).unwrap(), 0.0);
        }
        let c3 = BlockAlgebra::new(vec![1, 1, 1], "C3").unwrap();
        let v = sample_states(&c3, 3, StateKind::Vertex, 0).unwrap();
        for (i, st) in v.iter().enumerate() {
            assert_eq!(st.density().block(i)[(0, 0)].re, 1.0);
        }
        assert!(sample_states(&alg, 1, StateKind::Vertex, 0).is_err());
    }
}
