//! Finite-dimensional C*-algebras as direct sums of full matrix blocks.
//!
//! An algebra `M_{k_1} ⊕ … ⊕ M_{k_r}` is described by its block sizes. Its
//! elements are stored densely, one column-major complex matrix per block, so
//! the concatenation of the block slices is the flat coordinate vector used by
//! the linear maps in [`crate::bratteli`] and [`crate::expectations`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub type C64 = Complex64;

/// Entrywise tolerance under which an element counts as self-adjoint.
pub const SELF_ADJOINT_TOL: f64 = 1e-12;

const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockAlgebra {
    block_sizes: Vec<usize>,
    #[serde(skip)]
    offsets: Vec<usize>,
    label: String,
}

impl BlockAlgebra {
    pub fn new(block_sizes: Vec<usize>, label: impl Into<String>) -> Result<Arc<Self>> {
        if block_sizes.is_empty() {
            bail!(Structure, "a block algebra needs at least one block");
        }
        if let Some(i) = block_sizes.iter().position(|&k| k == 0) {
            bail!(Structure, "block {i} has size zero");
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        let mut acc = 0;
        for &k in &block_sizes {
            offsets.push(acc);
            acc += k * k;
        }
        offsets.push(acc);
        Ok(Arc::new(Self {
            block_sizes,
            offsets,
            label: label.into(),
        }))
    }

    /// The one-dimensional algebra `ℂ`.
    pub fn scalars() -> Arc<Self> {
        Self::new(vec![1], "C").expect("scalar algebra")
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    /// Complex dimension `Σ kᵢ²`, which is also the real dimension of the
    /// self-adjoint part.
    pub fn dim(&self) -> usize {
        self.offsets[self.block_sizes.len()]
    }

    /// Start of block `i` in flat coordinates.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Block containing flat coordinate `t`.
    pub fn block_of(&self, t: usize) -> usize {
        match self.offsets.binary_search(&t) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn is_commutative(&self) -> bool {
        self.block_sizes.iter().all(|&k| k == 1)
    }

    pub fn same_shape(&self, other: &BlockAlgebra) -> bool {
        self.block_sizes == other.block_sizes
    }

    /// `self ⊕ other`, blocks of `self` first.
    pub fn direct_sum(&self, other: &BlockAlgebra) -> Arc<Self> {
        let mut sizes = self.block_sizes.clone();
        sizes.extend_from_slice(&other.block_sizes);
        Self::new(sizes, format!("{}+{}", self.label, other.label)).expect("nonempty")
    }
}

impl fmt::Display for BlockAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.block_sizes.iter().map(|k| format!("M{k}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// An element of a [`BlockAlgebra`].
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    algebra: Arc<BlockAlgebra>,
    blocks: Vec<DMatrix<C64>>,
}

impl AlgebraElement {
    pub fn new(algebra: Arc<BlockAlgebra>, blocks: Vec<DMatrix<C64>>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            bail!(
                Structure,
                "expected {} blocks, got {}",
                algebra.num_blocks(),
                blocks.len()
            );
        }
        for (i, (b, &k)) in blocks.iter().zip(algebra.block_sizes()).enumerate() {
            if b.shape() != (k, k) {
                bail!(Structure, "block {i} has shape {:?}, expected {k}x{k}", b.shape());
            }
        }
        Ok(Self { algebra, blocks })
    }

    pub fn zero(algebra: &Arc<BlockAlgebra>) -> Self {
        let blocks = algebra.block_sizes().iter().map(|&k| DMatrix::zeros(k, k)).collect();
        Self {
            algebra: algebra.clone(),
            blocks,
        }
    }

    pub fn unit(algebra: &Arc<BlockAlgebra>) -> Self {
        Self::scalar(algebra, 1.0)
    }

    pub fn scalar(algebra: &Arc<BlockAlgebra>, lambda: f64) -> Self {
        let blocks = algebra
            .block_sizes()
            .iter()
            .map(|&k| DMatrix::identity(k, k) * C64::new(lambda, 0.0))
            .collect();
        Self {
            algebra: algebra.clone(),
            blocks,
        }
    }

    /// Block-diagonal element with the given real diagonal per block.
    pub fn from_diagonals(algebra: &Arc<BlockAlgebra>, diagonals: &[Vec<f64>]) -> Result<Self> {
        if diagonals.len() != algebra.num_blocks() {
            bail!(Structure, "expected {} diagonals", algebra.num_blocks());
        }
        let blocks = diagonals
            .iter()
            .zip(algebra.block_sizes())
            .map(|(d, &k)| {
                if d.len() != k {
                    bail!(Structure, "diagonal of length {} for block of size {k}", d.len());
                }
                let v = DVector::from_iterator(k, d.iter().map(|&x| C64::new(x, 0.0)));
                Ok(DMatrix::from_diagonal(&v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            algebra: algebra.clone(),
            blocks,
        })
    }

    /// Element of a commutative algebra from its point values.
    pub fn from_real_values(algebra: &Arc<BlockAlgebra>, values: &[f64]) -> Result<Self> {
        if !algebra.is_commutative() {
            bail!(Domain, "point values only describe commutative algebras");
        }
        let diags: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Self::from_diagonals(algebra, &diags)
    }

    pub fn from_flat(algebra: &Arc<BlockAlgebra>, coords: &[C64]) -> Result<Self> {
        if coords.len() != algebra.dim() {
            bail!(
                Structure,
                "expected {} coordinates, got {}",
                algebra.dim(),
                coords.len()
            );
        }
        let blocks = algebra
            .block_sizes()
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let o = algebra.offset(i);
                DMatrix::from_column_slice(k, k, &coords[o..o + k * k])
            })
            .collect();
        Ok(Self {
            algebra: algebra.clone(),
            blocks,
        })
    }

    pub fn to_flat(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.algebra.dim());
        for b in &self.blocks {
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn algebra(&self) -> &Arc<BlockAlgebra> {
        &self.algebra
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<C64> {
        &self.blocks[i]
    }

    pub fn blocks_mut(&mut self) -> &mut [DMatrix<C64>] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<DMatrix<C64>> {
        self.blocks
    }

    /// Point values of an element of a commutative algebra (real parts).
    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.algebra.is_commutative() {
            bail!(Domain, "point values only exist on commutative algebras");
        }
        Ok(self.blocks.iter().map(|b| b[(0, 0)].re).collect())
    }

    pub fn check_same_algebra(&self, other: &AlgebraElement) -> Result<()> {
        if !self.algebra.same_shape(&other.algebra) {
            bail!(
                Structure,
                "elements live in different algebras ({} vs {})",
                self.algebra,
                other.algebra
            );
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    /// Largest entrywise deviation from self-adjointness.
    pub fn self_adjoint_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let k = b.nrows();
                let mut worst = 0.0f64;
                for c in 0..k {
                    for r in c..k {
                        worst = worst.max((b[(r, c)] - b[(c, r)].conj()).norm());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint_defect() <= SELF_ADJOINT_TOL
    }

    /// `(a + a*)/2`. The result is exactly Hermitian in floating point.
    pub fn symmetrized(&self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(hermitian_part).collect(),
        }
    }

    /// Asserts self-adjointness within [`SELF_ADJOINT_TOL`] and returns the
    /// symmetrized element.
    pub fn require_self_adjoint(&self) -> Result<Self> {
        let defect = self.self_adjoint_defect();
        if defect > SELF_ADJOINT_TOL {
            bail!(Domain, "element is not self-adjoint (defect {defect:.3e})");
        }
        Ok(self.symmetrized())
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<Self> {
        self.check_same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<Self> {
        self.check_same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<Self> {
        self.check_same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    pub fn scale(&self, t: f64) -> Self {
        self.scale_complex(C64::new(t, 0.0))
    }

    pub fn scale_complex(&self, t: C64) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(|b| b * t).collect(),
        }
    }

    /// `self + t·other`, in place.
    pub fn axpy(&mut self, t: f64, other: &AlgebraElement) -> Result<()> {
        self.check_same_algebra(other)?;
        let t = C64::new(t, 0.0);
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.zip_apply(b, |x, y| *x += t * y);
        }
        Ok(())
    }

    /// `self − λ·1`.
    pub fn shift(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for i in 0..b.nrows() {
                b[(i, i)] -= C64::new(lambda, 0.0);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &AlgebraElement) -> Result<f64> {
        self.check_same_algebra(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }

    /// Real Hilbert–Schmidt pairing `Re Σᵢ Tr(xᵢ* yᵢ)`.
    pub fn hs_inner(&self, other: &AlgebraElement) -> Result<f64> {
        self.check_same_algebra(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>())
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `(self, other)` as an element of `sum`, whose blocks must be those of
    /// `self` followed by those of `other`.
    pub fn join(&self, other: &AlgebraElement, sum: &Arc<BlockAlgebra>) -> Result<Self> {
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().cloned());
        Self::new(sum.clone(), blocks)
    }

    /// Splits an element of `first ⊕ second` into its two components.
    pub fn split(&self, first: &Arc<BlockAlgebra>, second: &Arc<BlockAlgebra>) -> Result<(Self, Self)> {
        let r = first.num_blocks();
        if self.blocks.len() != r + second.num_blocks() {
            bail!(
                Structure,
                "element of {} does not split as {} + {}",
                self.algebra,
                first,
                second
            );
        }
        Ok((
            Self::new(first.clone(), self.blocks[..r].to_vec())?,
            Self::new(second.clone(), self.blocks[r..].to_vec())?,
        ))
    }

    /// Trace of each block.
    pub fn block_traces(&self) -> Vec<C64> {
        self.blocks.iter().map(|b| b.trace()).collect()
    }

    fn zip_with(&self, other: &AlgebraElement, f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }
}

pub(crate) fn hermitian_part(b: &DMatrix<C64>) -> DMatrix<C64> {
    (b + b.adjoint()) * C64::new(0.5, 0.0)
}

fn is_exactly_hermitian(b: &DMatrix<C64>) -> bool {
    let k = b.nrows();
    (0..k).all(|c| (c..k).all(|r| b[(r, c)] == b[(c, r)].conj()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(b: &DMatrix<C64>) -> Vec<f64> {
    if b.nrows() == 1 {
        return vec![b[(0, 0)].re];
    }
    let mut ev: Vec<f64> = b.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigen-decomposition `(values, vectors)` of a Hermitian matrix.
pub fn hermitian_eigen(b: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    if b.nrows() == 1 {
        return (vec![b[(0, 0)].re], DMatrix::from_element(1, 1, ONE));
    }
    let eig = SymmetricEigen::new(b.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Rebuilds `V f(Λ) V*` from an eigen-decomposition.
pub(crate) fn spectral_apply(values: &[f64], vectors: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let k = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = C64::new(f(v), 0.0);
        for i in 0..k {
            scaled[(i, j)] *= s;
        }
    }
    let out = &scaled * vectors.adjoint();
    hermitian_part(&out)
}

fn block_spectral_norm(b: &DMatrix<C64>) -> f64 {
    if b.nrows() == 1 {
        return b[(0, 0)].norm();
    }
    if is_exactly_hermitian(b) {
        return hermitian_eigenvalues(b).into_iter().map(f64::abs).fold(0.0, f64::max);
    }
    let gram = b.adjoint() * b;
    let top = hermitian_eigenvalues(&hermitian_part(&gram))
        .last()
        .copied()
        .unwrap_or(0.0);
    top.max(0.0).sqrt()
}

/// The C*-norm: largest singular value over all blocks.
pub fn op_norm(x: &AlgebraElement) -> f64 {
    x.blocks().iter().map(block_spectral_norm).fold(0.0, f64::max)
}

/// `(a∘b, {a,b}) = ((ab+ba)/2, (ab−ba)/(2i))` for self-adjoint `a`, `b`.
pub fn jordan_lie(a: &AlgebraElement, b: &AlgebraElement) -> Result<(AlgebraElement, AlgebraElement)> {
    let a = a.require_self_adjoint()?;
    let b = b.require_self_adjoint()?;
    let ab = a.mul(&b)?;
    let ba = b.mul(&a)?;
    let jordan = ab.add(&ba)?.scale(0.5);
    let lie = ab.sub(&ba)?.scale_complex(C64::new(0.0, -0.5));
    Ok((jordan.symmetrized(), lie.symmetrized()))
}

/// Smallest and largest point of the spectrum of a self-adjoint element.
pub fn spectral_range(a: &AlgebraElement) -> Result<(f64, f64)> {
    let a = a.require_self_adjoint()?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in a.blocks() {
        let ev = hermitian_eigenvalues(b);
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    Ok((lo, hi))
}

/// `inf_λ ‖a − λ1‖`, attained at the spectral midpoint.
pub fn dist_to_scalars(a: &AlgebraElement) -> Result<f64> {
    let (lo, hi) = spectral_range(a)?;
    Ok((hi - lo) / 2.0)
}

/// The minimizing `λ` of [`dist_to_scalars`].
pub fn spectral_midpoint(a: &AlgebraElement) -> Result<f64> {
    let (lo, hi) = spectral_range(a)?;
    Ok((hi + lo) / 2.0)
}

/// Trace norm `Σ |λ|` of the Hermitian part of `a`, over all blocks.
pub fn trace_norm(a: &AlgebraElement) -> f64 {
    a.blocks()
        .iter()
        .map(|b| {
            hermitian_eigenvalues(&hermitian_part(b))
                .into_iter()
                .map(f64::abs)
                .sum::<f64>()
        })
        .sum()
}

/// Hilbert–Schmidt projection of the Hermitian part of `a` onto the operator
/// norm ball of radius `r`: eigenvalues are clipped to `[−r, r]`.
pub fn clip_spectrum(a: &AlgebraElement, r: f64) -> AlgebraElement {
    let blocks = a
        .blocks()
        .iter()
        .map(|b| {
            let h = hermitian_part(b);
            let (vals, vecs) = hermitian_eigen(&h);
            if vals.iter().all(|v| v.abs() <= r) {
                h
            } else {
                spectral_apply(&vals, &vecs, |v| v.clamp(-r, r))
            }
        })
        .collect();
    AlgebraElement {
        algebra: a.algebra().clone(),
        blocks,
    }
}

/// Eigenpair of a self-adjoint element with the largest `|λ|`, as
/// `(block, λ, unit eigenvector)`.
pub fn top_eigenpair(a: &AlgebraElement) -> (usize, f64, DVector<C64>) {
    let mut best = (0, 0.0, DVector::from_element(a.block(0).nrows(), C64::new(0.0, 0.0)));
    let mut best_abs = -1.0;
    for (i, b) in a.blocks().iter().enumerate() {
        let (vals, vecs) = hermitian_eigen(&hermitian_part(b));
        for (j, &v) in vals.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = (i, v, vecs.column(j).into_owned());
            }
        }
    }
    best
}

/// Complex Gaussian element (independent real and imaginary parts).
pub fn random_element<R: Rng + ?Sized>(algebra: &Arc<BlockAlgebra>, rng: &mut R) -> AlgebraElement {
    let blocks = algebra
        .block_sizes()
        .iter()
        .map(|&k| {
            DMatrix::from_fn(k, k, |_, _| {
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
        })
        .collect();
    AlgebraElement {
        algebra: algebra.clone(),
        blocks,
    }
}

/// Gaussian self-adjoint element normalized to unit operator norm.
pub fn random_self_adjoint<R: Rng + ?Sized>(algebra: &Arc<BlockAlgebra>, rng: &mut R) -> AlgebraElement {
    loop {
        let a = random_element(algebra, rng).symmetrized();
        let n = op_norm(&a);
        if n > 1e-12 {
            return a.scale(1.0 / n);
        }
    }
}
