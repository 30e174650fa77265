//! Dense complex Hermitian linear algebra and the distances and divergences
//! used by the rest of the crate.

use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Absolute per-entry tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on the trace and smallest eigenvalue of a density matrix.
pub const DENSITY_TOL: f64 = 1e-10;
/// Relative rank cutoff used for pseudo-inverses and support projectors.
pub const RANK_CUTOFF: f64 = 1e-10;

/// A dense Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    /// Validates that `mat` is square and Hermitian within [`HERMITIAN_TOL`].
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare(mat.nrows(), mat.ncols()));
        }
        if mat.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let dev = hermiticity_deviation(&mat);
        if dev > HERMITIAN_TOL {
            return Err(Error::NonHermitian(dev));
        }
        Ok(Self::hermitize(mat))
    }

    /// Replaces `mat` by `(mat + mat†)/2`. Used on results of arithmetic whose
    /// rounding breaks exact symmetry.
    pub fn hermitize(mat: CMatrix) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "hermitize needs a square matrix");
        let adj = mat.adjoint();
        Self {
            mat: (mat + adj) * C64::new(0.5, 0.0),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut mat = CMatrix::zeros(d, d);
        for (i, v) in values.iter().enumerate() {
            mat[(i, i)] = C64::new(*v, 0.0);
        }
        Self { mat }
    }

    /// Builds a Hermitian matrix from a real symmetric one given row by row.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let mut mat = CMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::NotSquare(d, row.len()));
            }
            for (j, v) in row.iter().enumerate() {
                mat[(i, j)] = C64::new(*v, 0.0);
            }
        }
        Self::new(mat)
    }

    /// The rank-one operator |v⟩⟨v|.
    pub fn outer(v: &CVector) -> Self {
        Self::hermitize(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    /// Re Tr[A B], the Hilbert–Schmidt inner product of two Hermitian matrices.
    pub fn inner(&self, other: &HermitianOperator) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let a = self.mat[(i, j)];
                let b = other.mat[(j, i)];
                acc += a.re * b.re - a.im * b.im;
            }
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            mat: &self.mat * C64::new(c, 0.0),
        }
    }

    /// A† M A for an arbitrary square `a`.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::hermitize(a.adjoint() * &self.mat * a)
    }

    /// A M A for a Hermitian `a`.
    pub fn sandwich(&self, a: &HermitianOperator) -> Self {
        Self::hermitize(&a.mat * &self.mat * &a.mat)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &HermitianOperator) -> Self {
        Self {
            mat: self.mat.kronecker(&other.mat),
        }
    }

    pub fn eigh(&self) -> EigenDecomposition {
        eigh(self)
    }

    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        *eigh(self).values.last().expect("dim >= 1")
    }

    /// Smallest eigenvalue.
    pub fn lambda_min(&self) -> f64 {
        eigh(self).values[0]
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(&self.mat)
    }

    pub fn from_json(json: &MatrixJson) -> Result<Self> {
        Self::new(json.to_matrix()?)
    }
}

fn hermiticity_deviation(mat: &CMatrix) -> f64 {
    let d = mat.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            dev = dev.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
        }
    }
    dev
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

/// A Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(HermitianOperator);

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > DENSITY_TOL {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let lmin = op.lambda_min();
        if lmin < -DENSITY_TOL {
            return Err(Error::NotDensity(format!("smallest eigenvalue {lmin:.3e}")));
        }
        Ok(Self(op))
    }

    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(mat)?)
    }

    /// The pure state |ψ⟩⟨ψ|; `psi` is normalized first.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotDensity("zero state vector".into()));
        }
        Ok(Self(HermitianOperator::outer(&(psi / C64::new(norm, 0.0)))))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(HermitianOperator::identity(dim).scale(1.0 / dim as f64))
    }

    /// Convex combination Σ p_i ρ_i. Weights must be nonnegative and sum to 1.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::InvalidArgument("mixture weights and states differ in length".into()));
        }
        let d = states[0].dim();
        let mut acc = HermitianOperator::zeros(d);
        for (w, s) in weights.iter().zip(states) {
            check_dims(d, s.dim())?;
            acc = &acc + &s.scale(*w);
        }
        Self::new(acc)
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn into_op(self) -> HermitianOperator {
        self.0
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(self.0.kron(&other.0))
    }
}

impl Deref for DensityMatrix {
    type Target = HermitianOperator;
    fn deref(&self) -> &HermitianOperator {
        &self.0
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    /// V f(Λ) V†.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let fj = C64::new(f(self.values[j]), 0.0);
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        HermitianOperator::hermitize(scaled * self.vectors.adjoint())
    }

    pub fn vector(&self, j: usize) -> CVector {
        self.vectors.column(j).into_owned()
    }

    /// Eigenvalues with magnitude below the relative rank cutoff are treated as zero.
    pub fn cutoff(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        RANK_CUTOFF * scale
    }
}

pub fn eigh(a: &HermitianOperator) -> EigenDecomposition {
    let d = a.dim();
    if d == 1 {
        return EigenDecomposition {
            values: vec![a.mat[(0, 0)].re],
            vectors: CMatrix::identity(1, 1),
        };
    }
    let eig = SymmetricEigen::new(a.mat.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    EigenDecomposition { values, vectors }
}

/// Eigendecomposition of a raw matrix after validating Hermiticity.
pub fn eigh_matrix(mat: &CMatrix) -> Result<EigenDecomposition> {
    Ok(eigh(&HermitianOperator::new(mat.clone())?))
}

/// V f(Λ) V†, failing if `f` is not finite at some eigenvalue.
pub fn matrix_function(a: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let eig = eigh(a);
    for &v in &eig.values {
        if !f(v).is_finite() {
            return Err(Error::DomainError(v));
        }
    }
    Ok(eig.reconstruct_with(f))
}

/// Applies `f` on the support of `a` only: eigenvalues with magnitude at most
/// `1e-10·max|λ|` are mapped to zero.
pub fn support_function(a: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let eig = eigh(a);
    let cut = eig.cutoff();
    for &v in &eig.values {
        if v.abs() > cut && !f(v).is_finite() {
            return Err(Error::DomainError(v));
        }
    }
    Ok(eig.reconstruct_with(|v| if v.abs() > cut { f(v) } else { 0.0 }))
}

pub fn pseudo_inverse(a: &HermitianOperator) -> HermitianOperator {
    support_function(a, |v| 1.0 / v).expect("reciprocal is finite on the support")
}

/// A^s for PSD `a`, with A^0 the support projector and negative powers taken
/// on the support.
pub fn psd_power(a: &HermitianOperator, s: f64) -> HermitianOperator {
    let eig = eigh(a);
    let cut = eig.cutoff();
    eig.reconstruct_with(|v| if v > cut { v.powf(s) } else { 0.0 })
}

/// Square root of the positive part of `a`.
pub fn sqrt_psd(a: &HermitianOperator) -> HermitianOperator {
    eigh(a).reconstruct_with(|v| v.max(0.0).sqrt())
}

/// Projector onto the span of eigenvectors with eigenvalue above the rank cutoff.
pub fn support_projector(a: &HermitianOperator) -> HermitianOperator {
    psd_power(a, 0.0)
}

/// Σ |λ_i|.
pub fn trace_norm(a: &HermitianOperator) -> f64 {
    eigh(a).values.iter().map(|v| v.abs()).sum()
}

/// Positive part Σ max(λ_i, 0).
pub fn positive_part_trace(a: &HermitianOperator) -> f64 {
    eigh(a).values.iter().map(|v| v.max(0.0)).sum()
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Root fidelity Tr[(σ^{1/2} ρ σ^{1/2})^{1/2}], computed as the nuclear norm of √ρ√σ.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho.dim(), sigma.dim())?;
    // Rounding-level eigenvalues would otherwise contribute their square roots.
    let root = |m: &DensityMatrix| {
        let e = eigh(m);
        let floor = 1e-14 * e.values.last().copied().unwrap_or(0.0).max(0.0);
        e.reconstruct_with(|v| if v > floor { v.sqrt() } else { 0.0 }).into_matrix()
    };
    let prod = root(rho) * root(sigma);
    let f: f64 = prod.singular_values().iter().sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Spectral data for evaluating Tr[ρ^s σ^{1−s}] at many values of s.
struct ChernoffKernel {
    a: Vec<f64>,
    b: Vec<f64>,
    overlap: Vec<Vec<f64>>,
}

impl ChernoffKernel {
    fn new(rho: &HermitianOperator, sigma: &HermitianOperator) -> Self {
        let er = eigh(rho);
        let es = eigh(sigma);
        let (cr, cs) = (er.cutoff(), es.cutoff());
        let a: Vec<f64> = er.values.iter().map(|&v| if v > cr { v } else { 0.0 }).collect();
        let b: Vec<f64> = es.values.iter().map(|&v| if v > cs { v } else { 0.0 }).collect();
        let ov = er.vectors.adjoint() * &es.vectors;
        let d = a.len();
        let overlap = (0..d).map(|i| (0..d).map(|j| ov[(i, j)].norm_sqr()).collect()).collect();
        Self { a, b, overlap }
    }

    fn q(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &ai) in self.a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let pa = ai.powf(s);
            for (j, &bj) in self.b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                acc += pa * bj.powf(1.0 - s) * self.overlap[i][j];
            }
        }
        acc
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of `f` on [lo, hi] down to bracket width `tol`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// C(ρ,σ) = −min_{0≤s≤1} log Tr[ρ^s σ^{1−s}]. Returns +∞ for orthogonal supports.
pub fn chernoff_divergence(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho.dim(), sigma.dim())?;
    let k = ChernoffKernel::new(rho, sigma);
    let (_, mut qmin) = golden_section_min(|s| k.q(s), 0.0, 1.0, 1e-8);
    qmin = qmin.min(k.q(0.0)).min(k.q(1.0));
    // The objective is log-convex; a coarse scan below the golden-section value
    // means the bracket was lost, in which case scan densely.
    let coarse = (0..=10).map(|i| k.q(i as f64 / 10.0)).fold(f64::INFINITY, f64::min);
    if coarse < qmin - 1e-14 {
        for i in 0..=1000 {
            qmin = qmin.min(k.q(i as f64 / 1000.0));
        }
    }
    if qmin <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-qmin.ln()).max(0.0))
}

/// Sandwiched Rényi divergence
/// (α−1)^{-1} log Tr[(σ^{(1−α)/2α} ρ σ^{(1−α)/2α})^α].
///
/// For α > 1 a support violation is reported as [`Error::SupportViolation`].
/// For α < 1 orthogonal supports give `+∞`.
pub fn sandwiched_renyi(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_dims(rho.dim(), sigma.dim())?;
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
    }
    let e = (1.0 - alpha) / (2.0 * alpha);
    if alpha > 1.0 {
        let proj = support_projector(sigma);
        let outside = rho.trace() - rho.inner(&proj);
        if outside > 1e-9 {
            return Err(Error::SupportViolation);
        }
    }
    let se = psd_power(sigma, e);
    let m = rho.sandwich(&se);
    let eig = eigh(&m);
    let cut = eig.cutoff();
    let tr: f64 = eig.values.iter().filter(|&&v| v > cut).map(|v| v.powf(alpha)).sum();
    if tr <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(tr.ln() / (alpha - 1.0))
}

/// −½ log F(ρ, σ), the order-½ divergence that enters the two-point fidelity bounds.
pub fn log_fidelity_divergence(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    if f <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-0.5 * f.ln()).max(0.0))
}

/// Quantum Fisher information 4·Var(H) of a pure state with the given
/// eigenvalues and amplitude moduli.
pub fn qfi_pure(spectrum: &[f64], amps: &[f64]) -> Result<f64> {
    check_dims(spectrum.len(), amps.len())?;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (l, a) in spectrum.iter().zip(amps) {
        let p = a * a;
        m1 += p * l;
        m2 += p * l * l;
    }
    Ok((4.0 * (m2 - m1 * m1)).max(0.0))
}

/// Tr_2 of an operator on C^{d1} ⊗ C^{d2}.
pub fn partial_trace_second(a: &HermitianOperator, d1: usize, d2: usize) -> Result<HermitianOperator> {
    check_dims(d1 * d2, a.dim())?;
    let mut out = CMatrix::zeros(d1, d1);
    for i in 0..d1 {
        for j in 0..d1 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d2 {
                acc += a.mat[(i * d2 + k, j * d2 + k)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(HermitianOperator::hermitize(out))
}

/// `{"dim": d, "re": [[..]], "im": [[..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(mat: &CMatrix) -> Self {
        let d = mat.nrows();
        let re = (0..d).map(|i| (0..d).map(|j| mat[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| mat[(i, j)].im).collect()).collect();
        Self { dim: d, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.dim;
        if self.re.len() != d || self.im.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.re.len().max(self.im.len()),
            });
        }
        let mut mat = CMatrix::zeros(d, d);
        for i in 0..d {
            if self.re[i].len() != d || self.im[i].len() != d {
                return Err(Error::NotSquare(d, self.re[i].len()));
            }
            for j in 0..d {
                mat[(i, j)] = C64::new(self.re[i][j], self.im[i][j]);
            }
        }
        Ok(mat)
    }
}
