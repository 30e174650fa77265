//! Covariant phase estimation: closed-form success probabilities, probe
//! families, optimal probes, tolerances and error rates.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::window_hat_at;
use crate::opcore::{CMatrix, CVector, HermitianOperator, C64, RANK_CUTOFF};
use crate::optimize::PovmGrid;

/// Amplitude moduli |ψ_λ| of a probe over the Hamiltonian eigenvalues 0..=n.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpectrum {
    amps: Vec<f64>,
}

impl ProbeSpectrum {
    /// Validates nonnegativity and unit norm (within 1e-12).
    pub fn new(amps: Vec<f64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidArgument("empty probe".into()));
        }
        if amps.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument("probe amplitudes must be nonnegative".into()));
        }
        let norm2: f64 = amps.iter().map(|a| a * a).sum();
        if (norm2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probe has squared norm {norm2}")));
        }
        Ok(Self { amps })
    }

    /// Scales nonnegative amplitudes to unit norm.
    pub fn normalized(amps: Vec<f64>) -> Result<Self> {
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("probe has zero norm".into()));
        }
        let amps: Vec<f64> = amps.into_iter().map(|a| a / norm).collect();
        let norm2: f64 = amps.iter().map(|a| a * a).sum();
        // Absorb the final rounding so the strict validation in `new` passes.
        let fix = norm2.sqrt();
        Self::new(amps.into_iter().map(|a| a / fix).collect())
    }

    /// Largest eigenvalue n.
    pub fn n(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    /// Eigenvalues 0..=n as reals.
    pub fn spectrum(&self) -> Vec<f64> {
        (0..self.amps.len()).map(|l| l as f64).collect()
    }

    pub fn to_json(&self) -> ProbeJson {
        ProbeJson {
            n: self.n(),
            amps: self.amps.clone(),
        }
    }

    pub fn from_json(json: &ProbeJson) -> Result<Self> {
        if json.amps.len() != json.n + 1 {
            return Err(Error::DimensionMismatch {
                expected: json.n + 1,
                found: json.amps.len(),
            });
        }
        Self::new(json.amps.clone())
    }
}

/// `{"n": n, "amps": [..]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbeJson {
    pub n: usize,
    pub amps: Vec<f64>,
}

/// GHZ probe: weight 1/√2 on λ = 0 and λ = n.
pub fn probe_ghz(n: usize) -> ProbeSpectrum {
    let mut amps = vec![0.0; n + 1];
    if n == 0 {
        amps[0] = 1.0;
    } else {
        amps[0] = std::f64::consts::FRAC_1_SQRT_2;
        amps[n] = std::f64::consts::FRAC_1_SQRT_2;
    }
    ProbeSpectrum { amps }
}

/// |+⟩^{⊗n} collected by Hamming weight: √C(n,λ) / 2^{n/2}.
pub fn probe_plus_tensor(n: usize) -> ProbeSpectrum {
    let ln_fact = ln_factorials(n);
    let amps = (0..=n)
        .map(|l| (0.5 * (ln_fact[n] - ln_fact[l] - ln_fact[n - l]) - 0.5 * n as f64 * std::f64::consts::LN_2).exp())
        .collect();
    ProbeSpectrum::normalized(amps).expect("binomial amplitudes are normalizable")
}

/// Holland–Burnett probe: uniform amplitudes.
pub fn probe_hb(n: usize) -> ProbeSpectrum {
    ProbeSpectrum::normalized(vec![1.0; n + 1]).expect("uniform amplitudes are normalizable")
}

/// Gaussian probe ψ_λ ∝ exp(−½·(2δ/(n+1))·(λ − n/2)²).
pub fn probe_gaussian(n: usize, delta: f64) -> Result<ProbeSpectrum> {
    if !(delta > 0.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let c = 2.0 * delta / (n as f64 + 1.0);
    let mid = n as f64 / 2.0;
    ProbeSpectrum::normalized((0..=n).map(|l| (-0.5 * c * (l as f64 - mid).powi(2)).exp()).collect())
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// The named probe families used in sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NamedProbe {
    Ghz,
    Plus,
    Hb,
    Gauss,
    Opt,
}

impl NamedProbe {
    pub const ALL: [NamedProbe; 5] = [NamedProbe::Ghz, NamedProbe::Plus, NamedProbe::Hb, NamedProbe::Gauss, NamedProbe::Opt];

    pub fn name(&self) -> &'static str {
        match self {
            NamedProbe::Ghz => "ghz",
            NamedProbe::Plus => "plus",
            NamedProbe::Hb => "hb",
            NamedProbe::Gauss => "gauss",
            NamedProbe::Opt => "opt",
        }
    }

    /// The probe with n + 1 levels; Gaussian and optimal probes depend on δ.
    pub fn build(&self, n: usize, delta: f64) -> Result<ProbeSpectrum> {
        match self {
            NamedProbe::Ghz => Ok(probe_ghz(n)),
            NamedProbe::Plus => Ok(probe_plus_tensor(n)),
            NamedProbe::Hb => Ok(probe_hb(n)),
            NamedProbe::Gauss => probe_gaussian(n, delta),
            NamedProbe::Opt => optimal_probe(n, delta).map(|(p, _)| p),
        }
    }

    /// Asymptotic rate predicted for the family, where one is known.
    pub fn theory_rate(&self, delta: f64) -> Option<f64> {
        match self {
            NamedProbe::Ghz => Some(0.0),
            NamedProbe::Plus => iid_rate_theory(delta).ok(),
            NamedProbe::Hb => None,
            NamedProbe::Gauss => Some(gaussian_rate_theory(delta)),
            NamedProbe::Opt => parallel_rate_theory(delta).ok(),
        }
    }
}

impl FromStr for NamedProbe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ghz" => Ok(NamedProbe::Ghz),
            "plus" => Ok(NamedProbe::Plus),
            "hb" => Ok(NamedProbe::Hb),
            "gauss" | "gaussian" => Ok(NamedProbe::Gauss),
            "opt" | "optimal" => Ok(NamedProbe::Opt),
            other => Err(Error::InvalidArgument(format!("unknown probe '{other}'"))),
        }
    }
}

/// Dense Toeplitz matrix W_{λλ'} = ŵ_δ(λ − λ').
#[derive(Clone, Debug, PartialEq)]
pub struct ProlateMatrix {
    pub n: usize,
    pub delta: f64,
}

impl ProlateMatrix {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        window_hat_at(self.delta, i as f64 - j as f64)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n + 1, self.n + 1, |i, j| self.entry(i, j))
    }
}

/// Slepian's tridiagonal matrix commuting with the prolate matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SlepianTridiagonal {
    pub n: usize,
    pub delta: f64,
    pub diag: Vec<f64>,
    /// Entry between λ and λ+1.
    pub offdiag: Vec<f64>,
}

impl SlepianTridiagonal {
    pub fn new(n: usize, delta: f64) -> Self {
        let nf = n as f64;
        let c = delta.cos();
        let diag = (0..=n).map(|l| (nf / 2.0 - l as f64).powi(2) * c).collect();
        let offdiag = (0..n).map(|l| (l as f64 + 1.0) * (nf - l as f64) / 2.0).collect();
        Self { n, delta, diag, offdiag }
    }

    /// Number of eigenvalues strictly below `x` (Sturm count).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let q_prev = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
            q = self.diag[i] - x - self.offdiag[i - 1].powi(2) / q_prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Largest eigenvalue by bisection on the Sturm count.
    pub fn lambda_max(&self) -> f64 {
        let m = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let r = if i > 0 { self.offdiag[i - 1] } else { 0.0 } + if i + 1 < m { self.offdiag[i] } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) == m {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Top eigenpair; the vector is normalized with a nonnegative sum.
    pub fn top_eigenpair(&self) -> (f64, Vec<f64>) {
        let m = self.diag.len();
        if m == 1 {
            return (self.diag[0], vec![1.0]);
        }
        let lam = self.lambda_max();
        let scale = self.diag.iter().chain(&self.offdiag).fold(1.0_f64, |a, v| a.max(v.abs()));
        let shift = lam + 4.0 * f64::EPSILON * scale;
        let mut v = vec![1.0 / (m as f64).sqrt(); m];
        for _ in 0..4 {
            v = solve_shifted_tridiagonal(&self.diag, &self.offdiag, shift, &v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (lam, v)
    }
}

/// Solves (T − σI) x = b for symmetric tridiagonal T by Gaussian elimination
/// with partial pivoting.
fn solve_shifted_tridiagonal(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let m = diag.len();
    // Row i holds entries at columns i, i+1, i+2 after pivoting.
    let mut a: Vec<[f64; 3]> = (0..m)
        .map(|i| [diag[i] - sigma, if i + 1 < m { off[i] } else { 0.0 }, 0.0])
        .collect();
    let mut sub: Vec<f64> = (0..m).map(|i| if i + 1 < m { off[i] } else { 0.0 }).collect();
    let mut rhs = b.to_vec();
    let tiny = f64::MIN_POSITIVE.sqrt();
    for i in 0..m.saturating_sub(1) {
        // Candidate rows: i (a[i]) and i+1 whose column-i entry is sub[i].
        if sub[i].abs() > a[i][0].abs() {
            let below = [sub[i], a[i + 1][0], a[i + 1][1]];
            let cur = a[i];
            a[i] = below;
            sub[i] = cur[0];
            a[i + 1] = [cur[1], cur[2], 0.0];
            rhs.swap(i, i + 1);
        } else {
            a[i + 1] = [a[i + 1][0], a[i + 1][1], 0.0];
        }
        let piv = if a[i][0].abs() < tiny { tiny } else { a[i][0] };
        a[i][0] = piv;
        let f = sub[i] / piv;
        a[i + 1][0] -= f * a[i][1];
        a[i + 1][1] -= f * a[i][2];
        rhs[i + 1] -= f * rhs[i];
    }
    if a[m - 1][0].abs() < tiny {
        a[m - 1][0] = tiny;
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = rhs[i];
        if i + 1 < m {
            s -= a[i][1] * x[i + 1];
        }
        if i + 2 < m {
            s -= a[i][2] * x[i + 2];
        }
        x[i] = s / a[i][0];
    }
    x
}

/// Autocorrelation c_ω = Σ_λ a_λ a_{λ+ω} of a probe, from which the
/// success probability at any δ is an O(n) sum.
#[derive(Clone, Debug)]
pub struct CovariantProfile {
    amps: Vec<f64>,
    corr: Vec<f64>,
}

impl CovariantProfile {
    pub fn new(probe: &ProbeSpectrum) -> Self {
        let a = probe.amps();
        let m = a.len();
        let corr = (0..m)
            .map(|w| neumaier_sum((0..m - w).map(|l| a[l] * a[l + w])))
            .collect();
        Self {
            amps: a.to_vec(),
            corr,
        }
    }

    /// Σ_{λλ'} a_λ a_λ' ŵ_δ(λ−λ').
    pub fn eta(&self, delta: f64) -> f64 {
        let terms = self
            .corr
            .iter()
            .enumerate()
            .map(|(w, c)| if w == 0 { c * delta / PI } else { 2.0 * c * window_hat_at(delta, w as f64) });
        neumaier_sum(terms)
    }

    /// dη/dδ = |f(δ)|²/π with f(t) = Σ a_λ e^{iλt}.
    pub fn eta_derivative(&self, delta: f64) -> f64 {
        self.f_abs2(delta) / PI
    }

    fn f_abs2(&self, t: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (l, a) in self.amps.iter().enumerate() {
            let (s, c) = (l as f64 * t).sin_cos();
            re += a * c;
            im += a * s;
        }
        re * re + im * im
    }

    /// 1 − η(δ). Small values come from (1/π)∫_δ^π |f(t)|² dt, whose integrand
    /// is nonnegative, instead of the cancelling difference 1 − η.
    pub fn error(&self, delta: f64) -> f64 {
        let direct = 1.0 - self.eta(delta);
        if direct > 1e-3 {
            return direct;
        }
        let n = self.amps.len() as f64;
        let panels = ((n * (PI - delta) / 4.0).ceil() as usize).max(4);
        let h = (PI - delta) / panels as f64;
        let (nodes, weights) = gauss_legendre_16();
        let mut acc = Neumaier::default();
        for p in 0..panels {
            let mid = delta + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(weights.iter()) {
                acc.add(w * 0.5 * h * self.f_abs2(mid + 0.5 * h * x));
            }
        }
        (acc.total() / PI).max(0.0)
    }
}

fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    const X: [f64; 8] = [
        0.095_012_509_837_637_44,
        0.281_603_550_779_258_9,
        0.458_016_777_657_227_4,
        0.617_876_244_402_643_7,
        0.755_404_408_355_003,
        0.865_631_202_387_831_8,
        0.944_575_023_073_232_6,
        0.989_400_934_991_649_9,
    ];
    const W: [f64; 8] = [
        0.189_450_610_455_068_5,
        0.182_603_415_044_923_6,
        0.169_156_519_395_002_5,
        0.149_595_988_816_576_7,
        0.124_628_971_255_533_9,
        0.095_158_511_682_492_78,
        0.062_253_523_938_647_89,
        0.027_152_459_411_754_09,
    ];
    let mut nodes = [0.0; 16];
    let mut weights = [0.0; 16];
    for i in 0..8 {
        nodes[2 * i] = -X[i];
        nodes[2 * i + 1] = X[i];
        weights[2 * i] = W[i];
        weights[2 * i + 1] = W[i];
    }
    (nodes, weights)
}

/// Compensated (Neumaier) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for x in it {
        acc.add(x);
    }
    acc.total()
}

fn check_delta_circle(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < PI) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    Ok(())
}

/// Minimax success probability of the PGM for a covariant pure-state phase
/// family: Σ_{λλ'} |ψ_λ||ψ_λ'| ŵ_δ(λ−λ').
pub fn covariant_success_probability(probe: &ProbeSpectrum, delta: f64) -> Result<f64> {
    check_delta_circle(delta)?;
    Ok(CovariantProfile::new(probe).eta(delta).clamp(0.0, 1.0))
}

/// 1 − [`covariant_success_probability`], accurate when the error is tiny.
pub fn covariant_error_probability(probe: &ProbeSpectrum, delta: f64) -> Result<f64> {
    check_delta_circle(delta)?;
    Ok(CovariantProfile::new(probe).error(delta).clamp(0.0, 1.0))
}

/// Top eigenvector of the prolate matrix, obtained from Slepian's tridiagonal
/// matrix, with its success probability.
pub fn optimal_probe(n: usize, delta: f64) -> Result<(ProbeSpectrum, f64)> {
    if !(delta > 0.0 && delta < PI / 2.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    if n == 0 {
        return Ok((ProbeSpectrum { amps: vec![1.0] }, delta / PI));
    }
    let (_, v) = SlepianTridiagonal::new(n, delta).top_eigenpair();
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| **x < -1e-8) {
        return Err(Error::PositivityViolation { index, value });
    }
    let probe = ProbeSpectrum::normalized(v.into_iter().map(|x| x.max(0.0)).collect())?;
    let eta = covariant_success_probability(&probe, delta)?;
    Ok((probe, eta))
}

/// Bessel-function approximation to the zeroth discrete prolate sequence:
/// ψ_λ ∝ I₀((δn/2)·√(1 − ((2λ+1)/(n+1) − 1)²)).
pub fn dpss_bessel_approx(n: usize, delta: f64) -> Result<ProbeSpectrum> {
    if !(delta > 0.0 && delta < PI / 2.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let c = delta * n as f64 / 2.0;
    let logs: Vec<f64> = (0..=n)
        .map(|l| {
            let u = (2.0 * l as f64 + 1.0) / (n as f64 + 1.0) - 1.0;
            ln_bessel_i0(c * (1.0 - u * u).max(0.0).sqrt())
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ProbeSpectrum::normalized(logs.into_iter().map(|x| (x - top).exp()).collect())
}

/// ln I₀(x) for x ≥ 0.
pub fn ln_bessel_i0(x: f64) -> f64 {
    if x < 30.0 {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        // Asymptotic expansion e^x/√(2πx) Σ ((2k−1)!!)² / (k! (8x)^k).
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            sum += term;
        }
        x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
    }
}

/// Smallest δ with covariant_success_probability(probe, δ) ≥ eta_target.
pub fn covariant_tolerance(probe: &ProbeSpectrum, eta_target: f64) -> Result<f64> {
    if !(eta_target > 0.0 && eta_target < 1.0) {
        return Err(Error::InvalidArgument(format!("eta_target = {eta_target}")));
    }
    let prof = CovariantProfile::new(probe);
    let top = prof.eta(PI);
    if top < eta_target {
        return Err(Error::Unreachable {
            target: eta_target,
            best: top,
        });
    }
    let (mut lo, mut hi) = (0.0, PI);
    let (mut eta_lo, mut eta_hi) = (0.0, top);
    let mut monotone = true;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let e = prof.eta(mid);
        if e < eta_lo - 1e-13 || e > eta_hi + 1e-13 {
            monotone = false;
            break;
        }
        if e >= eta_target {
            hi = mid;
            eta_hi = e;
        } else {
            lo = mid;
            eta_lo = e;
        }
    }
    if monotone {
        return Ok(hi);
    }
    // Fallback: first crossing on a dense scan, refined inside its cell.
    let steps = 100_000;
    let mut prev = 0.0;
    for i in 1..=steps {
        let d = PI * i as f64 / steps as f64;
        if prof.eta(d) >= eta_target {
            let (mut a, mut b) = (prev, d);
            while b - a > 1e-12 {
                let m = 0.5 * (a + b);
                if prof.eta(m) >= eta_target {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Ok(b);
        }
        prev = d;
    }
    Err(Error::Unreachable {
        target: eta_target,
        best: top,
    })
}

/// Tolerance of a named probe at `eta_target`, with the window the probe was
/// designed for. Window-dependent probes are rebuilt at the current tolerance
/// estimate a few times and the smallest tolerance found is kept.
pub fn named_probe_tolerance(probe: NamedProbe, n: usize, eta_target: f64) -> Result<(f64, f64)> {
    match probe {
        NamedProbe::Ghz | NamedProbe::Plus | NamedProbe::Hb => {
            let tol = covariant_tolerance(&probe.build(n, 1.0)?, eta_target)?;
            Ok((tol, tol))
        }
        NamedProbe::Gauss | NamedProbe::Opt => {
            let mut design = (PI / (n as f64 + 1.0)).min(1.0);
            let mut best = (f64::INFINITY, design);
            for _ in 0..6 {
                let tol = covariant_tolerance(&probe.build(n, design)?, eta_target)?;
                if tol < best.0 {
                    best = (tol, design);
                }
                design = tol.min(1.5);
            }
            Ok(best)
        }
    }
}

/// Optimal parallel error rate log((1 + sin(δ/2)) / (1 − sin(δ/2))).
pub fn parallel_rate_theory(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < PI / 2.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let s = (delta / 2.0).sin();
    Ok(((1.0 + s) / (1.0 - s)).ln())
}

/// Upper bound −log cos²δ on the i.i.d. error rate.
pub fn iid_rate_theory(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < PI / 2.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    Ok(-(delta.cos().powi(2)).ln())
}

/// Error rate δ/2 of the Gaussian probe.
pub fn gaussian_rate_theory(delta: f64) -> f64 {
    delta / 2.0
}

/// Minimax tolerance α/(n+1) of the Gaussian probe with α = 2 log(2/(π(1−η̄))).
pub fn gaussian_tolerance_asymptote(eta_bar: f64, n: usize) -> Result<f64> {
    if !(eta_bar > 0.0 && eta_bar < 1.0) {
        return Err(Error::InvalidArgument(format!("eta_bar = {eta_bar}")));
    }
    Ok(2.0 * (2.0 / (PI * (1.0 - eta_bar))).ln() / (n as f64 + 1.0))
}

/// Fitted versus predicted decay rate of 1 − η with the probe size.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateReport {
    pub probe_name: String,
    pub delta: f64,
    pub n_list: Vec<usize>,
    pub eta_list: Vec<f64>,
    pub one_minus_eta: Vec<f64>,
    /// Points actually used in the fit.
    pub fit_n: Vec<usize>,
    pub fitted_rate: f64,
    pub theory_rate: Option<f64>,
}

impl RateReport {
    /// |fitted − theory| / theory.
    pub fn relative_deviation(&self) -> Option<f64> {
        self.theory_rate
            .filter(|t| *t != 0.0)
            .map(|t| (self.fitted_rate - t).abs() / t.abs())
    }
}

/// Default floor below which 1 − η is treated as saturated.
pub const RATE_FLOOR: f64 = 1e-12;

/// Least-squares slope of −log(1 − η(n)) against n over the last half of the
/// points whose error stays above `floor`.
pub fn empirical_rate(
    probe_name: &str,
    probe_family: &dyn Fn(usize) -> Result<ProbeSpectrum>,
    delta: f64,
    n_list: &[usize],
    theory_rate: Option<f64>,
    floor: f64,
) -> Result<RateReport> {
    if n_list.len() < 3 {
        return Err(Error::InvalidArgument("at least three values of n are required".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be strictly increasing".into()));
    }
    check_delta_circle(delta)?;
    let errs = n_list
        .iter()
        .map(|&n| Ok(CovariantProfile::new(&probe_family(n)?).error(delta)))
        .collect::<Result<Vec<f64>>>()?;
    let kept: Vec<(usize, f64)> = n_list
        .iter()
        .zip(&errs)
        .filter(|(_, e)| **e >= floor)
        .map(|(n, e)| (*n, *e))
        .collect();
    if kept.len() < 3 {
        return Err(Error::Saturated);
    }
    let tail = &kept[kept.len() / 2..];
    let tail = if tail.len() < 2 { &kept[kept.len() - 2..] } else { tail };
    let xs: Vec<f64> = tail.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, e)| -e.ln()).collect();
    Ok(RateReport {
        probe_name: probe_name.to_string(),
        delta,
        n_list: n_list.to_vec(),
        eta_list: errs.iter().map(|e| 1.0 - e).collect(),
        one_minus_eta: errs,
        fit_n: tail.iter().map(|(n, _)| *n).collect(),
        fitted_rate: least_squares_slope(&xs, &ys),
        theory_rate,
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Pretty good measurement of the orbit e^{−itH}|ψ⟩ on the grid t_l = 2πl/N:
/// Q_l = (1/N)|χ_l⟩⟨χ_l| with χ_l(λ) = e^{−iλt_l} on the support of the
/// probe, completed by (1/N) times the projector onto the complement.
pub fn pgm_grid_povm(probe: &ProbeSpectrum, n_grid: usize) -> Result<PovmGrid> {
    let d = probe.amps().len();
    if n_grid < d {
        return Err(Error::InvalidArgument(format!(
            "grid of {n_grid} points cannot resolve {d} levels"
        )));
    }
    let amax2 = probe.amps().iter().fold(0.0_f64, |m, a| m.max(a * a));
    let support: Vec<bool> = probe.amps().iter().map(|a| a * a > RANK_CUTOFF * amax2).collect();
    let inv = 1.0 / n_grid as f64;
    let grid: Vec<f64> = (0..n_grid).map(|l| 2.0 * PI * l as f64 / n_grid as f64).collect();
    let effects = grid
        .iter()
        .map(|&t| {
            let chi = CVector::from_iterator(
                d,
                (0..d).map(|l| if support[l] { C64::from_polar(1.0, -(l as f64) * t) } else { C64::new(0.0, 0.0) }),
            );
            let mut m: CMatrix = &chi * chi.adjoint();
            for l in 0..d {
                if !support[l] {
                    m[(l, l)] = C64::new(1.0, 0.0);
                }
            }
            HermitianOperator::hermitize(m).scale(inv)
        })
        .collect();
    PovmGrid::new(effects)
}
