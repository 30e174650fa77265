//! Parametrized state families, priors and windows on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{trace_norm, CVector, DensityMatrix, HermitianOperator, MatrixJson, C64};
use crate::phase::ProbeSpectrum;

/// Parameter domain: a circle of circumference `period` or the interval `[0, length]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Periodic { period: f64 },
    Interval { length: f64 },
}

impl Domain {
    pub fn length(&self) -> f64 {
        match *self {
            Domain::Periodic { period } => period,
            Domain::Interval { length } => length,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Periodic { .. })
    }
}

/// Rectangular acceptance window `w(x) = 1` iff `|x| ≤ delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub delta: f64,
}

impl Window {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidWindow(format!("delta = {delta}")));
        }
        Ok(Self { delta })
    }
}

/// Fourier transform of the rectangular window, sin(δω)/(πω), with value δ/π at ω = 0.
pub fn window_hat(w: &Window, omega: i64) -> f64 {
    window_hat_at(w.delta, omega as f64)
}

pub(crate) fn window_hat_at(delta: f64, omega: f64) -> f64 {
    if omega == 0.0 {
        delta / std::f64::consts::PI
    } else {
        (delta * omega).sin() / (std::f64::consts::PI * omega)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Uniform,
    PointMasses,
    Tabulated,
}

/// Probability weights on the grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    kind: PriorKind,
    weights: Vec<f64>,
}

impl Prior {
    pub fn uniform(n: usize) -> Self {
        Self {
            kind: PriorKind::Uniform,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Point masses `(index, weight)`; weights must sum to 1.
    pub fn point_masses(n: usize, masses: &[(usize, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; n];
        for &(i, w) in masses {
            if i >= n {
                return Err(Error::InvalidPrior(format!("index {i} outside grid of {n}")));
            }
            weights[i] += w;
        }
        let mut p = Self::tabulated(weights)?;
        p.kind = PriorKind::PointMasses;
        Ok(p)
    }

    /// Nonnegative weights, normalized to sum to 1.
    pub fn tabulated(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPrior("weights sum to zero".into()));
        }
        Ok(Self {
            kind: PriorKind::Tabulated,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Restriction to the grid points where `mask` is true, renormalized.
    /// `None` if the prior puts no mass there.
    pub fn restricted(&self, mask: &[bool]) -> Option<Prior> {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(mask)
            .map(|(w, &m)| if m { *w } else { 0.0 })
            .collect();
        Prior::tabulated(w).ok()
    }
}

/// A one-parameter family sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct StateFamily {
    domain: Domain,
    grid: Vec<f64>,
    states: Vec<DensityMatrix>,
    lipschitz: Option<f64>,
}

impl StateFamily {
    /// Places the states on the default grid: `t_l = lΔ` on periodic domains
    /// and cell midpoints `t_l = (l+½)Δ` on intervals, with `Δ = T/N`.
    pub fn new(domain: Domain, states: Vec<DensityMatrix>) -> Result<Self> {
        let n = states.len();
        let grid = default_grid(&domain, n);
        Self::with_grid(domain, grid, states, None)
    }

    pub fn with_grid(domain: Domain, grid: Vec<f64>, states: Vec<DensityMatrix>, lipschitz: Option<f64>) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(Error::InvalidFamily("at least two grid points are required".into()));
        }
        let len = domain.length();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidFamily(format!("domain length {len}")));
        }
        if grid.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                found: grid.len(),
            });
        }
        let spacing = len / n as f64;
        for w in grid.windows(2) {
            if ((w[1] - w[0]) - spacing).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::InvalidFamily(format!(
                    "grid is not uniform with spacing T/N = {spacing}"
                )));
            }
        }
        let d = states[0].dim();
        if let Some(s) = states.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.dim(),
            });
        }
        if let Some(c) = lipschitz {
            if !(c >= 0.0) {
                return Err(Error::InvalidFamily(format!("Lipschitz constant {c}")));
            }
        }
        let fam = Self {
            domain,
            grid,
            states,
            lipschitz,
        };
        if let Some(c) = lipschitz {
            let est = estimate_lipschitz(&fam);
            if est > c * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidFamily(format!(
                    "estimated Lipschitz constant {est} exceeds supplied {c}"
                )));
            }
        }
        Ok(fam)
    }

    /// Evaluates `f` on the default grid of `n` points.
    pub fn from_fn(domain: Domain, n: usize, f: impl Fn(f64) -> Result<DensityMatrix>) -> Result<Self> {
        let grid = default_grid(&domain, n);
        let states = grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Self::with_grid(domain, grid, states, None)
    }

    pub fn with_lipschitz(mut self, c: f64) -> Result<Self> {
        let grid = std::mem::take(&mut self.grid);
        Self::with_grid(self.domain, grid, self.states, Some(c))
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn state(&self, l: usize) -> &DensityMatrix {
        &self.states[l]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn spacing(&self) -> f64 {
        self.domain.length() / self.len() as f64
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Number of grid steps between points `l` and `m`, with wraparound on periodic domains.
    pub fn grid_distance(&self, l: usize, m: usize) -> usize {
        let d = l.abs_diff(m);
        if self.domain.is_periodic() {
            d.min(self.len() - d)
        } else {
            d
        }
    }

    /// The family ρ(t)^{⊗n}; refuses dimensions above `max_dim`.
    pub fn tensor_power(&self, n: usize, max_dim: usize) -> Result<StateFamily> {
        if n == 0 {
            return Err(Error::InvalidArgument("tensor power of order 0".into()));
        }
        let total = (self.dim() as f64).powi(n as i32);
        if total > max_dim as f64 {
            return Err(Error::SizeGuard(format!(
                "dimension {}^{} exceeds {}",
                self.dim(),
                n,
                max_dim
            )));
        }
        let states = self
            .states
            .iter()
            .map(|s| {
                let mut acc = s.clone();
                for _ in 1..n {
                    acc = acc.kron(s);
                }
                acc
            })
            .collect();
        Ok(Self {
            domain: self.domain,
            grid: self.grid.clone(),
            states,
            lipschitz: self.lipschitz.map(|c| c * n as f64),
        })
    }

    pub fn to_json(&self) -> FamilyJson {
        let (kind, t) = match self.domain {
            Domain::Periodic { period } => ("periodic", period),
            Domain::Interval { length } => ("interval", length),
        };
        FamilyJson {
            domain: DomainJson {
                kind: kind.to_string(),
                t,
            },
            grid: self.grid.clone(),
            states: self.states.iter().map(|s| s.to_json()).collect(),
            lipschitz: self.lipschitz,
        }
    }

    pub fn from_json(json: &FamilyJson) -> Result<Self> {
        let domain = match json.domain.kind.as_str() {
            "periodic" => Domain::Periodic { period: json.domain.t },
            "interval" => Domain::Interval { length: json.domain.t },
            other => return Err(Error::InvalidFamily(format!("unknown domain type '{other}'"))),
        };
        let states = json
            .states
            .iter()
            .map(|m| DensityMatrix::from_matrix(m.to_matrix()?))
            .collect::<Result<Vec<_>>>()?;
        Self::with_grid(domain, json.grid.clone(), states, json.lipschitz)
    }
}

fn default_grid(domain: &Domain, n: usize) -> Vec<f64> {
    let spacing = domain.length() / n as f64;
    let offset = if domain.is_periodic() { 0.0 } else { 0.5 };
    (0..n).map(|l| (l as f64 + offset) * spacing).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainJson {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "T")]
    pub t: f64,
}

/// `{"domain":{"type":"periodic","T":..}, "grid":[..], "states":[..], "lipschitz": x}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FamilyJson {
    pub domain: DomainJson,
    pub grid: Vec<f64>,
    pub states: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

/// A window snapped to the grid: radius `k` steps, `delta_eff = kΔ`.
///
/// Points strictly inside the radius get weight 1 and the two points at
/// exactly `k` steps get weight ½, so that the discrete window integrates to
/// `2·delta_eff` like the continuous one.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWindow {
    pub k: usize,
    pub delta_eff: f64,
    /// Amount by which the requested radius was reduced.
    pub snap: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl GridWindow {
    pub fn new(fam: &StateFamily, window: &Window) -> Result<Self> {
        let spacing = fam.spacing();
        let k = (window.delta / spacing + 1e-9).floor() as usize;
        if k == 0 {
            return Err(Error::WindowTooCoarse {
                delta: window.delta,
                spacing,
            });
        }
        Self::from_radius(fam, k).map(|mut g| {
            g.snap = (window.delta - g.delta_eff).max(0.0);
            g
        })
    }

    /// A window of exactly `k` grid steps.
    pub fn from_radius(fam: &StateFamily, k: usize) -> Result<Self> {
        let n = fam.len();
        if k == 0 {
            return Err(Error::WindowTooCoarse {
                delta: 0.0,
                spacing: fam.spacing(),
            });
        }
        if fam.domain().is_periodic() && 2 * k >= n {
            return Err(Error::InvalidWindow(format!(
                "window of {k} steps covers the whole period of {n} points"
            )));
        }
        let neighbors = (0..n)
            .map(|l| {
                let mut out = Vec::with_capacity(2 * k + 1);
                for off in -(k as i64)..=(k as i64) {
                    let w = if off.unsigned_abs() as usize == k { 0.5 } else { 1.0 };
                    let m = l as i64 + off;
                    let m = if fam.domain().is_periodic() {
                        m.rem_euclid(n as i64)
                    } else if m < 0 || m >= n as i64 {
                        continue;
                    } else {
                        m
                    };
                    out.push((m as usize, w));
                }
                out
            })
            .collect();
        Ok(Self {
            k,
            delta_eff: k as f64 * fam.spacing(),
            snap: 0.0,
            neighbors,
        })
    }

    /// `(m, w_lm)` for every grid point `m` with nonzero weight.
    pub fn neighbors(&self, l: usize) -> &[(usize, f64)] {
        &self.neighbors[l]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Whether the window around `l` is not truncated by an interval boundary.
    pub fn is_interior(&self, l: usize) -> bool {
        self.neighbors[l].len() == 2 * self.k + 1
    }

    /// Grid-step separation above which no prediction accepts both points.
    pub fn min_separation_steps(&self) -> usize {
        2 * self.k + 1
    }
}

/// Window-smeared prior-weighted states `B_l = Σ_m w_lm μ_m ρ_m`.
#[derive(Clone, Debug)]
pub struct SmearedFamily {
    pub ops: Vec<HermitianOperator>,
    pub window: GridWindow,
}

pub fn smear_family(fam: &StateFamily, prior: &Prior, window: &Window) -> Result<SmearedFamily> {
    let gw = GridWindow::new(fam, window)?;
    smear_on_grid(fam, prior, gw)
}

pub fn smear_on_grid(fam: &StateFamily, prior: &Prior, gw: GridWindow) -> Result<SmearedFamily> {
    if prior.len() != fam.len() {
        return Err(Error::GridMismatch {
            expected: fam.len(),
            found: prior.len(),
        });
    }
    let mu = prior.weights();
    let ops = (0..fam.len())
        .map(|l| {
            let mut acc = HermitianOperator::zeros(fam.dim());
            for &(m, w) in gw.neighbors(l) {
                if mu[m] != 0.0 {
                    acc = &acc + &fam.state(m).scale(w * mu[m]);
                }
            }
            acc
        })
        .collect();
    Ok(SmearedFamily { ops, window: gw })
}

/// max over adjacent grid pairs of ‖ρ_{l+1} − ρ_l‖₁ / Δ (including the wrap pair on periodic domains).
pub fn estimate_lipschitz(fam: &StateFamily) -> f64 {
    let n = fam.len();
    let pairs = if fam.domain().is_periodic() { n } else { n - 1 };
    (0..pairs)
        .map(|l| trace_norm(&(fam.state((l + 1) % n).op() - fam.state(l).op())))
        .fold(0.0, f64::max)
        / fam.spacing()
}

/// Unitary orbit |ψ(t)⟩ = Σ_λ ψ_λ e^{−iλt} |λ⟩ of a probe under a diagonal Hamiltonian.
pub fn build_unitary_family(eigenvalues: &[f64], probe: &ProbeSpectrum, n_grid: usize, domain: Domain) -> Result<StateFamily> {
    let amps = probe.amps();
    if eigenvalues.len() != amps.len() {
        return Err(Error::DimensionMismatch {
            expected: amps.len(),
            found: eigenvalues.len(),
        });
    }
    if let Domain::Periodic { period } = domain {
        let scale = period / (2.0 * std::f64::consts::PI);
        for a in eigenvalues {
            for b in eigenvalues {
                let x = (a - b) * scale;
                if (x - x.round()).abs() > 1e-9 {
                    return Err(Error::PeriodMismatch(period));
                }
            }
        }
    }
    StateFamily::from_fn(domain, n_grid, |t| unitary_state(eigenvalues, probe, t))
}

/// e^{−itH}|ψ⟩ for H diagonal with the given eigenvalues and |ψ⟩ given by the probe amplitudes.
pub fn unitary_state(eigenvalues: &[f64], probe: &ProbeSpectrum, t: f64) -> Result<DensityMatrix> {
    let amps = probe.amps();
    if eigenvalues.len() != amps.len() {
        return Err(Error::DimensionMismatch {
            expected: amps.len(),
            found: eigenvalues.len(),
        });
    }
    let psi = CVector::from_iterator(
        amps.len(),
        eigenvalues.iter().zip(amps).map(|(l, a)| C64::from_polar(*a, -l * t)),
    );
    DensityMatrix::pure(&psi)
}

/// cos²(ωt/2)|+⟩⟨+| + sin²(ωt/2)|−⟩⟨−|, written in the computational basis.
pub fn dephasing_state(omega: f64, t: f64) -> DensityMatrix {
    let c = 0.5 * (omega * t).cos();
    let op = HermitianOperator::from_real_rows(&[vec![0.5, c], vec![c, 0.5]]).expect("symmetric");
    DensityMatrix::new(op).expect("valid state")
}

pub fn build_dephasing_family(omega: f64, n_grid: usize, domain: Domain) -> Result<StateFamily> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega = {omega}")));
    }
    StateFamily::from_fn(domain, n_grid, |t| Ok(dephasing_state(omega, t)))
}

/// The same state at every grid point.
pub fn constant_family(state: &DensityMatrix, n_grid: usize, domain: Domain) -> Result<StateFamily> {
    StateFamily::from_fn(domain, n_grid, |_| Ok(state.clone()))
}

/// Classical likelihoods Λ(λ|t_l) of a fixed measurement, with marginal and posterior.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    /// `table[λ][l] = Λ(λ|t_l)`.
    pub table: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
    pub marginal: Vec<f64>,
    /// `posterior[λ][l] = P(t_l|λ)`.
    pub posterior: Vec<Vec<f64>>,
}

impl LikelihoodTable {
    pub fn new(table: Vec<Vec<f64>>, prior: &Prior) -> Result<Self> {
        let n = prior.len();
        if table.is_empty() {
            return Err(Error::InvalidArgument("empty likelihood table".into()));
        }
        for row in &table {
            if row.len() != n {
                return Err(Error::GridMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| *v < -1e-12 || !v.is_finite()) {
                return Err(Error::InvalidArgument("negative likelihood".into()));
            }
        }
        for l in 0..n {
            let s: f64 = table.iter().map(|row| row[l]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "likelihoods at grid point {l} sum to {s}"
                )));
            }
        }
        let mu = prior.weights().to_vec();
        let marginal: Vec<f64> = table
            .iter()
            .map(|row| row.iter().zip(&mu).map(|(a, m)| a * m).sum())
            .collect();
        let posterior = table
            .iter()
            .zip(&marginal)
            .map(|(row, &nu)| {
                if nu > 0.0 {
                    row.iter().zip(&mu).map(|(a, m)| a * m / nu).collect()
                } else {
                    mu.clone()
                }
            })
            .collect();
        Ok(Self {
            table,
            prior: mu,
            marginal,
            posterior,
        })
    }

    /// Likelihoods Tr[ρ(t_l) M_λ] of the measurement `effects` on `fam`.
    pub fn from_measurement(fam: &StateFamily, prior: &Prior, effects: &[HermitianOperator]) -> Result<Self> {
        if prior.len() != fam.len() {
            return Err(Error::GridMismatch {
                expected: fam.len(),
                found: prior.len(),
            });
        }
        let table = effects
            .iter()
            .map(|m| {
                if m.dim() != fam.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: fam.dim(),
                        found: m.dim(),
                    });
                }
                Ok(fam.states().iter().map(|s| s.inner(m).max(0.0)).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(table, prior)
    }

    pub fn outcomes(&self) -> usize {
        self.table.len()
    }

    pub fn grid_len(&self) -> usize {
        self.prior.len()
    }
}
