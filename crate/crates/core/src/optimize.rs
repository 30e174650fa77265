//! Optimal Bayesian and minimax success probabilities on discretized
//! families, with POVM recovery, post-processing of fixed measurements and
//! tolerance and sample-complexity searches.

use std::f64::consts::SQRT_2;

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{smear_on_grid, GridWindow, LikelihoodTable, Prior, StateFamily, Window};
use crate::opcore::{eigh, CMatrix, HermitianOperator, MatrixJson, C64};
use crate::phase::{covariant_success_probability, ProbeSpectrum};

/// Effects Q_l indexed by grid predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmGrid {
    effects: Vec<HermitianOperator>,
}

impl PovmGrid {
    /// Checks positivity (within 1e-8) and completeness (within 1e-7 in operator norm).
    pub fn new(effects: Vec<HermitianOperator>) -> Result<Self> {
        let povm = Self { effects };
        povm.validate(1e-8, 1e-7)?;
        Ok(povm)
    }

    fn validate(&self, psd_tol: f64, sum_tol: f64) -> Result<()> {
        if self.effects.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        let d = self.effects[0].dim();
        for (l, q) in self.effects.iter().enumerate() {
            if q.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: q.dim(),
                });
            }
            let lmin = q.lambda_min();
            if lmin < -psd_tol {
                return Err(Error::InvalidPovm(format!("effect {l} has eigenvalue {lmin:.3e}")));
            }
        }
        let err = self.completeness_error();
        if err > sum_tol {
            return Err(Error::InvalidPovm(format!("effects sum to identity only within {err:.3e}")));
        }
        Ok(())
    }

    /// The trivial measurement Q_l = I/N.
    pub fn flat(n: usize, dim: usize) -> Self {
        Self {
            effects: vec![HermitianOperator::identity(dim).scale(1.0 / n as f64); n],
        }
    }

    pub fn effects(&self) -> &[HermitianOperator] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    /// ‖Σ_l Q_l − I‖ in operator norm.
    pub fn completeness_error(&self) -> f64 {
        let d = self.dim();
        let mut acc = HermitianOperator::identity(d).scale(-1.0);
        for q in &self.effects {
            acc = &acc + q;
        }
        eigh(&acc).values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Post-hoc operator-norm Lipschitz estimate of the effect density Q_l/Δ:
    /// max_l ‖Q_{l+1} − Q_l‖_∞ / Δ².
    pub fn lipschitz(&self, spacing: f64, periodic: bool) -> f64 {
        let n = self.len();
        let pairs = if periodic { n } else { n - 1 };
        (0..pairs)
            .map(|l| {
                let diff = &self.effects[(l + 1) % n] - &self.effects[l];
                eigh(&diff).values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
            })
            .fold(0.0, f64::max)
            / (spacing * spacing)
    }

    pub fn to_json(&self) -> PovmJson {
        PovmJson {
            effects: self.effects.iter().map(|q| q.to_json()).collect(),
        }
    }

    pub fn from_json(json: &PovmJson) -> Result<Self> {
        Self::new(
            json.effects
                .iter()
                .map(HermitianOperator::from_json)
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// `{"effects": [matrix-json, ..]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PovmJson {
    pub effects: Vec<MatrixJson>,
}

/// Barrier and mirror-descent parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub t0: f64,
    pub t_factor: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            t0: 1.0,
            t_factor: 4.0,
            max_newton: 50,
            max_outer: 500,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Upper limit on d²·N for the dense solver.
pub const SIZE_GUARD: f64 = 5e6;

/// Solution of max Σ_l Tr[B_l Q_l] over POVMs, paired with its dual
/// min Tr X subject to X ⪰ B_l.
#[derive(Clone, Debug)]
pub struct LubSolution {
    pub x: HermitianOperator,
    pub effects: Vec<HermitianOperator>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
}

struct BarrierPoint {
    chol: Vec<Cholesky<C64, nalgebra::Dyn>>,
}

fn factor_slacks(x: &CMatrix, bs: &[HermitianOperator]) -> Option<BarrierPoint> {
    let mut chol = Vec::with_capacity(bs.len());
    for b in bs {
        chol.push(Cholesky::new(x - b.matrix())?);
    }
    Some(BarrierPoint { chol })
}

fn log_det(ch: &Cholesky<C64, nalgebra::Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
}

fn vec_of(m: &CMatrix) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

/// Log-det barrier path following for the least upper bound of `bs`.
pub fn least_upper_bound(bs: &[HermitianOperator], cfg: &SolverConfig) -> Result<LubSolution> {
    if bs.is_empty() {
        return Err(Error::InvalidArgument("no operators".into()));
    }
    let d = bs[0].dim();
    let n = bs.len();
    if bs.iter().any(|b| b.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bs.iter().map(|b| b.dim()).find(|&x| x != d).unwrap_or(d),
        });
    }
    if (d * d) as f64 * n as f64 > SIZE_GUARD {
        return Err(Error::SizeGuard(format!("d²·N = {} exceeds {}", d * d * n, SIZE_GUARD)));
    }
    let lmax = bs.iter().map(|b| b.lambda_max()).fold(f64::NEG_INFINITY, f64::max);
    if lmax <= 1e-300 && bs.iter().all(|b| b.max_abs_entry() <= 1e-300) {
        return Ok(LubSolution {
            x: HermitianOperator::zeros(d),
            effects: vec![HermitianOperator::identity(d).scale(1.0 / n as f64); n],
            primal: 0.0,
            dual: 0.0,
            iterations: 0,
        });
    }
    let mut x: CMatrix = CMatrix::identity(d, d) * C64::new(1.0 + lmax.max(0.0), 0.0);
    let mut iterations = 0;
    let eye = CMatrix::identity(d, d);
    let d2 = d * d;
    let mut point = factor_slacks(&x, bs).ok_or_else(|| Error::SolverDiverged("initial point infeasible".into()))?;
    // Start near the central path: t matched to the mean barrier gradient at X0.
    let inv_trace: f64 = point.chol.iter().map(|c| c.inverse().trace().re).sum();
    let mut t = cfg.t0 * inv_trace / d as f64;
    let mut stages = 0;
    loop {
        let mut centered = false;
        let mut prev_dec = f64::INFINITY;
        for _ in 0..cfg.max_newton {
            let inv: Vec<CMatrix> = point.chol.iter().map(|c| c.inverse()).collect();
            let mut grad = &eye * C64::new(t, 0.0);
            let mut hess = CMatrix::zeros(d2, d2);
            for si in &inv {
                grad -= si;
                hess += si.transpose().kronecker(si);
            }
            let rhs = -vec_of(&grad);
            let sol = match Cholesky::new(hess.clone()) {
                Some(ch) => ch.solve(&rhs),
                None => hess
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::SolverDiverged("singular Newton system".into()))?,
            };
            let v_raw = CMatrix::from_column_slice(d, d, sol.as_slice());
            let v = (&v_raw + v_raw.adjoint()) * C64::new(0.5, 0.0);
            let dec = -(grad.component_mul(&v.transpose())).iter().map(|z| z.re).sum::<f64>();
            if !dec.is_finite() {
                return Err(Error::SolverDiverged("non-finite Newton decrement".into()));
            }
            // A small decrement that has stopped shrinking is at the rounding floor.
            if dec / 2.0 <= 1e-10 || (dec < 1e-6 && dec > 0.9 * prev_dec) {
                centered = true;
                break;
            }
            prev_dec = dec;
            let tr_v: f64 = v.diagonal().iter().map(|z| z.re).sum();
            let ld0: Vec<f64> = point.chol.iter().map(log_det).collect();
            // Damped Newton phase keeps iterates away from the cone boundary.
            let lambda = dec.sqrt();
            let mut alpha = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };
            let mut accepted = None;
            while alpha > 1e-12 {
                let trial = &x + &v * C64::new(alpha, 0.0);
                if let Some(p) = factor_slacks(&trial, bs) {
                    let dlog: f64 = p.chol.iter().zip(&ld0).map(|(c, l0)| log_det(c) - l0).sum();
                    let df = t * alpha * tr_v - dlog;
                    if df <= -0.1 * alpha * dec {
                        accepted = Some((trial, p));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((trial, p)) => {
                    x = trial;
                    point = p;
                }
                None => {
                    // No descent possible at working precision: treat as centered
                    // if the decrement is already small.
                    if dec < 1e-3 {
                        centered = true;
                        break;
                    }
                    return Err(Error::SolverDiverged(format!("line search failed (decrement {dec:.3e})")));
                }
            }
        }
        if !centered {
            return Err(Error::SolverDiverged(format!(
                "centering did not converge within {} Newton steps at t = {t:.3e}",
                cfg.max_newton
            )));
        }
        stages += 1;
        if (n * d) as f64 / t <= cfg.tol || stages > MAX_STAGES {
            let (effects, primal) = recover_primal(&point, bs, t)?;
            let dual: f64 = x.diagonal().iter().map(|z| z.re).sum();
            // Inexact centering can leave the measured gap above the path estimate.
            if dual - primal <= cfg.tol || stages > MAX_STAGES {
                return Ok(LubSolution {
                    x: HermitianOperator::hermitize(x),
                    effects,
                    primal,
                    dual,
                    iterations,
                });
            }
        }
        t *= cfg.t_factor;
    }
}

const MAX_STAGES: usize = 60;

/// Q_l = (X − B_l)^{-1}/t, renormalized to a POVM, and its objective value.
fn recover_primal(point: &BarrierPoint, bs: &[HermitianOperator], t: f64) -> Result<(Vec<HermitianOperator>, f64)> {
    let raw: Vec<HermitianOperator> = point
        .chol
        .iter()
        .map(|c| HermitianOperator::hermitize(c.inverse() * C64::new(1.0 / t, 0.0)))
        .collect();
    let effects = normalize_povm(&raw)?;
    let primal: f64 = effects.iter().zip(bs).map(|(q, b)| q.inner(b)).sum();
    Ok((effects, primal))
}

/// S^{-1/2} Q_l S^{-1/2} with S = Σ Q_l.
pub fn normalize_povm(raw: &[HermitianOperator]) -> Result<Vec<HermitianOperator>> {
    let d = raw[0].dim();
    let mut s = HermitianOperator::zeros(d);
    for q in raw {
        s = &s + q;
    }
    let eig = eigh(&s);
    if eig.values[0] <= 0.0 {
        return Err(Error::SolverDiverged("recovered effects are not complete".into()));
    }
    let s_inv_half = eig.reconstruct_with(|v| 1.0 / v.sqrt());
    Ok(raw
        .iter()
        .map(|q| {
            let e = q.sandwich(&s_inv_half);
            // Clip rounding-level negative eigenvalues.
            let ee = eigh(&e);
            if ee.values[0] < 0.0 {
                ee.reconstruct_with(|v| v.max(0.0))
            } else {
                e
            }
        })
        .collect())
}

/// Optimal Bayesian solution.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// Dual objective Tr X, an upper bound on the optimum within `duality_gap`.
    pub eta_star: f64,
    /// Success probability achieved by `povm`.
    pub primal_value: f64,
    pub povm: PovmGrid,
    pub dual_x: HermitianOperator,
    pub duality_gap: f64,
    pub iterations: usize,
    pub window: GridWindow,
}

/// Optimal minimax solution with its certificates.
#[derive(Clone, Debug)]
pub struct MinimaxSolution {
    /// Worst-case success probability guaranteed by `povm`.
    pub eta_bar_star: f64,
    /// Smallest Bayesian optimum seen, an upper bound on the minimax value.
    pub upper: f64,
    pub povm: PovmGrid,
    /// Least-favorable prior estimate.
    pub prior: Prior,
    pub gap: f64,
    pub iterations: usize,
    pub window: GridWindow,
}

fn check_povm(fam: &StateFamily, povm: &PovmGrid) -> Result<()> {
    if povm.len() != fam.len() {
        return Err(Error::GridMismatch {
            expected: fam.len(),
            found: povm.len(),
        });
    }
    if povm.dim() != fam.dim() {
        return Err(Error::DimensionMismatch {
            expected: fam.dim(),
            found: povm.dim(),
        });
    }
    Ok(())
}

/// Acceptance probability Σ_m w_lm Tr[ρ_l Q_m] for each true grid point l.
pub fn per_t_acceptance(fam: &StateFamily, gw: &GridWindow, povm: &PovmGrid) -> Result<Vec<f64>> {
    check_povm(fam, povm)?;
    Ok((0..fam.len())
        .map(|l| {
            gw.neighbors(l)
                .iter()
                .map(|&(m, w)| w * fam.state(l).inner(&povm.effects()[m]))
                .sum()
        })
        .collect())
}

/// η = Σ_l μ_l Σ_m w_lm Tr[ρ_l Q_m].
pub fn success_probability(fam: &StateFamily, prior: &Prior, window: &Window, povm: &PovmGrid) -> Result<f64> {
    if prior.len() != fam.len() {
        return Err(Error::GridMismatch {
            expected: fam.len(),
            found: prior.len(),
        });
    }
    let gw = GridWindow::new(fam, window)?;
    let acc = per_t_acceptance(fam, &gw, povm)?;
    Ok(acc.iter().zip(prior.weights()).map(|(a, m)| a * m).sum())
}

/// Worst-case acceptance over the grid, and over points whose window is not
/// truncated by a boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimaxReport {
    pub global_min: f64,
    pub interior_min: f64,
}

pub fn minimax_report(fam: &StateFamily, window: &Window, povm: &PovmGrid) -> Result<MinimaxReport> {
    let gw = GridWindow::new(fam, window)?;
    let acc = per_t_acceptance(fam, &gw, povm)?;
    let global_min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let interior_min = acc
        .iter()
        .enumerate()
        .filter(|(l, _)| gw.is_interior(*l))
        .map(|(_, a)| *a)
        .fold(f64::INFINITY, f64::min);
    Ok(MinimaxReport {
        global_min,
        interior_min,
    })
}

/// min_l Σ_m w_lm Tr[ρ_l Q_m].
pub fn minimax_success_probability(fam: &StateFamily, window: &Window, povm: &PovmGrid) -> Result<f64> {
    Ok(minimax_report(fam, window, povm)?.global_min)
}

pub fn solve_bayesian_sdp(fam: &StateFamily, prior: &Prior, window: &Window, cfg: &SolverConfig) -> Result<SdpSolution> {
    let gw = GridWindow::new(fam, window)?;
    solve_bayesian_on_grid(fam, prior, gw, cfg)
}

/// Bayesian optimum for a window given directly in grid steps.
pub fn solve_bayesian_on_grid(fam: &StateFamily, prior: &Prior, gw: GridWindow, cfg: &SolverConfig) -> Result<SdpSolution> {
    let sm = smear_on_grid(fam, prior, gw)?;
    let lub = least_upper_bound(&sm.ops, cfg)?;
    let povm = PovmGrid { effects: lub.effects };
    povm.validate(1e-8, 1e-7)?;
    Ok(SdpSolution {
        eta_star: lub.dual,
        primal_value: lub.primal,
        povm,
        dual_x: lub.x,
        duality_gap: lub.dual - lub.primal,
        iterations: lub.iterations,
        window: sm.window,
    })
}

pub fn solve_minimax_sdp(fam: &StateFamily, window: &Window, cfg: &SolverConfig) -> Result<MinimaxSolution> {
    let gw = GridWindow::new(fam, window)?;
    solve_minimax_on_grid(fam, gw, cfg)
}

/// Minimax optimum for a window given in grid steps.
///
/// The joint problem min Tr X subject to X ⪰ Σ_m μ_m w_lm ρ_m over X and the
/// prior μ is solved by barrier path following when its dense Newton system
/// is small enough. Otherwise, or if that solve fails, entropic mirror
/// descent on the prior simplex is used.
pub fn solve_minimax_on_grid(fam: &StateFamily, gw: GridWindow, cfg: &SolverConfig) -> Result<MinimaxSolution> {
    let d = fam.dim();
    if d * d + fam.len() <= JOINT_SIZE_LIMIT {
        if let Ok(sol) = minimax_barrier(fam, &gw, cfg) {
            return Ok(sol);
        }
    }
    minimax_mirror_descent(fam, gw, cfg)
}

/// Largest number of real unknowns for the joint minimax barrier.
pub const JOINT_SIZE_LIMIT: usize = 2500;

/// Entropic mirror descent on the prior simplex. Each iterate solves the
/// Bayesian problem; its value bounds the minimax value from above, and the
/// worst-case acceptance of the iterate POVMs (and of their running average)
/// bounds it from below.
fn minimax_mirror_descent(fam: &StateFamily, gw: GridWindow, cfg: &SolverConfig) -> Result<MinimaxSolution> {
    let n = fam.len();
    let inner = SolverConfig {
        tol: cfg.tol / 10.0,
        ..cfg.clone()
    };
    let step0 = (2.0 * (n as f64).ln()).sqrt().max(1.0);
    let mut mu = vec![1.0 / n as f64; n];
    let mut best_upper = f64::INFINITY;
    let mut best_upper_prior = mu.clone();
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_povm: Option<PovmGrid> = None;
    let mut avg: Option<Vec<HermitianOperator>> = None;
    let mut avg_weight = 0.0;
    let mut iterations = 0;
    for k in 1..=cfg.max_outer.max(1) {
        iterations = k;
        let prior = Prior::tabulated(mu.clone())?;
        let sol = solve_bayesian_on_grid(fam, &prior, gw.clone(), &inner)?;
        if sol.eta_star < best_upper {
            best_upper = sol.eta_star;
            best_upper_prior = mu.clone();
        }
        let acc = per_t_acceptance(fam, &gw, &sol.povm)?;
        let worst = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        if worst > best_lower {
            best_lower = worst;
            best_povm = Some(sol.povm.clone());
        }
        let step = step0 / (k as f64).sqrt();
        match avg.as_mut() {
            None => avg = Some(sol.povm.effects().iter().map(|q| q.scale(step)).collect()),
            Some(a) => {
                for (acc_q, q) in a.iter_mut().zip(sol.povm.effects()) {
                    *acc_q = &*acc_q + &q.scale(step);
                }
            }
        }
        avg_weight += step;
        if k > 1 {
            let mean = PovmGrid {
                effects: avg.as_ref().expect("set above").iter().map(|q| q.scale(1.0 / avg_weight)).collect(),
            };
            let worst_avg = per_t_acceptance(fam, &gw, &mean)?.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst_avg > best_lower {
                best_lower = worst_avg;
                best_povm = Some(mean);
            }
        }
        if best_upper - best_lower <= cfg.tol {
            break;
        }
        let amin = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        for (m, a) in mu.iter_mut().zip(&acc) {
            *m *= (-step * (a - amin)).exp();
        }
        let total: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|m| *m /= total);
    }
    let povm = best_povm.expect("at least one iteration");
    Ok(MinimaxSolution {
        eta_bar_star: best_lower,
        upper: best_upper,
        povm,
        prior: Prior::tabulated(best_upper_prior)?,
        gap: best_upper - best_lower,
        iterations,
        window: gw,
    })
}

/// Coordinates of a Hermitian matrix in the orthonormal basis
/// E_ii, (E_ij + E_ji)/√2, i(E_ij − E_ji)/√2 (i < j).
fn herm_coords(m: &CMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    out.extend((0..d).map(|i| m[(i, i)].re));
    for i in 0..d {
        for j in i + 1..d {
            out.push(SQRT_2 * m[(i, j)].re);
            out.push(SQRT_2 * m[(i, j)].im);
        }
    }
    out
}

fn herm_from_coords(z: &[f64], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = C64::new(z[i], 0.0);
    }
    let mut a = d;
    for i in 0..d {
        for j in i + 1..d {
            let v = C64::new(z[a], z[a + 1]) / SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            a += 2;
        }
    }
    m
}

/// Cholesky factors of X − Σ_m μ_m w_lm ρ_m for every l, if all are positive definite.
fn joint_slacks(fam: &StateFamily, gw: &GridWindow, x: &CMatrix, mu: &[f64]) -> Option<Vec<Cholesky<C64, nalgebra::Dyn>>> {
    if mu.iter().any(|&m| m <= 0.0) {
        return None;
    }
    (0..fam.len())
        .map(|l| {
            let mut s = x.clone();
            for &(m, w) in gw.neighbors(l) {
                s -= fam.state(m).op().matrix() * C64::new(w * mu[m], 0.0);
            }
            Cholesky::new(s)
        })
        .collect()
}

/// Barrier path following on the joint minimax program over (X, μ), with
/// the simplex constraint handled in the Newton system.
fn minimax_barrier(fam: &StateFamily, gw: &GridWindow, cfg: &SolverConfig) -> Result<MinimaxSolution> {
    let n = fam.len();
    let d = fam.dim();
    let d2 = d * d;
    let p = d2 + n;
    let rho: Vec<&CMatrix> = fam.states().iter().map(|r| r.op().matrix()).collect();
    let mut mu = vec![1.0 / n as f64; n];
    let lmax = smear_on_grid(fam, &Prior::uniform(n), gw.clone())?
        .ops
        .iter()
        .map(|b| b.lambda_max())
        .fold(0.0, f64::max);
    let mut x: CMatrix = CMatrix::identity(d, d) * C64::new(1.0 + lmax, 0.0);
    let mut chol = joint_slacks(fam, gw, &x, &mu).ok_or_else(|| Error::SolverDiverged("initial point infeasible".into()))?;
    // Columns are vec(F_a) for the Hermitian basis.
    let mut basis = CMatrix::zeros(d2, d2);
    for a in 0..d2 {
        let mut e = vec![0.0; d2];
        e[a] = 1.0;
        basis.set_column(a, &vec_of(&herm_from_coords(&e, d)));
    }
    let eye_coords = herm_coords(&CMatrix::identity(d, d));
    let inv_trace: f64 = chol.iter().map(|c| c.inverse().trace().re).sum();
    let mut t = cfg.t0 * inv_trace / d as f64;
    let mut iterations = 0;
    let mut stages = 0;
    let mut best: Option<MinimaxSolution> = None;
    let mut stale = 0;
    loop {
        let mut centered = false;
        let mut prev_dec = f64::INFINITY;
        for _ in 0..cfg.max_newton {
            let inv: Vec<CMatrix> = chol.iter().map(|c| c.inverse()).collect();
            let mut grad = nalgebra::DVector::<f64>::zeros(p);
            let mut hess = nalgebra::DMatrix::<f64>::zeros(p, p);
            let mut kron = CMatrix::zeros(d2, d2);
            for (a, e) in eye_coords.iter().enumerate() {
                grad[a] = t * e;
            }
            for (l, tl) in inv.iter().enumerate() {
                kron += tl.transpose().kronecker(tl);
                for (a, c) in herm_coords(tl).iter().enumerate() {
                    grad[a] -= c;
                }
                let nb = gw.neighbors(l);
                let prods: Vec<CMatrix> = nb.iter().map(|&(m, w)| tl * rho[m] * tl * C64::new(w, 0.0)).collect();
                for (i, &(m, w)) in nb.iter().enumerate() {
                    grad[d2 + m] += w * (tl * rho[m]).trace().re;
                    for (a, c) in herm_coords(&prods[i]).iter().enumerate() {
                        hess[(a, d2 + m)] -= c;
                        hess[(d2 + m, a)] -= c;
                    }
                    for &(m2, w2) in nb {
                        hess[(d2 + m, d2 + m2)] += w2 * (&prods[i] * rho[m2]).trace().re;
                    }
                }
            }
            let hxx = basis.adjoint() * &kron * &basis;
            for a in 0..d2 {
                for b in 0..d2 {
                    hess[(a, b)] = hxx[(a, b)].re;
                }
            }
            for (m, &mm) in mu.iter().enumerate() {
                grad[d2 + m] -= 1.0 / mm;
                hess[(d2 + m, d2 + m)] += 1.0 / (mm * mm);
            }
            // Null-space reduction of Σ Δμ = 0: the largest prior entry absorbs
            // the others' changes. Eliminating the constraint through H⁻¹1
            // instead cancels badly once the path nears the boundary.
            let r = d2 + (0..n).fold(0, |b, l| if mu[l] > mu[b] { l } else { b });
            let idx: Vec<usize> = (0..p).filter(|&i| i != r).collect();
            let reduced = |i: usize, j: usize| {
                let mut v = hess[(i, j)];
                if i >= d2 {
                    v -= hess[(r, j)];
                }
                if j >= d2 {
                    v -= hess[(i, r)];
                }
                if i >= d2 && j >= d2 {
                    v += hess[(r, r)];
                }
                v
            };
            let q = p - 1;
            // Diagonal scaling: prior entries near zero make the raw system badly scaled.
            let scale: Vec<f64> = idx.iter().map(|&i| 1.0 / reduced(i, i).max(f64::MIN_POSITIVE).sqrt()).collect();
            let scaled = nalgebra::DMatrix::<f64>::from_fn(q, q, |a, b| reduced(idx[a], idx[b]) * scale[a] * scale[b]);
            let g = nalgebra::DVector::<f64>::from_fn(q, |a, _| {
                let i = idx[a];
                (grad[i] - if i >= d2 { grad[r] } else { 0.0 }) * scale[a]
            });
            let y = match nalgebra::Cholesky::new(scaled.clone()) {
                Some(ch) => ch.solve(&g),
                None => match scaled.lu().solve(&g) {
                    Some(y) => y,
                    None => break,
                },
            };
            let mut step = nalgebra::DVector::<f64>::zeros(p);
            for (a, &i) in idx.iter().enumerate() {
                step[i] = -y[a] * scale[a];
                if i >= d2 {
                    step[r] += y[a] * scale[a];
                }
            }
            let dec = -grad.dot(&step);
            if !dec.is_finite() {
                return Err(Error::SolverDiverged("non-finite Newton decrement".into()));
            }
            if dec / 2.0 <= 1e-10 || (dec < 1e-6 && dec > 0.9 * prev_dec) {
                centered = true;
                break;
            }
            prev_dec = dec;
            let dx = herm_from_coords(&step.as_slice()[..d2], d);
            let dmu = &step.as_slice()[d2..];
            let tr_dx: f64 = dx.diagonal().iter().map(|z| z.re).sum();
            let ld0: Vec<f64> = chol.iter().map(log_det).collect();
            // Full step, kept strictly inside the prior simplex, then backtracking.
            let to_boundary = mu.iter().zip(dmu).filter(|(_, dm)| **dm < 0.0).map(|(m, dm)| -m / dm).fold(f64::INFINITY, f64::min);
            let mut alpha = (0.99 * to_boundary).min(1.0);
            let mut accepted = None;
            while alpha > 1e-12 {
                let trial_x = &x + &dx * C64::new(alpha, 0.0);
                let trial_mu: Vec<f64> = mu.iter().zip(dmu).map(|(m, dm)| m + alpha * dm).collect();
                if let Some(c) = joint_slacks(fam, gw, &trial_x, &trial_mu) {
                    let dlog: f64 = c.iter().zip(&ld0).map(|(c, l0)| log_det(c) - l0).sum();
                    let dlog_mu: f64 = trial_mu.iter().zip(&mu).map(|(a, b)| (a / b).ln()).sum();
                    let df = t * alpha * tr_dx - dlog - dlog_mu;
                    if df <= -0.1 * alpha * dec {
                        accepted = Some((trial_x, trial_mu, c));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((tx, tm, c)) => {
                    x = tx;
                    mu = tm;
                    chol = c;
                }
                None => {
                    centered = dec < 1e-3;
                    break;
                }
            }
        }
        if !centered {
            break;
        }
        stages += 1;
        // Every centered iterate is a feasible dual point; the recovered POVM
        // certifies the lower side.
        let raw: Vec<HermitianOperator> = chol
            .iter()
            .map(|c| HermitianOperator::hermitize(c.inverse() * C64::new(1.0 / t, 0.0)))
            .collect();
        if let Ok(effects) = normalize_povm(&raw) {
            let povm = PovmGrid { effects };
            let lower = per_t_acceptance(fam, gw, &povm)?.into_iter().fold(f64::INFINITY, f64::min);
            let mass: f64 = mu.iter().sum();
            let upper = x.diagonal().iter().map(|z| z.re).sum::<f64>() / mass;
            if best.as_ref().is_none_or(|b: &MinimaxSolution| upper - lower < b.gap) && povm.validate(1e-8, 1e-7).is_ok() {
                stale = 0;
                best = Some(MinimaxSolution {
                    eta_bar_star: lower,
                    upper,
                    povm,
                    prior: Prior::tabulated(mu.iter().map(|m| m / mass).collect())?,
                    gap: upper - lower,
                    iterations,
                    window: gw.clone(),
                });
            }
        }
        // Past the rounding floor further stages no longer improve the certificate.
        stale += 1;
        if best.as_ref().is_some_and(|b| b.gap <= cfg.tol) || stale > 2 || stages > MAX_STAGES {
            break;
        }
        t *= cfg.t_factor;
    }
    best.ok_or_else(|| Error::SolverDiverged("joint barrier produced no certified iterate".into()))
}

/// Σ_m w_lm P(t_m|λ) for every prediction l.
fn smoothed_posterior(table: &LikelihoodTable, gw: &GridWindow, lam: usize) -> Vec<f64> {
    (0..table.grid_len())
        .map(|l| gw.neighbors(l).iter().map(|&(m, w)| w * table.posterior[lam][m]).sum())
        .collect()
}

/// First index whose value is within rounding of the maximum.
fn argmax_first(v: &[f64]) -> (usize, f64) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-13 * max.abs().max(1e-300);
    let idx = v.iter().position(|x| *x >= max - tol).expect("nonempty");
    (idx, v[idx])
}

fn argmin_first(v: &[f64]) -> (usize, f64) {
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-13 * min.abs().max(1e-300);
    let idx = v.iter().position(|x| *x <= min + tol).expect("nonempty");
    (idx, v[idx])
}

fn check_table(table: &LikelihoodTable, gw: &GridWindow) -> Result<()> {
    if table.grid_len() != gw.len() {
        return Err(Error::GridMismatch {
            expected: gw.len(),
            found: table.grid_len(),
        });
    }
    Ok(())
}

/// Smoothed maximum a posteriori post-processing: predict the window centre
/// maximizing the window-smoothed posterior.
pub fn smap_postprocess(table: &LikelihoodTable, gw: &GridWindow) -> Result<(Vec<usize>, f64)> {
    check_table(table, gw)?;
    let mut strategy = Vec::with_capacity(table.outcomes());
    let mut eta = 0.0;
    for lam in 0..table.outcomes() {
        let (l, v) = argmax_first(&smoothed_posterior(table, gw, lam));
        strategy.push(l);
        eta += table.marginal[lam] * v;
    }
    Ok((strategy, eta))
}

/// Bayesian success probability of a deterministic strategy λ ↦ l.
pub fn strategy_success(table: &LikelihoodTable, gw: &GridWindow, strategy: &[usize]) -> Result<f64> {
    check_table(table, gw)?;
    if strategy.len() != table.outcomes() {
        return Err(Error::InvalidArgument("strategy length differs from outcome count".into()));
    }
    Ok(strategy
        .iter()
        .enumerate()
        .map(|(lam, &l)| {
            gw.neighbors(l)
                .iter()
                .map(|&(m, w)| w * table.prior[m] * table.table[lam][m])
                .sum::<f64>()
        })
        .sum())
}

/// Worst-case success probability of a deterministic strategy.
pub fn strategy_minimax(table: &LikelihoodTable, gw: &GridWindow, strategy: &[usize]) -> Result<f64> {
    check_table(table, gw)?;
    let n = table.grid_len();
    let mut acc = vec![0.0; n];
    for (lam, &l) in strategy.iter().enumerate() {
        for &(m, w) in gw.neighbors(l) {
            acc[m] += w * table.table[lam][m];
        }
    }
    Ok(acc.into_iter().fold(f64::INFINITY, f64::min))
}

/// Smoothed minimax complementary-likelihood post-processing and the worst-case
/// success probability it guarantees.
pub fn smcl_postprocess(table: &LikelihoodTable, gw: &GridWindow) -> Result<(Vec<usize>, f64)> {
    check_table(table, gw)?;
    let n = table.grid_len();
    let mut strategy = Vec::with_capacity(table.outcomes());
    let mut loss = 0.0;
    for lam in 0..table.outcomes() {
        let costs: Vec<f64> = (0..n)
            .map(|l| {
                let mut w_row = vec![0.0; n];
                for &(m, w) in gw.neighbors(l) {
                    w_row[m] = w;
                }
                (0..n)
                    .map(|m| (1.0 - w_row[m]) * table.table[lam][m])
                    .fold(0.0, f64::max)
            })
            .collect();
        let (l, c) = argmin_first(&costs);
        strategy.push(l);
        loss += c;
    }
    Ok((strategy, 1.0 - loss))
}

/// Bayesian prior or worst case.
#[derive(Clone, Debug)]
pub enum Mode {
    Bayesian(Prior),
    Minimax,
}

/// Result of a tolerance search.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceResult {
    pub delta_star: f64,
    /// Window radius in grid steps.
    pub k: usize,
    /// Certified success probability at `delta_star`.
    pub eta: f64,
}

/// Certified achievable optimum at a window of `k` grid steps.
pub fn optimal_eta_at_radius(fam: &StateFamily, mode: &Mode, k: usize, cfg: &SolverConfig) -> Result<f64> {
    let gw = GridWindow::from_radius(fam, k)?;
    match mode {
        Mode::Bayesian(prior) => Ok(solve_bayesian_on_grid(fam, prior, gw, cfg)?.primal_value),
        Mode::Minimax => Ok(solve_minimax_on_grid(fam, gw, cfg)?.eta_bar_star),
    }
}

/// Largest admissible window radius in grid steps.
pub fn max_radius(fam: &StateFamily) -> usize {
    if fam.domain().is_periodic() {
        (fam.len() - 1) / 2
    } else {
        fam.len()
    }
}

/// Smallest grid radius whose optimal success probability reaches `eta_target`,
/// by bisection over radii.
pub fn optimal_tolerance(fam: &StateFamily, mode: &Mode, eta_target: f64, cfg: &SolverConfig) -> Result<ToleranceResult> {
    if eta_target <= 0.0 {
        return Ok(ToleranceResult {
            delta_star: 0.0,
            k: 0,
            eta: 0.0,
        });
    }
    let kmax = max_radius(fam);
    let top = optimal_eta_at_radius(fam, mode, kmax, cfg)?;
    if top < eta_target {
        return Err(Error::Unreachable {
            target: eta_target,
            best: top,
        });
    }
    let (mut lo, mut hi, mut eta_hi) = (0usize, kmax, top);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let e = optimal_eta_at_radius(fam, mode, mid, cfg)?;
        if e >= eta_target {
            hi = mid;
            eta_hi = e;
        } else {
            lo = mid;
        }
    }
    Ok(ToleranceResult {
        delta_star: hi as f64 * fam.spacing(),
        k: hi,
        eta: eta_hi,
    })
}

/// The problem whose copies are counted by [`sample_complexity`].
pub enum SampleProblem<'a> {
    /// Explicit tensor powers of a finite-dimensional family.
    Explicit { family: &'a StateFamily, mode: Mode, max_dim: usize },
    /// Covariant phase family; the probe for n copies is given by the closure.
    Covariant { probe: &'a dyn Fn(usize) -> Result<ProbeSpectrum> },
}

/// Smallest n ≤ n_max with η*(δ, ρ^{⊗n}) ≥ eta_target, or `None` if not reached.
pub fn sample_complexity(problem: &SampleProblem<'_>, eta_target: f64, delta: f64, n_max: usize, cfg: &SolverConfig) -> Result<Option<usize>> {
    for n in 1..=n_max {
        let eta = match problem {
            SampleProblem::Explicit { family, mode, max_dim } => {
                let fam_n = family.tensor_power(n, *max_dim)?;
                let w = Window::new(delta)?;
                match mode {
                    Mode::Bayesian(prior) => solve_bayesian_sdp(&fam_n, prior, &w, cfg)?.primal_value,
                    Mode::Minimax => solve_minimax_sdp(&fam_n, &w, cfg)?.eta_bar_star,
                }
            }
            SampleProblem::Covariant { probe } => covariant_success_probability(&probe(n)?, delta)?,
        };
        if eta >= eta_target {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// max over grid-centred intervals I of length `t_sub` of the Bayesian optimum
/// for the prior restricted to I.
pub fn subdivision_bound(fam: &StateFamily, prior: &Prior, window: &Window, t_sub: f64, cfg: &SolverConfig) -> Result<f64> {
    let gw = GridWindow::new(fam, window)?;
    if t_sub < 2.0 * gw.delta_eff - 1e-12 {
        return Err(Error::InvalidArgument(format!("t_sub = {t_sub} is below twice the window")));
    }
    let half = (t_sub / (2.0 * fam.spacing()) + 1e-9).floor() as usize;
    let n = fam.len();
    let values = (0..n)
        .into_par_iter()
        .map(|c| {
            let mask: Vec<bool> = (0..n).map(|m| fam.grid_distance(c, m) <= half).collect();
            match prior.restricted(&mask) {
                Some(p) => solve_bayesian_on_grid(fam, &p, gw.clone(), cfg).map(|s| s.eta_star),
                None => Ok(f64::NEG_INFINITY),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// −log η* recomputed from the dual operator; fails if it disagrees with the
/// reported optimum by more than 1e-6 plus the relative duality gap.
pub fn conditional_min_entropy_check(solution: &SdpSolution) -> Result<f64> {
    let h = -solution.eta_star.ln();
    let from_dual = -solution.dual_x.trace().ln();
    let from_primal = -solution.primal_value.ln();
    let slack = 1e-6 + solution.duality_gap.max(0.0) / solution.primal_value.max(1e-300);
    if (h - from_dual).abs() > 1e-6 || (h - from_primal).abs() > slack {
        return Err(Error::InvalidArgument(format!(
            "min-entropy mismatch: {h} vs dual {from_dual} vs primal {from_primal}"
        )));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_unitary_family, constant_family, Domain};
    use crate::opcore::{trace_norm, CVector, DensityMatrix};
    use crate::phase::probe_hb;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn qubit(theta: f64, phi: f64) -> DensityMatrix {
        let v = CVector::from_column_slice(&[C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)]);
        DensityMatrix::pure(&v).unwrap()
    }

    #[test]
    fn lub_of_single_operator_is_its_trace() {
        let b = HermitianOperator::diag(&[0.3, 0.1]);
        let sol = least_upper_bound(std::slice::from_ref(&b), &SolverConfig::with_tol(1e-9)).unwrap();
        assert_abs_diff_eq!(sol.dual, 0.4, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.primal, 0.4, epsilon = 1e-8);
    }

    #[test]
    fn lub_matches_helstrom() {
        let r = qubit(0.4, 0.0);
        let s = qubit(1.3, 0.7);
        let p = 0.35;
        let a = r.scale(p);
        let b = s.scale(1.0 - p);
        let sol = least_upper_bound(&[a.clone(), b.clone()], &SolverConfig::with_tol(1e-9)).unwrap();
        let hel = 0.5 + 0.5 * trace_norm(&(&a - &b));
        assert_abs_diff_eq!(sol.dual, hel, epsilon = 1e-8);
        assert!(sol.dual - sol.primal <= 1e-9 && sol.dual - sol.primal >= -1e-9);
    }

    #[test]
    fn constant_family_gives_random_guessing() {
        let rho = qubit(0.8, 0.3);
        let n = 32;
        let fam = constant_family(&rho, n, Domain::Periodic { period: 2.0 * PI }).unwrap();
        let w = Window::new(5.0 * 2.0 * PI / n as f64).unwrap();
        let sol = solve_bayesian_sdp(&fam, &Prior::uniform(n), &w, &SolverConfig::with_tol(1e-8)).unwrap();
        assert_abs_diff_eq!(sol.eta_star, 10.0 / 32.0, epsilon = 1e-7);
        assert!((&sol.dual_x - &rho.scale(10.0 / 32.0)).frobenius_norm() < 1e-4);
        let flat = PovmGrid::flat(n, 2);
        assert_abs_diff_eq!(success_probability(&fam, &Prior::uniform(n), &w, &flat).unwrap(), 10.0 / 32.0, epsilon = 1e-14);
    }

    #[test]
    fn balanced_qubit_minimax_matches_closed_form() {
        let n = 64;
        let fam = build_unitary_family(&[0.0, 1.0], &probe_hb(1), n, Domain::Periodic { period: 2.0 * PI }).unwrap();
        let w = Window::new(0.3).unwrap();
        let sol = solve_minimax_sdp(&fam, &w, &SolverConfig::with_tol(1e-7)).unwrap();
        let de = sol.window.delta_eff;
        let closed = de / PI + de.sin() / PI;
        assert!((sol.eta_bar_star - closed).abs() < 2.0 * PI / n as f64, "{} vs {}", sol.eta_bar_star, closed);
        assert!(sol.gap <= 1e-6);
        let weights = sol.prior.weights();
        for w in weights {
            assert_abs_diff_eq!(*w, 1.0 / n as f64, epsilon = 1e-9);
        }
    }
}
