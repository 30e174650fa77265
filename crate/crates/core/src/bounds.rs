//! Analytic bounds: two-point reductions, Chernoff rates, asymmetric testing,
//! the Cramér–Rao-like tolerance bound and sample-complexity corollaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Domain, GridWindow, Prior, StateFamily, Window};
use crate::opcore::{
    chernoff_divergence, eigh, fidelity, golden_section_min, log_fidelity_divergence, sandwiched_renyi, support_projector, trace_norm, CMatrix,
    DensityMatrix, HermitianOperator, C64,
};
use crate::optimize::{least_upper_bound, PovmGrid, SolverConfig};

/// Binary hypotheses ρ (prior p) against σ (prior 1 − p).
#[derive(Clone, Debug)]
pub struct TwoPointInstance {
    pub rho: DensityMatrix,
    pub sigma: DensityMatrix,
    pub p: f64,
}

impl TwoPointInstance {
    pub fn new(rho: DensityMatrix, sigma: DensityMatrix, p: f64) -> Result<Self> {
        if rho.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: rho.dim(),
                found: sigma.dim(),
            });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidPrior(format!("p = {p}")));
        }
        Ok(Self { rho, sigma, p })
    }
}

/// Optimal success probability ½ + ½‖pρ − (1−p)σ‖₁.
pub fn helstrom(inst: &TwoPointInstance) -> f64 {
    let diff = &inst.rho.scale(inst.p) - &inst.sigma.scale(1.0 - inst.p);
    (0.5 + 0.5 * trace_norm(&diff)).clamp(inst.p.max(1.0 - inst.p), 1.0)
}

/// Minimax binary success probability, min_p of the Helstrom value.
pub fn minimax_binary(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let f = |p: f64| 0.5 + 0.5 * trace_norm(&(&rho.scale(p) - &sigma.scale(1.0 - p)));
    let (_, v) = golden_section_min(f, 0.0, 1.0, 1e-10);
    Ok(v.min(f(0.5)))
}

/// Pair of parameter values at which a bound is attained.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub t_prime: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundReport {
    pub bound_name: String,
    pub value: f64,
    pub witness: Option<Witness>,
}

impl BoundReport {
    fn new(name: &str, value: f64, witness: Option<Witness>) -> Self {
        Self {
            bound_name: name.to_string(),
            value,
            witness,
        }
    }
}

/// Grid pairs (l, m), l < m, that no window prediction can accept together.
pub fn separated_pairs(fam: &StateFamily, gw: &GridWindow) -> Vec<(usize, usize)> {
    let sep = gw.min_separation_steps();
    let n = fam.len();
    (0..n)
        .flat_map(|l| (l + 1..n).map(move |m| (l, m)))
        .filter(|&(l, m)| fam.grid_distance(l, m) >= sep)
        .collect()
}

enum Extremum {
    Min,
    Max,
}

fn scan_pairs(
    fam: &StateFamily,
    window: &Window,
    ext: Extremum,
    f: impl Fn(&DensityMatrix, &DensityMatrix) -> Result<f64> + Sync,
) -> Result<(f64, Witness)> {
    let gw = GridWindow::new(fam, window)?;
    let pairs = separated_pairs(fam, &gw);
    if pairs.is_empty() {
        return Err(Error::NoValidPair);
    }
    let values = pairs
        .par_iter()
        .map(|&(l, m)| f(fam.state(l), fam.state(m)).map(|v| (v, l, m)))
        .collect::<Result<Vec<_>>>()?;
    let better = |a: f64, b: f64| match ext {
        Extremum::Min => a < b,
        Extremum::Max => a > b,
    };
    let mut best = values[0];
    for &v in &values[1..] {
        if better(v.0, best.0) {
            best = v;
        }
    }
    let grid = fam.grid();
    Ok((
        best.0,
        Witness {
            t: grid[best.1],
            t_prime: grid[best.2],
        },
    ))
}

/// inf over separated pairs of the minimax binary success probability; an
/// upper bound on the minimax success probability.
pub fn two_point_upper_bound(fam: &StateFamily, window: &Window) -> Result<BoundReport> {
    let (v, w) = scan_pairs(fam, window, Extremum::Min, minimax_binary)?;
    Ok(BoundReport::new("two_point_upper", v, Some(w)))
}

/// ¼ sup F² over separated pairs; a lower bound on the minimax error probability.
pub fn fidelity_error_lower_bound(fam: &StateFamily, window: &Window) -> Result<BoundReport> {
    let (v, w) = scan_pairs(fam, window, Extremum::Max, |a, b| fidelity(a, b).map(|f| 0.25 * f * f))?;
    Ok(BoundReport::new("fidelity_error_lower", v, Some(w)))
}

/// inf over separated pairs of the Chernoff divergence; an upper bound on the
/// exponential rate of the error probability.
pub fn chernoff_rate_bound(fam: &StateFamily, window: &Window) -> Result<BoundReport> {
    let (v, w) = scan_pairs(fam, window, Extremum::Min, chernoff_divergence)?;
    Ok(BoundReport::new("chernoff_rate", v, Some(w)))
}

/// Lower bound on the number of copies needed for minimax success probability
/// `eta`: log(1/(4(1−η))) / (4 inf D̃_{1/2}) with D̃_{1/2} = −½ log F.
pub fn two_point_sample_complexity_bound(fam: &StateFamily, window: &Window, eta: f64) -> Result<BoundReport> {
    let (d, w) = scan_pairs(fam, window, Extremum::Min, log_fidelity_divergence)?;
    let l = if eta >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 / (4.0 * (1.0 - eta))).ln().max(0.0)
    };
    let value = if l == 0.0 {
        0.0
    } else if d == 0.0 {
        f64::INFINITY
    } else {
        l / (4.0 * d)
    };
    Ok(BoundReport::new("two_point_sample_complexity", value, Some(w)))
}

/// Multi-hypothesis reduction with weighted shifts (λ_k, s_k), s_k in grid
/// steps: η* ≤ Σ_l P_s*({λ_k μ_{l+s_k} ρ_{l+s_k}}).
pub fn multishift_ht_bound(fam: &StateFamily, prior: &Prior, window: &Window, shifts: &[(f64, i64)], cfg: &SolverConfig) -> Result<f64> {
    if prior.len() != fam.len() {
        return Err(Error::GridMismatch {
            expected: fam.len(),
            found: prior.len(),
        });
    }
    if shifts.is_empty() {
        return Err(Error::InvalidArgument("no shifts".into()));
    }
    let total: f64 = shifts.iter().map(|s| s.0).sum();
    if (total - 1.0).abs() > 1e-9 || shifts.iter().any(|s| s.0 < 0.0) {
        return Err(Error::InvalidArgument(format!("shift weights sum to {total}")));
    }
    let gw = GridWindow::new(fam, window)?;
    let n = fam.len() as i64;
    let periodic = fam.domain().is_periodic();
    let sep = gw.min_separation_steps() as i64;
    for (i, a) in shifts.iter().enumerate() {
        for b in &shifts[i + 1..] {
            let mut d = (a.1 - b.1).abs();
            if periodic {
                d %= n;
                d = d.min(n - d);
            }
            if d < sep {
                return Err(Error::ShiftOverlap);
            }
        }
    }
    let mu = prior.weights();
    let per_point = (0..n)
        .into_par_iter()
        .map(|l| {
            let ops: Vec<HermitianOperator> = shifts
                .iter()
                .filter_map(|&(lam, s)| {
                    let m = l + s;
                    let m = if periodic {
                        m.rem_euclid(n)
                    } else if m < 0 || m >= n {
                        return None;
                    } else {
                        m
                    };
                    let w = lam * mu[m as usize];
                    (w > 0.0).then(|| fam.state(m as usize).scale(w))
                })
                .collect();
            match ops.len() {
                0 => Ok(0.0),
                1 => Ok(ops[0].trace()),
                2 => Ok(0.5 * (ops[0].trace() + ops[1].trace() + trace_norm(&(&ops[0] - &ops[1])))),
                _ => least_upper_bound(&ops, cfg).map(|s| s.dual),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_point.into_iter().sum())
}

/// β_h^η(ρ‖σ) = min Tr[Mσ] over tests 0 ≤ M ≤ I with Tr[Mρ] ≥ η, by the
/// Neyman–Pearson construction.
pub fn beta_h(rho: &DensityMatrix, sigma: &DensityMatrix, eta: f64) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    if !(eta > 0.0) {
        return Ok(0.0);
    }
    if eta >= 1.0 {
        return Ok(sigma.inner(&support_projector(rho)).clamp(0.0, 1.0));
    }
    // Weight of ρ outside the support of σ is free.
    let ker_sigma = &HermitianOperator::identity(rho.dim()) - &support_projector(sigma);
    if rho.inner(&ker_sigma) >= eta {
        return Ok(0.0);
    }
    let detect = |c: f64| {
        let e = eigh(&(rho.op() - &sigma.scale(c)));
        let tol = 1e-12 * (1.0 + c);
        let plus = e.reconstruct_with(|v| if v > tol { 1.0 } else { 0.0 });
        rho.inner(&plus)
    };
    let mut hi = 1.0;
    while detect(hi) >= eta {
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(0.0);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if detect(mid) >= eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let e = eigh(&(rho.op() - &sigma.scale(c)));
    let tol = 1e-9 * (1.0 + c);
    let strict = e.reconstruct_with(|v| if v > tol { 1.0 } else { 0.0 });
    let band = e.reconstruct_with(|v| if v.abs() <= tol { 1.0 } else { 0.0 });
    let (rs, rb) = (rho.inner(&strict), rho.inner(&band));
    let theta = if rb > 0.0 { ((eta - rs) / rb).clamp(0.0, 1.0) } else { 0.0 };
    Ok((sigma.inner(&strict) + theta * sigma.inner(&band)).clamp(0.0, 1.0))
}

/// ½ Σ_l Δ β_h^η(ρ_l‖σ), a lower bound on the minimax tolerance at success
/// probability η whenever η does not exceed the optimum.
pub fn ht_tolerance_lower_bound(fam: &StateFamily, eta: f64, sigma: &DensityMatrix) -> Result<f64> {
    let betas = fam
        .states()
        .par_iter()
        .map(|r| beta_h(r, sigma, eta))
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.5 * fam.spacing() * betas.iter().sum::<f64>())
}

/// Finite-difference weights for the `order`-th derivative at 0 on nodes `x`.
pub fn fornberg_weights(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Central-difference derivative of `g` at 0, with one Richardson pass.
fn central_derivative(g: &dyn Fn(f64) -> Result<f64>, order: usize, h: f64) -> Result<f64> {
    let half = order.div_ceil(2).max(1);
    let nodes: Vec<f64> = (-(half as i64)..=half as i64).map(|j| j as f64).collect();
    let w = fornberg_weights(&nodes, order);
    let eval = |step: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (x, wi) in nodes.iter().zip(&w) {
            if *wi != 0.0 {
                acc += wi * g(x * step)?;
            }
        }
        Ok(acc / step.powi(order as i32))
    };
    let coarse = eval(h)?;
    let fine = eval(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Taylor coefficients of τ ↦ −½ log F(ρ(t), ρ(t+τ)).
#[derive(Clone, Debug, PartialEq)]
pub struct CrCoefficients {
    /// `f[i][p-2]` is f_p at the i-th grid point, p = 2..=pmax.
    pub f: Vec<Vec<f64>>,
    pub q: f64,
    /// (Γ lower endpoint, √log(1/(4(1−η̄)))).
    pub gamma_bracket: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CramerRaoReport {
    pub coefficients: CrCoefficients,
    /// Γ/√(min_t 8 f₂), or 0 when Γ ≤ 0.
    pub delta_lb: f64,
    /// Γ from the exact W_{−1} solution, for comparison with the bracket.
    pub gamma_lambert: f64,
    /// Smallest grid separation at which the fidelity vanishes, if any.
    pub r_est: Option<f64>,
    /// delta_lb exceeds r_est.
    pub radius_flag: bool,
    /// Γ ≤ 0, so the bound is vacuous.
    pub vacuous: bool,
}

/// Lower branch W_{−1}(x) for x ∈ [−1/e, 0), by bisection on w e^w.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let e_inv = (-1.0f64).exp();
    if !(x >= -e_inv - 1e-15 && x < 0.0) {
        return Err(Error::InvalidArgument(format!("W_-1 undefined at {x}")));
    }
    let h = |w: f64| w * w.exp() - x;
    let (mut lo, mut hi) = (-1.0f64, -1.0f64);
    while h(lo) < 0.0 {
        lo *= 2.0;
        if lo < -1e3 {
            break;
        }
    }
    // h(lo) ≥ 0 and h(-1) ≤ 0; w e^w is decreasing below −1.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Non-asymptotic tolerance lower bound for minimax success probability
/// `eta_bar` > 3/4 from the Taylor coefficients of the log-fidelity along the
/// family `state`, evaluated at the points `ts`.
pub fn cramer_rao_like_bound(
    state: &(dyn Fn(f64) -> Result<DensityMatrix> + Sync),
    ts: &[f64],
    eta_bar: f64,
    pmax: usize,
) -> Result<CramerRaoReport> {
    if !(eta_bar > 0.75 && eta_bar < 1.0) {
        return Err(Error::InvalidArgument(format!("eta_bar = {eta_bar} must lie in (3/4, 1)")));
    }
    if pmax < 4 {
        return Err(Error::InvalidArgument(format!("pmax = {pmax} must be at least 4")));
    }
    if ts.is_empty() {
        return Err(Error::InvalidArgument("no evaluation points".into()));
    }
    let eps = f64::EPSILON;
    let f = ts
        .par_iter()
        .map(|&t| {
            let rho = state(t)?;
            let g = |tau: f64| -> Result<f64> {
                if tau == 0.0 {
                    return Ok(0.0);
                }
                let fid = fidelity(&rho, &state(t + tau)?)?;
                Ok(-0.5 * fid.max(1e-300).ln())
            };
            let f2_rough = central_derivative(&g, 2, eps.powf(1.0 / 6.0))?;
            let scale = if f2_rough > 0.0 { 1.0 / f2_rough.sqrt() } else { 1.0 };
            (2..=pmax)
                .map(|p| central_derivative(&g, p, eps.powf(1.0 / (p as f64 + 4.0)) * scale))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut q: f64 = 0.0;
    let mut f2_min = f64::INFINITY;
    for row in &f {
        let f2 = row[0].max(0.0);
        f2_min = f2_min.min(f2);
        if f2 > 0.0 {
            for (i, fp) in row.iter().enumerate().skip(1) {
                let p = (i + 2) as f64;
                q = q.max((fp / f2.powf(p / 2.0)).abs().powf(1.0 / (p - 2.0)));
            }
        }
    }
    let l = (1.0 / (4.0 * (1.0 - eta_bar))).ln();
    let upper = l.sqrt();
    let gamma = upper - q * l / (6.0 * 2f64.sqrt());
    let a = l / 4.0;
    let gamma_lambert = if q > 0.0 {
        let u = a * q * q;
        let w = lambert_w_minus1(-(-1.0 - u).exp())?;
        2f64.sqrt() * (-(1.0 + u + w) / q)
    } else {
        2f64.sqrt() * (2.0 * a).sqrt()
    };
    let vacuous = gamma <= 0.0;
    let delta_lb = if vacuous || f2_min <= 0.0 {
        if f2_min <= 0.0 && !vacuous {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        gamma / (8.0 * f2_min).sqrt()
    };
    let r_est = ts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| -> Result<Option<f64>> {
            let rho = state(t)?;
            let mut best: Option<f64> = None;
            for &u in &ts[i + 1..] {
                if fidelity(&rho, &state(u)?)? <= 1e-12 {
                    let d = (u - t).abs();
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    let radius_flag = r_est.is_some_and(|r| delta_lb > r);
    Ok(CramerRaoReport {
        coefficients: CrCoefficients {
            f,
            q,
            gamma_bracket: (gamma, upper),
        },
        delta_lb,
        gamma_lambert,
        r_est,
        radius_flag,
        vacuous,
    })
}

/// Leading-order asymptotic tolerance lower bound ½ η^{α/(α−1)} √(2π/(α n Ĩ_α)),
/// with Ĩ_α = min_t ∂²_τ D̃_α(ρ(t+τ)‖ρ(t)) / α.
pub fn renyi_tolerance_asymptote(
    state: &(dyn Fn(f64) -> Result<DensityMatrix> + Sync),
    ts: &[f64],
    eta: f64,
    alpha: f64,
    n: usize,
) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must exceed 1")));
    }
    if eta <= 0.0 {
        return Ok(0.0);
    }
    let info = renyi_information(state, ts, alpha)?;
    if !info.is_finite() {
        return Ok(0.0);
    }
    if info <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * eta.powf(alpha / (alpha - 1.0)) * (2.0 * std::f64::consts::PI / (alpha * n as f64 * info)).sqrt())
}

/// min_t Ĩ_α(t); infinite if the family leaves the support of its neighbours.
pub fn renyi_information(state: &(dyn Fn(f64) -> Result<DensityMatrix> + Sync), ts: &[f64], alpha: f64) -> Result<f64> {
    let h = f64::EPSILON.powf(1.0 / 6.0);
    let vals = ts
        .par_iter()
        .map(|&t| {
            let sigma = state(t)?;
            let g = |tau: f64| -> Result<f64> {
                if tau == 0.0 {
                    return Ok(0.0);
                }
                match sandwiched_renyi(&state(t + tau)?, &sigma, alpha) {
                    Err(Error::SupportViolation) => Ok(f64::INFINITY),
                    other => other,
                }
            };
            let d2 = central_derivative(&g, 2, h)?;
            Ok(if d2.is_nan() { f64::INFINITY } else { d2 / alpha })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

fn diagonal_density(fam: &StateFamily, povm: &PovmGrid) -> Result<Vec<f64>> {
    if povm.len() != fam.len() {
        return Err(Error::GridMismatch {
            expected: fam.len(),
            found: povm.len(),
        });
    }
    Ok(fam
        .states()
        .iter()
        .zip(povm.effects())
        .map(|(r, q)| r.inner(q) / fam.spacing())
        .collect())
}

/// Small-η Bayesian tolerance η / (2 Σ_l μ_l Tr[ρ_l Q_l]/Δ).
pub fn small_eta_tolerance(fam: &StateFamily, prior: &Prior, povm: &PovmGrid, eta: f64) -> Result<f64> {
    let dens = diagonal_density(fam, povm)?;
    let d: f64 = dens.iter().zip(prior.weights()).map(|(a, m)| a * m).sum();
    if d <= 0.0 {
        return Err(Error::ZeroDiagonalAcceptance);
    }
    Ok(eta / (2.0 * d))
}

/// Minimax variant η / (2 min_l Tr[ρ_l Q_l]/Δ).
pub fn small_eta_tolerance_minimax(fam: &StateFamily, povm: &PovmGrid, eta: f64) -> Result<f64> {
    let d = diagonal_density(fam, povm)?.into_iter().fold(f64::INFINITY, f64::min);
    if d <= 0.0 {
        return Err(Error::ZeroDiagonalAcceptance);
    }
    Ok(eta / (2.0 * d))
}

/// Optimal single-use probe for a channel family and fixed measurement.
#[derive(Clone, Debug)]
pub struct ProbeOptimization {
    pub probe: DensityMatrix,
    /// ‖Σ_l μ_l N_l†[(w∗Q)_l]‖_∞, or min_l ‖N_l†[(w∗Q)_l]‖_∞ in the minimax variant.
    pub eta: f64,
    /// Success probability actually achieved by `probe`.
    pub achieved: f64,
}

/// `kraus[l]` lists the Kraus operators (d_out × d_in) of the channel at grid point l.
pub fn probe_optimization_single_use(
    domain: Domain,
    kraus: &[Vec<CMatrix>],
    prior: Option<&Prior>,
    window: &Window,
    povm: &PovmGrid,
) -> Result<ProbeOptimization> {
    let n = kraus.len();
    if n == 0 || kraus.iter().any(|k| k.is_empty()) {
        return Err(Error::InvalidArgument("empty channel family".into()));
    }
    let d_in = kraus[0][0].ncols();
    let d_out = kraus[0][0].nrows();
    for ks in kraus {
        let mut acc = CMatrix::zeros(d_in, d_in);
        for k in ks {
            if k.ncols() != d_in || k.nrows() != d_out {
                return Err(Error::DimensionMismatch {
                    expected: d_in,
                    found: k.ncols(),
                });
            }
            acc += k.adjoint() * k;
        }
        let dev = (acc - CMatrix::identity(d_in, d_in)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-9 {
            return Err(Error::KrausIncomplete(dev));
        }
    }
    if povm.len() != n {
        return Err(Error::GridMismatch { expected: n, found: povm.len() });
    }
    if povm.dim() != d_out {
        return Err(Error::DimensionMismatch {
            expected: d_out,
            found: povm.dim(),
        });
    }
    // Outputs on the maximally mixed input only fix the grid geometry.
    let mixed = CMatrix::identity(d_in, d_in) * C64::new(1.0 / d_in as f64, 0.0);
    let outputs = kraus
        .iter()
        .map(|ks| {
            let out = ks.iter().fold(CMatrix::zeros(d_out, d_out), |a, k| a + k * &mixed * k.adjoint());
            DensityMatrix::new(HermitianOperator::hermitize(out))
        })
        .collect::<Result<Vec<_>>>()?;
    let fam = StateFamily::new(domain, outputs)?;
    let gw = GridWindow::new(&fam, window)?;
    let adjoint_terms: Vec<HermitianOperator> = (0..n)
        .map(|l| {
            let smeared = gw
                .neighbors(l)
                .iter()
                .fold(CMatrix::zeros(d_out, d_out), |a, &(m, w)| a + povm.effects()[m].matrix() * C64::new(w, 0.0));
            let back = kraus[l].iter().fold(CMatrix::zeros(d_in, d_in), |a, k| a + k.adjoint() * &smeared * k);
            HermitianOperator::hermitize(back)
        })
        .collect();
    let top = |a: &HermitianOperator| {
        let e = eigh(a);
        let j = e.values.len() - 1;
        (e.values[j], e.vector(j))
    };
    match prior {
        Some(prior) => {
            if prior.len() != n {
                return Err(Error::GridMismatch { expected: n, found: prior.len() });
            }
            let m = adjoint_terms
                .iter()
                .zip(prior.weights())
                .fold(HermitianOperator::zeros(d_in), |a, (t, mu)| &a + &t.scale(*mu));
            let (eta, v) = top(&m);
            let probe = DensityMatrix::pure(&v)?;
            let achieved = probe.inner(&m);
            Ok(ProbeOptimization { probe, eta, achieved })
        }
        None => {
            let tops: Vec<(f64, _)> = adjoint_terms.iter().map(top).collect();
            let (idx, _) = tops
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |b, (i, t)| if t.0 < b.1 { (i, t.0) } else { b });
            let probe = DensityMatrix::pure(&tops[idx].1)?;
            let achieved = adjoint_terms.iter().map(|a| probe.inner(a)).fold(f64::INFINITY, f64::min);
            Ok(ProbeOptimization {
                probe,
                eta: tops[idx].0,
                achieved,
            })
        }
    }
}
