use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use pacmet::bounds::{
    chernoff_rate_bound, cramer_rao_like_bound, fidelity_error_lower_bound, ht_tolerance_lower_bound, multishift_ht_bound,
    two_point_sample_complexity_bound, two_point_upper_bound, BoundReport,
};
use pacmet::family::{build_unitary_family, unitary_state, FamilyJson, GridWindow, LikelihoodTable, Prior, StateFamily, Window};
use pacmet::opcore::DensityMatrix;
use pacmet::optimize::{
    optimal_tolerance, smap_postprocess, smcl_postprocess, solve_bayesian_sdp, solve_minimax_sdp, strategy_minimax,
    strategy_success, subdivision_bound, Mode, PovmGrid, PovmJson, SolverConfig,
};
use pacmet::phase::{
    covariant_error_probability, covariant_success_probability, covariant_tolerance, empirical_rate, named_probe_tolerance,
    NamedProbe, ProbeSpectrum, RATE_FLOOR,
};

use crate::args::{BoundsArgs, FamilyArgs, SdpArgs, SmapArgs, SweepArgs};
use crate::error::CliError;
use crate::output::{fmt_opt, fmt_sig, write_json_file, Sink};

pub const CSV_HEADER: &str = "probe,n,delta,eta,one_minus_eta,delta_star,rate_fit,rate_theory";

/// Slack allowed in the bound ordering checks.
const ORDER_SLACK: f64 = 1e-5;

/// Random strategies compared against SMAP/SMCL.
const RANDOM_STRATEGIES: usize = 100;

fn check_delta(delta: f64) -> Result<f64, CliError> {
    if delta > 0.0 && delta < PI {
        Ok(delta)
    } else {
        Err(CliError::Config(format!("--delta {delta} must lie in (0, π)")))
    }
}

fn check_eta(eta: f64) -> Result<f64, CliError> {
    if eta > 0.0 && eta < 1.0 {
        Ok(eta)
    } else {
        Err(CliError::Config(format!("--eta {eta} must lie in (0, 1)")))
    }
}

fn check_tol(tol: f64) -> Result<SolverConfig, CliError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(SolverConfig::with_tol(tol))
    } else {
        Err(CliError::Config(format!("--tol {tol} must be positive")))
    }
}

fn levels(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64).collect()
}

fn csv_row(probe: NamedProbe, n: usize, delta: f64, eta: f64, err: f64, rest: [Option<f64>; 3]) -> String {
    format!(
        "{},{n},{},{},{},{},{},{}",
        probe.name(),
        fmt_sig(delta),
        fmt_sig(eta),
        fmt_sig(err),
        fmt_opt(rest[0]),
        fmt_opt(rest[1]),
        fmt_opt(rest[2])
    )
}

pub fn phase_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let delta = check_delta(args.delta.unwrap_or(0.04))?;
    let eta = args.eta.map(check_eta).transpose()?;
    let ns = args.n_values()?;
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.line(CSV_HEADER)?;
    for &probe in &args.probe {
        let rate_fit = if ns.len() >= 3 {
            let family = |n: usize| probe.build(n, delta);
            empirical_rate(probe.name(), &family, delta, &ns, None, RATE_FLOOR).ok().map(|r| r.fitted_rate)
        } else {
            None
        };
        let rate_theory = probe.theory_rate(delta);
        let rows = ns
            .par_iter()
            .map(|&n| -> Result<String, CliError> {
                let spectrum = probe.build(n, delta)?;
                let success = covariant_success_probability(&spectrum, delta)?;
                let error = covariant_error_probability(&spectrum, delta)?;
                let delta_star = match eta {
                    Some(e) => covariant_tolerance(&spectrum, e).ok(),
                    None => None,
                };
                Ok(csv_row(probe, n, delta, success, error, [delta_star, rate_fit, rate_theory]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for row in rows {
            sink.line(&row)?;
        }
    }
    sink.finish()
}

/// Rows report the target η and the tolerance reached; `delta` is the window
/// the probe was built for.
pub fn tolerance_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let eta = check_eta(args.eta.unwrap_or(0.99))?;
    let ns = args.n_values()?;
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.line(CSV_HEADER)?;
    for &probe in &args.probe {
        let rows = ns
            .par_iter()
            .map(|&n| -> Result<String, CliError> {
                let (tol, design) = named_probe_tolerance(probe, n, eta)?;
                Ok(csv_row(probe, n, design, eta, 1.0 - eta, [Some(tol), None, None]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for row in rows {
            sink.line(&row)?;
        }
    }
    sink.finish()
}

pub fn rate_fit(args: &SweepArgs) -> Result<(), CliError> {
    let delta = check_delta(args.delta.unwrap_or(0.04))?;
    let ns = args.n_values()?;
    if ns.len() < 3 {
        return Err(CliError::Config("rate-fit needs at least three values of n".into()));
    }
    let reports = args
        .probe
        .par_iter()
        .map(|&probe| -> Result<Value, CliError> {
            let family = |n: usize| probe.build(n, delta);
            let rep = empirical_rate(probe.name(), &family, delta, &ns, probe.theory_rate(delta), RATE_FLOOR)?;
            let mut v = serde_json::to_value(&rep).map_err(|e| CliError::Internal(e.to_string()))?;
            v["relative_deviation"] = json!(rep.relative_deviation());
            Ok(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.json(Value::Array(reports))?;
    sink.finish()
}

/// A family read from a file, or a gridized covariant family built from a probe.
struct LoadedFamily {
    fam: StateFamily,
    covariant: Option<(Vec<f64>, ProbeSpectrum)>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load_family(args: &FamilyArgs, delta: f64) -> Result<LoadedFamily, CliError> {
    match (&args.family, args.probe) {
        (Some(path), None) => {
            let json: FamilyJson = read_json(path)?;
            let fam = StateFamily::from_json(&json).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(LoadedFamily { fam, covariant: None })
        }
        (None, Some(probe)) => {
            let n = args.n.ok_or_else(|| CliError::Config("--probe needs --n".into()))?;
            let grid = args.grid.unwrap_or(256);
            if !grid.is_power_of_two() {
                eprintln!("warning: grid size {grid} is not a power of two");
            }
            let spectrum = probe.build(n, delta)?;
            let lv = levels(n);
            let fam = build_unitary_family(&lv, &spectrum, grid, pacmet::family::Domain::Periodic { period: 2.0 * PI })?;
            Ok(LoadedFamily {
                fam,
                covariant: Some((lv, spectrum)),
            })
        }
        (Some(_), Some(_)) => Err(CliError::Config("give either --family or --probe, not both".into())),
        (None, None) => Err(CliError::Config("a family is required: --family path or --probe name --n n".into())),
    }
}

fn window_json(gw: &GridWindow) -> Value {
    json!({"k": gw.k, "delta_eff": gw.delta_eff})
}

pub fn sdp(args: &SdpArgs) -> Result<(), CliError> {
    let delta = check_delta(args.delta)?;
    let cfg = check_tol(args.common.tol)?;
    let loaded = load_family(&args.family, delta)?;
    let fam = &loaded.fam;
    let window = Window::new(delta)?;
    let (mode, eta_star, upper, gap, prior, povm, gw) = if args.minimax {
        let sol = solve_minimax_sdp(fam, &window, &cfg)?;
        (
            "minimax",
            sol.eta_bar_star,
            sol.upper,
            sol.gap,
            Some(sol.prior.weights().to_vec()),
            sol.povm,
            sol.window,
        )
    } else {
        let sol = solve_bayesian_sdp(fam, &Prior::uniform(fam.len()), &window, &cfg)?;
        ("bayesian", sol.eta_star, sol.eta_star, sol.duality_gap, None, sol.povm, sol.window)
    };
    if let Some(path) = &args.povm {
        let v = serde_json::to_value(povm.to_json()).map_err(|e| CliError::Internal(e.to_string()))?;
        write_json_file(path, v)?;
    }
    let report = json!({
        "mode": mode,
        "delta": delta,
        "window": window_json(&gw),
        "eta_star": eta_star,
        "upper": upper,
        "gap": gap,
        "prior": prior,
        "povm_path": args.povm.as_ref().map(|p| p.display().to_string()),
        "povm_lipschitz": povm.lipschitz(fam.spacing(), fam.domain().is_periodic()),
    });
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.json(report)?;
    sink.finish()?;
    if gap > cfg.tol {
        return Err(CliError::GapExceeded { gap, tol: cfg.tol });
    }
    Ok(())
}

fn bound_json(name: &str, r: pacmet::Result<BoundReport>) -> Value {
    match r {
        Ok(b) => serde_json::to_value(&b).unwrap_or(Value::Null),
        Err(e) => json!({"bound_name": name, "error": e.to_string()}),
    }
}

fn value_json(name: &str, r: pacmet::Result<f64>) -> Value {
    match r {
        Ok(v) => json!({"bound_name": name, "value": v, "witness": null}),
        Err(e) => json!({"bound_name": name, "error": e.to_string()}),
    }
}

fn bound_value(bounds: &[Value], name: &str) -> Option<f64> {
    bounds.iter().find(|b| b["bound_name"] == name).and_then(|b| b["value"].as_f64())
}

pub fn bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let delta = check_delta(args.delta)?;
    let eta = check_eta(args.eta)?;
    let cfg = check_tol(args.common.tol)?;
    let loaded = load_family(&args.family, delta)?;
    let fam = &loaded.fam;
    let window = Window::new(delta)?;
    let gw = GridWindow::new(fam, &window)?;
    let uniform = Prior::uniform(fam.len());
    let mixed = DensityMatrix::maximally_mixed(fam.dim());
    let sep = gw.min_separation_steps() as i64;

    let mut list = vec![
        bound_json("two_point_upper", two_point_upper_bound(fam, &window)),
        bound_json("fidelity_error_lower", fidelity_error_lower_bound(fam, &window)),
        bound_json("chernoff_rate", chernoff_rate_bound(fam, &window)),
        bound_json("two_point_sample_complexity", two_point_sample_complexity_bound(fam, &window, eta)),
        value_json(
            "multishift_ht_success_upper",
            multishift_ht_bound(fam, &uniform, &window, &[(0.5, 0), (0.5, sep)], &cfg),
        ),
        value_json(
            "subdivision_success_upper",
            subdivision_bound(fam, &uniform, &window, 2.0 * gw.delta_eff + 4.0 * fam.spacing(), &cfg),
        ),
        value_json("ht_tolerance_lower", ht_tolerance_lower_bound(fam, eta, &mixed)),
    ];
    if let Some((lv, spectrum)) = &loaded.covariant {
        let state = |t: f64| unitary_state(lv, spectrum, t);
        let ts: Vec<f64> = (0..8).map(|i| i as f64 * PI / 4.0).collect();
        list.push(match cramer_rao_like_bound(&state, &ts, eta, 5) {
            Ok(cr) => json!({
                "bound_name": "cramer_rao_tolerance_lower",
                "value": cr.delta_lb,
                "witness": null,
                "q": cr.coefficients.q,
                "vacuous": cr.vacuous,
                "radius_flag": cr.radius_flag,
            }),
            Err(e) => json!({"bound_name": "cramer_rao_tolerance_lower", "error": e.to_string()}),
        });
    }

    let mut exact = Value::Null;
    let mut checks = Vec::new();
    let mut consistent = Value::Null;
    if args.exact {
        let bayes = solve_bayesian_sdp(fam, &uniform, &window, &cfg)?;
        let minimax = solve_minimax_sdp(fam, &window, &cfg)?;
        let tolerance = optimal_tolerance(fam, &Mode::Minimax, eta, &cfg).ok();
        exact = json!({
            "bayes_uniform": {"eta_star": bayes.eta_star, "gap": bayes.duality_gap},
            "minimax": {"eta_star": minimax.eta_bar_star, "upper": minimax.upper, "gap": minimax.gap},
            "minimax_tolerance": tolerance.as_ref().map(|t| json!({"delta_star": t.delta_star, "k": t.k, "eta": t.eta})),
        });
        let mut check = |name: &str, lower: Option<f64>, upper: Option<f64>| {
            if let (Some(lo), Some(hi)) = (lower, upper) {
                checks.push(json!({"check": name, "lower": lo, "upper": hi, "ok": lo <= hi + ORDER_SLACK}));
            }
        };
        check("minimax <= two-point", Some(minimax.eta_bar_star), bound_value(&list, "two_point_upper"));
        check(
            "fidelity error bound <= minimax error",
            bound_value(&list, "fidelity_error_lower"),
            Some(1.0 - minimax.eta_bar_star),
        );
        check("bayes <= multishift", Some(bayes.primal_value), bound_value(&list, "multishift_ht_success_upper"));
        check("bayes <= subdivision", Some(bayes.primal_value), bound_value(&list, "subdivision_success_upper"));
        check("minimax <= bayes", Some(minimax.eta_bar_star), Some(bayes.eta_star));
        // Grid tolerances are quantized to whole steps.
        let exact_tol = tolerance.map(|t| t.delta_star + fam.spacing());
        check("ht tolerance <= exact tolerance", bound_value(&list, "ht_tolerance_lower"), exact_tol);
        check("cramer-rao <= exact tolerance", bound_value(&list, "cramer_rao_tolerance_lower"), exact_tol);
        consistent = json!(checks.iter().all(|c| c["ok"] == true));
    }
    let report = json!({
        "delta": delta,
        "eta": eta,
        "window": window_json(&gw),
        "bounds": list,
        "exact": exact,
        "checks": checks,
        "consistent": consistent,
    });
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.json(report)?;
    sink.finish()
}

pub fn smap(args: &SmapArgs) -> Result<(), CliError> {
    let delta = check_delta(args.delta)?;
    let loaded = load_family(&args.family, delta)?;
    let fam = &loaded.fam;
    let povm_json: PovmJson = read_json(&args.povm)?;
    let povm = PovmGrid::from_json(&povm_json).map_err(|e| CliError::Config(format!("{}: {e}", args.povm.display())))?;
    let gw = GridWindow::new(fam, &Window::new(delta)?)?;
    let table = LikelihoodTable::from_measurement(fam, &Prior::uniform(fam.len()), povm.effects())?;
    let (mode, (strategy, eta)) = if args.minimax {
        ("smcl", smcl_postprocess(&table, &gw)?)
    } else {
        ("smap", smap_postprocess(&table, &gw)?)
    };
    // SMCL reports a guarantee; the achieved worst case can be larger.
    let achieved = if args.minimax {
        strategy_minimax(&table, &gw, &strategy)?
    } else {
        strategy_success(&table, &gw, &strategy)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
    let mut random_best = f64::NEG_INFINITY;
    for _ in 0..RANDOM_STRATEGIES {
        let s: Vec<usize> = (0..table.outcomes()).map(|_| rng.gen_range(0..fam.len())).collect();
        let v = if args.minimax {
            strategy_minimax(&table, &gw, &s)?
        } else {
            strategy_success(&table, &gw, &s)?
        };
        random_best = random_best.max(v);
    }
    let report = json!({
        "mode": mode,
        "delta": delta,
        "window": window_json(&gw),
        "eta": eta,
        "achieved": achieved,
        "strategy": strategy,
        "random_strategies": RANDOM_STRATEGIES,
        "seed": args.common.seed,
        "random_best": random_best,
    });
    let mut sink = Sink::open(args.common.out.as_deref())?;
    sink.json(report)?;
    sink.finish()
}
