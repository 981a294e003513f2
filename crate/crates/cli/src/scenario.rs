//! Scenario execution: build the space and model from a config, run the
//! named experiment, write CSV/JSON artifacts atomically, and print one
//! verdict line per check.
//!
//! The seed fully determines every stochastic choice, and artifacts are
//! written in a fixed order, so identical configs reproduce byte-identical
//! outputs. `CURVLAB_THREADS` caps how many independent checks of one
//! scenario run concurrently (default 1); results are collected in input
//! order either way.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curvlab::diffusion::{evolve, DiffusionTrajectory};
use curvlab::entropy::EntropyModel;
use curvlab::error::{Error, Result};
use curvlab::gamma2::{be_check, dual_action_decay_check, hamiltonian_residual, optimal_curvature};
use curvlab::linearized::{backward_solve, forward_linearized_solve, pairing_check};
use curvlab::odelab::{
    cost_contraction_check, convexity_contraction_check, hamiltonian_monotonicity_check,
    integrate_system, FlowSystem,
};
use curvlab::report::{export_reports, CheckReport, Verdict};
use curvlab::space::{gen, io as space_io, DensityField, FiniteSpace};
use curvlab::transport::{
    cdstar_convexity_check, cdstar_sigma_check, contraction_check, curve_velocity, default_tol,
    evi_check, geodesic_1d, kantorovich_dual_bound, w2_distance, weighted_action, ActionWeight,
    MeasureCurve,
};

use crate::config::{entropy_from, Ini};

/// Write through a temp file and rename, so partial outputs never land.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn threads() -> usize {
    std::env::var("CURVLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

type CheckTask = Box<dyn FnOnce() -> Result<CheckReport> + Send>;

/// Run independent check closures, honoring `CURVLAB_THREADS`; results come
/// back in input order regardless of scheduling.
fn run_checks(tasks: Vec<CheckTask>) -> Result<Vec<CheckReport>> {
    let cap = threads();
    if cap <= 1 || tasks.len() <= 1 {
        return tasks.into_iter().map(|t| t()).collect();
    }
    let mut out: Vec<Option<Result<CheckReport>>> = Vec::new();
    out.resize_with(tasks.len(), || None);
    let mut pending: Vec<(usize, CheckTask)> = tasks.into_iter().enumerate().collect();
    while !pending.is_empty() {
        let batch: Vec<_> = pending.drain(..pending.len().min(cap)).collect();
        let results: Vec<(usize, Result<CheckReport>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .into_iter()
                .map(|(idx, task)| scope.spawn(move || (idx, task())))
                .collect();
            handles.into_iter().map(|h| h.join().expect("check thread panicked")).collect()
        });
        for (idx, res) in results {
            out[idx] = Some(res);
        }
    }
    out.into_iter().map(|r| r.expect("all checks scheduled")).collect()
}

fn build_space(ini: &Ini) -> Result<FiniteSpace> {
    let source = ini.require("space", "source")?;
    match source {
        "circle" => gen::circle(ini.usize_or("space", "n", 32)?),
        "path" => gen::path(ini.usize_or("space", "n", 32)?),
        "complete" => gen::complete(ini.usize_or("space", "n", 4)?),
        "two-point" => Ok(gen::two_point()),
        "erdos" => {
            let n = ini.usize_or("space", "n", 8)?;
            let p = ini.f64_or("space", "p", 0.5)?;
            let seed = ini.usize_or("scenario", "seed", 0)? as u64;
            gen::erdos(n, p, seed)
        }
        "file" => {
            let path = ini.require("space", "file")?;
            space_io::load(Path::new(path))
        }
        other => Err(Error::Parse(format!("[space] unknown source `{other}`"))),
    }
}

/// Initial data specs: `uniform`, `random`, `point:IDX`, `bump:CENTER,WIDTH`
/// (1-D grids), all normalized to probability when `normalize` is set.
fn build_density(
    spec: &str,
    space: &Arc<FiniteSpace>,
    rng: &mut ChaCha8Rng,
    normalize: bool,
) -> Result<DensityField> {
    let n = space.len();
    let raw = match spec.split(':').next().unwrap_or("") {
        "uniform" => DensityField::uniform(space),
        "random" => {
            let vals = DVector::from_fn(n, |_, _| 0.05 + rng.gen::<f64>());
            DensityField::new(space, vals)?
        }
        "point" => {
            let idx: usize = spec
                .split(':')
                .nth(1)
                .ok_or_else(|| Error::Parse("point spec needs `point:IDX`".into()))?
                .parse()
                .map_err(|_| Error::Parse("bad point index".into()))?;
            if idx >= n {
                return Err(Error::Parse(format!("point index {idx} out of range")));
            }
            let mut vals = DVector::zeros(n);
            vals[idx] = 1.0 / space.measure()[idx];
            DensityField::new(space, vals)?
        }
        "bump" => {
            let mut parts = spec.split(':').nth(1).unwrap_or("0.25,40").split(',');
            let center: f64 = parts.next().unwrap_or("0.25").parse().unwrap_or(0.25);
            let width: f64 = parts.next().unwrap_or("40").parse().unwrap_or(40.0);
            let coords: Vec<f64> = match space.one_dim() {
                Some(curvlab::space::OneDim::Circle { coords, .. }) => coords.clone(),
                Some(curvlab::space::OneDim::Path { coords }) => coords.clone(),
                None => (0..n).map(|i| i as f64 / n as f64).collect(),
            };
            let circ = matches!(space.one_dim(), Some(curvlab::space::OneDim::Circle { .. }));
            let vals = DVector::from_fn(n, |x, _| {
                let mut d = (coords[x] - center).abs();
                if circ {
                    d = d.min(1.0 - d);
                }
                0.05 + (-width * d * d).exp()
            });
            DensityField::new(space, vals)?
        }
        other => return Err(Error::Parse(format!("unknown density spec `{other}`"))),
    };
    if normalize {
        raw.normalized(space)
    } else {
        Ok(raw)
    }
}

pub struct ScenarioOutcome {
    pub reports: Vec<CheckReport>,
    pub artifacts: Vec<PathBuf>,
}

impl ScenarioOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed())
    }
}

pub fn run_scenario(ini: &Ini) -> Result<ScenarioOutcome> {
    let kind = ini.require("scenario", "kind")?.to_string();
    let seed = ini.usize_or("scenario", "seed", 0)? as u64;
    let out_dir = PathBuf::from(ini.get("scenario", "out_dir").unwrap_or("out"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = Arc::new(build_space(ini)?);
    if space.metric_was_filled() {
        println!("note: metric entries filled by shortest path over 1/sqrt(w) edges");
    }
    let model = entropy_from(ini)?;

    let mut artifacts = Vec::new();
    let reports = match kind.as_str() {
        "be-scan" => run_be_scan(ini, &space)?,
        "diffuse" => {
            let (reports, traj) = run_diffuse(ini, &space, &model, &mut rng)?;
            let path = out_dir.join("trajectory.csv");
            atomic_write(&path, &traj.to_csv())?;
            artifacts.push(path);
            reports
        }
        "linearize" => {
            let (reports, fwd_csv, bwd_csv) = run_linearize(ini, &space, &model, &mut rng)?;
            for (name, csv) in [("forward.csv", fwd_csv), ("backward.csv", bwd_csv)] {
                let path = out_dir.join(name);
                atomic_write(&path, &csv)?;
                artifacts.push(path);
            }
            reports
        }
        "transport" => run_transport(ini, &space, &mut rng)?,
        "evi" => {
            let tol_default = default_tol(
                &space,
                ini.f64_or("params", "t", 0.02)? / ini.usize_or("params", "steps", 16)? as f64,
            );
            let rho = build_density(ini.get("params", "rho0").unwrap_or("bump"), &space, &mut rng, true)?;
            let nu = build_density(ini.get("params", "rho1").unwrap_or("uniform"), &space, &mut rng, true)?;
            vec![evi_check(
                &space,
                &model,
                &rho,
                &nu,
                ini.f64_or("params", "k", 0.0)?,
                ini.f64_or("params", "t", 0.02)?,
                ini.usize_or("params", "steps", 16)?,
                ini.f64_or("params", "tol", tol_default)?,
            )?]
        }
        "contraction" => {
            let tol_default = default_tol(
                &space,
                ini.f64_or("params", "t", 0.02)? / ini.usize_or("params", "steps", 16)? as f64,
            );
            let rho = build_density(ini.get("params", "rho0").unwrap_or("bump"), &space, &mut rng, true)?;
            let sigma = build_density(
                ini.get("params", "rho1").unwrap_or("bump:0.6,60"),
                &space,
                &mut rng,
                true,
            )?;
            vec![contraction_check(
                &space,
                &model,
                &rho,
                &sigma,
                ini.f64_or("params", "k", 0.0)?,
                ini.f64_or("params", "t", 0.02)?,
                ini.usize_or("params", "steps", 16)?,
                ini.f64_or("params", "tol", tol_default)?,
            )?]
        }
        "cdstar" => {
            let (reports, curve) = run_cdstar(ini, &space, &mut rng)?;
            let path = out_dir.join("curve.csv");
            atomic_write(&path, &curve.to_csv())?;
            artifacts.push(path);
            reports
        }
        "odelab" => run_odelab(ini, &mut rng)?,
        other => {
            return Err(Error::Parse(format!("unknown experiment kind `{other}`")));
        }
    };

    let path = out_dir.join("model.ini");
    atomic_write(&path, &format!("[entropy]\n{}", crate::config::entropy_record(&model)))?;
    artifacts.push(path);
    let path = out_dir.join("reports.json");
    atomic_write(&path, &export_reports(&reports)?)?;
    artifacts.push(path);
    for report in &reports {
        println!(
            "[{}] {}: margin={:.6e}",
            if report.passed() { "PASS" } else { "FAIL" },
            report.name,
            report.margin.0
        );
    }
    Ok(ScenarioOutcome { reports, artifacts })
}

fn run_be_scan(ini: &Ini, space: &Arc<FiniteSpace>) -> Result<Vec<CheckReport>> {
    let n_dim = ini.get_f64("params", "n_dim")?.unwrap_or(f64::INFINITY);
    let k_opt_inf = optimal_curvature(space, f64::INFINITY)?;
    let k_opt = if n_dim.is_infinite() { k_opt_inf } else { optimal_curvature(space, n_dim)? };
    let k_probe = ini.f64_or("params", "k", k_opt)?;
    let rep = be_check(space, k_probe, n_dim)?;
    let check = rep
        .to_check_report()
        .with_note("optimal_k_inf", k_opt_inf)
        .with_note("optimal_k", k_opt);
    Ok(vec![check])
}

fn run_diffuse(
    ini: &Ini,
    space: &Arc<FiniteSpace>,
    model: &EntropyModel,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CheckReport>, DiffusionTrajectory)> {
    let rho0 = build_density(ini.get("params", "rho0").unwrap_or("bump"), space, rng, false)?;
    let t = ini.f64_or("params", "t", 0.1)?;
    let steps = ini.usize_or("params", "steps", 64)?;
    let traj = evolve(space, model, &rho0, t, steps)?;

    let mass_drift = traj
        .states()
        .iter()
        .map(|s| (s.mass() - rho0.mass()).abs())
        .fold(0.0f64, f64::max);
    let cap = rho0.max();
    let range_excess = traj
        .states()
        .iter()
        .map(|s| (-s.values().min()).max(s.values().max() - cap))
        .fold(0.0f64, f64::max);

    let space2 = Arc::clone(space);
    let traj2 = traj.clone();
    let checks: Vec<CheckTask> = vec![
        Box::new(move || {
            Ok(CheckReport::new(
                "mass-conservation",
                Verdict::from_bool(mass_drift <= 1e-10),
                -mass_drift,
            ))
        }),
        Box::new(move || {
            Ok(CheckReport::new(
                "comparison-principle",
                Verdict::from_bool(range_excess <= 1e-12),
                -range_excess,
            )
            .with_note("initial_max", cap))
        }),
        Box::new(move || {
            let _ = &space2;
            Ok(curvlab::diffusion::entropy_dissipation_report(
                &traj2,
                |r| 0.5 * r * r,
                |r| r,
            ))
        }),
    ];
    Ok((run_checks(checks)?, traj))
}

fn run_linearize(
    ini: &Ini,
    space: &Arc<FiniteSpace>,
    model: &EntropyModel,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CheckReport>, String, String)> {
    let rho0 = build_density(ini.get("params", "rho0").unwrap_or("random"), space, rng, false)?;
    let t = ini.f64_or("params", "t", 0.25)?;
    let steps = ini.usize_or("params", "steps", 128)?;
    let traj = evolve(space, model, &rho0, t, steps)?;
    let n = space.len();
    let w0 = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let phi_t = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let fwd = forward_linearized_solve(&traj, &w0)?;
    let bwd = backward_solve(&traj, &phi_t, None)?;
    let pairing = pairing_check(space, &fwd, &bwd)?
        .with_note("energy_residual", bwd.energy_residual().unwrap_or(0.0));
    // Hamiltonian identity diagnostic on the initial slice
    let ham = hamiltonian_residual(space, model, traj.state(0), &phi_t);
    // dual action decay with Λ at K=0 (flat bound) as a trajectory check
    let lambda = model.lambda(ini.f64_or("params", "k", 0.0)?);
    let tol = default_tol(space, traj.step_size());
    let w0_decay = space.laplacian(&traj.state(0).values().map(|v| model.p(v)));
    let decay = dual_action_decay_check(&traj, &w0_decay, lambda, tol)?;
    Ok((vec![pairing, ham, decay], fwd.to_csv(), bwd.to_csv()))
}

fn run_transport(
    ini: &Ini,
    space: &Arc<FiniteSpace>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CheckReport>> {
    let mu0 = build_density(ini.get("params", "rho0").unwrap_or("random"), space, rng, true)?;
    let mu1 = build_density(ini.get("params", "rho1").unwrap_or("random"), space, rng, true)?;
    let (w2, coupling) = w2_distance(space, &mu0, &mu1)?;
    let marginal_err = coupling.marginal_error(space, &mu0, &mu1);
    let slack = coupling.slackness_defect(space);
    let lp = CheckReport::new(
        "w2-lp-optimality",
        Verdict::from_bool(marginal_err <= 1e-10 && slack <= 1e-9),
        -marginal_err.max(slack),
    )
    .with_note("w2", w2)
    .with_note("marginal_error", marginal_err)
    .with_note("slackness_defect", slack);

    // weak duality over seeded potentials
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..64 {
        let phi = DVector::from_fn(space.len(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        worst = worst.max(kantorovich_dual_bound(space, &mu0, &mu1, &phi)? - 0.5 * w2 * w2);
    }
    let duality = CheckReport::new("kantorovich-weak-duality", Verdict::from_bool(worst <= 1e-10), -worst)
        .with_note("w2", w2);

    let mut reports = vec![lp, duality];
    if space.one_dim().is_some() {
        let curve = curve_velocity(geodesic_1d(space, &mu0, &mu1, 16)?)?;
        let model = EntropyModel::power(2.0)?;
        let total = weighted_action(&curve, &model, ActionWeight::Constant)?;
        let split = weighted_action(&curve, &model, ActionWeight::OneMinusS)?
            + weighted_action(&curve.reversed(), &model, ActionWeight::OneMinusS)?;
        let err = (total - split).abs();
        reports.push(
            CheckReport::new("time-reversal-action", Verdict::from_bool(err <= 1e-10), -err)
                .with_note("kinetic_action", total)
                .with_note("w2_squared", w2 * w2),
        );
    }
    Ok(reports)
}

fn run_cdstar(
    ini: &Ini,
    space: &Arc<FiniteSpace>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CheckReport>, MeasureCurve)> {
    let mu0 = build_density(ini.get("params", "rho0").unwrap_or("bump:0.25,30"), space, rng, true)?;
    let mu1 = build_density(ini.get("params", "rho1").unwrap_or("bump:0.6,60"), space, rng, true)?;
    let slices = ini.usize_or("params", "slices", 16)?;
    let curve = curve_velocity(geodesic_1d(space, &mu0, &mu1, slices)?)?;
    let tol_default = default_tol(space, 1.0 / slices as f64);
    let k = ini.f64_or("params", "k", 0.0)?;
    let n_dim = ini.f64_or("params", "n_dim", 2.0)?;
    let tol = ini.f64_or("params", "tol", tol_default)?;
    let mut reports = vec![cdstar_convexity_check(&curve, k, n_dim, tol)?];
    // σ-coefficient form along an optimal coupling, at the mid slice
    let (_, coupling) = w2_distance(space, &mu0, &mu1)?;
    let mid = slices / 2;
    reports.push(cdstar_sigma_check(
        space,
        &mu0,
        &mu1,
        curve.density(mid),
        curve.times()[mid],
        &coupling,
        k,
        n_dim,
        tol,
    )?);
    Ok((reports, curve))
}

fn run_odelab(ini: &Ini, rng: &mut ChaCha8Rng) -> Result<Vec<CheckReport>> {
    let name = ini.get("params", "system").unwrap_or("ou");
    let dim = ini.usize_or("params", "dim", 2)?;
    let sys = match name {
        "ou" => FlowSystem::ornstein_uhlenbeck(dim),
        "linear-unstable" => FlowSystem::linear(DMatrix::identity(dim, dim)),
        "quadratic" => {
            let mut p = DMatrix::identity(dim, dim);
            for i in 0..dim {
                p[(i, i)] = 1.0 + i as f64 * 0.5;
            }
            FlowSystem::quadratic_potential(p)
        }
        "mobility" => FlowSystem::scalar_mobility(),
        other => return Err(Error::Parse(format!("unknown odelab system `{other}`"))),
    };
    let d = sys.dim;
    let horizon = ini.f64_or("params", "t", 1.0)?;
    let steps = ini.usize_or("params", "steps", 1000)?;
    let samples: Vec<_> = (0..ini.usize_or("params", "samples", 64)?)
        .map(|_| {
            (
                DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0),
                DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0),
            )
        })
        .collect();

    let x0 = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let w0 = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
    let phi_t = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
    let out = integrate_system(&sys, &x0, &w0, &phi_t, horizon, steps)?;
    let pairings = out.pairings();
    let dev = pairings.iter().map(|p| (p - pairings[0]).abs()).fold(0.0f64, f64::max);
    let pairing = CheckReport::new("ode-pairing", Verdict::from_bool(dev <= 1e-12), -dev);

    let mono = hamiltonian_monotonicity_check(&sys, &samples)?;
    let x1 = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let contraction = cost_contraction_check(&sys, &x0, &x1, horizon, steps, 1e-6)?;
    let mut reports = vec![pairing, mono, contraction];
    if sys.potential.is_some() {
        reports.push(convexity_contraction_check(&sys, &x0, &x1, horizon.min(1.0), 1e-6)?);
    }
    Ok(reports)
}
