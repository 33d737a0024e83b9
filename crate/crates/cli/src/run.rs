//! Experiment orchestration and artifact emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use nfield::dynamics::{ensemble_moments, simulate};
use nfield::ergodicity::{
    certify, couple, couple_h1, krylov_bogoliubov, second_moment_bound, CertificateSet, CertifyOptions, TightnessSpec,
};
use nfield::kernel::{decompose, form_matrix, operator_norm};
use nfield::particle::{meanfield_compare, meanfield_model, simulate_particles, CompareOptions};
use nfield::space::{case_diagnostics, Grid};
use serde::Serialize;
use serde_json::json;

use crate::build::{self, Setup};
use crate::config::{CertifySettings, CouplingNorm, Experiment, Gate, RunConfig};
use crate::io::{fmt, write_csv, write_dense_binary, write_json};

pub const OUTPUT_ENV: &str = "NFIELD_OUTPUT_DIR";

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A gated certificate was evaluated and did not pass.
    CertificateFailed,
}

/// Loads a configuration and applies command-line overrides; the output
/// directory falls back to `$NFIELD_OUTPUT_DIR/<experiment>`, then
/// `nfield-out/<experiment>`.
pub fn resolve(path: &Path, over: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = over.seed {
        cfg.seed = s;
    }
    let dir = match (&over.output_dir, &cfg.output_dir) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => {
            let root = std::env::var_os(OUTPUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| "nfield-out".into());
            root.join(cfg.experiment.name())
        }
    };
    cfg.output_dir = Some(std::path::absolute(&dir).unwrap_or(dir));
    Ok(cfg)
}

fn options(s: &CertifySettings, seed: u64) -> CertifyOptions {
    CertifyOptions {
        delta: s.delta,
        c_delta: s.c_delta,
        rank_tol: s.rank_tol,
        trials: s.trials,
        seed,
    }
}

fn grid_summary(grid: &Grid<f64>) -> serde_json::Value {
    json!({
        "dim": grid.dim(),
        "bounds": grid.bounds(),
        "points": grid.points(),
        "spacing": grid.spacing(),
        "truncation": grid.truncation(),
    })
}

/// Dry run: builds every object and previews certificates without simulating.
pub fn validate(path: &Path, over: &Overrides) -> Result<String> {
    let cfg = resolve(path, over)?;
    let mut report = vec![format!("ok: experiment `{}`, seed {}", cfg.experiment.name(), cfg.seed)];
    match &cfg.experiment {
        Experiment::Particle { particle } => {
            let p = build::particle(particle, cfg.seed)?;
            report.push(format!("particles: {} populations, N = {}", p.n_populations(), p.total()));
            return Ok(report.join("\n"));
        }
        Experiment::Compare {
            particle,
            points_per_box,
            ..
        } => {
            let p = build::particle(particle, cfg.seed)?;
            let grid = Grid::interval(0.0, 1.0, p.n_populations() * points_per_box + 1)?;
            meanfield_model(&p, &grid)?;
            report.push(format!(
                "particles: {} populations, N = {}; mean-field grid of {} nodes",
                p.n_populations(),
                p.total(),
                grid.len()
            ));
            return Ok(report.join("\n"));
        }
        _ => {}
    }
    let settings = certify_settings(&cfg.experiment);
    let s = build::setup(&cfg, settings.rank_tol)?;
    let g = &s.grid;
    report.push(format!(
        "grid: {}-D, points {:?}, bounds {:?}, spacing {:?}",
        g.dim(),
        g.points(),
        g.bounds(),
        g.spacing()
    ));
    let case = case_diagnostics(g, &s.weight, &s.kernel);
    report.push(format!("cases: {}", serde_json::to_string(&case)?));
    if let (Experiment::Certify { settings }, Some(model), Some(sim)) = (&cfg.experiment, &s.model, &s.sim) {
        let (set, _) = certify(model, sim.alpha, &options(settings, cfg.seed)).context("certify")?;
        for gate in &settings.gate {
            report.push(format!("preview {gate:?}: {}", describe(&set, *gate)));
        }
    }
    Ok(report.join("\n"))
}

fn certify_settings(e: &Experiment) -> CertifySettings {
    match e {
        Experiment::Certify { settings } | Experiment::Invariant { settings, .. } | Experiment::Couple { settings, .. } => {
            settings.clone()
        }
        _ => CertifySettings::default(),
    }
}

fn certificate(set: &CertificateSet, gate: Gate) -> Option<&nfield::ergodicity::Certificate> {
    match gate {
        Gate::Invariance => Some(&set.invariance),
        Gate::Ergodicity => Some(&set.ergodicity),
        Gate::Monotone => set.monotone.as_ref(),
    }
}

fn describe(set: &CertificateSet, gate: Gate) -> String {
    match certificate(set, gate) {
        Some(c) => format!("{:?}, margin {:?}", c.verdict, c.margin),
        None => "inapplicable".into(),
    }
}

/// Runs the experiment and writes its artifacts and manifest.
pub fn run(path: &Path, over: &Overrides) -> Result<Status> {
    let started = Instant::now();
    let cfg = resolve(path, over)?;
    let out = cfg.output_dir.clone().expect("resolved");
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut artifacts = Vec::new();
    let status = execute(&cfg, &out, &mut artifacts)?;
    let manifest = json!({
        "tool": "nfield",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "status": match status { Status::Ok => "ok", Status::CertificateFailed => "certificate_failed" },
        "artifacts": artifacts,
        "resolved_config": cfg,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(status)
}

struct Out<'a> {
    dir: &'a Path,
    names: &'a mut Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn json<S: Serialize>(&mut self, name: &str, v: &S) -> Result<()> {
        let p = self.path(name);
        write_json(&p, v)
    }
}

fn execute(cfg: &RunConfig, dir: &Path, names: &mut Vec<String>) -> Result<Status> {
    let mut out = Out { dir, names };
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::Particle { particle } => {
            let p = build::particle(particle, seed)?;
            let path = simulate_particles(&p)?;
            let rows = path.times.iter().enumerate().flat_map(|(t, time)| {
                let path = &path;
                (0..p.n_populations()).map(move |k| {
                    vec![
                        fmt(*time),
                        k.to_string(),
                        fmt(path.means[t][k]),
                        fmt(path.variances[t][k]),
                        path.jumps[t][k].to_string(),
                    ]
                })
            });
            write_csv(&out.path("population.csv"), &["time", "pop", "mean", "var", "jumps"], rows)?;
            out.json(
                "particle.json",
                &json!({ "stats": path.stats, "seed": path.seed, "events": path.events }),
            )?;
            return Ok(Status::Ok);
        }
        Experiment::Compare {
            particle,
            n_runs,
            dt,
            points_per_box,
            bootstrap,
        } => {
            let p = build::particle(particle, seed)?;
            let grid = Grid::interval(0.0, 1.0, p.n_populations() * points_per_box + 1)?;
            let model = meanfield_model(&p, &grid)?;
            let opts = CompareOptions {
                n_runs: *n_runs,
                dt: *dt,
                bootstrap: *bootstrap,
                ..Default::default()
            };
            let r = meanfield_compare(&p, &model, &grid, &opts)?;
            let rows = r.times.iter().enumerate().flat_map(|(t, time)| {
                let r = &r;
                (0..p.n_populations()).map(move |k| {
                    let (a, b) = (r.particle[t][k], r.field[t][k]);
                    vec![
                        fmt(*time),
                        k.to_string(),
                        fmt(a.mean),
                        fmt(a.stderr),
                        fmt(b.mean),
                        fmt(b.stderr),
                    ]
                })
            });
            write_csv(
                &out.path("meanfield.csv"),
                &["time", "pop", "particle_mean", "particle_se", "field_mean", "field_se"],
                rows,
            )?;
            out.json("meanfield.json", &r)?;
            return Ok(Status::Ok);
        }
        _ => {}
    }

    let settings = certify_settings(&cfg.experiment);
    let s = build::setup(cfg, settings.rank_tol)?;
    match &cfg.experiment {
        Experiment::Spectrum { eigenvectors } => spectrum(&s, *eigenvectors, &mut out),
        Experiment::Simulate { initial, moments } => {
            let (model, sim) = model_and_sim(&s)?;
            let u0 = build::initial(initial, &s, settings.rank_tol)?;
            let traj = simulate(&u0, sim, model, 0)?;
            let n = s.grid.len();
            let mut header = vec!["time".to_string()];
            header.extend((0..n).map(|i| format!("node_{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = traj.times.iter().zip(&traj.states).map(|(t, u)| {
                std::iter::once(fmt(*t))
                    .chain(u.values().iter().map(|v| fmt(*v)))
                    .collect::<Vec<_>>()
            });
            write_csv(&out.path("trajectory.csv"), &header, rows)?;
            let stats = ensemble_moments(&u0, sim, model, moments)?;
            let rows = stats.moments.iter().flat_map(|m| {
                stats
                    .times
                    .iter()
                    .zip(&m.estimates)
                    .map(move |(t, e)| vec![fmt(*t), fmt(m.p), fmt(e.mean), fmt(e.stderr)])
            });
            write_csv(&out.path("ensemble.csv"), &["time", "p", "estimate", "stderr"], rows)?;
            out.json(
                "trajectory.json",
                &json!({ "grid": grid_summary(&s.grid), "seed": seed, "path": traj.path, "ensemble": {
                    "n_paths": stats.n_paths, "blow_ups": stats.blow_ups,
                    "blow_up_fraction": stats.blow_up_fraction, "growth_warning": stats.growth_warning } }),
            )?;
            Ok(Status::Ok)
        }
        Experiment::Certify { settings } => {
            let (model, sim) = model_and_sim(&s)?;
            let (set, _) = certify(model, sim.alpha, &options(settings, seed)).context("certify")?;
            let gates: Vec<_> = settings
                .gate
                .iter()
                .map(|g| json!({ "certificate": g, "passed": certificate(&set, *g).is_some_and(|c| c.passed()) }))
                .collect();
            let passed = settings
                .gate
                .iter()
                .all(|g| certificate(&set, *g).is_some_and(|c| c.passed()));
            out.json(
                "certificate.json",
                &json!({
                    "passed": passed,
                    "gates": gates,
                    "alpha": sim.alpha,
                    "activation": model.activation.name(),
                    "grid": grid_summary(&s.grid),
                    "weight_constant": s.weight.is_constant(),
                    "cases": case_diagnostics(&s.grid, &s.weight, &s.kernel),
                    "certificates": set,
                }),
            )?;
            Ok(if passed { Status::Ok } else { Status::CertificateFailed })
        }
        Experiment::Invariant {
            initial,
            horizons,
            burn_in_fraction,
            settings,
        } => {
            let (model, sim) = model_and_sim(&s)?;
            let u0 = build::initial(initial, &s, settings.rank_tol)?;
            let certified = certify(model, sim.alpha, &options(settings, seed));
            let tightness = match &certified {
                Ok((set, Some(metric))) if set.invariance.constants.contains_key("gamma") => {
                    let gamma = set.invariance.constant("gamma");
                    (gamma > 0.0).then(|| {
                        (
                            metric,
                            TightnessSpec {
                                gamma,
                                eta: set.invariance.constant("eta_corollary"),
                            },
                        )
                    })
                }
                _ => None,
            };
            let kb = krylov_bogoliubov(&u0, sim, model, &s.grid, horizons, *burn_in_fraction, tightness)?;
            let rows = kb.measures.iter().enumerate().map(|(i, m)| {
                vec![
                    fmt(kb.horizons[i]),
                    fmt(m.window.start),
                    kb.successive_distances.get(i).map(|d| fmt(*d)).unwrap_or_default(),
                    fmt(m.second_moment.mean),
                    fmt(m.second_moment.stderr),
                ]
            });
            write_csv(
                &out.path("kb.csv"),
                &[
                    "horizon",
                    "window_start",
                    "distance_to_next",
                    "second_moment",
                    "second_moment_se",
                ],
                rows,
            )?;
            let moment = match (&certified, kb.measures.last()) {
                (Ok((set, _)), Some(last)) if set.ergodicity.passed() => Some(second_moment_bound(&set.ergodicity, last)?),
                _ => None,
            };
            let note = certified.as_ref().err().map(|e| e.to_string());
            out.json(
                "kb.json",
                &json!({ "report": kb, "second_moment": moment, "certificate_error": note }),
            )?;
            Ok(Status::Ok)
        }
        Experiment::Couple { v, z, norm, settings } => {
            let (model, sim) = model_and_sim(&s)?;
            let (v, z) = (
                build::initial(v, &s, settings.rank_tol)?,
                build::initial(z, &s, settings.rank_tol)?,
            );
            let certified = certify(model, sim.alpha, &options(settings, seed));
            let report = match norm {
                CouplingNorm::H => {
                    let bound = certified
                        .as_ref()
                        .ok()
                        .map(|(set, _)| set.ergodicity.constant("lambda") - 2.0 * sim.alpha);
                    couple(&v, &z, sim, model, bound)?
                }
                CouplingNorm::H1 => {
                    let (set, metric) = certified
                        .as_ref()
                        .map_err(|e| anyhow!("H₁ coupling needs the nonlocal space: {e}"))?;
                    let metric = metric
                        .as_ref()
                        .ok_or_else(|| anyhow!("H₁ coupling needs a definite kernel"))?;
                    let bound = set.monotone.as_ref().and_then(|c| c.margin).map(|m| -m);
                    couple_h1(&v, &z, sim, model, metric, bound)?
                }
            };
            let rows = report
                .times
                .iter()
                .zip(&report.mean_sq_dist)
                .map(|(t, e)| vec![fmt(*t), fmt(e.mean), fmt(e.stderr)]);
            write_csv(&out.path("coupling.csv"), &["time", "mean_sq_dist", "stderr"], rows)?;
            out.json("coupling.json", &report)?;
            Ok(Status::Ok)
        }
        Experiment::Particle { .. } | Experiment::Compare { .. } => unreachable!("handled above"),
    }
}

fn model_and_sim(s: &Setup) -> Result<(&nfield::dynamics::Model<f64>, &nfield::dynamics::SimConfig)> {
    Ok((
        s.model
            .as_ref()
            .ok_or_else(|| anyhow!("experiment needs `activation` and `noise`"))?,
        s.sim.as_ref().ok_or_else(|| anyhow!("experiment needs `dynamics`"))?,
    ))
}

fn spectrum(s: &Setup, eigenvectors: bool, out: &mut Out) -> Result<Status> {
    let dec = decompose(&s.kernel, &s.weight)?;
    let g = form_matrix(&dec.sym, &s.weight);
    let n = g.nrows();
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let rows = order
        .iter()
        .enumerate()
        .map(|(i, j)| vec![i.to_string(), fmt(eig.eigenvalues[*j])]);
    write_csv(&out.path("spectrum.csv"), &["index", "eigenvalue"], rows)?;
    if eigenvectors {
        let mut data = Vec::with_capacity(n * n);
        for j in &order {
            data.extend(eig.eigenvectors.column(*j).iter());
        }
        let p = out.path("eigenvectors.bin");
        write_dense_binary(&p, n, n, &data)?;
    }
    out.json(
        "spectrum.json",
        &json!({
            "definiteness": dec.definiteness,
            "weight_dependent": dec.weight_dependent,
            "operator_norm": operator_norm(&s.kernel, &s.weight)?,
            "grid": grid_summary(&s.grid),
            "cases": case_diagnostics(&s.grid, &s.weight, &s.kernel),
            "eigenvectors": if eigenvectors { "columns of the symmetric form matrix, in eigenvalue order" } else { "not exported" },
        }),
    )?;
    Ok(Status::Ok)
}
