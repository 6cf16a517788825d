//! Artifact emission for the CLI subcommands.
//!
//! Every run writes the resolved config next to its outputs and stamps JSON
//! payloads (and a leading comment line in CSVs) with the config hash.
//! Failed runs remove their partial outputs.

use crate::config::{BackendKind, CacheSection, RunConfig};
use crate::error::{Error, Result};
use crate::integrator::{
    initial_state, simulate_with_final, tail_experiment, KickBackend, Stepper, TailReport,
};
use crate::nonlin::{expand_nonlinearity, momentum_support_report, MomentumReport};
use crate::normal_form::{recursive_construct, NormalFormResult};
use crate::poly::Polynomial;
use crate::resonance::{
    enumerate_indices, measure_scan, min_scaled_divisor_over, worst_indices, DivisorScan,
    IndexFilter,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Tracks written files so failures can clean up after themselves.
struct Session {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Session {
    fn new(dir: &Path) -> Result<Session> {
        fs::create_dir_all(dir)?;
        Ok(Session {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    fn cleanup(self) {
        for f in self.written {
            let _ = fs::remove_file(f);
        }
    }
}

fn with_session<T>(
    dir: &Path,
    cfg: &RunConfig,
    body: impl FnOnce(&mut Session, &RunConfig) -> Result<T>,
) -> Result<(T, Vec<PathBuf>)> {
    let resolved = cfg.resolved()?;
    let mut session = Session::new(dir)?;
    session.write_bytes("resolved-config.toml", resolved.to_toml().as_bytes())?;
    match body(&mut session, &resolved) {
        Ok(value) => {
            let files = session.written.clone();
            Ok((value, files))
        }
        Err(e) => {
            session.cleanup();
            Err(e)
        }
    }
}

fn csv_with_hash(hash: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}")?;
    body(&mut buf)?;
    Ok(buf)
}

/// `frequencies`: CSV table of `k, lambda_k, omega_k`.
pub fn run_frequencies(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let freq = cfg.frequency_table()?;
        let csv = csv_with_hash(&cfg.config_hash(), |buf| freq.write_csv(buf))?;
        session.write_bytes("frequencies.csv", &csv)?;
        Ok(())
    })?;
    Ok(files)
}

/// Loads cached expansion pieces or recomputes and caches them.
pub fn load_or_expand(
    cfg: &RunConfig,
    cache_dir: &Path,
) -> Result<(BTreeMap<usize, Polynomial>, bool)> {
    let key = cfg.cache_key(CacheSection::Expansion);
    let max_degree = cfg.normal_form.r;
    let mut cached = BTreeMap::new();
    let mut all_hit = true;
    for d in 3..=max_degree {
        let path = cache_dir.join(format!("n{d}_{key}.poly"));
        if path.exists() {
            let file = fs::File::open(&path)?;
            let poly = Polynomial::read_text(std::io::BufReader::new(file))?;
            cached.insert(d, poly);
        } else {
            all_hit = false;
            break;
        }
    }
    if all_hit && !cached.is_empty() {
        return Ok((cached, true));
    }
    let freq = cfg.frequency_table()?;
    let spec = cfg.nonlinearity_spec()?;
    let polys = expand_nonlinearity(
        &spec,
        &freq,
        max_degree,
        cfg.normal_form.momentum_projection,
        cfg.budget.max_terms,
    )?;
    fs::create_dir_all(cache_dir)?;
    for (d, p) in polys.iter() {
        let mut buf = Vec::new();
        p.write_text(&mut buf)?;
        fs::write(cache_dir.join(format!("n{d}_{key}.poly")), &buf)?;
    }
    Ok((polys, false))
}

#[derive(Serialize)]
struct ExpandSummary<'a> {
    config_hash: &'a str,
    cache_key: String,
    cache_hit: bool,
    degrees: Vec<usize>,
    term_counts: Vec<usize>,
    norms: Vec<f64>,
    /// `||N_d|| <= m_bound / r0^d` checks per degree.
    norm_decay_ok: Vec<bool>,
    momentum: Vec<MomentumReport>,
}

/// `expand`: caches the expanded polynomials and emits the momentum report.
pub fn run_expand(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let cache_dir = session.dir.join("cache");
        let (polys, cache_hit) = load_or_expand(cfg, &cache_dir)?;
        for f in fs::read_dir(&cache_dir)? {
            session.written.push(f?.path());
        }
        let hash = cfg.config_hash();
        let mut degrees = Vec::new();
        let mut term_counts = Vec::new();
        let mut norms = Vec::new();
        let mut norm_decay_ok = Vec::new();
        let mut momentum = Vec::new();
        for (d, p) in polys.iter() {
            degrees.push(*d);
            term_counts.push(p.num_terms());
            let norm = p.poly_norm();
            norms.push(norm);
            norm_decay_ok
                .push(norm <= cfg.nonlinearity.m_bound / cfg.nonlinearity.r0.powi(*d as i32));
            momentum.push(momentum_support_report(p));
        }
        session.write_json(
            "expand-summary.json",
            &ExpandSummary {
                config_hash: &hash,
                cache_key: cfg.cache_key(CacheSection::Expansion),
                cache_hit,
                degrees,
                term_counts,
                norms,
                norm_decay_ok,
                momentum,
            },
        )?;
        Ok(())
    })?;
    Ok(files)
}

#[derive(Serialize)]
struct ScanRecord {
    config_hash: String,
    gamma: f64,
    n: u32,
    samples: u32,
    violations: u32,
    fraction: f64,
    ci95: f64,
}

/// `scan`: one JSON record per `(gamma, n)` cell.
pub fn run_scan(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let hash = cfg.config_hash();
        let mut records = Vec::new();
        for &gamma in &cfg.scan.gammas {
            for &n in &cfg.scan.n_cells {
                let params = cfg.nonres_params(gamma);
                let res = measure_scan(
                    n,
                    cfg.potential.s,
                    cfg.potential.m_scale,
                    cfg.scan.k_max,
                    &params,
                    cfg.scan.samples,
                    cfg.seed,
                    cfg.budget.max_tuples,
                )?;
                records.push(ScanRecord {
                    config_hash: hash.clone(),
                    gamma,
                    n,
                    samples: res.samples,
                    violations: res.violations,
                    fraction: res.fraction,
                    ci95: res.ci95,
                });
            }
        }
        session.write_json("scan.json", &records)?;
        Ok(())
    })?;
    Ok(files)
}

/// `divisor-atlas`: CSV of the worst scaled divisors.
pub fn run_divisor_atlas(cfg: &RunConfig, out_dir: &Path, count: usize) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let freq = cfg.frequency_table()?;
        let params = cfg.nonres_params(cfg.nonres.gamma);
        let rows = worst_indices(&params, &freq, count, cfg.budget.max_tuples)?;
        let csv = csv_with_hash(&cfg.config_hash(), |buf| {
            writeln!(buf, "index,omega,mu,scaled")?;
            for (j, omega, mu, scaled) in &rows {
                writeln!(buf, "{},{:.17e},{},{:.17e}", j.format_compact(), omega, mu, scaled)?;
            }
            Ok(())
        })?;
        session.write_bytes("divisor-atlas.csv", &csv)?;
        Ok(())
    })?;
    Ok(files)
}

#[derive(Serialize)]
struct NormalFormSummary {
    config_hash: String,
    gamma_floor: f64,
    degrees: Vec<serde_json::Value>,
}

/// Auto floor: half the smallest admissible divisor over the degrees the
/// construction will need.
pub fn auto_gamma_floor(cfg: &RunConfig) -> Result<f64> {
    let freq = cfg.frequency_table()?;
    let mut min_div = f64::INFINITY;
    for len in 3..=cfg.normal_form.r {
        let indices = enumerate_indices(
            (len - 2) as u32,
            cfg.normal_form.n_cutoff,
            cfg.k_max,
            IndexFilter::NonResonant,
            cfg.budget.max_tuples,
        )?;
        let params = crate::resonance::NonresParams {
            gamma: 0.0,
            tau: 0.0,
            r: (len - 2) as u32,
            n_cutoff: cfg.normal_form.n_cutoff,
        };
        if let DivisorScan::Found { min_raw, .. } =
            min_scaled_divisor_over(&indices, &params, &freq)?
        {
            min_div = min_div.min(min_raw);
        }
    }
    if !min_div.is_finite() {
        return Ok(1e-12);
    }
    Ok((0.5 * min_div).max(1e-14))
}

/// Runs the construction for `cfg`, reusing the expansion cache.
pub fn construct_normal_form(cfg: &RunConfig, cache_dir: &Path) -> Result<NormalFormResult> {
    let freq = cfg.frequency_table()?;
    let (polys, _) = load_or_expand(cfg, cache_dir)?;
    let gamma_floor = if cfg.normal_form.gamma_floor > 0.0 {
        cfg.normal_form.gamma_floor
    } else {
        auto_gamma_floor(cfg)?
    };
    recursive_construct(
        &polys,
        cfg.normal_form.r,
        cfg.normal_form.n_cutoff,
        &freq,
        gamma_floor,
        cfg.nonres_params(cfg.nonres.gamma).tau,
        cfg.budget.max_terms,
    )
}

/// `normal-form`: generator/normal-form polynomial files plus diagnostics.
pub fn run_normal_form(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let cache_dir = session.dir.join("cache");
        let gamma_floor = if cfg.normal_form.gamma_floor > 0.0 {
            cfg.normal_form.gamma_floor
        } else {
            auto_gamma_floor(cfg)?
        };
        let res = construct_normal_form(cfg, &cache_dir)?;
        for f in fs::read_dir(&cache_dir)? {
            session.written.push(f?.path());
        }
        for (d, p) in res.chi.iter() {
            let mut buf = Vec::new();
            p.write_text(&mut buf)?;
            session.write_bytes(&format!("chi{d}.poly"), &buf)?;
        }
        for (d, p) in res.zed.iter() {
            let mut buf = Vec::new();
            p.write_text(&mut buf)?;
            session.write_bytes(&format!("zed{d}.poly"), &buf)?;
        }
        let degrees = res
            .diagnostics
            .iter()
            .map(|d| {
                serde_json::json!({
                    "degree": d.degree,
                    "chi_norm": d.chi_norm,
                    "zed_norm": d.zed_norm,
                    "q_norm": d.q_norm,
                    "min_divisor": d.min_divisor,
                    "min_scaled_divisor": d.min_scaled_divisor,
                    "bound_ratio": d.growth_ratio,
                    "chi_terms": d.chi_terms,
                    "zed_terms": d.zed_terms,
                })
            })
            .collect();
        session.write_json(
            "normal-form.json",
            &NormalFormSummary {
                config_hash: cfg.config_hash(),
                gamma_floor,
                degrees,
            },
        )?;
        Ok(())
    })?;
    Ok(files)
}

pub fn build_backend(cfg: &RunConfig, cache_dir: &Path) -> Result<KickBackend> {
    match cfg.sim.backend {
        BackendKind::Spectral => Ok(KickBackend::spectral(
            cfg.nonlinearity_spec()?,
            &cfg.frequency_table()?,
        )),
        BackendKind::Polynomial => {
            let (polys, _) = load_or_expand(cfg, cache_dir)?;
            Ok(KickBackend::polynomial(&polys))
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    config_hash: String,
    steps: usize,
    records: usize,
    final_norm: f64,
    sup_action_dist: f64,
    sup_tail: f64,
    hamiltonian_drift: f64,
    max_reality_defect: f64,
    phase_warning: Option<String>,
}

/// `simulate`: diagnostics CSV plus a JSON summary.
pub fn run_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let freq = cfg.frequency_table()?;
        let cache_dir = session.dir.join("cache");
        let backend = build_backend(cfg, &cache_dir)?;
        let sim_cfg = cfg.sim_config();
        let z0 = initial_state(&sim_cfg, cfg.sim.init);
        let stepper = Stepper::new(&freq, &backend, sim_cfg.dt);
        let warning = stepper.phase_warning();
        drop(stepper);
        let (diag, z_final) = simulate_with_final(&sim_cfg, &freq, &backend, &z0)?;
        let csv = csv_with_hash(&cfg.config_hash(), |buf| diag.write_csv(buf))?;
        session.write_bytes("diagnostics.csv", &csv)?;
        let mut state_buf = Vec::new();
        z_final.write_text(cfg.c, sim_cfg.rho, &mut state_buf)?;
        session.write_bytes("final-state.txt", &state_buf)?;
        let h0 = diag.hamiltonian.first().copied().unwrap_or(0.0);
        let drift = diag
            .hamiltonian
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max);
        session.write_json(
            "simulate-summary.json",
            &SimulateSummary {
                config_hash: cfg.config_hash(),
                steps: (sim_cfg.t_final / sim_cfg.dt).round() as usize,
                records: diag.t.len(),
                final_norm: diag.norm_rho.last().copied().unwrap_or(0.0),
                sup_action_dist: diag.sup_action_dist(),
                sup_tail: diag.sup_tail(),
                hamiltonian_drift: drift,
                max_reality_defect: diag
                    .reality_defect
                    .iter()
                    .copied()
                    .fold(0.0, f64::max),
                phase_warning: warning,
            },
        )?;
        Ok(())
    })?;
    Ok(files)
}

#[derive(Serialize)]
struct ScalingSummary {
    config_hash: String,
    experiment: &'static str,
    params: serde_json::Value,
    fitted_slope: Option<f64>,
    pass: bool,
    points: Vec<(f64, f64)>,
    horizons: Vec<(f64, f64)>,
    horizon_monotone: bool,
    exact_invariance: bool,
}

/// Amplitude-scaling experiment over the configured ladder; emits the
/// `{experiment, params, fitted_slope, pass}` summary.
pub fn run_scaling_experiment(
    cfg: &RunConfig,
    out_dir: &Path,
    amplitudes: &[f64],
) -> Result<Vec<PathBuf>> {
    let ladder: Vec<f64> = if amplitudes.is_empty() {
        vec![1e-2, 3e-3, 1e-3]
    } else {
        amplitudes.to_vec()
    };
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let freq = cfg.frequency_table()?;
        let cache_dir = session.dir.join("cache");
        let backend = build_backend(cfg, &cache_dir)?;
        let sim_cfg = cfg.sim_config();
        let report = crate::integrator::scaling_experiment(&ladder, &sim_cfg, &freq, &backend)?;
        session.write_json(
            "scaling-experiment.json",
            &ScalingSummary {
                config_hash: cfg.config_hash(),
                experiment: "action_distance_scaling",
                params: serde_json::json!({
                    "amplitudes": ladder,
                    "k_max": sim_cfg.k_max,
                    "dt": sim_cfg.dt,
                    "t_final": sim_cfg.t_final,
                    "rho": sim_cfg.rho,
                    "c": cfg.c,
                    "seed": cfg.seed,
                }),
                fitted_slope: report.slope,
                pass: report.pass,
                points: report.points,
                horizons: report.horizons,
                horizon_monotone: report.horizon_monotone,
                exact_invariance: report.exact_invariance,
            },
        )?;
        Ok(())
    })?;
    Ok(files)
}

#[derive(Serialize)]
struct TailSummary {
    config_hash: String,
    experiment: &'static str,
    params: serde_json::Value,
    pass: bool,
    report: TailReport,
}

/// Tail-control experiment as an artifact (used by `verify-all` and
/// available to scripts through the library).
pub fn run_tail_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ((), files) = with_session(out_dir, cfg, |session, cfg| {
        let freq = cfg.frequency_table()?;
        let cache_dir = session.dir.join("cache");
        let backend = build_backend(cfg, &cache_dir)?;
        let sim_cfg = cfg.sim_config();
        let report = tail_experiment(&sim_cfg, &freq, &backend, None)?;
        let pass = report.base_ratio <= 4.0;
        session.write_json(
            "tail-experiment.json",
            &TailSummary {
                config_hash: cfg.config_hash(),
                experiment: "tail_control",
                params: serde_json::json!({
                    "k_max": sim_cfg.k_max,
                    "n_tail": sim_cfg.n_tail,
                    "rho": sim_cfg.rho,
                    "amplitude": sim_cfg.amplitude,
                    "t_final": sim_cfg.t_final,
                    "seed": cfg.seed,
                }),
                pass,
                report,
            },
        )?;
        Ok(())
    })?;
    Ok(files)
}

/// `verify-all`: runs the acceptance suite, emits the pass/fail matrix and
/// returns the per-criterion results.
pub fn run_verify_all(
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<crate::acceptance::CriterionResult>)> {
    let (results, files) = with_session(out_dir, cfg, |session, cfg| {
        let results = crate::acceptance::run_all(&session.dir.join("work"))?;
        let ok = results.iter().all(|r| r.pass);
        let matrix: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "id": r.id,
                    "name": r.name,
                    "pass": r.pass,
                    "details": r.details,
                })
            })
            .collect();
        session.write_json(
            "acceptance-matrix.json",
            &serde_json::json!({
                "config_hash": cfg.config_hash(),
                "pass": ok,
                "criteria": matrix,
            }),
        )?;
        Ok(results)
    })?;
    Ok((files, results))
}
