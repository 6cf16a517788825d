//! Quantitative verification suite: every criterion carries its pinned
//! parameters and tolerances and reports one pass/fail line.
//!
//! `nlkg verify-all` and the `acceptance` integration-test target both run
//! through [`run_all`].

use crate::config::RunConfig;
use crate::error::Result;
use crate::integrator::{
    initial_state, scaling_experiment, simulate, tail_experiment, InitProfile, KickBackend,
    SimConfig, Stepper,
};
use crate::nonlin::{
    self, expand_nonlinearity, expansion_degree_norm, MomentumProjection, NonlinearitySpec,
};
use crate::normal_form::{
    lie_flow, loglog_slope, recursive_construct, remainder_probe, NormalFormResult,
};
use crate::poly::{h0_polynomial, random_real_zero_momentum, Polynomial};
use crate::resonance::{measure_scan, NonresParams};
use crate::rng::{substream, Stream};
use crate::spectral::{frequency_direct, frequency_stable, FrequencyTable, PotentialSpec};
use crate::state::{random_real_state, State};
use crate::C64;
use rand::Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:02} {:<28} {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.details,
            self.seconds
        )
    }
}

fn run_one(
    id: u32,
    name: &'static str,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionResult {
    let start = Instant::now();
    let (pass, details) = match body() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name,
        pass,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the full suite; `work_dir` holds scratch artifacts for the
/// reproducibility criterion.
pub fn run_all(work_dir: &Path) -> Result<Vec<CriterionResult>> {
    std::fs::create_dir_all(work_dir)?;
    Ok(vec![
        run_one(1, "frequency-dual-agreement", criterion_frequency_agreement),
        run_one(2, "poisson-algebra-laws", criterion_poisson_laws),
        run_one(3, "vector-field-vs-fd", criterion_vector_field_fd),
        run_one(4, "basis-integrals", criterion_basis_integrals),
        run_one(5, "nonlinearity-norm-decay", criterion_norm_decay),
        run_one(6, "homological-residual", criterion_homological_residual),
        run_one(7, "normal-form-defect-scaling", criterion_defect_scaling),
        run_one(8, "lie-flow-self-inverse", criterion_lie_self_inverse),
        run_one(9, "integrator-laws", criterion_integrator),
        run_one(10, "stability-scaling", criterion_stability_scaling),
        run_one(11, "tail-control", criterion_tail_control),
        run_one(12, "measure-scaling", criterion_measure_scaling),
        run_one(13, "reproducibility", || criterion_reproducibility(work_dir)),
    ])
}

// --- criterion 1 -----------------------------------------------------------

fn criterion_frequency_agreement() -> Result<(bool, String)> {
    let sampled = PotentialSpec::sampled(2.0, 1.0, 512, 101);
    let potentials = [vec![0.0; 512], sampled.coefficients()];
    let mut worst: f64 = 0.0;
    for &c in &[1.0, 10.0, 1e3, 1e6] {
        for pot in &potentials {
            for k in 1..=512usize {
                let a = frequency_direct(k, c, pot[k - 1])?;
                let b = frequency_stable(k, c, pot[k - 1])?;
                worst = worst.max((a - b).abs() / a);
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative branch gap {worst:.2e}")))
}

// --- criterion 2 -----------------------------------------------------------

fn criterion_poisson_laws() -> Result<(bool, String)> {
    let mut rng = substream(2024, Stream::Test, 100);
    let mut failures = Vec::new();
    let mut worst_norm_ratio: f64 = 0.0;
    for i in 0..200 {
        let dp = rng.random_range(2..=5usize);
        let dq = rng.random_range(2..=5usize);
        let p = random_real_zero_momentum(dp, 30, 8, &mut rng);
        let q = random_real_zero_momentum(dq, 30, 8, &mut rng);
        let pq = p.poisson_bracket(&q);
        // antisymmetry
        let anti = pq.add(&q.poisson_bracket(&p));
        if anti.max_coeff() > 1e-12 * (1.0 + pq.max_coeff()) {
            failures.push(format!("antisymmetry at pair {i}"));
        }
        // zero momentum closure
        if !pq.is_zero_momentum() {
            failures.push(format!("momentum closure at pair {i}"));
        }
        // degree law
        if let Some(d) = pq.homogeneous_degree() {
            if d != dp + dq - 2 {
                failures.push(format!("degree law at pair {i}: {d} vs {}", dp + dq - 2));
            }
        }
        // norm law
        let bound = 2.0 * (dp * dq) as f64 * p.poly_norm() * q.poly_norm();
        if bound > 0.0 {
            worst_norm_ratio = worst_norm_ratio.max(pq.poly_norm() / bound);
        }
        if pq.poly_norm() > bound * (1.0 + 1e-12) {
            failures.push(format!("norm law at pair {i}"));
        }
    }
    // Jacobi identity on small triples
    let mut worst_jacobi: f64 = 0.0;
    for _ in 0..50 {
        let p = random_real_zero_momentum(3, 10, 6, &mut rng);
        let q = random_real_zero_momentum(3, 10, 6, &mut rng);
        let r = random_real_zero_momentum(2, 10, 6, &mut rng);
        let mut sum = p.poisson_bracket(&q.poisson_bracket(&r));
        sum.add_scaled(&q.poisson_bracket(&r.poisson_bracket(&p)), C64::new(1.0, 0.0));
        sum.add_scaled(&r.poisson_bracket(&p.poisson_bracket(&q)), C64::new(1.0, 0.0));
        let scale = p
            .poisson_bracket(&q.poisson_bracket(&r))
            .max_coeff()
            .max(1e-300);
        worst_jacobi = worst_jacobi.max(sum.max_coeff() / scale.max(1.0));
    }
    if worst_jacobi > 1e-12 {
        failures.push(format!("jacobi residual {worst_jacobi:.2e}"));
    }
    let pass = failures.is_empty();
    let details = if pass {
        format!(
            "200 pairs ok; worst norm-law ratio {worst_norm_ratio:.3}, jacobi {worst_jacobi:.2e}"
        )
    } else {
        failures.join("; ")
    };
    Ok((pass, details))
}

// --- criterion 3 -----------------------------------------------------------

fn criterion_vector_field_fd() -> Result<(bool, String)> {
    let mut rng = substream(77, Stream::Test, 101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let deg = rng.random_range(2..=5usize);
        let p = random_real_zero_momentum(deg, 12, 6, &mut rng);
        let mut z = State::zero(6);
        for k in 1..=6 {
            z.set_xi(
                k,
                C64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)),
            );
            z.set_eta(
                k,
                C64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)),
            );
        }
        let field = p.vector_field(&z)?;
        let h = 1e-6;
        for k in 1..=6usize {
            // d/deta_k and d/dxi_k by central differences of evaluate
            let mut zp = z.clone();
            zp.set_eta(k, z.eta(k) + h);
            let mut zm = z.clone();
            zm.set_eta(k, z.eta(k) - h);
            let deta = (p.evaluate(&zp)? - p.evaluate(&zm)?) / (2.0 * h);
            let expect_xi = C64::new(0.0, -1.0) * deta;
            let scale = 1.0 + expect_xi.norm();
            worst = worst.max((field.xi(k) - expect_xi).norm() / scale);

            let mut zp = z.clone();
            zp.set_xi(k, z.xi(k) + h);
            let mut zm = z.clone();
            zm.set_xi(k, z.xi(k) - h);
            let dxi = (p.evaluate(&zp)? - p.evaluate(&zm)?) / (2.0 * h);
            let expect_eta = C64::new(0.0, 1.0) * dxi;
            let scale = 1.0 + expect_eta.norm();
            worst = worst.max((field.eta(k) - expect_eta).norm() / scale);
        }
    }
    Ok((worst <= 1e-6, format!("max relative deviation {worst:.2e}")))
}

// --- criterion 4 -----------------------------------------------------------

fn criterion_basis_integrals() -> Result<(bool, String)> {
    let mut rng = substream(4, Stream::Test, 102);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let m = rng.random_range(2..=6usize);
        let ks: Vec<usize> = (0..m).map(|_| rng.random_range(1..=32)).collect();
        let exact = nonlin::sine_product_integral(&ks);
        let quad = nonlin::oracle::quadrature_sine_product(&ks, 200);
        worst = worst.max((exact - quad).abs());
    }
    let sin3 = nonlin::sine_product_integral(&[1, 1, 1]);
    let mixed = nonlin::sine_product_integral(&[1, 2, 3]);
    let pinned_ok = (sin3 - 4.0 / 3.0).abs() <= 1e-14 && mixed == 0.0;
    let pass = worst <= 1e-12 && pinned_ok;
    Ok((
        pass,
        format!("max |exact - quadrature| {worst:.2e}; sin^3 = {sin3:.15}, mixed = {mixed:.1e}"),
    ))
}

// --- criterion 5 -----------------------------------------------------------

/// Pinned decay envelope for the degree norms at K = 16, c = 1, v = 0 with
/// `f_m = 1` for m = 3..7 (all expansion degrees 4..8 active). Measured
/// sups are 3.8e-2 (d=4) down to 1.2e-2 (d=8); the envelope leaves a
/// factor ~3-25 so genuine bookkeeping errors trip it.
const C5_M_BOUND: f64 = 0.05;
const C5_R0: f64 = 0.8;

fn criterion_norm_decay() -> Result<(bool, String)> {
    let spec = NonlinearitySpec::new((3..=7).map(|m| (m, 1.0)).collect(), C5_R0, C5_M_BOUND)?;
    let freq = FrequencyTable::new(1.0, &vec![0.0; 16])?;
    let mut rows = Vec::new();
    let mut pass = true;
    for d in 3..=8usize {
        let norm = expansion_degree_norm(&spec, &freq, d)?;
        let bound = C5_M_BOUND / C5_R0.powi(d as i32);
        if norm > bound {
            pass = false;
        }
        rows.push(format!("d{d}:{norm:.3e}<={bound:.3e}"));
    }
    Ok((pass, rows.join(" ")))
}

// --- criterion 6 -----------------------------------------------------------

fn construct_for_acceptance(
    k_max: usize,
    r: usize,
    n_cutoff: usize,
    taylor: Vec<(u32, f64)>,
    potential_seed: Option<u64>,
) -> Result<(
    FrequencyTable,
    BTreeMap<usize, Polynomial>,
    NormalFormResult,
)> {
    let freq = match potential_seed {
        Some(seed) => {
            let pot = PotentialSpec::sampled(2.0, 1.0, k_max, seed);
            FrequencyTable::from_spec(1.0, &pot)?
        }
        None => FrequencyTable::new(1.0, &vec![0.0; k_max])?,
    };
    let spec = NonlinearitySpec::new(taylor, 0.25, 1.0)?;
    let n_polys = expand_nonlinearity(&spec, &freq, r, MomentumProjection::Strict, 1 << 23)?;
    let res = recursive_construct(&n_polys, r, n_cutoff, &freq, 1e-9, 0.0, 1 << 23)?;
    Ok((freq, n_polys, res))
}

fn criterion_homological_residual() -> Result<(bool, String)> {
    // r = 6, N = 8, K = 12
    let (freq, _, res) =
        construct_for_acceptance(12, 6, 8, vec![(3, 1.0), (4, 0.5)], Some(3))?;
    let h0 = h0_polynomial(&freq);
    let mut worst_residual: f64 = 0.0;
    let mut support_ok = true;
    let mut norm_ok = true;
    for m in 3..=6usize {
        let q = &res.sources[&m];
        let chi_m = &res.chi[&m];
        let zed_m = &res.zed[&m];
        let mut residual = chi_m.poisson_bracket(&h0);
        residual.add_scaled(zed_m, C64::new(-1.0, 0.0));
        residual.add_scaled(q, C64::new(1.0, 0.0));
        let scale = q.poly_norm().max(1e-300);
        worst_residual = worst_residual.max(residual.max_coeff() / scale);
        support_ok &= crate::normal_form::normal_form_predicate(zed_m, 8);
        support_ok &= chi_m
            .terms()
            .all(|(j, _)| !j.is_resonant() && j.mu().map(|mu| mu <= 8).unwrap_or(true));
        norm_ok &= zed_m.poly_norm() <= q.poly_norm() * (1.0 + 1e-15);
    }
    let pass = worst_residual <= 1e-12 && support_ok && norm_ok;
    Ok((
        pass,
        format!(
            "max residual/||Q|| {worst_residual:.2e}; support {}; ||Z||<=||Q|| {}",
            support_ok, norm_ok
        ),
    ))
}

// --- criterion 7 -----------------------------------------------------------

fn criterion_defect_scaling() -> Result<(bool, String)> {
    // r = 4, cubic f, c = 1, v = 0, K = 12. Samples concentrate on the
    // lower half of the modes so the per-mode amplitudes (and with them the
    // genuine degree-6 remainder) stay well above evaluation noise.
    let (freq, n_polys, res) = construct_for_acceptance(12, 4, 6, vec![(3, 1.0)], None)?;
    let chi = res.combined_chi();
    let zed = res.combined_zed();
    let mut pts = Vec::new();
    for (i, &eps) in [1e-2, 3e-3, 1e-3].iter().enumerate() {
        let mut rng = substream(700 + i as u64, Stream::Probe, 0);
        let samples: Vec<State> = (0..3)
            .map(|_| {
                let low = random_real_state(6, 0.5, eps, &mut rng);
                let mut z = State::zero(12);
                for k in 1..=6 {
                    z.set_xi(k, low.xi(k));
                    z.set_eta(k, low.eta(k));
                }
                z
            })
            .collect();
        let defect = remainder_probe(&n_polys, &chi, &zed, &freq, &samples)?;
        pts.push((eps, defect));
    }
    let slope = loglog_slope(&pts).unwrap_or(0.0);
    Ok((
        slope >= 4.5,
        format!("fitted defect slope {slope:.2} (need >= 4.5); points {pts:?}"),
    ))
}

// --- criterion 8 -----------------------------------------------------------

fn criterion_lie_self_inverse() -> Result<(bool, String)> {
    let (_, _, res) = construct_for_acceptance(12, 4, 6, vec![(3, 1.0)], None)?;
    let chi = res.combined_chi();
    let mut rng = substream(8, Stream::Probe, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = random_real_state(12, 0.5, 1e-2, &mut rng);
        let fwd = lie_flow(&chi, &z, 1.0)?;
        let back = lie_flow(&chi, &fwd, -1.0)?;
        worst = worst.max(back.axpy(-1.0, &z).analytic_norm(0.5)?);
    }
    Ok((
        worst <= 1e-10,
        format!("max round-trip norm error {worst:.2e}"),
    ))
}

// --- criterion 9 -----------------------------------------------------------

fn criterion_integrator() -> Result<(bool, String)> {
    // (a) time reversibility per step pair
    let freq16 = FrequencyTable::new(1.0, &vec![0.0; 16])?;
    let backend = KickBackend::spectral(NonlinearitySpec::cubic(), &freq16);
    let cfg = SimConfig {
        k_max: 16,
        dt: 0.01,
        t_final: 1.0,
        rho: 0.5,
        n_tail: 8,
        amplitude: 0.2,
        seed: 9,
        record_stride: 10,
    };
    let z0 = initial_state(&cfg, InitProfile::Analytic);
    let fwd = Stepper::new(&freq16, &backend, cfg.dt);
    let bwd = Stepper::new(&freq16, &backend, -cfg.dt);
    let z1 = fwd.step(&z0, 0.0)?;
    let z2 = bwd.step(&z1, cfg.dt)?;
    let rev_err = z2.axpy(-1.0, &z0).analytic_norm(cfg.rho)?;
    let rev_ok = rev_err <= 1e-12;

    // (b) Hamiltonian drift ratio under dt halving
    let freq12 = FrequencyTable::new(1.0, &vec![0.0; 12])?;
    let backend12 = KickBackend::spectral(NonlinearitySpec::cubic(), &freq12);
    let mut drifts = Vec::new();
    for &dt in &[0.02, 0.01] {
        let c = SimConfig {
            k_max: 12,
            dt,
            t_final: 40.0,
            rho: 0.5,
            n_tail: 6,
            amplitude: 0.3,
            seed: 11,
            record_stride: 5,
        };
        let z = initial_state(&c, InitProfile::Analytic);
        let diag = simulate(&c, &freq12, &backend12, &z)?;
        let h0 = diag.hamiltonian[0];
        drifts.push(
            diag.hamiltonian
                .iter()
                .map(|h| (h - h0).abs())
                .fold(0.0, f64::max),
        );
    }
    let ratio = drifts[0] / drifts[1];
    let ratio_ok = (3.0..=5.0).contains(&ratio);

    // (c) exact action invariance of the linear flow
    let freq8 = FrequencyTable::new(1.0, &vec![0.0; 8])?;
    let c = SimConfig {
        k_max: 8,
        dt: 0.01,
        t_final: 10.0,
        rho: 0.5,
        n_tail: 4,
        amplitude: 0.05,
        seed: 5,
        record_stride: 10,
    };
    let z = initial_state(&c, InitProfile::Analytic);
    let diag = simulate(&c, &freq8, &KickBackend::none(), &z)?;
    let action_drift = diag.sup_action_dist();
    let linear_ok = action_drift <= 1e-12 * c.amplitude;

    let pass = rev_ok && ratio_ok && linear_ok;
    Ok((
        pass,
        format!(
            "reversibility {rev_err:.2e}; drift ratio {ratio:.2} in [3,5]: {ratio_ok}; linear action drift {action_drift:.2e}"
        ),
    ))
}

// --- criterion 10 ----------------------------------------------------------

fn criterion_stability_scaling() -> Result<(bool, String)> {
    let pot = PotentialSpec::sampled(2.0, 1.0, 16, 7);
    let freq = FrequencyTable::from_spec(1.0, &pot)?;
    // confirm the sampled potential is non-resonant at this scale
    let params = NonresParams {
        gamma: 1e-3,
        tau: 5.1,
        r: 1,
        n_cutoff: 8,
    };
    let scan = crate::resonance::min_scaled_divisor(&params, &freq, 1 << 24)?;
    if !scan.satisfies(params.gamma) {
        return Ok((false, "sampled potential violates the divisor floor".into()));
    }
    let backend = KickBackend::spectral(NonlinearitySpec::cubic(), &freq);
    let cfg = SimConfig {
        k_max: 16,
        dt: 1e-2,
        t_final: 1e3,
        rho: 0.5,
        n_tail: 8,
        amplitude: 0.0,
        seed: 10,
        record_stride: 25,
    };
    let report = scaling_experiment(&[1e-2, 3e-3, 1e-3], &cfg, &freq, &backend)?;
    let slope = report.slope.unwrap_or(0.0);
    let pass = report.pass && report.horizon_monotone;
    Ok((
        pass,
        format!(
            "fitted action-distance slope {slope:.2} (need >= 1.5); horizons monotone: {}",
            report.horizon_monotone
        ),
    ))
}

// --- criterion 11 ----------------------------------------------------------

fn criterion_tail_control() -> Result<(bool, String)> {
    let freq = FrequencyTable::new(1.0, &vec![0.0; 24])?;
    let backend = KickBackend::spectral(NonlinearitySpec::cubic(), &freq);
    let cfg = SimConfig {
        k_max: 24,
        dt: 1e-2,
        t_final: 1e3,
        rho: 0.5,
        n_tail: 12,
        amplitude: 1e-2,
        seed: 13,
        record_stride: 50,
    };
    let report = tail_experiment(&cfg, &freq, &backend, None)?;
    let ratio_ok = report.base_ratio <= 4.0;
    let shift = report.abs_ratio / report.expected_abs_ratio;
    let shift_ok = (0.5..=2.0).contains(&shift);
    Ok((
        ratio_ok && shift_ok,
        format!(
            "sup tail / (R e^(-N rho)) = {:.2} (<= 4); N+4 reduction factor {:.3} of e^(-4 rho) (in [0.5, 2])",
            report.base_ratio, shift
        ),
    ))
}

// --- criterion 12 ----------------------------------------------------------

fn criterion_measure_scaling() -> Result<(bool, String)> {
    let mut ratios = Vec::new();
    let mut fractions = Vec::new();
    for &gamma in &[0.02, 0.01, 0.005] {
        let params = NonresParams {
            gamma,
            tau: 5.1,
            r: 1,
            n_cutoff: 4,
        };
        let res = measure_scan(1, 2.0, 1.0, 6, &params, 10_000, 42, 1 << 24)?;
        fractions.push(res.fraction);
        ratios.push(res.fraction / gamma);
    }
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = min > 0.0 && max / min <= 2.0;
    Ok((
        pass,
        format!(
            "fractions {fractions:?}; fraction/gamma spread {:.2} (need <= 2)",
            if min > 0.0 { max / min } else { f64::INFINITY }
        ),
    ))
}

// --- criterion 13 ----------------------------------------------------------

fn criterion_reproducibility(work_dir: &Path) -> Result<(bool, String)> {
    let mut cfg = RunConfig::default();
    cfg.k_max = 8;
    cfg.norms.n_tail = 4;
    cfg.normal_form.r = 4;
    cfg.normal_form.n_cutoff = 4;
    cfg.scan.samples = 500;
    cfg.scan.k_max = 4;
    cfg.scan.n_cutoff = 3;
    cfg.sim.t_final = 5.0;
    cfg.sim.record_stride = 20;
    let a = work_dir.join("repro-a");
    let b = work_dir.join("repro-b");
    for dir in [&a, &b] {
        let _ = std::fs::remove_dir_all(dir);
        crate::pipeline::run_frequencies(&cfg, dir)?;
        crate::pipeline::run_scan(&cfg, dir)?;
        crate::pipeline::run_simulate(&cfg, dir)?;
        crate::pipeline::run_normal_form(&cfg, dir)?;
    }
    let mut mismatches = Vec::new();
    for name in [
        "resolved-config.toml",
        "frequencies.csv",
        "scan.json",
        "diagnostics.csv",
        "simulate-summary.json",
        "normal-form.json",
    ] {
        let x = std::fs::read(a.join(name))?;
        let y = std::fs::read(b.join(name))?;
        if x != y {
            mismatches.push(name);
        }
    }
    let pass = mismatches.is_empty();
    Ok((
        pass,
        if pass {
            "six payloads byte-identical across reruns".into()
        } else {
            format!("payload mismatch: {mismatches:?}")
        },
    ))
}
