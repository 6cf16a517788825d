//! Run configuration: a flat TOML file with sections per pipeline stage.
//!
//! Reproducibility contract: a run resolves its config (sampling the
//! potential from the seed, filling the `auto` fields), writes the resolved
//! copy next to its outputs, and stamps every JSON payload with the hash of
//! the canonical serialization. Identical resolved configs yield
//! byte-identical payload fields.

use crate::error::{Error, Result};
use crate::integrator::{InitProfile, SimConfig};
use crate::nonlin::{MomentumProjection, NonlinearitySpec};
use crate::resonance::{default_tau, NonresParams};
use crate::spectral::{FrequencyTable, PotentialSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub norms: NormsConfig,
    #[serde(default)]
    pub nonres: NonresConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub normal_form: NormalFormConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
}

fn default_seed() -> u64 {
    42
}
fn default_c() -> f64 {
    1.0
}
fn default_k_max() -> usize {
    16
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub s: f64,
    pub m_scale: f64,
    /// Explicit unit coefficients; absent means "sample from the seed".
    #[serde(default)]
    pub v_prime: Option<Vec<f64>>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            s: 2.0,
            m_scale: 1.0,
            v_prime: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// Pairs `(m, f_m)`, `m >= 3`.
    pub taylor: Vec<(u32, f64)>,
    pub r0: f64,
    pub m_bound: f64,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            taylor: vec![(3, 1.0)],
            r0: 0.25,
            m_bound: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub rho: f64,
    pub n_tail: usize,
}

impl Default for NormsConfig {
    fn default() -> Self {
        NormsConfig {
            rho: 0.5,
            n_tail: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonresConfig {
    pub gamma: f64,
    /// `0` resolves to the decay-based default exponent.
    #[serde(default)]
    pub tau: f64,
    pub r: u32,
}

impl Default for NonresConfig {
    fn default() -> Self {
        NonresConfig {
            gamma: 0.01,
            tau: 0.0,
            r: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub gammas: Vec<f64>,
    pub n_cells: Vec<u32>,
    pub samples: u32,
    /// Mode truncation of the scan (defaults to 6; small since the scan
    /// re-enumerates tuples per cell).
    #[serde(default = "default_scan_k")]
    pub k_max: usize,
    #[serde(default = "default_scan_n")]
    pub n_cutoff: usize,
}

fn default_scan_k() -> usize {
    6
}
fn default_scan_n() -> usize {
    4
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            gammas: vec![0.02, 0.01, 0.005],
            n_cells: vec![1],
            samples: 10_000,
            k_max: default_scan_k(),
            n_cutoff: default_scan_n(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NormalFormConfig {
    pub r: usize,
    pub n_cutoff: usize,
    pub momentum_projection: MomentumProjection,
    /// `0` resolves to half the smallest admissible divisor of the run.
    #[serde(default)]
    pub gamma_floor: f64,
    /// When present, overrides `(r, n_cutoff)` with the log-scaled choices
    /// `N = |log eps|^{1+beta}`, `r = |log eps|^{beta}` (rounded).
    #[serde(default)]
    pub log_scaling: Option<LogScaling>,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        NormalFormConfig {
            r: 4,
            n_cutoff: 8,
            momentum_projection: MomentumProjection::Strict,
            gamma_floor: 0.0,
            log_scaling: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LogScaling {
    pub beta: f64,
    pub epsilon: f64,
}

impl LogScaling {
    /// `(r, N)` from the scaling rule, clamped to workable desk values.
    pub fn resolve(&self) -> (usize, usize) {
        let log = self.epsilon.ln().abs();
        let n = log.powf(1.0 + self.beta).round().max(1.0) as usize;
        let r = log.powf(self.beta).round().max(3.0) as usize;
        (r, n)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Spectral,
    Polynomial,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// `0` resolves to `0.01 / c`.
    #[serde(default)]
    pub dt: f64,
    pub t_final: f64,
    pub amplitude: f64,
    pub record_stride: usize,
    pub backend: BackendKind,
    pub init: InitProfile,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: 0.0,
            t_final: 100.0,
            amplitude: 0.01,
            record_stride: 100,
            backend: BackendKind::Spectral,
            init: InitProfile::Analytic,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_terms: u64,
    pub max_tuples: u64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_terms: 4_000_000,
            max_tuples: 50_000_000,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            c: default_c(),
            k_max: default_k_max(),
            potential: PotentialConfig::default(),
            nonlinearity: NonlinearityConfig::default(),
            norms: NormsConfig::default(),
            nonres: NonresConfig::default(),
            scan: ScanConfig::default(),
            normal_form: NormalFormConfig::default(),
            sim: SimSection::default(),
            output: OutputConfig::default(),
            budget: BudgetConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config {
            field: "file".into(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn fail(field: &str, reason: impl Into<String>) -> Error {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Self::fail("k_max", "need at least one mode"));
        }
        if !(self.c >= 1.0) {
            return Err(Self::fail("c", "need c >= 1"));
        }
        if !(self.potential.s > 0.0) {
            return Err(Self::fail("potential.s", "need s > 0"));
        }
        if !(self.potential.m_scale > 0.0) {
            return Err(Self::fail("potential.m_scale", "need M > 0"));
        }
        if let Some(v) = &self.potential.v_prime {
            if v.len() != self.k_max {
                return Err(Self::fail(
                    "potential.v_prime",
                    format!("expected {} entries, got {}", self.k_max, v.len()),
                ));
            }
            if v.iter().any(|x| !(-0.5..=0.5).contains(x)) {
                return Err(Self::fail("potential.v_prime", "entries outside [-1/2, 1/2]"));
            }
        }
        for &(m, fm) in &self.nonlinearity.taylor {
            if m < 3 && fm != 0.0 {
                return Err(Self::fail(
                    "nonlinearity.taylor",
                    "f must vanish to third order",
                ));
            }
        }
        if !(self.nonlinearity.r0 > 0.0) || !(self.nonlinearity.m_bound > 0.0) {
            return Err(Self::fail("nonlinearity.r0", "need positive R0 and M"));
        }
        if !(self.norms.rho > 0.0) {
            return Err(Self::fail("norms.rho", "need rho > 0"));
        }
        if self.norms.n_tail < 1 || self.norms.n_tail > self.k_max {
            return Err(Self::fail("norms.n_tail", "need 1 <= N <= k_max"));
        }
        if !(0.0..=1.0).contains(&self.nonres.gamma) {
            return Err(Self::fail("nonres.gamma", "need gamma in [0, 1]"));
        }
        if self.nonres.r < 1 {
            return Err(Self::fail("nonres.r", "need r >= 1"));
        }
        if self.scan.samples < 100 {
            return Err(Self::fail("scan.samples", "need at least 100 samples"));
        }
        if self.scan.n_cutoff > self.scan.k_max {
            return Err(Self::fail("scan.n_cutoff", "need N <= scan k_max"));
        }
        let (r, n_cutoff) = self.normal_form_shape();
        if r < 3 || r > 16 {
            return Err(Self::fail("normal_form.r", "need 3 <= r <= 16"));
        }
        if n_cutoff < 1 || n_cutoff > self.k_max {
            return Err(Self::fail("normal_form.n_cutoff", "need 1 <= N <= k_max"));
        }
        if !(self.sim.t_final > 0.0) {
            return Err(Self::fail("sim.t_final", "need positive horizon"));
        }
        if self.sim.dt < 0.0 {
            return Err(Self::fail("sim.dt", "need dt >= 0 (0 = auto)"));
        }
        if self.sim.record_stride == 0 {
            return Err(Self::fail("sim.record_stride", "need stride >= 1"));
        }
        if self.sim.amplitude < 0.0 {
            return Err(Self::fail("sim.amplitude", "need non-negative amplitude"));
        }
        if self.budget.max_terms == 0 || self.budget.max_tuples == 0 {
            return Err(Self::fail("budget.max_terms", "budgets must be positive"));
        }
        Ok(())
    }

    fn normal_form_shape(&self) -> (usize, usize) {
        match self.normal_form.log_scaling {
            Some(ls) => ls.resolve(),
            None => (self.normal_form.r, self.normal_form.n_cutoff),
        }
    }

    /// Materializes sampled and `auto` fields; the result validates and
    /// re-resolves to itself.
    pub fn resolved(&self) -> Result<RunConfig> {
        self.validate()?;
        let mut out = self.clone();
        if out.potential.v_prime.is_none() {
            let spec = PotentialSpec::sampled(
                out.potential.s,
                out.potential.m_scale,
                out.k_max,
                out.seed,
            );
            out.potential.v_prime = Some(spec.unit_coeffs);
        }
        if out.nonres.tau == 0.0 {
            out.nonres.tau = default_tau(out.potential.s);
        }
        if out.sim.dt == 0.0 {
            out.sim.dt = 0.01 / out.c;
        }
        if let Some(ls) = out.normal_form.log_scaling.take() {
            let (r, n) = ls.resolve();
            out.normal_form.r = r;
            out.normal_form.n_cutoff = n.min(out.k_max);
        }
        out.validate()?;
        Ok(out)
    }

    /// Canonical serialization used for hashing (field order is fixed by
    /// the struct layout).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }

    /// Stable key over the fields that determine a cached artifact.
    pub fn cache_key(&self, section: CacheSection) -> String {
        let payload = match section {
            CacheSection::Frequencies => serde_json::json!({
                "section": "frequencies",
                "c": self.c,
                "k_max": self.k_max,
                "potential": self.potential,
            }),
            CacheSection::Expansion => serde_json::json!({
                "section": "expansion",
                "c": self.c,
                "k_max": self.k_max,
                "potential": self.potential,
                "taylor": self.nonlinearity.taylor,
                "max_degree": self.normal_form_shape().0,
                "projection": self.normal_form.momentum_projection,
            }),
            CacheSection::NormalForm => serde_json::json!({
                "section": "normal_form",
                "c": self.c,
                "k_max": self.k_max,
                "potential": self.potential,
                "taylor": self.nonlinearity.taylor,
                "normal_form": self.normal_form,
                "nonres": self.nonres,
            }),
        };
        hex_digest(payload.to_string().as_bytes())
    }

    // --- constructors for the domain objects ---

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let resolved = match &self.potential.v_prime {
            Some(v) => PotentialSpec::new(self.potential.s, self.potential.m_scale, v.clone())?,
            None => PotentialSpec::sampled(
                self.potential.s,
                self.potential.m_scale,
                self.k_max,
                self.seed,
            ),
        };
        Ok(resolved)
    }

    pub fn frequency_table(&self) -> Result<FrequencyTable> {
        FrequencyTable::from_spec(self.c, &self.potential_spec()?)
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::new(
            self.nonlinearity.taylor.clone(),
            self.nonlinearity.r0,
            self.nonlinearity.m_bound,
        )
    }

    pub fn nonres_params(&self, gamma: f64) -> NonresParams {
        NonresParams {
            gamma,
            tau: if self.nonres.tau == 0.0 {
                default_tau(self.potential.s)
            } else {
                self.nonres.tau
            },
            r: self.nonres.r,
            n_cutoff: self.scan.n_cutoff,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            k_max: self.k_max,
            dt: if self.sim.dt == 0.0 {
                0.01 / self.c
            } else {
                self.sim.dt
            },
            t_final: self.sim.t_final,
            rho: self.norms.rho,
            n_tail: self.norms.n_tail,
            amplitude: self.sim.amplitude,
            seed: self.seed,
            record_stride: self.sim.record_stride,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheSection {
    Frequencies,
    Expansion,
    NormalForm,
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
