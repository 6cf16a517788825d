//! Small-divisor enumeration, non-resonance checks and measure estimation.
//!
//! The scanned condition is `|Omega(j)| >= gamma / mu(j)^{tau r}` over
//! non-resonant tuples of length `r + 2` whose third-largest mode stays below
//! the cutoff `N`; the two largest entries are free to range over the whole
//! truncation, which is what keeps the enumeration tractable.

use crate::error::{Error, Result};
use crate::poly::{Mode, MultiIndex};
use crate::rng::{substream, Stream};
use crate::spectral::{FrequencyTable, PotentialSpec};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters of the non-resonance condition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NonresParams {
    pub gamma: f64,
    pub tau: f64,
    pub r: u32,
    /// Cutoff `N` bounding the third-largest mode.
    pub n_cutoff: usize,
}

impl NonresParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", "expected gamma in [0, 1]"));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::invalid("tau", "expected tau >= 0"));
        }
        if self.r < 1 {
            return Err(Error::invalid("r", "expected r >= 1"));
        }
        if self.n_cutoff < 1 {
            return Err(Error::invalid("n_cutoff", "expected N >= 1"));
        }
        Ok(())
    }
}

/// Default exponent `tau = s + 2 + max(s, 2)/2 + 0.1` from the potential
/// decay rate.
pub fn default_tau(s: f64) -> f64 {
    s + 2.0 + s.max(2.0) / 2.0 + 0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFilter {
    All,
    ZeroMomentum,
    NonResonant,
}

/// All canonical multisets of signed modes of length `r + 2` over
/// `1..=k_max` with `mu(j) <= n_cutoff`, each exactly once.
pub fn enumerate_indices(
    r: u32,
    n_cutoff: usize,
    k_max: usize,
    filter: IndexFilter,
    cap: u64,
) -> Result<Vec<MultiIndex>> {
    let len = r as usize + 2;
    // descending canonical mode order: (K,+), (K,-), (K-1,+), ...
    let mut modes: Vec<Mode> = Vec::with_capacity(2 * k_max);
    for k in (1..=k_max).rev() {
        modes.push(Mode::xi(k));
        modes.push(Mode::eta(k));
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        modes: &[Mode],
        len: usize,
        n_cutoff: usize,
        filter: IndexFilter,
        cap: u64,
        start: usize,
        buf: &mut Vec<Mode>,
        out: &mut Vec<MultiIndex>,
        count: &mut u64,
    ) -> Result<()> {
        if buf.len() == len {
            let j = MultiIndex::new(buf.iter().copied());
            let keep = match filter {
                IndexFilter::All => true,
                IndexFilter::ZeroMomentum => j.momentum() == 0,
                IndexFilter::NonResonant => !j.is_resonant(),
            };
            if keep {
                *count += 1;
                if *count > cap {
                    return Err(Error::BudgetExceeded {
                        cap,
                        context: format!("index enumeration at length {len}"),
                    });
                }
                out.push(j);
            }
            return Ok(());
        }
        for i in start..modes.len() {
            // entries at canonical position >= 2 bound the third-largest mode
            if buf.len() >= 2 && modes[i].k() > n_cutoff {
                continue;
            }
            buf.push(modes[i]);
            rec(modes, len, n_cutoff, filter, cap, i, buf, out, count)?;
            buf.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    let mut buf: Vec<Mode> = Vec::with_capacity(len);
    let mut count: u64 = 0;
    rec(
        &modes, len, n_cutoff, filter, cap, 0, &mut buf, &mut out, &mut count,
    )?;
    Ok(out)
}

/// Outcome of a divisor scan.
#[derive(Clone, Debug)]
pub enum DivisorScan {
    /// No admissible index at these parameters.
    Vacuous,
    Found {
        /// `min |Omega(j)| mu(j)^{tau r}`.
        min_scaled: f64,
        /// Raw `|Omega|` at the scaled argmin.
        min_raw: f64,
        argmin: MultiIndex,
    },
}

impl DivisorScan {
    /// The condition holds for `gamma` iff every scaled divisor stays above it.
    pub fn satisfies(&self, gamma: f64) -> bool {
        match self {
            DivisorScan::Vacuous => true,
            DivisorScan::Found { min_scaled, .. } => *min_scaled >= gamma,
        }
    }

    pub fn min_scaled(&self) -> Option<f64> {
        match self {
            DivisorScan::Vacuous => None,
            DivisorScan::Found { min_scaled, .. } => Some(*min_scaled),
        }
    }
}

/// Minimum of `|Omega(j)| mu(j)^{tau r}` over admissible (non-resonant,
/// `mu <= N`) indices of length `r + 2`. Conjugate tuples share `|Omega|`,
/// so only one representative per conjugation class is evaluated.
pub fn min_scaled_divisor(
    params: &NonresParams,
    freq: &FrequencyTable,
    cap: u64,
) -> Result<DivisorScan> {
    params.validate()?;
    let indices = enumerate_indices(
        params.r,
        params.n_cutoff,
        freq.k_max(),
        IndexFilter::NonResonant,
        cap,
    )?;
    min_scaled_divisor_over(&indices, params, freq)
}

/// Scan over a pre-enumerated admissible set (reused across Monte-Carlo
/// samples, where the index set does not depend on the sampled parameters).
pub fn min_scaled_divisor_over(
    indices: &[MultiIndex],
    params: &NonresParams,
    freq: &FrequencyTable,
) -> Result<DivisorScan> {
    let exponent = params.tau * params.r as f64;
    let mut best: Option<(f64, f64, &MultiIndex)> = None;
    for j in indices {
        // conjugation halving: |Omega(j)| = |Omega(bar j)|
        let jc = j.conj();
        if jc < *j {
            continue;
        }
        let raw = j.divisor(freq)?.abs();
        let scaled = raw * (j.mu()? as f64).powf(exponent);
        if best.map(|(s, _, _)| scaled < s).unwrap_or(true) {
            best = Some((scaled, raw, j));
        }
    }
    Ok(match best {
        None => DivisorScan::Vacuous,
        Some((min_scaled, min_raw, argmin)) => DivisorScan::Found {
            min_scaled,
            min_raw,
            argmin: argmin.clone(),
        },
    })
}

/// Worst (smallest scaled divisor) indices, ascending, for the divisor atlas.
pub fn worst_indices(
    params: &NonresParams,
    freq: &FrequencyTable,
    count: usize,
    cap: u64,
) -> Result<Vec<(MultiIndex, f64, usize, f64)>> {
    params.validate()?;
    let indices = enumerate_indices(
        params.r,
        params.n_cutoff,
        freq.k_max(),
        IndexFilter::NonResonant,
        cap,
    )?;
    let exponent = params.tau * params.r as f64;
    let mut rows: Vec<(MultiIndex, f64, usize, f64)> = Vec::new();
    for j in indices {
        if j.conj() < j {
            continue;
        }
        let omega = j.divisor(freq)?;
        let mu = j.mu()?;
        let scaled = omega.abs() * (mu as f64).powf(exponent);
        rows.push((j, omega, mu, scaled));
    }
    rows.sort_by(|a, b| a.3.total_cmp(&b.3).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(count);
    Ok(rows)
}

/// Monte-Carlo estimate of the excluded-set measure on one `c`-cell.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeasureScanResult {
    pub gamma: f64,
    pub n_cell: u32,
    pub samples: u32,
    pub violations: u32,
    pub fraction: f64,
    /// Binomial 95% confidence half-width.
    pub ci95: f64,
}

/// Samples `c` uniform on `[n, n+1]` and `v'_k` i.i.d. uniform on
/// `[-1/2, 1/2]`, then counts samples whose scaled minimum divisor falls
/// below `gamma`. Deterministic in `seed`; samples are independent streams.
#[allow(clippy::too_many_arguments)]
pub fn measure_scan(
    n_cell: u32,
    s: f64,
    m_scale: f64,
    k_max: usize,
    params: &NonresParams,
    samples: u32,
    seed: u64,
    cap: u64,
) -> Result<MeasureScanResult> {
    params.validate()?;
    if samples < 100 {
        return Err(Error::invalid("samples", "need at least 100 samples"));
    }
    let indices = enumerate_indices(
        params.r,
        params.n_cutoff,
        k_max,
        IndexFilter::NonResonant,
        cap,
    )?;
    let violations: u32 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Stream::Scan, i as u64);
            let c = (n_cell as f64 + rng.random_range(0.0..1.0)).max(1.0);
            let unit: Vec<f64> = (0..k_max).map(|_| rng.random_range(-0.5..=0.5)).collect();
            let pot = PotentialSpec {
                s,
                m_scale,
                unit_coeffs: unit,
            };
            let freq = match FrequencyTable::from_spec(c, &pot) {
                Ok(f) => f,
                Err(_) => return 1u32,
            };
            match min_scaled_divisor_over(&indices, params, &freq) {
                Ok(scan) => {
                    if scan.satisfies(params.gamma) {
                        0
                    } else {
                        1
                    }
                }
                Err(_) => 1,
            }
        })
        .sum();
    let fraction = violations as f64 / samples as f64;
    let ci95 = 1.96 * (fraction * (1.0 - fraction) / samples as f64).sqrt();
    Ok(MeasureScanResult {
        gamma: params.gamma,
        n_cell,
        samples,
        violations,
        fraction,
        ci95,
    })
}

/// Proof-regime classification of a divisor with one or two high tail modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    AlphaZero,
    SmallC,
    AlphaPositiveLargeC,
    AlphaNegativeLargeC,
    TwoTailNearLinear,
    TwoTailLargeC,
    TwoTailIntermediate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseDiagnostics {
    pub label: CaseLabel,
    /// Sign sum including the tail signs (`-1` on `l`, `+1` on `m`).
    pub alpha: i64,
    pub lambda_cutoff: f64,
    /// Threshold `sqrt(lambda_N r)` separating the small-c regime.
    pub c_small_threshold: f64,
    /// Root `c^2 = lambda_l / (alpha (alpha + 2))` of the reduced divisor,
    /// present for `alpha > 0` with a single tail.
    pub c2_root: Option<f64>,
}

/// Classifies which estimate regime applies to `Omega(body) - omega_l`
/// (one tail) or `Omega(body) - omega_l + omega_m` (two tails, `m > l`).
pub fn case_diagnostics(
    body: &MultiIndex,
    l: usize,
    m: Option<usize>,
    freq: &FrequencyTable,
    params: &NonresParams,
) -> Result<CaseDiagnostics> {
    freq.check_mode(l)?;
    if let Some(m) = m {
        freq.check_mode(m)?;
        if m <= l {
            return Err(Error::invalid("m", "two-tail case needs m > l"));
        }
    }
    let body_sign: i64 = body.entries().iter().map(|e| e.delta() as i64).sum();
    let c = freq.c();
    let lambda_cutoff = freq.lambda(params.n_cutoff.min(freq.k_max()));
    let c_small_threshold = (lambda_cutoff * params.r as f64).sqrt();
    match m {
        None => {
            let alpha = body_sign - 1;
            let label = if alpha == 0 {
                CaseLabel::AlphaZero
            } else if c <= c_small_threshold {
                CaseLabel::SmallC
            } else if alpha > 0 {
                CaseLabel::AlphaPositiveLargeC
            } else {
                CaseLabel::AlphaNegativeLargeC
            };
            let c2_root =
                (alpha > 0).then(|| freq.lambda(l) / (alpha as f64 * (alpha as f64 + 2.0)));
            Ok(CaseDiagnostics {
                label,
                alpha,
                lambda_cutoff,
                c_small_threshold,
                c2_root,
            })
        }
        Some(m) => {
            let alpha = body_sign;
            let label = if c < freq.lambda(l).powf(1.0 / 6.0) {
                CaseLabel::TwoTailNearLinear
            } else if c > freq.lambda(m) {
                CaseLabel::TwoTailLargeC
            } else {
                CaseLabel::TwoTailIntermediate
            };
            Ok(CaseDiagnostics {
                label,
                alpha,
                lambda_cutoff,
                c_small_threshold,
                c2_root: None,
            })
        }
    }
}
