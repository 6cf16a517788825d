//! Potential, eigenvalues, linear frequencies and smoothing multipliers.
//!
//! The eigenbasis is `phi_k(x) = pi^{-1/2} sin(kx)` on `[0, pi]`, so the
//! convolution potential acts diagonally: `lambda_k = k^2 + v_k`. Frequencies
//! are `omega_k = c sqrt(c^2 + lambda_k)`; for `lambda_k < c^2` the
//! algebraically equivalent branch `c^2 + lambda_k / (1 + sqrt(1 + lambda_k/c^2))`
//! is used so that frequency differences keep their significant digits at
//! large `c`.

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Decay exponent, scale and unit coefficients of a convolution potential.
///
/// The stored coefficients are the sampled `v'_k` in `[-1/2, 1/2]`; the
/// physical coefficients `v_k = M (1+k)^{-s} v'_k` are always derived.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialSpec {
    pub s: f64,
    pub m_scale: f64,
    pub unit_coeffs: Vec<f64>,
}

impl PotentialSpec {
    pub fn new(s: f64, m_scale: f64, unit_coeffs: Vec<f64>) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::invalid("s", format!("must be positive, got {s}")));
        }
        if !(m_scale > 0.0) {
            return Err(Error::invalid(
                "m_scale",
                format!("must be positive, got {m_scale}"),
            ));
        }
        for (i, v) in unit_coeffs.iter().enumerate() {
            if !v.is_finite() || *v < -0.5 || *v > 0.5 {
                return Err(Error::invalid(
                    "unit_coeffs",
                    format!("v'_{} = {} outside [-1/2, 1/2]", i + 1, v),
                ));
            }
        }
        Ok(PotentialSpec {
            s,
            m_scale,
            unit_coeffs,
        })
    }

    /// Potential with `v'_k = 0` for all k.
    pub fn zero(s: f64, m_scale: f64, k_max: usize) -> Self {
        PotentialSpec {
            s,
            m_scale,
            unit_coeffs: vec![0.0; k_max],
        }
    }

    /// Draws `v'_k` i.i.d. uniform on `[-1/2, 1/2]` from the potential
    /// substream of `seed`.
    pub fn sampled(s: f64, m_scale: f64, k_max: usize, seed: u64) -> Self {
        let mut rng = substream(seed, Stream::Potential, 0);
        let unit_coeffs = (0..k_max).map(|_| rng.random_range(-0.5..=0.5)).collect();
        PotentialSpec {
            s,
            m_scale,
            unit_coeffs,
        }
    }

    pub fn k_max(&self) -> usize {
        self.unit_coeffs.len()
    }

    /// Derived coefficients `v_k = M (1+k)^{-s} v'_k`, k = 1..K.
    pub fn coefficients(&self) -> Vec<f64> {
        self.unit_coeffs
            .iter()
            .enumerate()
            .map(|(i, vp)| self.m_scale * (1.0 + (i + 1) as f64).powf(-self.s) * vp)
            .collect()
    }
}

/// `v_k = M (1+k)^{-s} v'_k` with the inputs re-validated.
pub fn build_potential(spec: &PotentialSpec) -> Result<Vec<f64>> {
    // re-validate so field-literal construction is still checked
    let checked = PotentialSpec::new(spec.s, spec.m_scale, spec.unit_coeffs.clone())?;
    Ok(checked.coefficients())
}

/// `lambda_k = k^2 + v_k`.
pub fn eigenvalue(k: usize, v_k: f64) -> f64 {
    (k * k) as f64 + v_k
}

fn check_freq_args(k: usize, c: f64, v_k: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "mode numbers start at 1"));
    }
    if !(c >= 1.0) {
        return Err(Error::invalid("c", format!("must be >= 1, got {c}")));
    }
    let lambda = eigenvalue(k, v_k);
    if !(lambda > 0.0) {
        return Err(Error::invalid(
            "lambda",
            format!("lambda_{k} = {lambda} must be positive"),
        ));
    }
    Ok(lambda)
}

/// Direct form `c sqrt(c^2 + lambda)`.
pub fn frequency_direct(k: usize, c: f64, v_k: f64) -> Result<f64> {
    let lambda = check_freq_args(k, c, v_k)?;
    Ok(c * (c * c + lambda).sqrt())
}

/// Cancellation-free form `c^2 + lambda / (1 + sqrt(1 + lambda/c^2))`.
///
/// Writing the frequency as `c^2` plus a remainder keeps differences
/// `omega_k - omega_l` accurate when `c^2` dominates `lambda`.
pub fn frequency_stable(k: usize, c: f64, v_k: f64) -> Result<f64> {
    let lambda = check_freq_args(k, c, v_k)?;
    let x = lambda / (c * c);
    Ok(c * c + lambda / (1.0 + (1.0 + x).sqrt()))
}

/// `omega_k = c sqrt(c^2 + lambda_k)`, evaluated on the branch that avoids
/// cancellation (stable branch whenever `lambda_k < c^2`).
pub fn frequency(k: usize, c: f64, v_k: f64) -> Result<f64> {
    let lambda = check_freq_args(k, c, v_k)?;
    if lambda < c * c {
        frequency_stable(k, c, v_k)
    } else {
        frequency_direct(k, c, v_k)
    }
}

/// Smoothing multiplier `m_k = (c / sqrt(c^2 + lambda_k))^{1/2}`, in `(0, 1]`.
pub fn smoothing_multiplier(k: usize, c: f64, v_k: f64) -> Result<f64> {
    let lambda = check_freq_args(k, c, v_k)?;
    Ok((c / (c * c + lambda).sqrt()).sqrt())
}

/// Frequencies, eigenvalues and conversion weights for modes `1..=K` at a
/// fixed speed `c`.
#[derive(Clone, Debug)]
pub struct FrequencyTable {
    c: f64,
    lambdas: Vec<f64>,
    omegas: Vec<f64>,
    multipliers: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyTable {
    /// Builds the table from the derived potential coefficients `v_k`.
    pub fn new(c: f64, potential: &[f64]) -> Result<Self> {
        let k_max = potential.len();
        let mut lambdas = Vec::with_capacity(k_max);
        let mut omegas = Vec::with_capacity(k_max);
        let mut multipliers = Vec::with_capacity(k_max);
        let mut weights = Vec::with_capacity(k_max);
        for (i, &v) in potential.iter().enumerate() {
            let k = i + 1;
            lambdas.push(eigenvalue(k, v));
            omegas.push(frequency(k, c, v)?);
            let m = smoothing_multiplier(k, c, v)?;
            multipliers.push(m);
            weights.push(1.0 / m);
        }
        Ok(FrequencyTable {
            c,
            lambdas,
            omegas,
            multipliers,
            weights,
        })
    }

    pub fn from_spec(c: f64, spec: &PotentialSpec) -> Result<Self> {
        Self::new(c, &build_potential(spec)?)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k_max(&self) -> usize {
        self.omegas.len()
    }

    pub fn check_mode(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max() {
            Err(Error::IndexOutOfRange {
                index: k,
                max: self.k_max(),
            })
        } else {
            Ok(())
        }
    }

    /// `omega_k`, 1-based. Panics if `k` is out of range.
    #[inline]
    pub fn omega(&self, k: usize) -> f64 {
        self.omegas[k - 1]
    }

    #[inline]
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// Smoothing multiplier `m_k`.
    #[inline]
    pub fn multiplier(&self, k: usize) -> f64 {
        self.multipliers[k - 1]
    }

    /// Conversion weight `w_k = (sqrt(c^2+lambda_k)/c)^{1/2} = 1/m_k`.
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k - 1]
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// CSV dump with columns `k,lambda_k,omega_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,lambda_k,omega_k")?;
        for k in 1..=self.k_max() {
            writeln!(
                w,
                "{},{:.17e},{:.17e}",
                k,
                self.lambda(k),
                self.omega(k)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_zero_case() {
        let spec = PotentialSpec::zero(2.0, 1.0, 8);
        let v = build_potential(&spec).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn potential_direct_values() {
        // s=2, M=1, v'_1 = 1/2 -> v_1 = 0.5 * 2^{-2} = 0.125
        let mut spec = PotentialSpec::zero(2.0, 1.0, 4);
        spec.unit_coeffs[0] = 0.5;
        let v = build_potential(&spec).unwrap();
        assert!((v[0] - 0.125).abs() < 1e-15);

        // s=1, M=4, v'_3 = -1/2 -> v_3 = -2 * 4^{-1} = -0.5
        let mut spec = PotentialSpec::zero(1.0, 4.0, 4);
        spec.unit_coeffs[2] = -0.5;
        let v = build_potential(&spec).unwrap();
        assert!((v[2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn potential_rejects_bad_inputs() {
        assert!(PotentialSpec::new(0.0, 1.0, vec![]).is_err());
        assert!(PotentialSpec::new(2.0, -1.0, vec![]).is_err());
        assert!(PotentialSpec::new(2.0, 1.0, vec![0.6]).is_err());
        assert!(PotentialSpec::new(2.0, 1.0, vec![-0.500001]).is_err());
    }

    #[test]
    fn frequency_values() {
        assert!((frequency(1, 1.0, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((frequency(2, 1.0, 0.0).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        // both branches against 10*sqrt(101)
        let expect = 10.0 * 101f64.sqrt();
        assert!((frequency_direct(1, 10.0, 0.0).unwrap() - expect).abs() < 1e-10);
        assert!((frequency_stable(1, 10.0, 0.0).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn frequency_rejects_nonpositive_lambda() {
        assert!(frequency(1, 1.0, -1.0).is_err());
        assert!(frequency(1, 1.0, -2.0).is_err());
        assert!(frequency(0, 1.0, 0.0).is_err());
    }

    #[test]
    fn branch_agreement_over_grid() {
        // log-grid c in [1, 1e6], k <= 512, v = 0
        for &c in &[1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6] {
            for k in 1..=512usize {
                let a = frequency_direct(k, c, 0.0).unwrap();
                let b = frequency_stable(k, c, 0.0).unwrap();
                assert!(
                    (a - b).abs() <= 1e-12 * a,
                    "branch mismatch at c={c} k={k}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn smoothing_values() {
        let m = smoothing_multiplier(1, 1.0, 0.0).unwrap();
        assert!((m - (1.0 / 2f64.sqrt()).sqrt()).abs() < 1e-14);

        // large-c series: m ~ 1 - lambda/(4c^2)
        let m = smoothing_multiplier(1, 1e3, 0.0).unwrap();
        let series = 1.0 - 1.0 / (4.0 * 1e6);
        assert!((m - series).abs() < 1e-7, "m={m} vs series {series}");

        // asymptotics in k: m ~ (c/k)^{1/2}
        let m = smoothing_multiplier(10_000, 1.0, 0.0).unwrap();
        assert!((m - (1.0 / 1e4f64).sqrt()).abs() < 1e-6);
        assert!(m > 0.0 && m <= 1.0);
    }

    #[test]
    fn frequency_differences_accumulate_at_multiples_of_c() {
        // omega_{l+j} - omega_l -> j*c as l -> inf
        let l = 10_000usize;
        for &c in &[1.0, 10.0] {
            for j in 1..=3usize {
                let d = frequency(l + j, c, 0.0).unwrap() - frequency(l, c, 0.0).unwrap();
                assert!(
                    (d - j as f64 * c).abs() <= 1e-6 * c * j as f64,
                    "c={c} j={j}: diff {d}"
                );
            }
        }
    }

    #[test]
    fn monotone_for_zero_potential() {
        let table = FrequencyTable::new(1.0, &vec![0.0; 64]).unwrap();
        for k in 2..=64 {
            assert!(table.omega(k) > table.omega(k - 1));
        }
    }

    #[test]
    fn table_weights_are_reciprocal_multipliers() {
        let spec = PotentialSpec::sampled(2.0, 1.0, 16, 7);
        let t = FrequencyTable::from_spec(3.0, &spec).unwrap();
        for k in 1..=16 {
            assert!((t.weight(k) * t.multiplier(k) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_roundtrip_values() {
        let t = FrequencyTable::new(1.0, &vec![0.0; 4]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        let last: Vec<&str> = lines[4].split(',').collect();
        assert_eq!(last[0], "4");
        let w: f64 = last[2].parse().unwrap();
        assert!((w - 17f64.sqrt()).abs() < 1e-14);
    }
}
