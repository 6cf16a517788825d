//! Truncated phase-space points `z = (xi, eta)` and their norms.
//!
//! States are dense arrays of length K; the integrator touches every mode
//! every step. "real" (`eta_k = conj(xi_k)`) is a checked property, not a
//! distinct type, so violations are detected rather than assumed away.

use crate::error::{Error, Result};
use crate::poly::Mode;
use crate::spectral::FrequencyTable;
use crate::C64;
use std::io::{BufRead, Write};

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    xi: Vec<C64>,
    eta: Vec<C64>,
}

impl State {
    pub fn zero(k_max: usize) -> State {
        State {
            xi: vec![C64::new(0.0, 0.0); k_max],
            eta: vec![C64::new(0.0, 0.0); k_max],
        }
    }

    pub fn from_parts(xi: Vec<C64>, eta: Vec<C64>) -> Result<State> {
        if xi.len() != eta.len() {
            return Err(Error::LengthMismatch {
                left: xi.len(),
                right: eta.len(),
            });
        }
        Ok(State { xi, eta })
    }

    pub fn k_max(&self) -> usize {
        self.xi.len()
    }

    #[inline]
    pub fn xi(&self, k: usize) -> C64 {
        self.xi[k - 1]
    }

    #[inline]
    pub fn eta(&self, k: usize) -> C64 {
        self.eta[k - 1]
    }

    #[inline]
    pub fn set_xi(&mut self, k: usize, v: C64) {
        self.xi[k - 1] = v;
    }

    #[inline]
    pub fn set_eta(&mut self, k: usize, v: C64) {
        self.eta[k - 1] = v;
    }

    /// Coefficient at a signed mode.
    #[inline]
    pub fn z(&self, m: Mode) -> C64 {
        if m.delta() > 0 {
            self.xi[m.k() - 1]
        } else {
            self.eta[m.k() - 1]
        }
    }

    pub fn xi_slice(&self) -> &[C64] {
        &self.xi
    }

    pub fn eta_slice(&self) -> &[C64] {
        &self.eta
    }

    pub fn xi_mut(&mut self) -> &mut [C64] {
        &mut self.xi
    }

    pub fn eta_mut(&mut self) -> &mut [C64] {
        &mut self.eta
    }

    /// `self + h * dir`, used by integrators.
    pub fn axpy(&self, h: f64, dir: &State) -> State {
        debug_assert_eq!(self.k_max(), dir.k_max());
        let xi = self
            .xi
            .iter()
            .zip(&dir.xi)
            .map(|(a, b)| a + h * b)
            .collect();
        let eta = self
            .eta
            .iter()
            .zip(&dir.eta)
            .map(|(a, b)| a + h * b)
            .collect();
        State { xi, eta }
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.xi.iter_mut().chain(self.eta.iter_mut()) {
            *v *= a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.xi
            .iter()
            .chain(self.eta.iter())
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `sum_k e^{rho k} (|xi_k| + |eta_k|)`.
    pub fn analytic_norm(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
        }
        let mut sum = 0.0;
        for k in 1..=self.k_max() {
            sum += (rho * k as f64).exp() * (self.xi(k).norm() + self.eta(k).norm());
        }
        Ok(sum)
    }

    /// Partial norm over modes `k >= n`.
    pub fn tail_norm(&self, rho: f64, n: usize) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
        }
        if n < 1 {
            return Err(Error::invalid("n", "tail cutoff starts at 1"));
        }
        let mut sum = 0.0;
        for k in n..=self.k_max() {
            sum += (rho * k as f64).exp() * (self.xi(k).norm() + self.eta(k).norm());
        }
        Ok(sum)
    }

    /// Action `I_k = xi_k eta_k`.
    pub fn action(&self, k: usize) -> Result<C64> {
        if k == 0 || k > self.k_max() {
            return Err(Error::IndexOutOfRange {
                index: k,
                max: self.k_max(),
            });
        }
        Ok(self.xi(k) * self.eta(k))
    }

    /// `sum_k e^{rho k} | |xi_k| - |xi'_k| |`.
    pub fn action_distance(&self, other: &State, rho: f64) -> Result<f64> {
        if self.k_max() != other.k_max() {
            return Err(Error::LengthMismatch {
                left: self.k_max(),
                right: other.k_max(),
            });
        }
        let mut sum = 0.0;
        for k in 1..=self.k_max() {
            sum += (rho * k as f64).exp() * (self.xi(k).norm() - other.xi(k).norm()).abs();
        }
        Ok(sum)
    }

    /// Largest violation of `eta_k = conj(xi_k)`.
    pub fn reality_defect(&self) -> f64 {
        self.xi
            .iter()
            .zip(&self.eta)
            .map(|(x, e)| (e - x.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Writes `K c rho` header plus one line `k re(xi) im(xi) re(eta) im(eta)`
    /// per mode at 17 significant digits (bit-exact round trip).
    pub fn write_text<W: Write>(&self, c: f64, rho: f64, mut w: W) -> Result<()> {
        writeln!(w, "state {} {:.17e} {:.17e}", self.k_max(), c, rho)?;
        for k in 1..=self.k_max() {
            let x = self.xi(k);
            let e = self.eta(k);
            writeln!(
                w,
                "{k} {:.17e} {:.17e} {:.17e} {:.17e}",
                x.re, x.im, e.re, e.im
            )?;
        }
        Ok(())
    }

    /// Parses the text format; returns the state and the `(c, rho)` header.
    pub fn read_text<R: BufRead>(r: R) -> Result<(State, f64, f64)> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty state file".into()))??;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "state" {
            return Err(Error::Parse("bad state header".into()));
        }
        let k_max: usize = toks[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let c: f64 = toks[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let rho: f64 = toks[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let mut st = State::zero(k_max);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(Error::Parse(format!("bad state line: {line}")));
            }
            let k: usize = t[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            if k == 0 || k > k_max {
                return Err(Error::IndexOutOfRange { index: k, max: k_max });
            }
            let nums: Vec<f64> = t[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{e}"))))
                .collect::<Result<_>>()?;
            st.set_xi(k, C64::new(nums[0], nums[1]));
            st.set_eta(k, C64::new(nums[2], nums[3]));
        }
        Ok((st, c, rho))
    }
}

/// Random real state with profile `|xi_k| ~ e^{-rho k}` and random phases,
/// scaled so that `analytic_norm(rho) = target_norm` (test and experiment
/// support).
pub fn random_real_state<R: rand::Rng>(
    k_max: usize,
    rho: f64,
    target_norm: f64,
    rng: &mut R,
) -> State {
    let mut st = State::zero(k_max);
    for k in 1..=k_max {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = (-rho * k as f64).exp() * rng.random_range(0.5..1.0);
        let xi = C64::from_polar(amp, phase);
        st.set_xi(k, xi);
        st.set_eta(k, xi.conj());
    }
    if target_norm > 0.0 {
        let norm = st.analytic_norm(rho).expect("rho positive");
        if norm > 0.0 {
            st.scale(target_norm / norm);
        }
    }
    st
}

/// Change of variables from real field coefficients:
/// `xi_k = (q_k w_k - i p_k / w_k) / sqrt(2)`, `eta_k = conj(xi_k)`,
/// with `w_k = (sqrt(c^2+lambda_k)/c)^{1/2}` cached in the table.
pub fn to_normal_coords(q: &[f64], p: &[f64], freq: &FrequencyTable) -> Result<State> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    if q.len() != freq.k_max() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: freq.k_max(),
        });
    }
    let sqrt2 = 2f64.sqrt();
    let mut st = State::zero(q.len());
    for k in 1..=q.len() {
        let w = freq.weight(k);
        let xi = C64::new(q[k - 1] * w / sqrt2, -p[k - 1] / (w * sqrt2));
        st.set_xi(k, xi);
        st.set_eta(k, xi.conj());
    }
    Ok(st)
}

/// Inverse of [`to_normal_coords`]:
/// `q_k = (xi_k + eta_k) / (sqrt(2) w_k)`, `p_k = i w_k (xi_k - eta_k) / sqrt(2)`.
pub fn from_normal_coords(z: &State, freq: &FrequencyTable) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.k_max() != freq.k_max() {
        return Err(Error::LengthMismatch {
            left: z.k_max(),
            right: freq.k_max(),
        });
    }
    let sqrt2 = 2f64.sqrt();
    let i = C64::new(0.0, 1.0);
    let mut q = Vec::with_capacity(z.k_max());
    let mut p = Vec::with_capacity(z.k_max());
    for k in 1..=z.k_max() {
        let w = freq.weight(k);
        q.push(((z.xi(k) + z.eta(k)) / (sqrt2 * w)).re);
        p.push((i * w * (z.xi(k) - z.eta(k)) / sqrt2).re);
    }
    Ok((q, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(k_max: usize, seed: u64, real: bool) -> State {
        let mut rng = substream(seed, Stream::Test, 20);
        let mut st = State::zero(k_max);
        for k in 1..=k_max {
            let x = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            st.set_xi(k, x);
            if real {
                st.set_eta(k, x.conj());
            } else {
                st.set_eta(k, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        st
    }

    #[test]
    fn analytic_norm_examples() {
        let st = State::zero(4);
        assert_eq!(st.analytic_norm(0.5).unwrap(), 0.0);

        let mut st = State::zero(4);
        st.set_xi(1, c(0.2, 0.0));
        st.set_eta(3, c(0.1, 0.0));
        let n = st.analytic_norm(0.5).unwrap();
        let expect = 0.2 * 0.5f64.exp() + 0.1 * 1.5f64.exp();
        assert!((n - expect).abs() < 1e-12);
        assert!((n - 0.7779132).abs() < 1e-6);

        assert!(st.analytic_norm(0.0).is_err());
        assert!(st.analytic_norm(-1.0).is_err());
    }

    #[test]
    fn tail_norm_examples() {
        let mut st = State::zero(4);
        st.set_xi(1, c(0.2, 0.0));
        st.set_eta(3, c(0.1, 0.0));
        // N = 1 equals the full norm
        assert_eq!(
            st.tail_norm(0.5, 1).unwrap(),
            st.analytic_norm(0.5).unwrap()
        );
        let t = st.tail_norm(0.5, 2).unwrap();
        assert!((t - 0.1 * 1.5f64.exp()).abs() < 1e-12);
        assert!((t - 0.4481689).abs() < 1e-6);
    }

    #[test]
    fn action_examples() {
        let mut st = State::zero(2);
        st.set_xi(1, c(0.0, 3.0));
        st.set_eta(1, c(0.0, -3.0));
        assert!((st.action(1).unwrap() - c(9.0, 0.0)).norm() < 1e-15);
        st.set_xi(2, c(1.0, 1.0));
        st.set_eta(2, c(1.0, -1.0));
        assert!((st.action(2).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        assert!(st.action(3).is_err());
        assert!(st.action(0).is_err());
    }

    #[test]
    fn action_distance_examples() {
        let st = random_state(6, 1, true);
        assert_eq!(st.action_distance(&st, 0.5).unwrap(), 0.0);

        // pure phase rotation leaves it at 0
        let mut rotated = st.clone();
        for k in 1..=6 {
            let phase = C64::from_polar(1.0, 0.3 * k as f64);
            rotated.set_xi(k, st.xi(k) * phase);
            rotated.set_eta(k, st.eta(k) * phase.conj());
        }
        assert!(st.action_distance(&rotated, 0.5).unwrap() < 1e-14);

        let mut a = State::zero(2);
        a.set_xi(1, c(0.2, 0.0));
        let mut b = State::zero(2);
        b.set_xi(1, c(0.25, 0.0));
        let d = b.action_distance(&a, 0.5).unwrap();
        assert!((d - 0.05 * 0.5f64.exp()).abs() < 1e-12);
        assert!((d - 0.0824361).abs() < 1e-6);
    }

    #[test]
    fn normal_coords_example() {
        let freq = FrequencyTable::new(1.0, &vec![0.0; 2]).unwrap();
        let q = vec![1.0, 0.0];
        let p = vec![0.0, 0.0];
        let z = to_normal_coords(&q, &p, &freq).unwrap();
        let expect = 2f64.powf(-0.25);
        assert!((z.xi(1) - c(expect, 0.0)).norm() < 1e-12);
        assert!((z.eta(1) - z.xi(1).conj()).norm() == 0.0);
        assert!(z.reality_defect() == 0.0);

        let z0 = to_normal_coords(&vec![0.0; 2], &vec![0.0; 2], &freq).unwrap();
        assert_eq!(z0.analytic_norm(1.0).unwrap(), 0.0);

        assert!(to_normal_coords(&[1.0], &[1.0, 2.0], &freq).is_err());
    }

    #[test]
    fn state_text_roundtrip_is_bit_exact() {
        let st = random_state(8, 99, false);
        let mut buf = Vec::new();
        st.write_text(2.5, 0.75, &mut buf).unwrap();
        let (back, c, rho) = State::read_text(&buf[..]).unwrap();
        assert_eq!(st, back);
        assert_eq!(c, 2.5);
        assert_eq!(rho, 0.75);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn coords_roundtrip(seed in 0u64..300) {
            let mut rng = substream(seed, Stream::Test, 21);
            let k_max = 16usize;
            let freq = FrequencyTable::new(
                1.0 + rng.random_range(0.0..9.0),
                &vec![0.0; k_max],
            ).unwrap();
            let q: Vec<f64> = (0..k_max).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..k_max).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z = to_normal_coords(&q, &p, &freq).unwrap();
            let (q2, p2) = from_normal_coords(&z, &freq).unwrap();
            for k in 0..k_max {
                prop_assert!((q[k] - q2[k]).abs() <= 1e-13 * (1.0 + q[k].abs()));
                prop_assert!((p[k] - p2[k]).abs() <= 1e-13 * (1.0 + p[k].abs()));
            }
        }

        #[test]
        fn tail_inequality(seed in 0u64..300) {
            // R^N_rho(z) <= e^{-N mu} ||z||_{rho+mu}
            let st = random_state(24, seed, false);
            for &rho in &[0.25, 0.5] {
                for &mu in &[0.1, 0.25] {
                    for &n in &[4usize, 8, 16] {
                        let lhs = st.tail_norm(rho, n).unwrap();
                        let rhs = (-(n as f64) * mu).exp()
                            * st.analytic_norm(rho + mu).unwrap();
                        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
                    }
                }
            }
        }

        #[test]
        fn norm_axioms(seed in 0u64..300) {
            let a = random_state(12, seed, false);
            let b = random_state(12, seed + 1000, false);
            let rho = 0.4;
            // triangle
            let sum = a.axpy(1.0, &b);
            prop_assert!(
                sum.analytic_norm(rho).unwrap()
                    <= a.analytic_norm(rho).unwrap() + b.analytic_norm(rho).unwrap() + 1e-12
            );
            // homogeneity at alpha = 2.5
            let mut scaled = a.clone();
            scaled.scale(2.5);
            prop_assert!(
                (scaled.analytic_norm(rho).unwrap() - 2.5 * a.analytic_norm(rho).unwrap()).abs()
                    <= 1e-12 * (1.0 + a.analytic_norm(rho).unwrap())
            );
        }
    }
}
