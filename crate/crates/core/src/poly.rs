//! Sparse polynomial algebra over signed Fourier modes.
//!
//! Monomials are indexed by multisets of signed modes `j = (k, delta)`:
//! `delta = +1` selects `xi_k`, `delta = -1` selects `eta_k`. Multi-indices
//! are kept in a canonical descending order so equal monomials merge, and
//! coefficients absorb the multinomial factors of the collapsed orderings.
//!
//! The Poisson bracket follows the convention
//! `{F, G} = i sum_k (dF/deta_k dG/dxi_k - dF/dxi_k dG/deta_k)`,
//! under which `dF/dt = {F, H}` along the flow of `H` and the diagonal
//! quadratic `H0 = sum omega_k xi_k eta_k` satisfies
//! `{z_j, H0} = -i Omega(j) z_j`.

use crate::error::{Error, Result};
use crate::spectral::FrequencyTable;
use crate::state::State;
use crate::C64;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

/// Relative threshold under which bracket output terms are dropped.
pub const PRUNE_REL: f64 = 1e-15;

/// Signed mode label: `+k` is `xi_k`, `-k` is `eta_k` (k >= 1).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Mode(i32);

impl Mode {
    pub fn new(k: usize, delta: i8) -> Mode {
        debug_assert!(k >= 1 && (delta == 1 || delta == -1));
        Mode(if delta > 0 { k as i32 } else { -(k as i32) })
    }

    pub fn xi(k: usize) -> Mode {
        Mode(k as i32)
    }

    pub fn eta(k: usize) -> Mode {
        Mode(-(k as i32))
    }

    #[inline]
    pub fn k(self) -> usize {
        self.0.unsigned_abs() as usize
    }

    #[inline]
    pub fn delta(self) -> i8 {
        if self.0 > 0 {
            1
        } else {
            -1
        }
    }

    /// `bar(j) = (k, -delta)`.
    #[inline]
    pub fn conj(self) -> Mode {
        Mode(-self.0)
    }

    /// Canonical order: descending by `(k, delta)` with `+` before `-`.
    fn canon_key(self) -> (i32, i8) {
        (-(self.0.abs()), -self.delta())
    }
}

impl PartialOrd for Mode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Mode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canon_key().cmp(&other.canon_key())
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 > 0 {
            write!(f, "+{}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Canonical multiset of signed modes with cached momentum and index stats.
#[derive(Clone, Debug)]
pub struct MultiIndex {
    entries: Box<[Mode]>,
    momentum: i64,
}

impl PartialEq for MultiIndex {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}
impl Eq for MultiIndex {}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.entries
            .len()
            .cmp(&other.entries.len())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl std::hash::Hash for MultiIndex {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.entries.hash(state);
    }
}

impl MultiIndex {
    pub fn new(modes: impl IntoIterator<Item = Mode>) -> MultiIndex {
        let mut entries: Vec<Mode> = modes.into_iter().collect();
        entries.sort();
        let momentum = entries
            .iter()
            .map(|m| m.k() as i64 * m.delta() as i64)
            .sum();
        MultiIndex {
            entries: entries.into_boxed_slice(),
            momentum,
        }
    }

    pub fn entries(&self) -> &[Mode] {
        &self.entries
    }

    /// Degree of the associated monomial.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Momentum `M(j) = sum k_i delta_i`.
    pub fn momentum(&self) -> i64 {
        self.momentum
    }

    /// Largest mode number.
    pub fn sup_index(&self) -> usize {
        self.entries.first().map(|m| m.k()).unwrap_or(0)
    }

    /// Third-largest mode number counted with multiplicity (length >= 3).
    pub fn mu(&self) -> Result<usize> {
        if self.entries.len() < 3 {
            return Err(Error::invalid(
                "mu",
                format!("needs length >= 3, got {}", self.entries.len()),
            ));
        }
        Ok(self.entries[2].k())
    }

    /// `N(j) = prod (1 + k_i)`.
    pub fn index_product(&self) -> f64 {
        self.entries.iter().map(|m| 1.0 + m.k() as f64).product()
    }

    /// Entry-wise conjugate, re-canonicalized.
    pub fn conj(&self) -> MultiIndex {
        MultiIndex::new(self.entries.iter().map(|m| m.conj()))
    }

    /// True iff the length is even and the entries pair up as `i` with
    /// `bar(i)` (matching multiplicities).
    pub fn is_resonant(&self) -> bool {
        if self.entries.len() % 2 != 0 {
            return false;
        }
        let mut counts: BTreeMap<(usize, i8), i64> = BTreeMap::new();
        for m in self.entries.iter() {
            *counts.entry((m.k(), m.delta())).or_insert(0) += 1;
        }
        counts
            .iter()
            .all(|(&(k, d), &c)| c == counts.get(&(k, -d)).copied().unwrap_or(0))
    }

    /// Signed frequency sum `Omega(j) = sum delta_i omega_{k_i}`.
    pub fn divisor(&self, freq: &FrequencyTable) -> Result<f64> {
        let mut sum = 0.0;
        for m in self.entries.iter() {
            freq.check_mode(m.k())?;
            sum += m.delta() as f64 * freq.omega(m.k());
        }
        Ok(sum)
    }

    /// Distinct modes with multiplicities, in canonical order.
    pub fn multiplicities(&self) -> Vec<(Mode, usize)> {
        let mut out: Vec<(Mode, usize)> = Vec::new();
        for &m in self.entries.iter() {
            match out.last_mut() {
                Some((last, c)) if *last == m => *c += 1,
                _ => out.push((m, 1)),
            }
        }
        out
    }

    /// Copy with one occurrence of `m` removed (must be present).
    fn without_one(&self, m: Mode) -> MultiIndex {
        let pos = self
            .entries
            .iter()
            .position(|&x| x == m)
            .expect("mode present");
        let mut v: Vec<Mode> = Vec::with_capacity(self.entries.len() - 1);
        v.extend_from_slice(&self.entries[..pos]);
        v.extend_from_slice(&self.entries[pos + 1..]);
        // entries stay sorted after removing one element
        let momentum = self.momentum - m.k() as i64 * m.delta() as i64;
        MultiIndex {
            entries: v.into_boxed_slice(),
            momentum,
        }
    }

    /// Merge of two canonical multisets.
    fn merged(&self, other: &MultiIndex) -> MultiIndex {
        let mut v: Vec<Mode> = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.entries);
        v.extend_from_slice(&other.entries);
        v.sort();
        MultiIndex {
            entries: v.into_boxed_slice(),
            momentum: self.momentum + other.momentum,
        }
    }

    pub fn format_compact(&self) -> String {
        let mut s = String::new();
        for m in self.entries.iter() {
            let _ = write!(s, "{m}");
        }
        s
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.format_compact())
    }
}

/// Sparse polynomial: canonical multi-index -> complex coefficient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<MultiIndex, C64>,
}

impl Polynomial {
    pub fn zero() -> Polynomial {
        Polynomial::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (MultiIndex, C64)>) -> Polynomial {
        let mut p = Polynomial::zero();
        for (j, a) in terms {
            p.add_term(j, a);
        }
        p.drop_zeros();
        p
    }

    /// Single monomial from raw signed modes.
    pub fn monomial(modes: &[Mode], coeff: C64) -> Polynomial {
        Polynomial::from_terms([(MultiIndex::new(modes.iter().copied()), coeff)])
    }

    pub fn add_term(&mut self, j: MultiIndex, a: C64) {
        let slot = self.terms.entry(j).or_insert(C64::new(0.0, 0.0));
        *slot += a;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, j: &MultiIndex) -> C64 {
        self.terms.get(j).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    fn drop_zeros(&mut self) {
        self.terms.retain(|_, a| a.norm_sqr() > 0.0);
    }

    /// Drops terms below `rel * max |a_j|`.
    pub fn prune(&mut self, rel: f64) {
        let max = self.max_coeff();
        if max > 0.0 {
            let floor = rel * max;
            self.terms.retain(|_, a| a.norm() >= floor);
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Degrees present, ascending.
    pub fn degrees(&self) -> Vec<usize> {
        let mut ds: Vec<usize> = self.terms.keys().map(|j| j.len()).collect();
        ds.dedup();
        ds.sort_unstable();
        ds.dedup();
        ds
    }

    /// `Some(d)` iff non-zero and every term has degree `d`.
    pub fn homogeneous_degree(&self) -> Option<usize> {
        let mut it = self.terms.keys();
        let d = it.next()?.len();
        it.all(|j| j.len() == d).then_some(d)
    }

    pub fn homogeneous_part(&self, d: usize) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter(|(j, _)| j.len() == d)
                .map(|(j, a)| (j.clone(), *a))
                .collect(),
        }
    }

    /// `sum_l sup_{deg l} |a_j|` on canonical coefficients.
    pub fn poly_norm(&self) -> f64 {
        let mut sup: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, a) in self.terms.iter() {
            let e = sup.entry(j.len()).or_insert(0.0);
            *e = e.max(a.norm());
        }
        sup.values().sum()
    }

    pub fn is_zero_momentum(&self) -> bool {
        self.terms.keys().all(|j| j.momentum() == 0)
    }

    /// Largest violation of `a_{bar j} = conj(a_j)` over stored terms.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.terms.iter() {
            let b = self.coeff(&j.conj());
            worst = worst.max((b - a.conj()).norm());
        }
        worst
    }

    pub fn scale(&mut self, c: C64) {
        for a in self.terms.values_mut() {
            *a *= c;
        }
    }

    pub fn scaled(&self, c: C64) -> Polynomial {
        let mut p = self.clone();
        p.scale(c);
        p
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &Polynomial, c: C64) {
        for (j, a) in other.terms.iter() {
            self.add_term(j.clone(), a * c);
        }
        self.drop_zeros();
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let mut p = self.clone();
        p.add_scaled(other, C64::new(-1.0, 0.0));
        p
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut p = self.clone();
        p.add_scaled(other, C64::new(1.0, 0.0));
        p
    }

    /// `P(z) = sum a_j prod z_{j_i}`.
    pub fn evaluate(&self, z: &State) -> Result<C64> {
        let k_max = z.k_max();
        let mut acc = C64::new(0.0, 0.0);
        for (j, a) in self.terms.iter() {
            let mut prod = *a;
            for m in j.entries() {
                if m.k() > k_max {
                    return Err(Error::IndexOutOfRange {
                        index: m.k(),
                        max: k_max,
                    });
                }
                prod *= z.z(*m);
            }
            acc += prod;
        }
        Ok(acc)
    }

    /// Gradient `dP/dz_m` for every signed mode, as a dense pair of arrays
    /// indexed by k: `(d/dxi_k, d/deta_k)`.
    pub fn gradient(&self, z: &State) -> Result<(Vec<C64>, Vec<C64>)> {
        let k_max = z.k_max();
        let mut dxi = vec![C64::new(0.0, 0.0); k_max];
        let mut deta = vec![C64::new(0.0, 0.0); k_max];
        for (j, a) in self.terms.iter() {
            let mults = j.multiplicities();
            for (m, c) in mults.iter() {
                if m.k() > k_max {
                    return Err(Error::IndexOutOfRange {
                        index: m.k(),
                        max: k_max,
                    });
                }
                // product over j with one copy of m removed
                let mut rest = *a * (*c as f64);
                let mut skipped = false;
                for e in j.entries() {
                    if !skipped && e == m {
                        skipped = true;
                        continue;
                    }
                    rest *= z.z(*e);
                }
                if m.delta() > 0 {
                    dxi[m.k() - 1] += rest;
                } else {
                    deta[m.k() - 1] += rest;
                }
            }
        }
        Ok((dxi, deta))
    }

    /// Hamiltonian vector field `xi_dot_k = -i dP/deta_k`,
    /// `eta_dot_k = +i dP/dxi_k`, returned as a `State`-shaped tangent.
    pub fn vector_field(&self, z: &State) -> Result<State> {
        let (dxi, deta) = self.gradient(z)?;
        let i = C64::new(0.0, 1.0);
        let k_max = z.k_max();
        let mut out = State::zero(k_max);
        for k in 1..=k_max {
            out.set_xi(k, -i * deta[k - 1]);
            out.set_eta(k, i * dxi[k - 1]);
        }
        Ok(out)
    }

    /// Poisson bracket `{P, Q}` with term pruning.
    pub fn poisson_bracket(&self, other: &Polynomial) -> Polynomial {
        let i = C64::new(0.0, 1.0);
        let mut out = Polynomial::zero();
        let other_mults: Vec<(&MultiIndex, &C64, Vec<(Mode, usize)>)> = other
            .terms
            .iter()
            .map(|(j, a)| (j, a, j.multiplicities()))
            .collect();
        for (u, a) in self.terms.iter() {
            let u_mults = u.multiplicities();
            for (v, b, v_mults) in other_mults.iter() {
                for (mu, cu) in u_mults.iter() {
                    for (mv, cv) in v_mults.iter() {
                        if *mv != mu.conj() {
                            continue;
                        }
                        // contraction over mode h = mu.k():
                        //   mu = (h,-), mv = (h,+):  +i a b cu cv
                        //   mu = (h,+), mv = (h,-):  -i a b cu cv
                        let sign = if mu.delta() < 0 { 1.0 } else { -1.0 };
                        let coeff = i * sign * a * *b * (*cu as f64) * (*cv as f64);
                        let idx = u.without_one(*mu).merged(&v.without_one(*mv));
                        out.add_term(idx, coeff);
                    }
                }
            }
        }
        out.drop_zeros();
        out.prune(PRUNE_REL);
        out
    }

    /// Line-oriented text format: one term per line,
    /// `±k1 ±k2 ... re(a) im(a)`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (j, a) in self.terms.iter() {
            let mut line = String::new();
            for m in j.entries() {
                let _ = write!(line, "{m} ");
            }
            let _ = write!(line, "{:.17e} {:.17e}", a.re, a.im);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Parses the text format, re-canonicalizes and re-checks reality.
    pub fn read_text<R: BufRead>(r: R) -> Result<Polynomial> {
        let mut p = Polynomial::zero();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() < 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected modes and a complex coefficient",
                    lineno + 1
                )));
            }
            let (mode_toks, coeff_toks) = tokens.split_at(tokens.len() - 2);
            let mut modes = Vec::with_capacity(mode_toks.len());
            for t in mode_toks {
                if !(t.starts_with('+') || t.starts_with('-')) {
                    return Err(Error::Parse(format!(
                        "line {}: mode `{t}` must carry +/- prefix",
                        lineno + 1
                    )));
                }
                let v: i32 = t
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                if v == 0 {
                    return Err(Error::Parse(format!("line {}: mode 0 invalid", lineno + 1)));
                }
                modes.push(Mode(v));
            }
            let re: f64 = coeff_toks[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let im: f64 = coeff_toks[1]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            p.add_term(MultiIndex::new(modes), C64::new(re, im));
        }
        p.drop_zeros();
        let defect = p.reality_defect();
        let scale = p.max_coeff().max(1.0);
        if defect > 1e-9 * scale {
            return Err(Error::Parse(format!(
                "reality symmetry violated by {defect:.3e}"
            )));
        }
        Ok(p)
    }
}

/// The diagonal quadratic `H0 = sum_k omega_k xi_k eta_k` as a polynomial.
pub fn h0_polynomial(freq: &FrequencyTable) -> Polynomial {
    Polynomial::from_terms((1..=freq.k_max()).map(|k| {
        (
            MultiIndex::new([Mode::xi(k), Mode::eta(k)]),
            C64::new(freq.omega(k), 0.0),
        )
    }))
}

/// Random real zero-momentum homogeneous polynomial (test support; also used
/// by the acceptance suite).
pub fn random_real_zero_momentum<R: Rng>(
    degree: usize,
    max_terms: usize,
    k_max: usize,
    rng: &mut R,
) -> Polynomial {
    assert!(degree >= 2 && k_max >= 2);
    let mut p = Polynomial::zero();
    let mut attempts = 0;
    let mut added = 0;
    while added < max_terms && attempts < 100 * max_terms {
        attempts += 1;
        let mut modes: Vec<Mode> = (0..degree - 1)
            .map(|_| {
                let k = rng.random_range(1..=k_max);
                let d: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
                Mode::new(k, d)
            })
            .collect();
        let m: i64 = modes.iter().map(|x| x.k() as i64 * x.delta() as i64).sum();
        if m == 0 || m.unsigned_abs() as usize > k_max {
            continue;
        }
        modes.push(Mode::new(m.unsigned_abs() as usize, if m > 0 { -1 } else { 1 }));
        let a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let j = MultiIndex::new(modes);
        let jc = j.conj();
        p.add_term(j, a);
        p.add_term(jc, a.conj());
        added += 1;
    }
    p.prune(0.0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use crate::spectral::FrequencyTable;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn canonical_order_and_equality() {
        let a = MultiIndex::new([Mode::xi(1), Mode::eta(3), Mode::xi(2)]);
        let b = MultiIndex::new([Mode::eta(3), Mode::xi(2), Mode::xi(1)]);
        assert_eq!(a, b);
        let ks: Vec<(usize, i8)> = a.entries().iter().map(|m| (m.k(), m.delta())).collect();
        assert_eq!(ks, vec![(3, -1), (2, 1), (1, 1)]);
        // + sorts before - at equal k
        let m = MultiIndex::new([Mode::eta(2), Mode::xi(2)]);
        assert_eq!(m.entries()[0].delta(), 1);
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(MultiIndex::new([Mode::xi(1), Mode::eta(1)]).momentum(), 0);
        assert_eq!(
            MultiIndex::new([Mode::xi(2), Mode::xi(3), Mode::eta(5)]).momentum(),
            0
        );
        assert_eq!(
            MultiIndex::new([Mode::xi(1), Mode::xi(1), Mode::xi(1)]).momentum(),
            3
        );
    }

    #[test]
    fn resonance_examples() {
        assert!(MultiIndex::new([Mode::xi(1), Mode::eta(1)]).is_resonant());
        assert!(!MultiIndex::new([Mode::xi(1), Mode::xi(1), Mode::eta(1)]).is_resonant());
        assert!(!MultiIndex::new([
            Mode::xi(2),
            Mode::xi(2),
            Mode::eta(2),
            Mode::eta(1)
        ])
        .is_resonant());
        assert!(MultiIndex::new([
            Mode::xi(2),
            Mode::eta(2),
            Mode::xi(7),
            Mode::eta(7)
        ])
        .is_resonant());
        // equal multiplicities required
        assert!(MultiIndex::new([
            Mode::xi(2),
            Mode::xi(2),
            Mode::eta(2),
            Mode::eta(2)
        ])
        .is_resonant());
    }

    #[test]
    fn mu_examples() {
        let j = |ks: &[usize]| MultiIndex::new(ks.iter().map(|&k| Mode::xi(k)));
        assert_eq!(j(&[7, 5, 3, 2]).mu().unwrap(), 3);
        assert_eq!(j(&[7, 7, 7]).mu().unwrap(), 7);
        assert_eq!(j(&[9, 1, 1, 1]).mu().unwrap(), 1);
        assert!(j(&[1, 2]).mu().is_err());
    }

    #[test]
    fn index_product_dominates_sup() {
        let j = MultiIndex::new([Mode::xi(4), Mode::eta(2), Mode::xi(1)]);
        assert!(j.index_product() >= j.sup_index() as f64);
        assert_eq!(j.index_product(), 5.0 * 3.0 * 2.0);
    }

    #[test]
    fn divisor_examples() {
        let freq = FrequencyTable::new(1.0, &vec![0.0; 8]).unwrap();
        let d = MultiIndex::new([Mode::xi(1), Mode::eta(1)])
            .divisor(&freq)
            .unwrap();
        assert_eq!(d, 0.0);
        let d = MultiIndex::new([Mode::xi(2), Mode::eta(1)])
            .divisor(&freq)
            .unwrap();
        assert!((d - (5f64.sqrt() - 2f64.sqrt())).abs() < 1e-14);
        let d = MultiIndex::new([Mode::xi(2), Mode::eta(1), Mode::eta(1)])
            .divisor(&freq)
            .unwrap();
        assert!((d - (5f64.sqrt() - 2.0 * 2f64.sqrt())).abs() < 1e-14);
        // out of range
        assert!(MultiIndex::new([Mode::xi(9)]).divisor(&freq).is_err());
    }

    #[test]
    fn poly_norm_examples() {
        assert_eq!(Polynomial::zero().poly_norm(), 0.0);
        let p = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(3.0, 0.0));
        assert_eq!(p.poly_norm(), 3.0);
        let mut p = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(1.0, 0.0));
        p.add_term(
            MultiIndex::new([Mode::xi(1), Mode::xi(1), Mode::eta(2)]),
            c(0.25, 0.0),
        );
        assert!((p.poly_norm() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn evaluate_examples() {
        let mut z = State::zero(4);
        z.set_xi(1, c(2.0, 0.0));
        z.set_eta(1, c(3.0, 0.0));
        let p = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(1.0, 0.0));
        assert_eq!(p.evaluate(&z).unwrap(), c(6.0, 0.0));
        assert_eq!(Polynomial::zero().evaluate(&z).unwrap(), c(0.0, 0.0));
        let bad = Polynomial::monomial(&[Mode::xi(7)], c(1.0, 0.0));
        assert!(bad.evaluate(&z).is_err());
    }

    #[test]
    fn vector_field_harmonic_oscillator() {
        let omega = 1.7;
        let p = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(omega, 0.0));
        let mut z = State::zero(2);
        z.set_xi(1, c(0.3, -0.2));
        z.set_eta(1, c(0.3, 0.2));
        let v = p.vector_field(&z).unwrap();
        let expect_xi = c(0.0, -omega) * z.xi(1);
        let expect_eta = c(0.0, omega) * z.eta(1);
        assert!((v.xi(1) - expect_xi).norm() < 1e-15);
        assert!((v.eta(1) - expect_eta).norm() < 1e-15);
    }

    #[test]
    fn bracket_worked_example() {
        // {xi1 eta1, xi1^2 eta2} = 2i xi1^2 eta2
        let p = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(1.0, 0.0));
        let q = Polynomial::monomial(&[Mode::xi(1), Mode::xi(1), Mode::eta(2)], c(1.0, 0.0));
        let b = p.poisson_bracket(&q);
        assert_eq!(b.num_terms(), 1);
        let idx = MultiIndex::new([Mode::xi(1), Mode::xi(1), Mode::eta(2)]);
        assert!((b.coeff(&idx) - c(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn bracket_with_self_action_vanishes() {
        let i1 = Polynomial::monomial(&[Mode::xi(1), Mode::eta(1)], c(1.0, 0.0));
        assert!(i1.poisson_bracket(&i1).is_zero());
    }

    #[test]
    fn action_polynomials_commute_with_h0() {
        let freq = FrequencyTable::new(1.3, &vec![0.0; 6]).unwrap();
        let h0 = h0_polynomial(&freq);
        // Z depending only on actions: (xi1 eta1)^2 * xi3 eta3
        let z = Polynomial::monomial(
            &[
                Mode::xi(1),
                Mode::xi(1),
                Mode::eta(1),
                Mode::eta(1),
                Mode::xi(3),
                Mode::eta(3),
            ],
            c(0.7, 0.0),
        );
        assert!(h0.poisson_bracket(&z).is_zero());
    }

    #[test]
    fn h0_bracket_gives_minus_i_omega() {
        // {z_j, H0} = -i Omega(j) z_j under the fixed convention
        let freq = FrequencyTable::new(1.0, &vec![0.0; 4]).unwrap();
        let h0 = h0_polynomial(&freq);
        let j = MultiIndex::new([Mode::xi(2), Mode::eta(1), Mode::eta(1)]);
        let p = Polynomial::from_terms([(j.clone(), c(1.0, 0.0))]);
        let b = p.poisson_bracket(&h0);
        let omega = j.divisor(&freq).unwrap();
        assert_eq!(b.num_terms(), 1);
        assert!((b.coeff(&j) - c(0.0, -omega)).norm() < 1e-14);
    }

    #[test]
    fn text_roundtrip_and_reality_check() {
        let mut rng = substream(11, Stream::Test, 0);
        let p = random_real_zero_momentum(4, 12, 6, &mut rng);
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        let q = Polynomial::read_text(&buf[..]).unwrap();
        assert_eq!(p, q);

        // corrupt reality
        let bad = b"+1 -2 1.0e0 0.5e0\n";
        assert!(Polynomial::read_text(&bad[..]).is_err());
    }

    #[test]
    fn chain_rule_sign_convention() {
        // d/dt Q(z(t)) along the flow of P equals {Q, P}(z(t)).
        let mut rng = substream(3, Stream::Test, 1);
        let p = random_real_zero_momentum(3, 6, 4, &mut rng);
        let q = random_real_zero_momentum(4, 6, 4, &mut rng);
        let mut z = State::zero(4);
        for k in 1..=4 {
            let v = c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            z.set_xi(k, v);
            z.set_eta(k, v.conj());
        }
        // one tiny RK4 step of z' = X_P(z)
        let h = 1e-4;
        let f = |s: &State| p.vector_field(s).unwrap();
        let k1 = f(&z);
        let k2 = f(&z.axpy(h / 2.0, &k1));
        let k3 = f(&z.axpy(h / 2.0, &k2));
        let k4 = f(&z.axpy(h, &k3));
        let mut znew = z.clone();
        for k in 1..=4usize {
            let dx = (k1.xi(k) + 2.0 * k2.xi(k) + 2.0 * k3.xi(k) + k4.xi(k)) * (h / 6.0);
            let de = (k1.eta(k) + 2.0 * k2.eta(k) + 2.0 * k3.eta(k) + k4.eta(k)) * (h / 6.0);
            znew.set_xi(k, z.xi(k) + dx);
            znew.set_eta(k, z.eta(k) + de);
        }
        let numeric = (q.evaluate(&znew).unwrap() - q.evaluate(&z).unwrap()) / h;
        let bracket = q.poisson_bracket(&p).evaluate(&z).unwrap();
        assert!(
            (numeric - bracket).norm() <= 1e-6 * (1.0 + bracket.norm()),
            "chain rule mismatch: {numeric} vs {bracket}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bracket_antisymmetry(seed in 0u64..500) {
            let mut rng = substream(seed, Stream::Test, 2);
            let p = random_real_zero_momentum(3, 8, 5, &mut rng);
            let q = random_real_zero_momentum(4, 8, 5, &mut rng);
            let pq = p.poisson_bracket(&q);
            let qp = q.poisson_bracket(&p);
            let diff = pq.add(&qp);
            prop_assert!(diff.max_coeff() <= 1e-12 * (1.0 + pq.max_coeff()));
        }

        #[test]
        fn bracket_zero_momentum_closure(seed in 0u64..500) {
            let mut rng = substream(seed, Stream::Test, 3);
            let p = random_real_zero_momentum(3, 8, 5, &mut rng);
            let q = random_real_zero_momentum(3, 8, 5, &mut rng);
            prop_assert!(p.poisson_bracket(&q).is_zero_momentum());
        }

        #[test]
        fn bracket_degree_law(seed in 0u64..500) {
            let mut rng = substream(seed, Stream::Test, 4);
            let dp = 2 + (seed % 3) as usize;
            let dq = 2 + ((seed / 3) % 3) as usize;
            let p = random_real_zero_momentum(dp, 6, 5, &mut rng);
            let q = random_real_zero_momentum(dq, 6, 5, &mut rng);
            let b = p.poisson_bracket(&q);
            if let Some(d) = b.homogeneous_degree() {
                prop_assert_eq!(d, dp + dq - 2);
            }
        }

        #[test]
        fn bracket_norm_law(seed in 0u64..500) {
            let mut rng = substream(seed, Stream::Test, 5);
            let dp = 2 + (seed % 4) as usize;
            let dq = 2 + ((seed / 4) % 4) as usize;
            let p = random_real_zero_momentum(dp, 15, 6, &mut rng);
            let q = random_real_zero_momentum(dq, 15, 6, &mut rng);
            let b = p.poisson_bracket(&q);
            let bound = 2.0 * dp as f64 * dq as f64 * p.poly_norm() * q.poly_norm();
            prop_assert!(b.poly_norm() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn bracket_reality_closure(seed in 0u64..500) {
            let mut rng = substream(seed, Stream::Test, 6);
            let p = random_real_zero_momentum(3, 8, 5, &mut rng);
            let q = random_real_zero_momentum(4, 8, 5, &mut rng);
            let b = p.poisson_bracket(&q);
            prop_assert!(b.reality_defect() <= 1e-12 * (1.0 + b.max_coeff()));
        }

        #[test]
        fn evaluation_bound(seed in 0u64..500) {
            // |P(z)| <= ||P|| ||z||_rho^k for homogeneous zero-momentum P
            let mut rng = substream(seed, Stream::Test, 8);
            let deg = 3usize;
            let p = random_real_zero_momentum(deg, 20, 5, &mut rng);
            let mut z = State::zero(5);
            for k in 1..=5 {
                z.set_xi(k, c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
                z.set_eta(k, c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            }
            let rho = 0.3;
            let bound = p.poly_norm() * z.analytic_norm(rho).unwrap().powi(deg as i32);
            prop_assert!(p.evaluate(&z).unwrap().norm() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn vector_field_bound(seed in 0u64..500) {
            // ||X_P(z)||_rho <= 2 k ||P|| ||z||_rho^{k-1}
            let mut rng = substream(seed, Stream::Test, 9);
            let deg = 2 + (seed % 3) as usize;
            let p = random_real_zero_momentum(deg, 15, 5, &mut rng);
            let mut z = State::zero(5);
            for k in 1..=5 {
                z.set_xi(k, c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
                z.set_eta(k, c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            }
            let rho = 0.3;
            let field = p.vector_field(&z).unwrap();
            let bound = 2.0 * deg as f64
                * p.poly_norm()
                * z.analytic_norm(rho).unwrap().powi(deg as i32 - 1);
            prop_assert!(field.analytic_norm(rho).unwrap() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn jacobi_identity(seed in 0u64..200) {
            let mut rng = substream(seed, Stream::Test, 7);
            let p = random_real_zero_momentum(3, 6, 4, &mut rng);
            let q = random_real_zero_momentum(3, 6, 4, &mut rng);
            let r = random_real_zero_momentum(2, 6, 4, &mut rng);
            let mut sum = p.poisson_bracket(&q.poisson_bracket(&r));
            sum.add_scaled(&q.poisson_bracket(&r.poisson_bracket(&p)), C64::new(1.0, 0.0));
            sum.add_scaled(&r.poisson_bracket(&p.poisson_bracket(&q)), C64::new(1.0, 0.0));
            let scale = p.max_coeff() * q.max_coeff() * r.max_coeff();
            prop_assert!(sum.max_coeff() <= 1e-12 * (1.0 + 100.0 * scale));
        }
    }
}
