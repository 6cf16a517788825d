//! Adaptive Dormand-Prince 5(4) integration of Hamiltonian flows on `State`.
//!
//! Shared by the Lie-transform flow and the desk-scale flow experiments that
//! need an off-grid reference (the production time stepping lives in
//! [`crate::integrator`]).

use crate::error::{Error, Result};
use crate::state::State;

/// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn err_norm(y: &State, ynew: &State, diff: &State, atol: f64, rtol: f64) -> f64 {
    let n = y.k_max();
    let mut acc = 0.0;
    for k in 1..=n {
        for (d, a, b) in [
            (diff.xi(k), y.xi(k), ynew.xi(k)),
            (diff.eta(k), y.eta(k), ynew.eta(k)),
        ] {
            let sc = atol + rtol * a.norm().max(b.norm());
            let e = d.norm() / sc;
            acc += e * e;
        }
    }
    (acc / (2.0 * n as f64)).sqrt()
}

/// Integrates `z' = f(z)` from 0 to `t` (either sign) with local tolerance
/// control. Fails with [`Error::StepCollapse`] when the step size underflows
/// and [`Error::NonFinite`] on NaN/inf states.
pub fn integrate_flow<F>(f: F, z0: &State, t: f64, rtol: f64, atol: f64) -> Result<State>
where
    F: Fn(&State) -> Result<State>,
{
    if t == 0.0 {
        return Ok(z0.clone());
    }
    let dir = t.signum();
    let t_end = t.abs();
    let mut x = 0.0;
    let mut y = z0.clone();
    let mut h = (t_end / 16.0).min(0.1).max(1e-8);
    let h_min = 1e-14 * t_end.max(1.0);
    let mut k1 = f(&y)?;
    let mut steps = 0u64;
    while x < t_end {
        if steps > 4_000_000 {
            return Err(Error::StepCollapse { t: dir * x });
        }
        steps += 1;
        h = h.min(t_end - x);
        // stages
        let mut ks: Vec<State> = Vec::with_capacity(7);
        ks.push(k1.clone());
        for s in 0..6 {
            let mut ystage = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ystage = ystage.axpy(dir * h * A[s][j], kj);
                }
            }
            ks.push(f(&ystage)?);
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in ks.iter().enumerate() {
            if B5[j] != 0.0 {
                y5 = y5.axpy(dir * h * B5[j], kj);
            }
            if B4[j] != 0.0 {
                y4 = y4.axpy(dir * h * B4[j], kj);
            }
        }
        if !y5.is_finite() {
            return Err(Error::NonFinite { t: dir * x });
        }
        let diff = y5.axpy(-1.0, &y4);
        let err = err_norm(&y, &y5, &diff, atol, rtol);
        if err <= 1.0 {
            x += h;
            y = y5;
            // FSAL property of DP5: last stage is f at the accepted point
            k1 = ks.pop().unwrap();
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h < h_min {
            return Err(Error::StepCollapse { t: dir * x });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    #[test]
    fn rotates_harmonic_oscillator() {
        // z' = -i omega z on mode 1
        let omega = 3.0;
        let f = |z: &State| {
            let mut out = State::zero(z.k_max());
            out.set_xi(1, C64::new(0.0, -omega) * z.xi(1));
            out.set_eta(1, C64::new(0.0, omega) * z.eta(1));
            Ok(out)
        };
        let mut z0 = State::zero(1);
        z0.set_xi(1, C64::new(1.0, 0.0));
        z0.set_eta(1, C64::new(1.0, 0.0));
        let z1 = integrate_flow(f, &z0, 2.0, 1e-12, 1e-14).unwrap();
        let expect = C64::from_polar(1.0, -omega * 2.0);
        assert!((z1.xi(1) - expect).norm() < 1e-10);
        // reverse
        let back = integrate_flow(f, &z1, -2.0, 1e-12, 1e-14).unwrap();
        assert!((back.xi(1) - z0.xi(1)).norm() < 1e-10);
    }

    #[test]
    fn zero_time_is_identity() {
        let z0 = State::zero(3);
        let z1 = integrate_flow(|z| Ok(z.clone()), &z0, 0.0, 1e-10, 1e-12).unwrap();
        assert_eq!(z0, z1);
    }
}
