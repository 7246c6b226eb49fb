//! Test-only oracles shared by the integration suites.

#![allow(dead_code)]

use rand::Rng;
use vpnf::diffcore::{Jet2, HESS_PAIRS};

/// Central finite-difference jet of a scalar function: first derivatives
/// from `(f(x+h) - f(x-h)) / 2h`, diagonal second derivatives from the
/// three-point stencil, mixed ones from the four-point stencil.
pub fn fd_jet(f: &dyn Fn(&[f64; 4]) -> f64, x: &[f64; 4], h: f64) -> Jet2 {
    let shift = |d: &[(usize, f64)]| {
        let mut y = *x;
        for &(i, s) in d {
            y[i] += s;
        }
        f(&y)
    };
    let f0 = f(x);
    let mut jet = Jet2::constant(f0);
    for i in 0..4 {
        jet.grad[i] = (shift(&[(i, h)]) - shift(&[(i, -h)])) / (2.0 * h);
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        jet.hess[k] = if i == j {
            (shift(&[(i, h)]) - 2.0 * f0 + shift(&[(i, -h)])) / (h * h)
        } else {
            (shift(&[(i, h), (j, h)]) - shift(&[(i, h), (j, -h)]) - shift(&[(i, -h), (j, h)])
                + shift(&[(i, -h), (j, -h)]))
                / (4.0 * h * h)
        };
    }
    jet
}

/// `max|a - b| / max|b|`, the norm-wise relative error of `a` against the
/// reference `b`.
pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn random_inputs<R: Rng>(rng: &mut R, n: usize) -> Vec<[f64; 4]> {
    (0..n).map(|_| [0; 4].map(|_: i32| rng.gen_range(-1.0..1.0))).collect()
}

/// Central-difference gradient of `f` with respect to every entry of `x`.
pub fn fd_gradient(x: &[f64], f: &dyn Fn(&[f64]) -> f64, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Small unit-cube model centred at 0.5 with a 0.5 m half extent.
pub fn small_model(head: vpnf::field::Head, depth: usize, width: usize, seed: u64) -> vpnf::field::FieldModel {
    use vpnf::field::{FieldModel, NormalizationRecord};
    use vpnf::physics::Medium;
    let medium = Medium::default();
    let norm = NormalizationRecord::fit([0.5; 3], 0.5, &medium).unwrap();
    FieldModel::new(head, depth, width, 30.0, norm, medium, seed).unwrap()
}

/// Random space-time points in the unit cube over `[0, t_max]`.
pub fn random_points<R: Rng>(rng: &mut R, n: usize, t_max: f64) -> Vec<[f64; 4]> {
    (0..n)
        .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..t_max)])
        .collect()
}
