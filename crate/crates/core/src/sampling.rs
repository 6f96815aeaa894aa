//! Randomized curves used by sampled certificates and property tests.

use rand::Rng;

use crate::curve_space::{Curve, CurveFamily};
use crate::grid::Grid;

/// A smooth random curve: `h0` plus a derivative made of a few damped waves.
pub fn random_curve<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, scale: f64) -> Curve {
    let h0 = scale * rng.random_range(-1.0..1.0);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                scale * rng.random_range(-1.0..1.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.0..6.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    Curve::from_derivative(
        h0,
        |x| waves.iter().map(|(a, k, w, p)| a * (-k * x).exp() * (w * x + p).cos()).sum(),
        grid,
    )
    .expect("finite random curve")
}

/// A random curve vanishing at the horizon.
pub fn random_curve_vanishing<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, scale: f64) -> Curve {
    let c = random_curve(rng, grid, scale);
    let end = c.node_value(c.len());
    let mut c = c;
    c.add_constant(-end);
    c
}

/// A nonnegative curve; with `touch = Some(ξ*)` its minimum is exactly zero at
/// the node nearest `ξ*`.
pub fn random_spread<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, scale: f64, touch: Option<f64>) -> Curve {
    let k = rng.random_range(0.2..2.0);
    match touch {
        None => {
            let amp = rng.random_range(0.0..0.9);
            let w = rng.random_range(0.0..4.0);
            let s = scale * rng.random_range(0.1..1.0);
            let c = Curve::from_derivative(s * (1.0 + amp), |x| {
                let e = (-k * x).exp();
                s * e * (-k * (1.0 + amp * (w * x).cos()) - amp * w * (w * x).sin())
            }, grid)
            .expect("finite spread");
            lift_to_nonnegative(c, 0.0)
        }
        Some(xs) => {
            let s = scale * rng.random_range(0.5..5.0);
            let c = Curve::from_derivative(s * xs * xs, |x| {
                let e = (-k * x).exp();
                s * e * (2.0 * (x - xs) - k * (x - xs) * (x - xs))
            }, grid)
            .expect("finite spread");
            let v = c.node_values();
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut c = c;
            c.add_constant(-min);
            c
        }
    }
}

fn lift_to_nonnegative(mut c: Curve, floor: f64) -> Curve {
    let min = c.node_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if min < floor {
        c.add_constant(floor - min);
    }
    c
}

/// A random family ordered as `h^1 ≥ … ≥ h^m`, with the riskless curve free.
///
/// With `touch = Some((i, ξ*))` the pair `(i, i+1)` touches at the node
/// nearest `ξ*`.
pub fn random_cone_family<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &Grid,
    m: usize,
    scale: f64,
    touch: Option<(usize, f64)>,
) -> CurveFamily {
    let mut curves = vec![Curve::zero(grid); m + 1];
    curves[0] = random_curve(rng, grid, scale);
    if m >= 1 {
        curves[m] = random_curve(rng, grid, scale);
        for i in (1..m).rev() {
            let t = touch.and_then(|(p, xs)| (p == i).then_some(xs));
            let spread = random_spread(rng, grid, scale, t);
            let mut c = curves[i + 1].clone();
            c.axpy(&spread, 1.0);
            curves[i] = c;
        }
    }
    CurveFamily::new(curves).expect("shared grid")
}

/// Rescales `c` to the given norm.
pub fn with_norm(c: &Curve, rho: f64, target: f64) -> Curve {
    let n = c.norm(rho).unwrap_or(0.0);
    if n == 0.0 {
        c.clone()
    } else {
        c.scaled(target / n)
    }
}

/// Random family of prescribed product norm.
pub fn random_family_with_norm<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, m: usize, rho: f64, target: f64) -> CurveFamily {
    let curves: Vec<Curve> = (0..=m).map(|_| random_curve(rng, grid, 1.0)).collect();
    let f = CurveFamily::new(curves).expect("shared grid");
    let n = f.norm(rho).unwrap_or(1.0);
    let k = if n > 0.0 { target / n } else { 0.0 };
    CurveFamily::new(f.curves().iter().map(|c| c.scaled(k)).collect()).expect("shared grid")
}
