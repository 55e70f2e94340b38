//! Built-in experiment problems: manufactured solutions on the disk and the
//! 2:1 ellipse, with analytic gradients and Hessians for load construction
//! and error measurement.

use crate::assembly::{Coefficient, Problem};
use crate::geometry::{BoundaryCurve, ObliqueField};
use crate::{Error, Result};
use std::f64::consts::{E, FRAC_PI_4, PI};

/// A manufactured solution: value, gradient, Hessian (xx, xy, yy), and the
/// exact compatibility constant of its oblique boundary data.
#[derive(Clone, Copy, Debug)]
pub struct ExactSolution {
    pub u: fn([f64; 2]) -> f64,
    pub grad: fn([f64; 2]) -> [f64; 2],
    pub hess: fn([f64; 2]) -> [f64; 3],
    pub c: f64,
}

/// Gradient and Hessian of a radial profile g(q), q = |x|^2:
/// grad = 2 g' x, hess = 2 g' I + 4 g'' x x^t.
fn radial_grad(g1: f64, x: [f64; 2]) -> [f64; 2] {
    [2.0 * g1 * x[0], 2.0 * g1 * x[1]]
}

fn radial_hess(g1: f64, g2: f64, x: [f64; 2]) -> [f64; 3] {
    [
        2.0 * g1 + 4.0 * g2 * x[0] * x[0],
        4.0 * g2 * x[0] * x[1],
        2.0 * g1 + 4.0 * g2 * x[1] * x[1],
    ]
}

// u = sin(pi r^2) e^{r^2} - pi(e+1)/(pi^2+1); the constant makes the disk
// mean zero, and l . grad u = -sqrt(2) pi e for the pi/4-rotated normal.
fn exp1_u(x: [f64; 2]) -> f64 {
    let q = x[0] * x[0] + x[1] * x[1];
    (PI * q).sin() * q.exp() - PI * (E + 1.0) / (PI * PI + 1.0)
}

fn exp1_grad(x: [f64; 2]) -> [f64; 2] {
    let q = x[0] * x[0] + x[1] * x[1];
    let g1 = q.exp() * ((PI * q).sin() + PI * (PI * q).cos());
    radial_grad(g1, x)
}

fn exp1_hess(x: [f64; 2]) -> [f64; 3] {
    let q = x[0] * x[0] + x[1] * x[1];
    let (s, c) = ((PI * q).sin(), (PI * q).cos());
    let g1 = q.exp() * (s + PI * c);
    let g2 = q.exp() * ((1.0 - PI * PI) * s + 2.0 * PI * c);
    radial_hess(g1, g2, x)
}

// u = r^6/6 - r^2/2 + 5/24: grad u vanishes on the unit circle, so c = 0
// for any oblique field.
fn exp2_u(x: [f64; 2]) -> f64 {
    let q = x[0] * x[0] + x[1] * x[1];
    q * q * q / 6.0 - q / 2.0 + 5.0 / 24.0
}

fn exp2_grad(x: [f64; 2]) -> [f64; 2] {
    let q = x[0] * x[0] + x[1] * x[1];
    radial_grad((q * q - 1.0) / 2.0, x)
}

fn exp2_hess(x: [f64; 2]) -> [f64; 3] {
    let q = x[0] * x[0] + x[1] * x[1];
    radial_hess((q * q - 1.0) / 2.0, q, x)
}

// u = r^2 e^{r^2} - 1, zero mean on the disk; l . grad u = 2 sqrt(2) e.
fn exp3_u(x: [f64; 2]) -> f64 {
    let q = x[0] * x[0] + x[1] * x[1];
    q * q.exp() - 1.0
}

fn exp3_grad(x: [f64; 2]) -> [f64; 2] {
    let q = x[0] * x[0] + x[1] * x[1];
    radial_grad(q.exp() * (1.0 + q), x)
}

fn exp3_hess(x: [f64; 2]) -> [f64; 3] {
    let q = x[0] * x[0] + x[1] * x[1];
    radial_hess(q.exp() * (1.0 + q), q.exp() * (2.0 + q), x)
}

// u = sin(pi p)/4 - 1/(2 pi) with p = x1^2/4 + x2^2, the level function of
// the 2:1 ellipse; grad u is normal on the boundary, so the tangential
// field gives c = 0.
fn exp4_u(x: [f64; 2]) -> f64 {
    let p = x[0] * x[0] / 4.0 + x[1] * x[1];
    (PI * p).sin() / 4.0 - 1.0 / (2.0 * PI)
}

fn exp4_grad(x: [f64; 2]) -> [f64; 2] {
    let p = x[0] * x[0] / 4.0 + x[1] * x[1];
    let s = PI * (PI * p).cos() / 4.0;
    [s * x[0] / 2.0, s * 2.0 * x[1]]
}

fn exp4_hess(x: [f64; 2]) -> [f64; 3] {
    let p = x[0] * x[0] / 4.0 + x[1] * x[1];
    let s = PI * (PI * p).cos() / 4.0;
    let t = -PI * PI * (PI * p).sin() / 4.0;
    let gp = [x[0] / 2.0, 2.0 * x[1]];
    [
        t * gp[0] * gp[0] + s / 2.0,
        t * gp[0] * gp[1],
        t * gp[1] * gp[1] + s * 2.0,
    ]
}

pub const N_EXPERIMENTS: usize = 4;

/// The four built-in experiments.
pub fn experiment(id: usize) -> Result<Problem> {
    let (curve, field, coef, exact) = match id {
        1 => (
            BoundaryCurve::UnitCircle,
            ObliqueField::RotateNormal(FRAC_PI_4),
            Coefficient::Identity,
            ExactSolution {
                u: exp1_u,
                grad: exp1_grad,
                hess: exp1_hess,
                c: -std::f64::consts::SQRT_2 * PI * E,
            },
        ),
        2 => (
            BoundaryCurve::UnitCircle,
            ObliqueField::PolarSpiral,
            Coefficient::Checkerboard,
            ExactSolution { u: exp2_u, grad: exp2_grad, hess: exp2_hess, c: 0.0 },
        ),
        3 => (
            BoundaryCurve::UnitCircle,
            ObliqueField::RotateNormal(FRAC_PI_4),
            Coefficient::Checkerboard,
            ExactSolution {
                u: exp3_u,
                grad: exp3_grad,
                hess: exp3_hess,
                c: 2.0 * std::f64::consts::SQRT_2 * E,
            },
        ),
        4 => (
            BoundaryCurve::Ellipse { a: 2.0, b: 1.0 },
            ObliqueField::Tangential,
            Coefficient::Checkerboard,
            ExactSolution { u: exp4_u, grad: exp4_grad, hess: exp4_hess, c: 0.0 },
        ),
        _ => return Err(Error::BadConfig(format!("unknown experiment id {id}"))),
    };
    let mut p = Problem::new(curve, field, coef);
    p.exact = Some(exact);
    Ok(p)
}

/// Extra refinements applied below the coarse fan before experiment level 0.
/// The manufactured solutions concentrate their fourth derivatives in a band
/// near the boundary (|D4 u| reaches about 4e3 on the disk), and reported
/// convergence orders are meaningful only once elements resolve that band;
/// starting the level count at h around 0.25 puts every reported step in
/// that regime.
pub const LEVEL_OFFSET: usize = 2;

/// The mesh an experiment uses at a given reported level.
pub fn experiment_mesh(
    curve: BoundaryCurve,
    n_boundary: usize,
    level: usize,
) -> Result<crate::mesh::CurvedMesh> {
    Ok(crate::mesh::coarse_mesh(curve, n_boundary)?.refined(level + LEVEL_OFFSET))
}
