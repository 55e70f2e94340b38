//! Boundary curves and oblique direction fields.
//!
//! Curves are parametrized anticlockwise by a natural parameter t over one
//! period (not arc length); every per-arc-length quantity divides by the
//! parametric speed |x'(t)|. Sign conventions: the outward normal is
//! (x2', -x1')/|x'| and the signed curvature is
//! chi = (x1'' x2' - x2'' x1')/|x'|^3, so a convex anticlockwise boundary has
//! chi < 0 (unit circle: chi = -1).

use crate::{Error, Result};

pub const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryCurve {
    UnitCircle,
    /// Axis-aligned ellipse x = (a cos t, b sin t).
    Ellipse { a: f64, b: f64 },
}

/// Position and first two parametric derivatives at one parameter value.
#[derive(Clone, Copy, Debug)]
pub struct CurveJet {
    pub x: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

impl BoundaryCurve {
    pub fn period(&self) -> f64 {
        TAU
    }

    pub fn jet(&self, t: f64) -> CurveJet {
        let (a, b) = match *self {
            BoundaryCurve::UnitCircle => (1.0, 1.0),
            BoundaryCurve::Ellipse { a, b } => (a, b),
        };
        let (s, c) = t.sin_cos();
        CurveJet {
            x: [a * c, b * s],
            d1: [-a * s, b * c],
            d2: [-a * c, -b * s],
        }
    }

    /// Third and fourth parametric derivatives. Both built-in curves are
    /// trigonometric, so these are just sign flips of the lower ones.
    pub(crate) fn jet4(&self, t: f64) -> (CurveJet, [f64; 2], [f64; 2]) {
        let j = self.jet(t);
        (j, [-j.d1[0], -j.d1[1]], [-j.d2[0], -j.d2[1]])
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        self.jet(t).x
    }

    pub fn speed(&self, t: f64) -> f64 {
        let j = self.jet(t);
        j.d1[0].hypot(j.d1[1])
    }

    pub fn outward_normal(&self, t: f64) -> [f64; 2] {
        let j = self.jet(t);
        let sp = j.d1[0].hypot(j.d1[1]);
        [j.d1[1] / sp, -j.d1[0] / sp]
    }

    pub fn signed_curvature(&self, t: f64) -> f64 {
        let j = self.jet(t);
        let sp = j.d1[0].hypot(j.d1[1]);
        (j.d2[0] * j.d1[1] - j.d2[1] * j.d1[0]) / (sp * sp * sp)
    }

    /// Total boundary length, by composite Gauss quadrature with panel
    /// doubling until the value settles.
    pub fn total_arc_length(&self) -> f64 {
        let mut panels = 16;
        let mut prev = f64::NAN;
        loop {
            let len = self.integrate_speed(panels);
            if (len - prev).abs() <= 1e-13 * len.max(1.0) || panels > 1 << 16 {
                return len;
            }
            prev = len;
            panels *= 2;
        }
    }

    fn integrate_speed(&self, panels: usize) -> f64 {
        let (gx, gw) = gauss10();
        let h = TAU / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            let t0 = k as f64 * h;
            for (&x, &w) in gx.iter().zip(gw.iter()) {
                acc += w * h * self.speed(t0 + x * h);
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObliqueField {
    /// Outward normal rotated anticlockwise by a fixed angle.
    RotateNormal(f64),
    /// Unit tangent x'/|x'|.
    Tangential,
    /// ell(t) = (cos(2t + pi/4), sin(2t + pi/4)); on the unit circle the
    /// angle from the normal to ell grows linearly in arc length.
    PolarSpiral,
}

/// The direction field and its parametric derivative at one boundary point,
/// together with theta_dot: the arc-length derivative of the oriented angle
/// from the outward normal to ell.
#[derive(Clone, Copy, Debug)]
pub struct Oblique {
    pub ell: [f64; 2],
    pub dell_dt: [f64; 2],
    pub theta_dot: f64,
}

impl ObliqueField {
    pub fn eval(&self, curve: BoundaryCurve, t: f64) -> Oblique {
        match *self {
            ObliqueField::RotateNormal(alpha) => {
                let (n, dn) = normal_jet(curve, t);
                let (sa, ca) = alpha.sin_cos();
                Oblique {
                    ell: [ca * n[0] - sa * n[1], sa * n[0] + ca * n[1]],
                    dell_dt: [ca * dn[0] - sa * dn[1], sa * dn[0] + ca * dn[1]],
                    theta_dot: 0.0,
                }
            }
            ObliqueField::Tangential => {
                let j = curve.jet(t);
                let sp = j.d1[0].hypot(j.d1[1]);
                let dot = j.d1[0] * j.d2[0] + j.d1[1] * j.d2[1];
                Oblique {
                    ell: [j.d1[0] / sp, j.d1[1] / sp],
                    dell_dt: [
                        j.d2[0] / sp - j.d1[0] * dot / (sp * sp * sp),
                        j.d2[1] / sp - j.d1[1] * dot / (sp * sp * sp),
                    ],
                    theta_dot: 0.0,
                }
            }
            ObliqueField::PolarSpiral => {
                let (s, c) = (2.0 * t + std::f64::consts::FRAC_PI_4).sin_cos();
                let j = curve.jet(t);
                let sp = j.d1[0].hypot(j.d1[1]);
                // the angle of ell advances at 2 per unit of t while the
                // normal turns at the (signed) curvature rate
                Oblique {
                    ell: [c, s],
                    dell_dt: [-2.0 * s, 2.0 * c],
                    theta_dot: 2.0 / sp + curve.signed_curvature(t),
                }
            }
        }
    }
}

fn normal_jet(curve: BoundaryCurve, t: f64) -> ([f64; 2], [f64; 2]) {
    let j = curve.jet(t);
    let sp = j.d1[0].hypot(j.d1[1]);
    let dot = j.d1[0] * j.d2[0] + j.d1[1] * j.d2[1];
    let n = [j.d1[1] / sp, -j.d1[0] / sp];
    let dn = [
        j.d2[1] / sp - j.d1[1] * dot / (sp * sp * sp),
        -j.d2[0] / sp + j.d1[0] * dot / (sp * sp * sp),
    ];
    (n, dn)
}

/// Minimum over the boundary of theta_dot - chi. The scheme needs this
/// strictly positive; the error reports the offending minimum.
pub fn chi0(curve: BoundaryCurve, field: ObliqueField) -> Result<f64> {
    let g = |t: f64| field.eval(curve, t).theta_dot - curve.signed_curvature(t);
    let n = 4096;
    let mut best_k = 0;
    let mut best = f64::INFINITY;
    for k in 0..n {
        let v = g(TAU * k as f64 / n as f64);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    // golden-section refinement between the sampled neighbors of the minimum
    let mut lo = TAU * (best_k as f64 - 1.0) / n as f64;
    let mut hi = TAU * (best_k as f64 + 1.0) / n as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = g(x2);
        }
    }
    let m = best.min(f1).min(f2);
    if m <= 0.0 {
        return Err(Error::NonPositiveChi0(m));
    }
    Ok(m)
}

/// Net turns of ell relative to the outward normal over one traversal of the
/// boundary: the accumulated theta_dot ds divided by 2 pi.
pub fn winding_turns(curve: BoundaryCurve, field: ObliqueField) -> f64 {
    let (gx, gw) = gauss10();
    let panels = 256;
    let h = TAU / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let t0 = k as f64 * h;
        for (&x, &w) in gx.iter().zip(gw.iter()) {
            let t = t0 + x * h;
            acc += w * h * field.eval(curve, t).theta_dot * curve.speed(t);
        }
    }
    acc / TAU
}

/// 10-point Gauss-Legendre rule on [0, 1], used for the lightweight
/// geometric integrals in this module.
fn gauss10() -> ([f64; 10], [f64; 10]) {
    crate::quadrature::gauss_legendre_01::<10>()
}
