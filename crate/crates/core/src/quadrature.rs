//! Quadrature rules: Gauss-Legendre on [0, 1] and positive collapsed-tensor
//! rules on the reference triangle conv{(0,0), (1,0), (0,1)}.
//!
//! The triangle rule collapses a tensor Gauss grid through
//! (u, v) -> (u(1-v), uv) whose Jacobian is u. A polynomial of total degree d
//! needs degree d+1 in u (the Jacobian adds one) and d in v, so an n-point
//! Gauss rule per direction with 2n-1 >= d+1 is exact, with positive weights.
//!
//! The rule is deliberately NOT symmetrized: on curved elements the blending
//! derivatives are functions of the angular coordinate x2/(x1+x2), whose
//! Cartesian derivatives blow up at the vertex (0,0) opposite the curved
//! edge. The collapsed coordinates are exactly (u, v) = (x1+x2, angular), so
//! the tensor rule integrates those factors as smooth one-dimensional
//! functions and curved-element quadrature stays near machine accuracy.
//! Symmetrized points would sample the angular direction obliquely and lose
//! four to six digits there.

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct IntervalRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre_01_vec(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        // Tricomi-type initial guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_jet(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_jet(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn gauss_legendre_01<const N: usize>() -> ([f64; N], [f64; N]) {
    let v = gauss_legendre_01_vec(N);
    let mut xs = [0.0; N];
    let mut ws = [0.0; N];
    for (i, (x, w)) in v.into_iter().enumerate() {
        xs[i] = x;
        ws[i] = w;
    }
    (xs, ws)
}

fn legendre_jet(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub fn interval_rule(n: usize) -> Result<IntervalRule> {
    if n == 0 || n > 256 {
        return Err(Error::UnsupportedDegree(n));
    }
    let v = gauss_legendre_01_vec(n);
    Ok(IntervalRule {
        points: v.iter().map(|p| p.0).collect(),
        weights: v.iter().map(|p| p.1).collect(),
    })
}

pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    if degree > 60 {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n = (degree + 3) / 2; // 2n-1 >= degree+1
    let g = gauss_legendre_01_vec(n.max(1));
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(g.len() * g.len());
    let mut weights: Vec<f64> = Vec::with_capacity(g.len() * g.len());
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            points.push([u * (1.0 - v), u * v]);
            weights.push(wu * wv * u);
        }
    }
    Ok(TriangleRule {
        degree,
        points,
        weights,
    })
}
