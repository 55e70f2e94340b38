//! Quasi-interpolation built from elementwise L2 projections: project onto
//! cubics element by element, then average the resulting nodal data over
//! vertex stars. Unlike classical Hermite interpolation this needs only
//! point values of the target, and it is stable in L2.

use crate::element::{eval_monomials, pullback, NDOF, REF_CENTROID, REF_VERTICES};
use crate::mesh::ElementMap;
use crate::quadrature::{triangle_rule, TriangleRule};
use crate::space::{Space, VertexDofs};
use crate::Result;
use faer::linalg::solvers::Qr;
use faer::prelude::SolveLstsq;
use faer::Mat;

/// Monomial exponents in the order used throughout the element code:
/// 1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3.
const EXPONENTS: [(u32, u32); NDOF] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

/// Elementwise L2 projector onto cubics, taken with respect to the
/// reference measure so the linear algebra is the same for every element.
/// The projection is computed as a weighted least-squares fit at the volume
/// quadrature nodes; the rule is exact for products of cubics, so this IS
/// the L2(reference) projection, but the QR route squares far less of the
/// monomial basis' conditioning than the normal equations would.
pub struct Projector {
    qr: Qr<f64>,
    rule: TriangleRule,
}

impl Default for Projector {
    fn default() -> Self {
        Self::new()
    }
}

impl Projector {
    pub fn new() -> Self {
        let rule = triangle_rule(10).expect("degree 10 volume rule");
        let vand = Mat::from_fn(rule.points.len(), NDOF, |q, i| {
            let (a, b) = EXPONENTS[i];
            let xh = rule.points[q];
            rule.weights[q].sqrt() * xh[0].powi(a as i32) * xh[1].powi(b as i32)
        });
        Projector { qr: vand.qr(), rule }
    }

    /// Monomial coefficients of the projection of f (composed with the
    /// element map) onto reference cubics.
    pub fn project(&self, map: &ElementMap, f: &impl Fn([f64; 2]) -> f64) -> [f64; NDOF] {
        let rhs = Mat::from_fn(self.rule.points.len(), 1, |q, _| {
            self.rule.weights[q].sqrt() * f(map.jet(self.rule.points[q]).x)
        });
        let sol = self.qr.solve_lstsq(&rhs);
        std::array::from_fn(|i| sol[(i, 0)])
    }
}

/// Accumulates per-element projected nodal data into star averages.
fn averaged_dofs(
    space: &Space,
    f: &impl Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let proj = Projector::new();
    let mut sum = vec![0.0; space.n_dofs];
    let mut cnt = vec![0.0; space.n_dofs];
    for k in 0..space.mesh.triangles.len() {
        let map = space.mesh.element_map(k)?;
        let c = proj.project(&map, f);
        for (lv, &gv) in space.mesh.triangles[k].v.iter().enumerate() {
            let xh = REF_VERTICES[lv];
            let pj = pullback(&map.jet(xh), &eval_monomials(&c, xh));
            match space.vdofs[gv] {
                VertexDofs::Interior { val, gx, gy } => {
                    sum[val] += pj.v;
                    cnt[val] += 1.0;
                    sum[gx] += pj.g[0];
                    cnt[gx] += 1.0;
                    sum[gy] += pj.g[1];
                    cnt[gy] += 1.0;
                }
                VertexDofs::Boundary { val, tang, lperp, .. } => {
                    sum[val] += pj.v;
                    cnt[val] += 1.0;
                    sum[tang] += lperp[0] * pj.g[0] + lperp[1] * pj.g[1];
                    cnt[tang] += 1.0;
                }
            }
        }
        let b = space.bubble[k];
        sum[b] += eval_monomials(&c, REF_CENTROID).v;
        cnt[b] += 1.0;
    }
    Ok(sum
        .iter()
        .zip(&cnt)
        .map(|(&s, &n)| if n > 0.0 { s / n } else { 0.0 })
        .collect())
}

/// Quasi-interpolant on an unconstrained space.
pub fn quasi_interp(space: &Space, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    averaged_dofs(space, &f)
}

/// Quadrature mean value and domain area of a member.
fn mean_and_area(space: &Space, u: &[f64]) -> Result<(f64, f64)> {
    let rule = triangle_rule(10)?;
    let (mut mean, mut area) = (0.0, 0.0);
    for k in 0..space.mesh.triangles.len() {
        let map = space.mesh.element_map(k)?;
        let local = space.local_coeffs(u, k, &map);
        for (&xh, &w) in rule.points.iter().zip(&rule.weights) {
            let mj = map.jet(xh);
            area += w * mj.det;
            mean += w * mj.det * eval_monomials(&local, xh).v;
        }
    }
    Ok((mean, area))
}

/// Quasi-interpolant on a constrained space: the shared oblique-derivative
/// dof is set to the exact constant `c_u`, boundary tangential coefficients
/// come from the star-averaged projected gradients, and the result is
/// shifted to quadrature mean zero.
pub fn quasi_interp_oblique(
    space: &Space,
    f: impl Fn([f64; 2]) -> f64,
    c_u: f64,
) -> Result<Vec<f64>> {
    let mut u = averaged_dofs(space, &f)?;
    if let Some(c) = space.c_dof {
        u[c] = c_u;
    }
    let (mean, area) = mean_and_area(space, &u)?;
    let shift = mean / area;
    let ones = space.ones();
    for (ui, oi) in u.iter_mut().zip(&ones) {
        *ui -= shift * oi;
    }
    Ok(u)
}
