//! Error measurement against an exact solution and convergence bookkeeping:
//! broken L2/H1/H2 errors, observed orders, and the CSV report.

use crate::assembly::Problem;
use crate::element::{eval_monomials, pullback};
use crate::quadrature::triangle_rule;
use crate::space::Space;
use crate::{Error, Result};

/// Broken error norms of a discrete field against the exact solution.
/// `h1` and `h2` are the gradient and Hessian seminorm errors.
#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Measures u_h - u elementwise. A constant shift (the quadrature mean of
/// the difference) is removed first so the L2 column reflects the
/// zero-mean normalization rather than a shared offset.
pub fn error_norms(space: &Space, u_h: &[f64], problem: &Problem) -> Result<ErrorNorms> {
    let exact = problem.exact.ok_or(Error::MissingExactSolution)?;
    let rule = triangle_rule(problem.volume_degree)?;
    let maps = space.element_maps()?;

    let mut area = 0.0;
    let mut diff_mean = 0.0;
    for (k, map) in maps.iter().enumerate() {
        let local = space.local_coeffs(u_h, k, map);
        for (&xh, &w) in rule.points.iter().zip(&rule.weights) {
            let mj = map.jet(xh);
            let jet = pullback(&mj, &eval_monomials(&local, xh));
            area += w * mj.det;
            diff_mean += w * mj.det * (jet.v - (exact.u)(mj.x));
        }
    }
    let shift = diff_mean / area;

    let (mut l2, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for (k, map) in maps.iter().enumerate() {
        let local = space.local_coeffs(u_h, k, map);
        for (&xh, &w) in rule.points.iter().zip(&rule.weights) {
            let mj = map.jet(xh);
            let jet = pullback(&mj, &eval_monomials(&local, xh));
            let wd = w * mj.det;
            let dv = jet.v - (exact.u)(mj.x) - shift;
            let ge = (exact.grad)(mj.x);
            let dg = [jet.g[0] - ge[0], jet.g[1] - ge[1]];
            let he = (exact.hess)(mj.x);
            let dh = [jet.h[0] - he[0], jet.h[1] - he[1], jet.h[2] - he[2]];
            l2 += wd * dv * dv;
            h1 += wd * (dg[0] * dg[0] + dg[1] * dg[1]);
            h2 += wd * (dh[0] * dh[0] + 2.0 * dh[1] * dh[1] + dh[2] * dh[2]);
        }
    }
    Ok(ErrorNorms { l2: l2.sqrt(), h1: h1.sqrt(), h2: h2.sqrt() })
}

/// One refinement level of a convergence study.
#[derive(Clone, Copy, Debug)]
pub struct LevelRow {
    pub h: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub c_h: f64,
}

/// A convergence table: per-level errors plus observed orders
/// log(e_prev / e) / log(h_prev / h). Orders in the first row are zero.
#[derive(Clone, Debug, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<LevelRow>,
    pub orders: Vec<[f64; 3]>,
}

fn eoc(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    if e_prev <= 0.0 || e <= 0.0 || h_prev <= h {
        return 0.0;
    }
    (e_prev / e).ln() / (h_prev / h).ln()
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<LevelRow>) -> Self {
        let mut orders = vec![[0.0; 3]];
        for i in 1..rows.len() {
            let (p, r) = (&rows[i - 1], &rows[i]);
            orders.push([
                eoc(p.l2, r.l2, p.h, r.h),
                eoc(p.h1, r.h1, p.h, r.h),
                eoc(p.h2, r.h2, p.h, r.h),
            ]);
        }
        orders.truncate(rows.len());
        ConvergenceReport { rows, orders }
    }

    pub fn push(&mut self, row: LevelRow) {
        self.rows.push(row);
        if self.rows.len() == 1 {
            self.orders.push([0.0; 3]);
        } else {
            let p = self.rows[self.rows.len() - 2];
            self.orders.push([
                eoc(p.l2, row.l2, p.h, row.h),
                eoc(p.h1, row.h1, p.h, row.h),
                eoc(p.h2, row.h2, p.h, row.h),
            ]);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,l2,l2_order,h1,h1_order,h2,h2_order,c_h\n");
        for (row, ord) in self.rows.iter().zip(&self.orders) {
            out.push_str(&format!(
                "{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e}\n",
                row.h, row.l2, ord[0], row.h1, ord[1], row.h2, ord[2], row.c_h
            ));
        }
        out
    }
}
