//! Acceptance harness: runs the headline checks sequentially and prints one
//! verdict line per criterion. The process exits nonzero if any line fails,
//! so `cargo test` treats the whole harness as a single pass/fail unit while
//! the log keeps the per-criterion detail.

use std::f64::consts::FRAC_PI_4;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use oblique_fem::assembly::{assemble_forms, assemble_system, energy, poincare_check, Coefficient, Problem};
use oblique_fem::element::{
    basis_ref_jets, eval_monomials, pullback, RefJet, NDOF, REF_CENTROID, REF_VERTICES,
};
use oblique_fem::experiments::{experiment, experiment_mesh};
use oblique_fem::geometry::{BoundaryCurve, ObliqueField};
use oblique_fem::interp::quasi_interp_oblique;
use oblique_fem::mesh::{coarse_mesh, ElementMap};
use oblique_fem::norms::{error_norms, ConvergenceReport, LevelRow};
use oblique_fem::quadrature::triangle_rule;
use oblique_fem::solver::solve;
use oblique_fem::space::{Space, VertexDofs};
use rand::SeedableRng;

const DISK: BoundaryCurve = BoundaryCurve::UnitCircle;
const ELLIPSE: BoundaryCurve = BoundaryCurve::Ellipse { a: 2.0, b: 1.0 };
const N_BOUNDARY: usize = 16;
const LEVELS: usize = 4;

fn main() {
    let criteria: [(&str, fn() -> Result<String, String>); 9] = [
        ("experiment 1 orders and c_h", criterion_1),
        ("experiment 3 orders and c_h", criterion_2),
        ("experiments 2 and 4 orders and c_h", criterion_3),
        ("discrete Miranda-Talenti identity", criterion_4),
        ("coercivity with the continuous constant", criterion_5),
        ("quasi-interpolation order and constraint", criterion_6),
        ("per-element Poincare inequality", criterion_7),
        ("element duality, reproduction, pullback", criterion_8),
        ("boundary fit, areas, map distortion", criterion_9),
    ];
    let mut failed = 0usize;
    for (i, (label, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({label}): PASS - {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({label}): FAIL - {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Full refinement sweep of one experiment at the default settings.
fn sweep(id: usize) -> Result<ConvergenceReport, String> {
    let problem = experiment(id).map_err(err_str)?;
    let mut mesh = experiment_mesh(problem.curve, N_BOUNDARY, 0).map_err(err_str)?;
    let mut report = ConvergenceReport::default();
    for level in 0..=LEVELS {
        let space = Space::constrained(mesh.clone(), problem.field);
        let system = assemble_system(&space, &problem).map_err(err_str)?;
        let sol = solve(&system, &space).map_err(err_str)?;
        let en = error_norms(&space, &sol.u, &problem).map_err(err_str)?;
        report.push(LevelRow { h: mesh.max_h(), l2: en.l2, h1: en.h1, h2: en.h2, c_h: sol.c_h });
        if level < LEVELS {
            mesh = mesh.refine();
        }
    }
    Ok(report)
}

fn window(name: &str, value: f64, lo: f64, hi: f64) -> Result<(), String> {
    if (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(format!("{name} = {value:.3} outside [{lo}, {hi}]"))
    }
}

fn orders_and_ch(
    id: usize,
    h2w: (f64, f64),
    h1w: (f64, f64),
    l2w: (f64, f64),
) -> Result<(ConvergenceReport, String), String> {
    let report = sweep(id)?;
    let exact_c = experiment(id).map_err(err_str)?.exact.unwrap().c;
    let last = report.orders.last().unwrap();
    window(&format!("experiment {id} H2 order"), last[2], h2w.0, h2w.1)?;
    window(&format!("experiment {id} H1 order"), last[1], h1w.0, h1w.1)?;
    window(&format!("experiment {id} L2 order"), last[0], l2w.0, l2w.1)?;
    let dc = (report.rows.last().unwrap().c_h - exact_c).abs();
    if dc > 1e-2 {
        return Err(format!("experiment {id}: |c_h - c| = {dc:.3e} > 1e-2"));
    }
    let detail = format!(
        "exp {id}: orders l2 {:.2} h1 {:.2} h2 {:.2}, |c_h - c| {:.2e}",
        last[0], last[1], last[2], dc
    );
    Ok((report, detail))
}

fn criterion_1() -> Result<String, String> {
    let started = Instant::now();
    let (_, detail) = orders_and_ch(1, (1.8, 2.2), (1.7, 2.6), (1.7, 2.6))?;
    let secs = started.elapsed().as_secs_f64();
    if secs > 300.0 {
        return Err(format!("experiment 1 sweep took {secs:.0}s > 300s"));
    }
    Ok(format!("{detail}, sweep {secs:.1}s <= 300s, 5 levels"))
}

fn criterion_2() -> Result<String, String> {
    let (_, detail) = orders_and_ch(3, (1.8, 2.2), (1.7, 2.6), (1.4, 2.6))?;
    Ok(detail)
}

fn criterion_3() -> Result<String, String> {
    let mut parts = Vec::new();
    for id in [2usize, 4] {
        let report = sweep(id)?;
        let last = report.orders.last().unwrap();
        window(&format!("experiment {id} H2 order"), last[2], 1.7, 2.2)?;
        let ch = report.rows.last().unwrap().c_h.abs();
        if ch > 1e-2 {
            return Err(format!("experiment {id}: |c_h| = {ch:.3e} > 1e-2"));
        }
        parts.push(format!("exp {id}: h2 {:.2}, |c_h| {:.1e}", last[2], ch));
    }
    Ok(parts.join("; "))
}

fn criterion_4() -> Result<String, String> {
    let fields = [
        ObliqueField::RotateNormal(FRAC_PI_4),
        ObliqueField::Tangential,
        ObliqueField::PolarSpiral,
    ];
    let mut worst: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        for field in fields {
            let mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?.refined(2);
            let space = Space::unconstrained(mesh);
            let problem = Problem::new(curve, field, Coefficient::Identity);
            let forms = assemble_forms(&space, &problem).map_err(err_str)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
            for _ in 0..20 {
                let v = space.random_member(&mut rng);
                worst = worst.max(forms.mt_identity_residual(&v));
            }
        }
    }
    if worst > 1e-6 {
        return Err(format!("max relative residual {worst:.3e} > 1e-6"));
    }
    Ok(format!(
        "max relative residual {worst:.2e} over 2 domains x 3 fields x 20 members"
    ))
}

fn criterion_5() -> Result<String, String> {
    let mut min_margin = f64::INFINITY;
    for id in [1usize, 2] {
        let problem = experiment(id).map_err(err_str)?;
        let chi0 = problem.chi0().map_err(err_str)?;
        let mesh = coarse_mesh(problem.curve, N_BOUNDARY).map_err(err_str)?.refined(2);
        let space = Space::constrained(mesh, problem.field);
        let forms = assemble_forms(&space, &problem).map_err(err_str)?;
        let constant = 1.0 - (1.0 - problem.epsilon).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7 + id as u64);
        for _ in 0..20 {
            let v = space.random_member(&mut rng);
            let e = energy(&forms, &problem, chi0, &v);
            min_margin = min_margin.min((e.b - constant * e.norm_h2) / e.norm_h2);
        }
    }
    if min_margin < -1e-8 {
        return Err(format!("min relative margin {min_margin:.3e} < -1e-8"));
    }
    Ok(format!(
        "min relative margin {min_margin:.2e} over experiments 1 and 2, 20 members each"
    ))
}

fn criterion_6() -> Result<String, String> {
    let problem = experiment(1).map_err(err_str)?;
    let exact = problem.exact.as_ref().unwrap();
    let mut mesh = experiment_mesh(problem.curve, N_BOUNDARY, 1).map_err(err_str)?;
    let mut report = ConvergenceReport::default();
    let mut worst_constraint: f64 = 0.0;
    for level in 1..=4usize {
        let space = Space::constrained(mesh.clone(), problem.field);
        let iu = quasi_interp_oblique(&space, exact.u, exact.c).map_err(err_str)?;
        for d in &space.vdofs {
            if let VertexDofs::Boundary { tang, ell, lperp, .. } = *d {
                let g = [
                    exact.c * ell[0] + iu[tang] * lperp[0],
                    exact.c * ell[1] + iu[tang] * lperp[1],
                ];
                worst_constraint =
                    worst_constraint.max((ell[0] * g[0] + ell[1] * g[1] - exact.c).abs());
            }
        }
        let en = error_norms(&space, &iu, &problem).map_err(err_str)?;
        report.push(LevelRow { h: mesh.max_h(), l2: en.l2, h1: en.h1, h2: en.h2, c_h: exact.c });
        if level < 4 {
            mesh = mesh.refine();
        }
    }
    let last = report.orders.last().unwrap()[2];
    window("interpolation H2 order", last, 1.7, 2.3)?;
    if worst_constraint > 1e-12 {
        return Err(format!(
            "boundary constraint violated by {worst_constraint:.3e} > 1e-12"
        ));
    }
    Ok(format!(
        "H2 order {last:.2} at the finest step, constraint within {worst_constraint:.1e}"
    ))
}

fn criterion_7() -> Result<String, String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    let mut total = 0usize;
    let mut worst: f64 = 0.0;
    let mut curved = 0usize;
    for curve in [DISK, ELLIPSE] {
        for level in 0..=2usize {
            let mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?.refined(level);
            for k in 0..mesh.triangles.len() {
                if mesh.element_map(k).map_err(err_str)?.is_curved() {
                    curved += 1;
                }
            }
            let space = Space::unconstrained(mesh);
            let (violations, ratio) = poincare_check(&space, 20, &mut rng).map_err(err_str)?;
            total += violations;
            worst = worst.max(ratio);
        }
    }
    if total != 0 {
        return Err(format!("{total} violations"));
    }
    Ok(format!(
        "0 violations over {curved} curved elements x 20 cubics, worst ratio {worst:.3}"
    ))
}

/// Physical nodal dofs (vertex values, vertex gradients, centroid value) of
/// the function whose reference monomial coefficients are `c`.
fn phys_dofs(map: &ElementMap, c: &[f64; NDOF]) -> [f64; NDOF] {
    let mut d = [0.0; NDOF];
    for (v, &rv) in REF_VERTICES.iter().enumerate() {
        let jet = pullback(&map.jet(rv), &eval_monomials(c, rv));
        d[3 * v] = jet.v;
        d[3 * v + 1] = jet.g[0];
        d[3 * v + 2] = jet.g[1];
    }
    d[9] = eval_monomials(c, REF_CENTROID).v;
    d
}

fn first_map(curve: BoundaryCurve, curved: bool) -> Result<ElementMap, String> {
    let mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?.refined(1);
    for k in 0..mesh.triangles.len() {
        let map = mesh.element_map(k).map_err(err_str)?;
        if map.is_curved() == curved {
            return Ok(map);
        }
    }
    Err("no element of the requested kind".into())
}

fn criterion_8() -> Result<String, String> {
    // reference duality: dofs of the j-th basis function are e_j
    let mut worst_ref: f64 = 0.0;
    for j in 0..NDOF {
        let mut d = [0.0; NDOF];
        for (v, &rv) in REF_VERTICES.iter().enumerate() {
            let jet = basis_ref_jets(rv)[j];
            d[3 * v] = jet.v;
            d[3 * v + 1] = jet.g[0];
            d[3 * v + 2] = jet.g[1];
        }
        d[9] = basis_ref_jets(REF_CENTROID)[j].v;
        for (i, &di) in d.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst_ref = worst_ref.max((di - want).abs());
        }
    }
    if worst_ref > 1e-12 {
        return Err(format!("reference duality off by {worst_ref:.3e}"));
    }

    // physical duality on curved elements: build each basis function from the
    // physical unit dof vector and read its physical dofs back
    let mut worst_phys: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        let map = first_map(curve, true)?;
        let dt = map.dof_transform();
        for j in 0..NDOF {
            let mut e = [0.0; NDOF];
            e[j] = 1.0;
            let c = dt.ref_coeffs(&e);
            let d = phys_dofs(&map, &c);
            for (i, &di) in d.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst_phys = worst_phys.max((di - want).abs());
            }
        }
    }
    if worst_phys > 1e-12 {
        return Err(format!("physical duality off by {worst_phys:.3e}"));
    }

    // a full cubic is reproduced exactly from its physical dofs on straight
    // elements
    let p = |x: [f64; 2]| {
        0.3 + 1.1 * x[0] - 0.7 * x[1] + 0.9 * x[0] * x[0] - 0.4 * x[0] * x[1]
            + 0.6 * x[1] * x[1]
            + 0.2 * x[0] * x[0] * x[0]
            - 0.8 * x[0] * x[0] * x[1]
            + 0.5 * x[0] * x[1] * x[1]
            - 0.3 * x[1] * x[1] * x[1]
    };
    let gp = |x: [f64; 2]| {
        [
            1.1 + 1.8 * x[0] - 0.4 * x[1] + 0.6 * x[0] * x[0] - 1.6 * x[0] * x[1]
                + 0.5 * x[1] * x[1],
            -0.7 - 0.4 * x[0] + 1.2 * x[1] - 0.8 * x[0] * x[0] + 1.0 * x[0] * x[1]
                - 0.9 * x[1] * x[1],
        ]
    };
    let mut worst_cubic: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        let map = first_map(curve, false)?;
        let dt = map.dof_transform();
        let mut d = [0.0; NDOF];
        for (v, &rv) in REF_VERTICES.iter().enumerate() {
            let x = map.jet(rv).x;
            d[3 * v] = p(x);
            let g = gp(x);
            d[3 * v + 1] = g[0];
            d[3 * v + 2] = g[1];
        }
        d[9] = p(map.jet(REF_CENTROID).x);
        let c = dt.ref_coeffs(&d);
        for &xh in &[[0.17, 0.23], [0.55, 0.2], [0.1, 0.7], [0.31, 0.31]] {
            let mj = map.jet(xh);
            let jet = pullback(&mj, &eval_monomials(&c, xh));
            worst_cubic = worst_cubic.max((jet.v - p(mj.x)).abs());
            let g = gp(mj.x);
            worst_cubic = worst_cubic.max((jet.g[0] - g[0]).abs().max((jet.g[1] - g[1]).abs()));
        }
    }
    if worst_cubic > 1e-13 {
        return Err(format!("cubic reproduction off by {worst_cubic:.3e}"));
    }

    // Hessian pullback: push a global quadratic through the chain rule on a
    // curved map and require pullback to recover its constant Hessian
    let q = |x: [f64; 2]| 1.3 * x[0] * x[0] + 0.7 * x[0] * x[1] - 0.4 * x[1] * x[1] + 0.5 * x[0] - 0.2 * x[1] + 2.0;
    let gq = |x: [f64; 2]| [2.6 * x[0] + 0.7 * x[1] + 0.5, 0.7 * x[0] - 0.8 * x[1] - 0.2];
    let hq = [2.6, 0.7, -0.8];
    let mut worst_hess: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        let map = first_map(curve, true)?;
        for &xh in &[[0.2, 0.3], [0.6, 0.35], [0.05, 0.1], [0.33, 0.65]] {
            let m = map.jet(xh);
            let g = gq(m.x);
            let gr = [
                m.j[0][0] * g[0] + m.j[1][0] * g[1],
                m.j[0][1] * g[0] + m.j[1][1] * g[1],
            ];
            let hfull = [[hq[0], hq[1]], [hq[1], hq[2]]];
            let sandwich = |a: usize, b: usize| {
                let mut s = 0.0;
                for r in 0..2 {
                    for t in 0..2 {
                        s += m.j[r][a] * hfull[r][t] * m.j[t][b];
                    }
                }
                s
            };
            let hr = [
                sandwich(0, 0) + g[0] * m.d2[0][0] + g[1] * m.d2[1][0],
                sandwich(0, 1) + g[0] * m.d2[0][1] + g[1] * m.d2[1][1],
                sandwich(1, 1) + g[0] * m.d2[0][2] + g[1] * m.d2[1][2],
            ];
            let r = RefJet { v: q(m.x), g: gr, h: hr };
            let back = pullback(&m, &r);
            for a in 0..3 {
                worst_hess = worst_hess.max((back.h[a] - hq[a]).abs());
            }
            worst_hess = worst_hess
                .max((back.g[0] - g[0]).abs())
                .max((back.g[1] - g[1]).abs());
        }
    }
    if worst_hess > 1e-10 {
        return Err(format!("Hessian pullback off by {worst_hess:.3e}"));
    }

    Ok(format!(
        "duality ref {worst_ref:.1e} phys {worst_phys:.1e}, cubic {worst_cubic:.1e}, hessian {worst_hess:.1e}"
    ))
}

fn criterion_9() -> Result<String, String> {
    // exact boundary fit along every curved edge
    let mut worst_fit: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        let mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?.refined(2);
        for k in 0..mesh.triangles.len() {
            let map = mesh.element_map(k).map_err(err_str)?;
            if !map.is_curved() {
                continue;
            }
            let (ta, tb) = map.arc.unwrap();
            for i in 0..=8 {
                let s = i as f64 / 8.0;
                let jet = map.jet([1.0 - s, s]);
                let x = curve.point(ta + s * (tb - ta));
                worst_fit = worst_fit.max((jet.x[0] - x[0]).hypot(jet.x[1] - x[1]));
            }
        }
    }
    if worst_fit > 1e-13 {
        return Err(format!("boundary fit off by {worst_fit:.3e}"));
    }

    // quadrature areas at refinement level 3
    let rule = triangle_rule(10).map_err(err_str)?;
    let mut area_err: f64 = 0.0;
    for (curve, want) in [(DISK, std::f64::consts::PI), (ELLIPSE, 2.0 * std::f64::consts::PI)] {
        let mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?.refined(3);
        let mut area = 0.0;
        for k in 0..mesh.triangles.len() {
            let map = mesh.element_map(k).map_err(err_str)?;
            for (&xh, &w) in rule.points.iter().zip(&rule.weights) {
                area += w * map.jet(xh).det;
            }
        }
        area_err = area_err.max((area - want).abs());
    }
    if area_err > 1e-8 {
        return Err(format!("area off by {area_err:.3e}"));
    }

    // map distortion stays below the contraction threshold on all levels
    let mut max_ck: f64 = 0.0;
    for curve in [DISK, ELLIPSE] {
        let mut mesh = coarse_mesh(curve, N_BOUNDARY).map_err(err_str)?;
        for level in 0..=3usize {
            let rep = mesh.validate();
            if !rep.ok {
                return Err(format!("mesh invalid at level {level}: {:?}", rep.messages));
            }
            max_ck = max_ck.max(rep.max_ck);
            if level < 3 {
                mesh = mesh.refine();
            }
        }
    }
    if max_ck > 0.9 {
        return Err(format!("max c_K = {max_ck:.3} > 0.9"));
    }

    Ok(format!(
        "boundary fit {worst_fit:.1e}, area error {area_err:.1e}, max c_K {max_ck:.3}"
    ))
}
