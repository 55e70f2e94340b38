//! Reference cubic Hermite element and the pullback of derivatives through a
//! (possibly curved) element map.
//!
//! The ten local degrees of freedom are value and both gradient components at
//! the three reference vertices (0,0), (1,0), (0,1), plus the value at the
//! centroid. Local cubics are stored as coefficients against the monomials
//! [1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3].

use crate::quadrature::TriangleRule;

pub const NDOF: usize = 10;

/// Monomial coefficients of the dual basis: column j holds the monomial
/// expansion of the basis function whose j-th dof is 1 and the rest 0. The
/// entries are exact integers, obtained by inverting the dof/monomial
/// duality matrix symbolically.
pub const COEF: [[f64; NDOF]; NDOF] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-3.0, -2.0, 0.0, 3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-13.0, -3.0, -3.0, -7.0, 2.0, -1.0, -7.0, -1.0, 2.0, 27.0],
    [-3.0, 0.0, -2.0, 0.0, 0.0, 0.0, 3.0, 0.0, -1.0, 0.0],
    [2.0, 1.0, 0.0, -2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [13.0, 3.0, 2.0, 7.0, -2.0, 2.0, 7.0, 1.0, -2.0, -27.0],
    [13.0, 2.0, 3.0, 7.0, -2.0, 1.0, 7.0, 2.0, -2.0, -27.0],
    [2.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 1.0, 0.0],
];

pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
pub const REF_CENTROID: [f64; 2] = [1.0 / 3.0, 1.0 / 3.0];

/// Value, gradient, and symmetric Hessian (xx, xy, yy) of a reference-side
/// function at one reference point.
#[derive(Clone, Copy, Debug, Default)]
pub struct RefJet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [f64; 3],
}

fn monomial_jets(x: f64, y: f64) -> [RefJet; NDOF] {
    let mut m = [RefJet::default(); NDOF];
    m[0] = RefJet { v: 1.0, g: [0.0, 0.0], h: [0.0; 3] };
    m[1] = RefJet { v: x, g: [1.0, 0.0], h: [0.0; 3] };
    m[2] = RefJet { v: y, g: [0.0, 1.0], h: [0.0; 3] };
    m[3] = RefJet { v: x * x, g: [2.0 * x, 0.0], h: [2.0, 0.0, 0.0] };
    m[4] = RefJet { v: x * y, g: [y, x], h: [0.0, 1.0, 0.0] };
    m[5] = RefJet { v: y * y, g: [0.0, 2.0 * y], h: [0.0, 0.0, 2.0] };
    m[6] = RefJet { v: x * x * x, g: [3.0 * x * x, 0.0], h: [6.0 * x, 0.0, 0.0] };
    m[7] = RefJet { v: x * x * y, g: [2.0 * x * y, x * x], h: [2.0 * y, 2.0 * x, 0.0] };
    m[8] = RefJet { v: x * y * y, g: [y * y, 2.0 * x * y], h: [0.0, 2.0 * y, 2.0 * x] };
    m[9] = RefJet { v: y * y * y, g: [0.0, 3.0 * y * y], h: [0.0, 0.0, 6.0 * y] };
    m
}

/// Jets of all ten dual basis functions at one reference point.
pub fn basis_ref_jets(xh: [f64; 2]) -> [RefJet; NDOF] {
    let m = monomial_jets(xh[0], xh[1]);
    let mut out = [RefJet::default(); NDOF];
    for (k, mk) in m.iter().enumerate() {
        for j in 0..NDOF {
            let c = COEF[k][j];
            if c != 0.0 {
                out[j].v += c * mk.v;
                out[j].g[0] += c * mk.g[0];
                out[j].g[1] += c * mk.g[1];
                out[j].h[0] += c * mk.h[0];
                out[j].h[1] += c * mk.h[1];
                out[j].h[2] += c * mk.h[2];
            }
        }
    }
    out
}

/// Jet of the cubic with the given monomial coefficients.
pub fn eval_monomials(c: &[f64; NDOF], xh: [f64; 2]) -> RefJet {
    let m = monomial_jets(xh[0], xh[1]);
    let mut out = RefJet::default();
    for (ck, mk) in c.iter().zip(m.iter()) {
        out.v += ck * mk.v;
        out.g[0] += ck * mk.g[0];
        out.g[1] += ck * mk.g[1];
        out.h[0] += ck * mk.h[0];
        out.h[1] += ck * mk.h[1];
        out.h[2] += ck * mk.h[2];
    }
    out
}

/// Monomial coefficients of the cubic with the given reference dof values.
pub fn coeffs_from_ref_dofs(dofs: &[f64; NDOF]) -> [f64; NDOF] {
    let mut c = [0.0; NDOF];
    for k in 0..NDOF {
        for j in 0..NDOF {
            c[k] += COEF[k][j] * dofs[j];
        }
    }
    c
}

/// Basis jets of the whole rule, precomputed once per quadrature rule.
pub fn basis_table(rule: &TriangleRule) -> Vec<[RefJet; NDOF]> {
    rule.points.iter().map(|&p| basis_ref_jets(p)).collect()
}

/// Jet of the element map F at one reference point: image, Jacobian, inverse
/// Jacobian, determinant, and the two component Hessians (xx, xy, yy).
#[derive(Clone, Copy, Debug)]
pub struct MapJet {
    pub x: [f64; 2],
    pub j: [[f64; 2]; 2],
    pub jinv: [[f64; 2]; 2],
    pub det: f64,
    pub d2: [[f64; 3]; 2],
}

impl MapJet {
    pub fn affine(x: [f64; 2], j: [[f64; 2]; 2]) -> Self {
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let jinv = [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ];
        MapJet {
            x,
            j,
            jinv,
            det,
            d2: [[0.0; 3]; 2],
        }
    }
}

/// Physical value, gradient, and symmetric Hessian (xx, xy, yy).
#[derive(Clone, Copy, Debug, Default)]
pub struct PhysJet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [f64; 3],
}

impl PhysJet {
    pub fn laplacian(&self) -> f64 {
        self.h[0] + self.h[2]
    }
}

/// Pulls a reference jet through a map jet:
///   grad v = J^-T grad_ref,
///   D2 v   = J^-T (D2_ref - sum_a (grad v)_a D2F_a) J^-1.
/// The correction term subtracts the curvature of the map itself before the
/// two-sided Jacobian transform; it vanishes for affine maps.
pub fn pullback(m: &MapJet, r: &RefJet) -> PhysJet {
    let ji = &m.jinv;
    let g = [
        ji[0][0] * r.g[0] + ji[1][0] * r.g[1],
        ji[0][1] * r.g[0] + ji[1][1] * r.g[1],
    ];
    let m00 = r.h[0] - g[0] * m.d2[0][0] - g[1] * m.d2[1][0];
    let m01 = r.h[1] - g[0] * m.d2[0][1] - g[1] * m.d2[1][1];
    let m11 = r.h[2] - g[0] * m.d2[0][2] - g[1] * m.d2[1][2];
    let h = |a: usize, b: usize| {
        ji[0][a] * (m00 * ji[0][b] + m01 * ji[1][b]) + ji[1][a] * (m01 * ji[0][b] + m11 * ji[1][b])
    };
    PhysJet {
        v: r.v,
        g,
        h: [h(0, 0), h(0, 1), h(1, 1)],
    }
}

/// Maps local physical dofs (values, physical gradients, centroid value) to
/// reference dofs: values pass through, gradient pairs multiply by the
/// transposed vertex Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct DofTransform {
    /// Map Jacobian at the three reference vertices.
    pub vj: [[[f64; 2]; 2]; 3],
}

impl DofTransform {
    pub fn to_ref_dofs(&self, p: &[f64; NDOF]) -> [f64; NDOF] {
        let mut out = *p;
        for v in 0..3 {
            let j = &self.vj[v];
            let (gx, gy) = (p[3 * v + 1], p[3 * v + 2]);
            out[3 * v + 1] = j[0][0] * gx + j[1][0] * gy;
            out[3 * v + 2] = j[0][1] * gx + j[1][1] * gy;
        }
        out
    }

    /// Monomial coefficients of the local cubic with the given physical dofs.
    pub fn ref_coeffs(&self, phys: &[f64; NDOF]) -> [f64; NDOF] {
        coeffs_from_ref_dofs(&self.to_ref_dofs(phys))
    }

    /// T^t l for a reference load vector l: the physical load.
    pub fn load(&self, l: &[f64; NDOF]) -> [f64; NDOF] {
        let mut out = *l;
        for v in 0..3 {
            let j = &self.vj[v];
            let (lx, ly) = (l[3 * v + 1], l[3 * v + 2]);
            out[3 * v + 1] = j[0][0] * lx + j[0][1] * ly;
            out[3 * v + 2] = j[1][0] * lx + j[1][1] * ly;
        }
        out
    }

    /// Right-multiplies by T: converts trial-side (column) reference dofs to
    /// physical dofs. Gradient pairs multiply by J^t on the right.
    pub fn transform_cols(&self, m: &mut [[f64; NDOF]; NDOF]) {
        for row in m.iter_mut() {
            for v in 0..3 {
                let j = &self.vj[v];
                let (c1, c2) = (row[3 * v + 1], row[3 * v + 2]);
                row[3 * v + 1] = c1 * j[0][0] + c2 * j[0][1];
                row[3 * v + 2] = c1 * j[1][0] + c2 * j[1][1];
            }
        }
    }

    /// Left-multiplies by T^t: converts test-side (row) reference dofs to
    /// physical dofs.
    pub fn transform_rows(&self, m: &mut [[f64; NDOF]; NDOF]) {
        for col in 0..NDOF {
            for v in 0..3 {
                let j = &self.vj[v];
                let (r1, r2) = (m[3 * v + 1][col], m[3 * v + 2][col]);
                m[3 * v + 1][col] = j[0][0] * r1 + j[0][1] * r2;
                m[3 * v + 2][col] = j[1][0] * r1 + j[1][1] * r2;
            }
        }
    }

    /// T^t A T for a reference local matrix A: the physical local matrix.
    pub fn congruence(&self, a: &[[f64; NDOF]; NDOF]) -> [[f64; NDOF]; NDOF] {
        let mut m = *a;
        self.transform_cols(&mut m);
        self.transform_rows(&mut m);
        m
    }
}
