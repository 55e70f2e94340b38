//! Global finite element spaces over a curved mesh.
//!
//! The unconstrained space carries value and both gradient components at
//! every vertex plus one interior (centroid) value per triangle. The
//! constrained variant rewrites each boundary-vertex gradient in the local
//! frame of the oblique field,
//!   grad v(a_i) = c l(a_i) + t_i lperp(a_i),
//! where the l-coefficient c is one shared global dof, so every member
//! satisfies grad v(a_i) . l(a_i) = c at all boundary vertices.

use crate::element::{eval_monomials, pullback, PhysJet, NDOF, REF_CENTROID, REF_VERTICES};
use crate::geometry::ObliqueField;
use crate::mesh::{CurvedMesh, ElementMap};
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub enum VertexDofs {
    Interior { val: usize, gx: usize, gy: usize },
    Boundary { val: usize, tang: usize, ell: [f64; 2], lperp: [f64; 2] },
}

#[derive(Clone, Debug)]
pub struct Space {
    pub mesh: CurvedMesh,
    /// Present iff the space is the constrained variant.
    pub field: Option<ObliqueField>,
    pub vdofs: Vec<VertexDofs>,
    /// Centroid dof of each triangle.
    pub bubble: Vec<usize>,
    /// The shared oblique-constant dof (constrained spaces only).
    pub c_dof: Option<usize>,
    pub n_dofs: usize,
}

/// How one local physical dof spreads into global dofs: at most two
/// (global index, weight) pairs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Scatter {
    pub n: usize,
    pub g: [usize; 2],
    pub w: [f64; 2],
}

impl Scatter {
    fn single(g: usize) -> Self {
        Scatter { n: 1, g: [g, 0], w: [1.0, 0.0] }
    }

    fn pair(g0: usize, w0: f64, g1: usize, w1: f64) -> Self {
        Scatter { n: 2, g: [g0, g1], w: [w0, w1] }
    }
}

impl Space {
    pub fn unconstrained(mesh: CurvedMesh) -> Space {
        Self::build(mesh, None)
    }

    pub fn constrained(mesh: CurvedMesh, field: ObliqueField) -> Space {
        Self::build(mesh, Some(field))
    }

    fn build(mesh: CurvedMesh, field: Option<ObliqueField>) -> Space {
        let mut next = 0;
        let mut alloc = |k: usize| {
            let id = next;
            next += k;
            id
        };
        let vdofs: Vec<VertexDofs> = mesh
            .vertices
            .iter()
            .map(|v| match (field, v.t) {
                (Some(f), Some(t)) => {
                    let o = f.eval(mesh.curve, t);
                    let id = alloc(2);
                    VertexDofs::Boundary {
                        val: id,
                        tang: id + 1,
                        ell: o.ell,
                        lperp: [-o.ell[1], o.ell[0]],
                    }
                }
                _ => {
                    let id = alloc(3);
                    VertexDofs::Interior { val: id, gx: id + 1, gy: id + 2 }
                }
            })
            .collect();
        let bubble: Vec<usize> = (0..mesh.triangles.len()).map(|_| alloc(1)).collect();
        let c_dof = field.is_some().then(|| alloc(1));
        Space { mesh, field, vdofs, bubble, c_dof, n_dofs: next }
    }

    /// Local-to-global map of element k in the order of the ten local
    /// physical dofs (three vertex triples, then the centroid value).
    pub fn scatter(&self, k: usize) -> [Scatter; NDOF] {
        let mut s = [Scatter::default(); NDOF];
        for (lv, &gv) in self.mesh.triangles[k].v.iter().enumerate() {
            match self.vdofs[gv] {
                VertexDofs::Interior { val, gx, gy } => {
                    s[3 * lv] = Scatter::single(val);
                    s[3 * lv + 1] = Scatter::single(gx);
                    s[3 * lv + 2] = Scatter::single(gy);
                }
                VertexDofs::Boundary { val, tang, ell, lperp } => {
                    let c = self.c_dof.expect("boundary frame implies constrained space");
                    s[3 * lv] = Scatter::single(val);
                    s[3 * lv + 1] = Scatter::pair(c, ell[0], tang, lperp[0]);
                    s[3 * lv + 2] = Scatter::pair(c, ell[1], tang, lperp[1]);
                }
            }
        }
        s[9] = Scatter::single(self.bubble[k]);
        s
    }

    /// Local physical dof values of the member `u` on element k.
    pub fn gather(&self, u: &[f64], k: usize) -> [f64; NDOF] {
        let s = self.scatter(k);
        let mut out = [0.0; NDOF];
        for i in 0..NDOF {
            for a in 0..s[i].n {
                out[i] += s[i].w[a] * u[s[i].g[a]];
            }
        }
        out
    }

    /// Monomial coefficients of `u` restricted to element k.
    pub fn local_coeffs(&self, u: &[f64], k: usize, map: &ElementMap) -> [f64; NDOF] {
        map.dof_transform().ref_coeffs(&self.gather(u, k))
    }

    /// Physical jet of the member `u` at reference point `xh` of element k.
    pub fn eval(&self, u: &[f64], k: usize, map: &ElementMap, xh: [f64; 2]) -> PhysJet {
        let c = self.local_coeffs(u, k, map);
        pullback(&map.jet(xh), &eval_monomials(&c, xh))
    }

    /// Classical Hermite interpolation: every dof takes its value from the
    /// supplied (value, gradient) jet. For constrained spaces the boundary
    /// tangential coefficient is lperp . grad u and the shared dof is set to
    /// the supplied constant `c_u` (must be the oblique derivative of u).
    pub fn interpolate(
        &self,
        f: impl Fn([f64; 2]) -> (f64, [f64; 2]),
        c_u: Option<f64>,
    ) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.n_dofs];
        for (v, d) in self.vdofs.iter().enumerate() {
            let (value, grad) = f(self.mesh.vertices[v].x);
            match *d {
                VertexDofs::Interior { val, gx, gy } => {
                    u[val] = value;
                    u[gx] = grad[0];
                    u[gy] = grad[1];
                }
                VertexDofs::Boundary { val, tang, lperp, .. } => {
                    u[val] = value;
                    u[tang] = lperp[0] * grad[0] + lperp[1] * grad[1];
                }
            }
        }
        for k in 0..self.mesh.triangles.len() {
            let map = self.mesh.element_map(k)?;
            let (value, _) = f(map.jet(REF_CENTROID).x);
            u[self.bubble[k]] = value;
        }
        if let Some(c) = self.c_dof {
            u[c] = c_u.unwrap_or(0.0);
        }
        Ok(u)
    }

    /// The coefficient vector of the constant function 1.
    pub fn ones(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs];
        for d in &self.vdofs {
            match *d {
                VertexDofs::Interior { val, .. } | VertexDofs::Boundary { val, .. } => {
                    u[val] = 1.0
                }
            }
        }
        for &b in &self.bubble {
            u[b] = 1.0;
        }
        u
    }

    /// Uniform random coefficients in [-1, 1], for property tests.
    pub fn random_member(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        (0..self.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// All element maps, or the first construction error.
    pub fn element_maps(&self) -> Result<Vec<ElementMap>> {
        (0..self.mesh.triangles.len()).map(|k| self.mesh.element_map(k)).collect()
    }

    /// Reference coordinates of global vertex `gv` within triangle `k`.
    pub fn ref_vertex(&self, k: usize, gv: usize) -> Option<[f64; 2]> {
        self.mesh.triangles[k]
            .v
            .iter()
            .position(|&v| v == gv)
            .map(|lv| REF_VERTICES[lv])
    }
}
