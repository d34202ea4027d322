//! Scalar P^k Lagrange spaces on (deformed) meshes.
//!
//! The reference basis uses equispaced Lagrange nodes on the unit simplex and
//! is evaluated through its monomial expansion, so evaluating at a point
//! outside the simplex is literally the same formula: the canonical
//! polynomial extension is a no-op.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::isoparam::MeshDeformation;
use crate::mesh::BackgroundMesh;

/// Largest supported polynomial order.
pub const MAX_ORDER: usize = 4;

/// Cardinal Lagrange basis of order `k` on the reference simplex.
#[derive(Debug)]
pub struct LagrangeBasis {
    pub k: usize,
    /// Reference node coordinates: vertices, then edge nodes (per local edge,
    /// ordered along the edge), then interior nodes.
    pub nodes: Vec<[f64; 2]>,
    /// Monomial exponents (a, b) for x^a y^b, total degree ascending.
    monomials: Vec<(usize, usize)>,
    /// `coeffs[j]` holds the monomial coefficients of basis function j.
    coeffs: Vec<Vec<f64>>,
}

impl LagrangeBasis {
    /// Shared basis instance for order `k`.
    pub fn get(k: usize) -> Result<Arc<Self>> {
        if k < 1 || k > MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                requested: k,
                supported: format!("1..={MAX_ORDER}"),
            });
        }
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<LagrangeBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        Ok(guard.entry(k).or_insert_with(|| Arc::new(Self::build(k))).clone())
    }

    fn build(k: usize) -> Self {
        let nodes = reference_nodes(k);
        let n = nodes.len();
        let mut monomials = Vec::with_capacity(n);
        for d in 0..=k {
            for b in 0..=d {
                monomials.push((d - b, b));
            }
        }
        debug_assert_eq!(monomials.len(), n);

        // Vandermonde: V[i][m] = mono_m(node_i); basis coefficients are the
        // columns of V^{ -1 }.
        let v = DMatrix::from_fn(n, n, |i, m| {
            let (a, b) = monomials[m];
            nodes[i][0].powi(a as i32) * nodes[i][1].powi(b as i32)
        });
        let vinv = v.try_inverse().expect("Lagrange Vandermonde is invertible");
        let coeffs = (0..n).map(|j| (0..n).map(|m| vinv[(m, j)]).collect()).collect();
        Self { k, nodes, monomials, coeffs }
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes.len()
    }

    /// Values of all basis functions at `(x, y)` (valid anywhere).
    pub fn eval(&self, x: f64, y: f64, out: &mut [f64]) {
        let monos = self.mono_values(x, y);
        for (j, c) in self.coeffs.iter().enumerate() {
            out[j] = c.iter().zip(&monos).map(|(ci, mi)| ci * mi).sum();
        }
    }

    /// Reference gradients of all basis functions at `(x, y)`.
    pub fn grad(&self, x: f64, y: f64, out: &mut [[f64; 2]]) {
        let n = self.monomials.len();
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; n];
        for (m, &(a, b)) in self.monomials.iter().enumerate() {
            if a > 0 {
                dx[m] = a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32);
            }
            if b > 0 {
                dy[m] = b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1);
            }
        }
        for (j, c) in self.coeffs.iter().enumerate() {
            let gx: f64 = c.iter().zip(&dx).map(|(ci, mi)| ci * mi).sum();
            let gy: f64 = c.iter().zip(&dy).map(|(ci, mi)| ci * mi).sum();
            out[j] = [gx, gy];
        }
    }

    fn mono_values(&self, x: f64, y: f64) -> Vec<f64> {
        self.monomials
            .iter()
            .map(|&(a, b)| x.powi(a as i32) * y.powi(b as i32))
            .collect()
    }
}

/// Equispaced Lagrange nodes: vertices, edge nodes, interior nodes.
fn reference_nodes(k: usize) -> Vec<[f64; 2]> {
    let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut nodes: Vec<[f64; 2]> = verts.to_vec();
    for e in 0..3 {
        let a = verts[(e + 1) % 3];
        let b = verts[(e + 2) % 3];
        for i in 0..k.saturating_sub(1) {
            let t = (i + 1) as f64 / k as f64;
            nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    for a in 1..k {
        for b in 1..k {
            if a + b <= k.saturating_sub(1) {
                nodes.push([a as f64 / k as f64, b as f64 / k as f64]);
            }
        }
    }
    nodes
}

/// Conforming scalar P^k space on a background mesh.
#[derive(Debug)]
pub struct ScalarSpace {
    pub mesh: Arc<BackgroundMesh>,
    pub k: usize,
    pub basis: Arc<LagrangeBasis>,
    /// Per-element ordered global dof indices (basis node ordering).
    pub dof_map: Vec<Vec<usize>>,
    pub n_dofs: usize,
    /// One (element, local node) home per dof.
    pub dof_home: Vec<(usize, usize)>,
    /// Elements whose closure contains each dof node.
    pub dof_patch: Vec<Vec<usize>>,
}

impl ScalarSpace {
    pub fn build(mesh: Arc<BackgroundMesh>, k: usize) -> Result<Arc<Self>> {
        let basis = LagrangeBasis::get(k)?;
        let n_vert = mesh.n_vertices();
        let n_facet = mesh.facets.len();
        let n_elem = mesh.n_elems();
        let per_edge = k - 1;
        let per_int = if k >= 3 { (k - 1) * (k - 2) / 2 } else { 0 };
        let n_dofs = n_vert + n_facet * per_edge + n_elem * per_int;

        let mut dof_map = Vec::with_capacity(n_elem);
        let mut dof_home = vec![(usize::MAX, usize::MAX); n_dofs];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut locals = Vec::with_capacity(basis.n_dofs());
            locals.extend_from_slice(&[tri[0], tri[1], tri[2]]);
            for e in 0..3 {
                let f = mesh.elem_facets[t][e];
                let ga = tri[(e + 1) % 3];
                let gb = tri[(e + 2) % 3];
                for i in 0..per_edge {
                    let slot = if ga < gb { i } else { per_edge - 1 - i };
                    locals.push(n_vert + f * per_edge + slot);
                }
            }
            for i in 0..per_int {
                locals.push(n_vert + n_facet * per_edge + t * per_int + i);
            }
            for (l, &g) in locals.iter().enumerate() {
                if dof_home[g].0 == usize::MAX {
                    dof_home[g] = (t, l);
                }
            }
            dof_map.push(locals);
        }

        let mut dof_patch = vec![Vec::new(); n_dofs];
        for (v, elems) in mesh.vertex_to_elements.iter().enumerate() {
            dof_patch[v] = elems.clone();
        }
        for (f, facet) in mesh.facets.iter().enumerate() {
            let elems = match facet.elems.1 {
                Some(e1) => vec![facet.elems.0, e1],
                None => vec![facet.elems.0],
            };
            for i in 0..per_edge {
                dof_patch[n_vert + f * per_edge + i] = elems.clone();
            }
        }
        for t in 0..n_elem {
            for i in 0..per_int {
                dof_patch[n_vert + n_facet * per_edge + t * per_int + i] = vec![t];
            }
        }

        Ok(Arc::new(Self { mesh, k, basis, dof_map, n_dofs, dof_home, dof_patch }))
    }

    /// Reference coordinates of the node of dof `g` within element `elem`
    /// (which must contain the dof).
    pub fn dof_ref_in(&self, g: usize, elem: usize) -> [f64; 2] {
        let local = self.dof_map[elem].iter().position(|&d| d == g).expect("dof not in element");
        self.basis.nodes[local]
    }
}

/// Coefficient vector of a scalar field, paired with the mesh deformation it
/// lives on. Dofs outside a restriction are exactly zero (trivial extension).
#[derive(Clone, Debug)]
pub struct FEField {
    pub space: Arc<ScalarSpace>,
    pub coeffs: Vec<f64>,
    pub deformation: Arc<MeshDeformation>,
}

impl FEField {
    pub fn zero(space: Arc<ScalarSpace>, deformation: Arc<MeshDeformation>) -> Self {
        let coeffs = vec![0.0; space.n_dofs];
        Self { space, coeffs, deformation }
    }

    /// Lagrange interpolation: coefficient at dof i is `f` evaluated at the
    /// deformed node position.
    pub fn interpolate(
        space: Arc<ScalarSpace>,
        deformation: Arc<MeshDeformation>,
        f: &dyn Fn([f64; 2]) -> f64,
    ) -> Result<Self> {
        let mut coeffs = vec![0.0; space.n_dofs];
        for (g, c) in coeffs.iter_mut().enumerate() {
            let (elem, local) = space.dof_home[g];
            let xhat = space.basis.nodes[local];
            let (x, _) = deformation.deform(elem, xhat);
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFiniteField { name: "interpolant".into(), x: x[0], y: x[1] });
            }
            *c = v;
        }
        Ok(Self { space, coeffs, deformation })
    }

    pub fn local_coeffs(&self, elem: usize) -> Vec<f64> {
        self.space.dof_map[elem].iter().map(|&g| self.coeffs[g]).collect()
    }

    /// Value of the element-local polynomial at reference point `xhat`.
    /// With `allow_outside` this is the canonical polynomial extension.
    pub fn eval_value(&self, elem: usize, xhat: [f64; 2], allow_outside: bool) -> f64 {
        debug_assert!(
            allow_outside || inside_simplex(xhat, 1e-10),
            "reference point {xhat:?} outside simplex"
        );
        let basis = &self.space.basis;
        let mut vals = vec![0.0; basis.n_dofs()];
        basis.eval(xhat[0], xhat[1], &mut vals);
        self.space.dof_map[elem]
            .iter()
            .zip(&vals)
            .map(|(&g, phi)| self.coeffs[g] * phi)
            .sum()
    }

    /// Value and physical gradient (chain rule through the deformation
    /// Jacobian) at reference point `xhat` of element `elem`.
    pub fn eval(&self, elem: usize, xhat: [f64; 2], allow_outside: bool) -> (f64, [f64; 2]) {
        debug_assert!(
            allow_outside || inside_simplex(xhat, 1e-10),
            "reference point {xhat:?} outside simplex"
        );
        let basis = &self.space.basis;
        let n = basis.n_dofs();
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        basis.eval(xhat[0], xhat[1], &mut vals);
        basis.grad(xhat[0], xhat[1], &mut grads);
        let mut value = 0.0;
        let mut gref = [0.0, 0.0];
        for (l, &g) in self.space.dof_map[elem].iter().enumerate() {
            let c = self.coeffs[g];
            value += c * vals[l];
            gref[0] += c * grads[l][0];
            gref[1] += c * grads[l][1];
        }
        let j = self.deformation.jacobian(elem, xhat);
        let grad = solve_transposed(j, gref);
        (value, grad)
    }

    /// Zeroes all dofs outside the given set (trivial finite element
    /// extension semantics).
    pub fn restrict(&mut self, active_dofs: &[bool]) {
        assert_eq!(active_dofs.len(), self.coeffs.len());
        for (c, &keep) in self.coeffs.iter_mut().zip(active_dofs) {
            if !keep {
                *c = 0.0;
            }
        }
    }
}

/// Solves J^T g = gref for g, i.e. g = J^{-T} gref.
fn solve_transposed(j: [[f64; 2]; 2], gref: [f64; 2]) -> [f64; 2] {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    // inv(J)^T = adj(J)^T / det; adj = [[j11, -j01], [-j10, j00]]
    [
        (j[1][1] * gref[0] - j[1][0] * gref[1]) / det,
        (-j[0][1] * gref[0] + j[0][0] * gref[1]) / det,
    ]
}

pub fn inside_simplex(x: [f64; 2], tol: f64) -> bool {
    x[0] >= -tol && x[1] >= -tol && x[0] + x[1] <= 1.0 + tol
}

/// Oswald averaging of a broken (element-wise) function into a continuous
/// coefficient vector: each dof receives the arithmetic mean of the values
/// supplied by the elements of `elems` that contain it; dofs touched by no
/// element stay zero. `values(elem, local)` supplies the broken value of the
/// element-local polynomial at its local node.
pub fn oswald_average<const N: usize>(
    space: &ScalarSpace,
    elems: &[usize],
    values: &dyn Fn(usize, usize) -> [f64; N],
) -> Vec<[f64; N]> {
    let mut sum = vec![[0.0; N]; space.n_dofs];
    let mut count = vec![0usize; space.n_dofs];
    for &t in elems {
        for (l, &g) in space.dof_map[t].iter().enumerate() {
            let v = values(t, l);
            for i in 0..N {
                sum[g][i] += v[i];
            }
            count[g] += 1;
        }
    }
    for (s, &c) in sum.iter_mut().zip(&count) {
        if c > 0 {
            for si in s.iter_mut() {
                *si /= c as f64;
            }
        }
    }
    sum
}

/// Scalar Oswald averaging restricted to `elems`, with an orphan check on the
/// requested output dofs.
pub fn oswald(
    space: &ScalarSpace,
    elems: &[usize],
    values: &dyn Fn(usize, usize) -> f64,
    required_dofs: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let averaged = oswald_average::<1>(space, elems, &|t, l| [values(t, l)]);
    if let Some(required) = required_dofs {
        let mut touched = vec![false; space.n_dofs];
        for &t in elems {
            for &g in &space.dof_map[t] {
                touched[g] = true;
            }
        }
        for &g in required {
            if !touched[g] {
                return Err(Error::OrphanDof(g));
            }
        }
    }
    Ok(averaged.into_iter().map(|v| v[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshPattern;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh_2x2() -> Arc<BackgroundMesh> {
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 2, 2, MeshPattern::Diagonal)
            .unwrap()
    }

    #[test]
    fn basis_is_cardinal() {
        for k in 1..=4 {
            let b = LagrangeBasis::get(k).unwrap();
            let n = b.n_dofs();
            assert_eq!(n, (k + 1) * (k + 2) / 2);
            let mut vals = vec![0.0; n];
            for (i, node) in b.nodes.iter().enumerate() {
                b.eval(node[0], node[1], &mut vals);
                for (j, &v) in vals.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-10, "k={k} node {i} basis {j}: {v}");
                }
            }
        }
    }

    #[test]
    fn basis_partition_of_unity() {
        let b = LagrangeBasis::get(3).unwrap();
        let mut vals = vec![0.0; b.n_dofs()];
        for &(x, y) in &[(0.1, 0.2), (0.7, 0.1), (1.3, -0.4)] {
            b.eval(x, y, &mut vals);
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn space_dof_counts() {
        let mesh = mesh_2x2();
        assert_eq!(ScalarSpace::build(mesh.clone(), 1).unwrap().n_dofs, 9);
        assert_eq!(ScalarSpace::build(mesh.clone(), 2).unwrap().n_dofs, 25);
        let s3 = ScalarSpace::build(mesh, 3).unwrap();
        assert_eq!(s3.basis.n_dofs(), 10);
    }

    #[test]
    fn unsupported_order_rejected() {
        let mesh = mesh_2x2();
        assert!(ScalarSpace::build(mesh, 5).is_err());
    }

    /// Shared dofs must refer to the same physical node from both sides.
    #[test]
    fn dof_nodes_conforming() {
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 3, 3, MeshPattern::Diagonal)
                .unwrap();
        for k in 1..=4 {
            let space = ScalarSpace::build(mesh.clone(), k).unwrap();
            let mut coord: Vec<Option<[f64; 2]>> = vec![None; space.n_dofs];
            for t in 0..mesh.n_elems() {
                let [a, b, c] = mesh.triangles[t];
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                for (l, &g) in space.dof_map[t].iter().enumerate() {
                    let n = space.basis.nodes[l];
                    let x = [
                        va[0] + n[0] * (vb[0] - va[0]) + n[1] * (vc[0] - va[0]),
                        va[1] + n[0] * (vb[1] - va[1]) + n[1] * (vc[1] - va[1]),
                    ];
                    match coord[g] {
                        None => coord[g] = Some(x),
                        Some(prev) => {
                            assert!(
                                (prev[0] - x[0]).abs() + (prev[1] - x[1]).abs() < 1e-12,
                                "k={k} dof {g}: {prev:?} vs {x:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn interpolate_reproduces_polynomials() {
        let mesh = mesh_2x2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=3usize {
            let space = ScalarSpace::build(mesh.clone(), k).unwrap();
            let id = MeshDeformation::identity(mesh.clone(), k).unwrap();
            let kk = k as i32;
            let f = move |x: [f64; 2]| x[0].powi(kk) + 0.5 * x[1].powi(kk) - 2.0 * x[0] + 0.25;
            let field = FEField::interpolate(space, id, &f).unwrap();
            for _ in 0..1000 {
                let t = rng.gen_range(0..mesh.n_elems());
                let mut r = [rng.gen::<f64>(), rng.gen::<f64>()];
                if r[0] + r[1] > 1.0 {
                    r = [1.0 - r[0], 1.0 - r[1]];
                }
                let (x, _) = field.deformation.deform(t, r);
                let v = field.eval_value(t, r, false);
                assert!((v - f(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_field_eval() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh, 2).unwrap();
        let field = FEField::interpolate(space, id, &|_| 3.25).unwrap();
        for &p in &[[0.2, 0.3], [1.4, -0.2], [-0.3, 0.9]] {
            let (v, g) = field.eval(0, p, true);
            assert!((v - 3.25).abs() < 1e-12);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn linear_field_gradient() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let field = FEField::interpolate(space, id, &|x| x[0]).unwrap();
        for t in 0..mesh.n_elems() {
            let (_, g) = field.eval(t, [0.25, 0.25], false);
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    /// Canonical extension agrees with an independently solved monomial
    /// expansion of the element polynomial.
    #[test]
    fn outside_eval_matches_monomial_oracle() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let mut field = FEField::zero(space.clone(), id);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in field.coeffs.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let elem = 0;
        // solve the 6x6 Vandermonde for the monomial coefficients from the
        // nodal values (independent path: naive Gaussian elimination)
        let monos = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        let local = field.local_coeffs(elem);
        let mut a = [[0.0f64; 7]; 6];
        for (i, node) in space.basis.nodes.iter().enumerate() {
            for (m, &(p, q)) in monos.iter().enumerate() {
                a[i][m] = node[0].powi(p) * node[1].powi(q);
            }
            a[i][6] = local[i];
        }
        for col in 0..6 {
            let piv = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for row in 0..6 {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for m in col..7 {
                        a[row][m] -= f * a[col][m];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..6).map(|i| a[i][6] / a[i][i]).collect();
        let p: [f64; 2] = [1.1, -0.05];
        let oracle: f64 = monos
            .iter()
            .zip(&coef)
            .map(|(&(a, b), c)| c * p[0].powi(a) * p[1].powi(b))
            .sum();
        let v = field.eval_value(elem, p, true);
        assert!((v - oracle).abs() < 1e-11, "{v} vs {oracle}");
    }

    #[test]
    fn oswald_mean_of_shared_node() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 1).unwrap();
        // facet between elements 0 and 1 shares two vertices; feed constant 1
        // from element 0 and 3 from element 1
        let f = mesh
            .facets
            .iter()
            .position(|f| f.elems == (0, Some(1)) || f.elems == (1, Some(0)))
            .expect("elements 0 and 1 adjacent in this mesh");
        let _ = f;
        let vals = |t: usize, _l: usize| if t == 0 { 1.0 } else { 3.0 };
        let out = oswald(&space, &[0, 1], &vals, None).unwrap();
        for g in 0..space.n_dofs {
            let in0 = space.dof_map[0].contains(&g);
            let in1 = space.dof_map[1].contains(&g);
            let expect = match (in0, in1) {
                (true, true) => 2.0,
                (true, false) => 1.0,
                (false, true) => 3.0,
                (false, false) => 0.0,
            };
            assert_eq!(out[g], expect);
        }
    }

    #[test]
    fn oswald_projection_and_idempotence() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let field = FEField::interpolate(space.clone(), id, &|x| x[0] * x[1] + 0.3).unwrap();
        let elems: Vec<usize> = (0..mesh.n_elems()).collect();
        let vals = |t: usize, l: usize| field.coeffs[space.dof_map[t][l]];
        let once = oswald(&space, &elems, &vals, None).unwrap();
        assert_eq!(once, field.coeffs);
        let vals2 = |t: usize, l: usize| once[space.dof_map[t][l]];
        let twice = oswald(&space, &elems, &vals2, None).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn oswald_vertex_mean_direct() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // pick a vertex shared by >= 3 elements and random per-element values
        let v = (0..mesh.n_vertices())
            .find(|&v| mesh.vertex_to_elements[v].len() >= 3)
            .unwrap();
        let elems = mesh.vertex_to_elements[v].clone();
        let per_elem: Vec<f64> = elems.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        let vals = |t: usize, _l: usize| {
            let i = elems.iter().position(|&e| e == t).unwrap();
            per_elem[i]
        };
        let out = oswald(&space, &elems, &vals, None).unwrap();
        let mean = per_elem.iter().sum::<f64>() / per_elem.len() as f64;
        assert!((out[v] - mean).abs() < 1e-14);
    }

    #[test]
    fn restriction_extension_identity() {
        let mesh = mesh_2x2();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let mut field = FEField::interpolate(space.clone(), id, &|x| x[0] - x[1]).unwrap();
        // keep only dofs of elements 0 and 1, evaluate inside element 0
        let keep_elems = [0usize, 1];
        let mut mask = vec![false; space.n_dofs];
        for &t in &keep_elems {
            for &g in &space.dof_map[t] {
                mask[g] = true;
            }
        }
        let before = field.eval_value(0, [0.2, 0.3], false);
        field.restrict(&mask);
        let after = field.eval_value(0, [0.2, 0.3], false);
        assert_eq!(before, after);
    }
}
