//! Isoparametric mesh deformation mapping the piecewise-linear interface
//! onto the higher-order discrete interface.
//!
//! At every Lagrange node of the order-q space on cut elements a displacement
//! d * G is computed: G is the normalized level-set gradient at the node and
//! d solves phi_h(x + d G) = phi_lin(x) by a safeguarded 1D Newton search
//! with bracket |d| <= c_lambda * h. Candidates from adjacent cut elements
//! are combined by Oswald averaging. Vertices never move; on the one-layer
//! transition shell the displacement decays to zero through the finite
//! element interpolation of the boundary values. Everywhere else the map is
//! the identity.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{oswald_average, ScalarSpace};
use crate::levelset::{classify_elements, ElemClass, LevelSetSlice};
use crate::mesh::BackgroundMesh;
use crate::quadrature::simplex_rule;

/// Deformation class of an element at one time level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemRole {
    /// Cut by the linear interface; carries the displacement.
    Cut,
    /// Shares a vertex with a cut element; blends to the identity.
    Transition,
    /// Mapped by the identity.
    Identity,
}

/// Parameters of the deformation search.
#[derive(Clone, Copy, Debug)]
pub struct DeformationParams {
    /// Bracket radius factor: |d| <= c_lambda * h.
    pub c_lambda: f64,
    /// Residual tolerance factor (times h).
    pub tol_factor: f64,
    pub max_iter: usize,
}

impl Default for DeformationParams {
    fn default() -> Self {
        Self { c_lambda: 0.5, tol_factor: 1e-12, max_iter: 50 }
    }
}

struct DeformData {
    space: Arc<ScalarSpace>,
    displacement: Vec<[f64; 2]>,
    /// Order-q geometry node coordinates per supported element.
    geom: Vec<Option<Box<[[f64; 2]]>>>,
}

/// The vector-valued order-q deformation field, supported near cut elements.
pub struct MeshDeformation {
    pub mesh: Arc<BackgroundMesh>,
    pub q: usize,
    pub t: f64,
    pub roles: Vec<ElemRole>,
    /// Measured max nodal |Theta - id|.
    pub max_displacement: f64,
    /// Measured max |D Theta - I| over the check quadrature points.
    pub max_grad_deviation: f64,
    /// Global scaling applied to keep the map injective (1 when fully
    /// resolved).
    pub relaxation: f64,
    data: Option<DeformData>,
}

impl std::fmt::Debug for MeshDeformation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeshDeformation")
            .field("q", &self.q)
            .field("t", &self.t)
            .field("max_displacement", &self.max_displacement)
            .field("identity", &self.data.is_none())
            .finish()
    }
}

impl MeshDeformation {
    /// The global identity map (no cut elements, or q = 1 style usage).
    pub fn identity(mesh: Arc<BackgroundMesh>, q: usize) -> Result<Arc<Self>> {
        let roles = vec![ElemRole::Identity; mesh.n_elems()];
        Ok(Arc::new(Self {
            mesh,
            q,
            t: 0.0,
            roles,
            max_displacement: 0.0,
            max_grad_deviation: 0.0,
            relaxation: 1.0,
            data: None,
        }))
    }

    /// Constructs the deformation for one level set slice.
    pub fn build(
        slice: &LevelSetSlice,
        space_q: Arc<ScalarSpace>,
        params: DeformationParams,
    ) -> Result<Arc<Self>> {
        let mesh = space_q.mesh.clone();
        let q = space_q.k;
        let classes = classify_elements(slice, 0.0);
        let cut_elems: Vec<usize> = (0..mesh.n_elems())
            .filter(|&t| classes[t] == ElemClass::Cut)
            .collect();

        let mut roles = vec![ElemRole::Identity; mesh.n_elems()];
        for &t in &cut_elems {
            roles[t] = ElemRole::Cut;
        }
        for &t in &cut_elems {
            for s in mesh.elem_patch(t) {
                if roles[s] == ElemRole::Identity {
                    roles[s] = ElemRole::Transition;
                }
            }
        }

        if cut_elems.is_empty() || q == 1 {
            // phi_h = phi_lin for q = 1, so the displacement vanishes
            return Ok(Arc::new(Self {
                mesh,
                q,
                t: slice.t,
                roles,
                max_displacement: 0.0,
                max_grad_deviation: 0.0,
                relaxation: 1.0,
                data: None,
            }));
        }

        let h = mesh.h_max;
        let n_vert = mesh.n_vertices();
        let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let candidates = oswald_average::<2>(&space_q, &cut_elems, &|t, l| {
            if l < 3 || failure.borrow().is_some() {
                return [0.0, 0.0];
            }
            match node_displacement(slice, t, l, h, &params) {
                Ok(d) => d,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    [0.0, 0.0]
                }
            }
        });
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }

        let mut displacement = candidates;
        for d in displacement.iter_mut().take(n_vert) {
            *d = [0.0, 0.0]; // vertices never move
        }

        // Under-resolved geometry can make the prescribed displacement fold
        // an element. Relax the whole field by a global factor until the map
        // is injective; continuity is preserved and the factor returns to 1
        // on refinement.
        let mut alpha = 1.0f64;
        loop {
            let scaled: Vec<[f64; 2]> = displacement
                .iter()
                .map(|d| [alpha * d[0], alpha * d[1]])
                .collect();
            let mut geom: Vec<Option<Box<[[f64; 2]]>>> = vec![None; mesh.n_elems()];
            let mut max_displacement = 0.0f64;
            for t in 0..mesh.n_elems() {
                if roles[t] == ElemRole::Identity {
                    continue;
                }
                let [a, b, c] = mesh.triangles[t];
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                let mut g = Vec::with_capacity(space_q.basis.n_dofs());
                for (l, &dof) in space_q.dof_map[t].iter().enumerate() {
                    let disp = scaled[dof];
                    max_displacement = max_displacement.max(disp[0].hypot(disp[1]));
                    if l == 0 {
                        g.push(va);
                    } else if l == 1 {
                        g.push(vb);
                    } else if l == 2 {
                        g.push(vc);
                    } else {
                        let n = space_q.basis.nodes[l];
                        g.push([
                            va[0] + n[0] * (vb[0] - va[0]) + n[1] * (vc[0] - va[0]) + disp[0],
                            va[1] + n[0] * (vb[1] - va[1]) + n[1] * (vc[1] - va[1]) + disp[1],
                        ]);
                    }
                }
                geom[t] = Some(g.into_boxed_slice());
            }

            let mut out = Self {
                mesh: mesh.clone(),
                q,
                t: slice.t,
                roles: roles.clone(),
                max_displacement,
                max_grad_deviation: 0.0,
                relaxation: alpha,
                data: Some(DeformData { space: space_q.clone(), displacement: scaled, geom }),
            };
            match out.check_injectivity() {
                Ok(()) => {
                    if alpha < 1.0 {
                        log::warn!(
                            "deformation at t = {} relaxed by {alpha:.3} to stay injective \
                             (under-resolved geometry)",
                            slice.t
                        );
                    }
                    return Ok(Arc::new(out));
                }
                Err(e) if alpha > 0.1 => {
                    let _ = e;
                    alpha *= 0.7;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Verifies det(D Theta) > 0 at the check quadrature points of every
    /// supported element and records max |D Theta - I|.
    fn check_injectivity(&mut self) -> Result<()> {
        let rule = simplex_rule(2 * self.q + 2)?;
        let mut max_dev = 0.0f64;
        for t in 0..self.mesh.n_elems() {
            if self.roles[t] == ElemRole::Identity {
                continue;
            }
            let ainv = invert2(self.affine_jacobian(t));
            for &p in &rule.points {
                let j = self.jacobian(t, p);
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det <= 0.0 {
                    return Err(Error::ElementInversion(t));
                }
                // D Theta (physical) = J_ref * A^{-1}
                let dtheta = matmul2(j, ainv);
                let dev = ((dtheta[0][0] - 1.0).abs())
                    .max((dtheta[0][1]).abs())
                    .max((dtheta[1][0]).abs())
                    .max((dtheta[1][1] - 1.0).abs());
                max_dev = max_dev.max(dev);
            }
        }
        self.max_grad_deviation = max_dev;
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.data.is_none()
    }

    /// True if the element carries a non-affine geometry map.
    pub fn is_deformed(&self, elem: usize) -> bool {
        self.data.as_ref().is_some_and(|d| d.geom[elem].is_some())
    }

    pub fn support_elems(&self) -> Vec<usize> {
        (0..self.mesh.n_elems()).filter(|&t| self.is_deformed(t)).collect()
    }

    /// Nodal displacement vector of one dof of the order-q layout (zero for
    /// the identity).
    pub fn displacement_at(&self, dof: usize) -> [f64; 2] {
        self.data.as_ref().map_or([0.0, 0.0], |d| d.displacement[dof])
    }

    pub fn affine_jacobian(&self, elem: usize) -> [[f64; 2]; 2] {
        let [a, b, c] = self.mesh.triangles[elem];
        let (va, vb, vc) = (self.mesh.vertices[a], self.mesh.vertices[b], self.mesh.vertices[c]);
        [[vb[0] - va[0], vc[0] - va[0]], [vb[1] - va[1], vc[1] - va[1]]]
    }

    fn affine_point(&self, elem: usize, xhat: [f64; 2]) -> [f64; 2] {
        let [a, b, c] = self.mesh.triangles[elem];
        let (va, vb, vc) = (self.mesh.vertices[a], self.mesh.vertices[b], self.mesh.vertices[c]);
        [
            va[0] + xhat[0] * (vb[0] - va[0]) + xhat[1] * (vc[0] - va[0]),
            va[1] + xhat[0] * (vb[1] - va[1]) + xhat[1] * (vc[1] - va[1]),
        ]
    }

    /// Evaluates the element-local geometry map and its Jacobian at a
    /// reference point. Points outside the reference simplex evaluate the
    /// canonical polynomial extension of the map.
    pub fn deform(&self, elem: usize, xhat: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        if let Some(data) = &self.data {
            if let Some(geom) = &data.geom[elem] {
                // vertex invariance is exact by construction
                if xhat == [0.0, 0.0] {
                    return (geom[0], self.jacobian(elem, xhat));
                }
                if xhat == [1.0, 0.0] {
                    return (geom[1], self.jacobian(elem, xhat));
                }
                if xhat == [0.0, 1.0] {
                    return (geom[2], self.jacobian(elem, xhat));
                }
                let basis = &data.space.basis;
                let n = basis.n_dofs();
                let mut vals = vec![0.0; n];
                let mut grads = vec![[0.0; 2]; n];
                basis.eval(xhat[0], xhat[1], &mut vals);
                basis.grad(xhat[0], xhat[1], &mut grads);
                let mut x = [0.0, 0.0];
                let mut j = [[0.0; 2]; 2];
                for (g, (v, gr)) in geom.iter().zip(vals.iter().zip(&grads)) {
                    x[0] += g[0] * v;
                    x[1] += g[1] * v;
                    j[0][0] += g[0] * gr[0];
                    j[0][1] += g[0] * gr[1];
                    j[1][0] += g[1] * gr[0];
                    j[1][1] += g[1] * gr[1];
                }
                return (x, j);
            }
        }
        (self.affine_point(elem, xhat), self.affine_jacobian(elem))
    }

    /// Jacobian of the geometry map w.r.t. reference coordinates.
    pub fn jacobian(&self, elem: usize, xhat: [f64; 2]) -> [[f64; 2]; 2] {
        if let Some(data) = &self.data {
            if let Some(geom) = &data.geom[elem] {
                let basis = &data.space.basis;
                let n = basis.n_dofs();
                let mut grads = vec![[0.0; 2]; n];
                basis.grad(xhat[0], xhat[1], &mut grads);
                let mut j = [[0.0; 2]; 2];
                for (g, gr) in geom.iter().zip(&grads) {
                    j[0][0] += g[0] * gr[0];
                    j[0][1] += g[0] * gr[1];
                    j[1][0] += g[1] * gr[0];
                    j[1][1] += g[1] * gr[1];
                }
                return j;
            }
        }
        self.affine_jacobian(elem)
    }

    /// Inverts the element-local geometry map by damped Newton iteration
    /// starting from `guess`. The result may lie slightly outside the
    /// reference simplex; that is the point of the canonical extension.
    pub fn invert_local(&self, elem: usize, x: [f64; 2], guess: [f64; 2]) -> Result<[f64; 2]> {
        if !self.is_deformed(elem) {
            let (l1, l2) = self.mesh.barycentric(elem, x);
            return Ok([l1, l2]);
        }
        let tol = 1e-12 * self.mesh.h_max;
        if let Some(xhat) = self.newton_inverse(elem, x, guess, tol) {
            return Ok(xhat);
        }
        // restart from the affine preimage; the displacement is O(h^2), so
        // it is usually an excellent guess even far outside the simplex
        let affine = {
            let (l1, l2) = self.mesh.barycentric(elem, x);
            [l1, l2]
        };
        if let Some(xhat) = self.newton_inverse(elem, x, affine, tol) {
            return Ok(xhat);
        }
        Err(Error::LocalInverseFailed {
            elem,
            detail: format!("no convergence in 50 iterations at target ({}, {})", x[0], x[1]),
        })
    }

    /// Preimage for stabilization evaluations. Prefers the exact inverse;
    /// when the canonical extension folds before reaching `x` (possible on
    /// coarse meshes under strong deformation, where the exact preimage does
    /// not exist) it returns the best least-squares point instead.
    pub fn invert_local_relaxed(&self, elem: usize, x: [f64; 2], guess: [f64; 2]) -> [f64; 2] {
        if !self.is_deformed(elem) {
            let (l1, l2) = self.mesh.barycentric(elem, x);
            return [l1, l2];
        }
        let tol = 1e-12 * self.mesh.h_max;
        let (best, rn) = self.newton_core(elem, x, guess, tol);
        if rn <= tol {
            return best;
        }
        let affine = {
            let (l1, l2) = self.mesh.barycentric(elem, x);
            [l1, l2]
        };
        let (best2, rn2) = self.newton_core(elem, x, affine, tol);
        if rn2 < rn {
            best2
        } else {
            best
        }
    }

    fn newton_inverse(
        &self,
        elem: usize,
        x: [f64; 2],
        guess: [f64; 2],
        tol: f64,
    ) -> Option<[f64; 2]> {
        let (best, rn) = self.newton_core(elem, x, guess, tol);
        if rn <= tol {
            Some(best)
        } else {
            None
        }
    }

    /// Damped Newton; returns the best iterate and its residual norm.
    fn newton_core(&self, elem: usize, x: [f64; 2], guess: [f64; 2], tol: f64) -> ([f64; 2], f64) {
        let mut xhat = guess;
        let (mut fx, mut j) = self.deform(elem, xhat);
        let mut rn = (x[0] - fx[0]).hypot(x[1] - fx[1]);
        if !rn.is_finite() {
            return (guess, f64::INFINITY);
        }
        for _ in 0..50 {
            if rn <= tol {
                return (xhat, rn);
            }
            let res = [x[0] - fx[0], x[1] - fx[1]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                return (xhat, rn);
            }
            let jinv = invert2(j);
            let step = [
                jinv[0][0] * res[0] + jinv[0][1] * res[1],
                jinv[1][0] * res[0] + jinv[1][1] * res[1],
            ];
            // damp until the residual decreases
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..8 {
                let cand = [xhat[0] + lambda * step[0], xhat[1] + lambda * step[1]];
                let (fc, jc) = self.deform(elem, cand);
                let rc = (x[0] - fc[0]).hypot(x[1] - fc[1]);
                if rc.is_finite() && rc < rn {
                    xhat = cand;
                    fx = fc;
                    j = jc;
                    rn = rc;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                return (xhat, rn);
            }
        }
        (xhat, rn)
    }
}

/// Displacement candidate at a Lagrange node of a cut element.
fn node_displacement(
    slice: &LevelSetSlice,
    elem: usize,
    local: usize,
    h: f64,
    params: &DeformationParams,
) -> Result<[f64; 2]> {
    let phi = &slice.phi_h;
    let space = &phi.space;
    let xhat = space.basis.nodes[local];
    let (_, grad) = phi.eval(elem, xhat, false);
    let gnorm = grad[0].hypot(grad[1]);
    if !gnorm.is_finite() || gnorm < 1e-14 {
        return Err(Error::DeformationSearchFailed {
            elem,
            detail: format!("vanishing level-set gradient at node {local}"),
        });
    }
    let gdir = [grad[0] / gnorm, grad[1] / gnorm];
    let target = slice.lin_at(elem, xhat);

    // reference-space direction of the physical search ray
    let mesh = slice.mesh();
    let [a, b, c] = mesh.triangles[elem];
    let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let aff = [[vb[0] - va[0], vc[0] - va[0]], [vb[1] - va[1], vc[1] - va[1]]];
    let ainv = invert2(aff);
    let ghat = [
        ainv[0][0] * gdir[0] + ainv[0][1] * gdir[1],
        ainv[1][0] * gdir[0] + ainv[1][1] * gdir[1],
    ];

    let local_coeffs = phi.local_coeffs(elem);
    let basis = &space.basis;
    let n = basis.n_dofs();
    let mut vals = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    let mut eval_ray = |d: f64| -> (f64, f64) {
        let p = [xhat[0] + d * ghat[0], xhat[1] + d * ghat[1]];
        basis.eval(p[0], p[1], &mut vals);
        basis.grad(p[0], p[1], &mut grads);
        let mut v = -target;
        let mut dv = 0.0;
        for (ci, (vi, gi)) in local_coeffs.iter().zip(vals.iter().zip(&grads)) {
            v += ci * vi;
            dv += ci * (gi[0] * ghat[0] + gi[1] * ghat[1]);
        }
        (v, dv)
    };

    let dmax = params.c_lambda * h;
    let tol = params.tol_factor * h;
    let (v0, _) = eval_ray(0.0);
    if v0.abs() <= tol {
        return Ok([0.0, 0.0]);
    }

    // outward scan for a sign-change bracket around zero
    let nscan = 8;
    let mut bracket = None;
    let (mut lo, mut vlo) = (0.0, v0);
    let (mut hi, mut vhi) = (0.0, v0);
    for j in 1..=nscan {
        let d = dmax * j as f64 / nscan as f64;
        let (vp, _) = eval_ray(d);
        if vhi * vp <= 0.0 {
            bracket = Some((hi, vhi, d, vp));
            break;
        }
        hi = d;
        vhi = vp;
        let (vm, _) = eval_ray(-d);
        if vlo * vm <= 0.0 {
            bracket = Some((-d, vm, lo, vlo));
            break;
        }
        lo = -d;
        vlo = vm;
    }
    let (mut a1, mut va1, mut b1, mut vb1) = bracket.ok_or_else(|| {
        Error::DeformationSearchFailed {
            elem,
            detail: format!(
                "no bracket within |d| <= {dmax:.3e} at node {local} (under-resolved geometry)"
            ),
        }
    })?;

    // safeguarded Newton inside the bracket
    let mut d = 0.5 * (a1 + b1);
    let (mut v, mut dv) = eval_ray(d);
    for _ in 0..params.max_iter {
        if v.abs() <= tol {
            return Ok([d * gdir[0], d * gdir[1]]);
        }
        if v * va1 <= 0.0 {
            b1 = d;
            vb1 = v;
        } else {
            a1 = d;
            va1 = v;
        }
        debug_assert!(va1 * vb1 <= 0.0);
        let newton = if dv != 0.0 { d - v / dv } else { f64::NAN };
        d = if newton.is_finite() && newton > a1.min(b1) && newton < a1.max(b1) {
            newton
        } else {
            0.5 * (a1 + b1)
        };
        let e = eval_ray(d);
        v = e.0;
        dv = e.1;
    }
    if v.abs() <= 1e3 * tol {
        return Ok([d * gdir[0], d * gdir[1]]);
    }
    Err(Error::DeformationSearchFailed {
        elem,
        detail: format!("Newton stalled at node {local}: residual {:.3e}", v.abs()),
    })
}

/// Comparison record of two deformations on the same mesh.
#[derive(Clone, Debug)]
pub struct DeformationReport {
    /// Per-element max nodal difference |Theta_m - Theta_n|.
    pub per_elem: Vec<f64>,
    pub global_max: f64,
    /// Elements whose role (cut/transition/undeformed) changed.
    pub class_changes: usize,
}

/// Nodal difference and class-change diagnostics between two time levels.
pub fn deformation_report(a: &MeshDeformation, b: &MeshDeformation) -> DeformationReport {
    assert!(Arc::ptr_eq(&a.mesh, &b.mesh), "deformations live on different meshes");
    let mesh = &a.mesh;
    let mut per_elem = vec![0.0f64; mesh.n_elems()];
    let space = a
        .data
        .as_ref()
        .map(|d| d.space.clone())
        .or_else(|| b.data.as_ref().map(|d| d.space.clone()));
    if let Some(space) = space {
        for t in 0..mesh.n_elems() {
            let mut m = 0.0f64;
            for &g in &space.dof_map[t] {
                let da = a.displacement_at(g);
                let db = b.displacement_at(g);
                m = m.max((da[0] - db[0]).hypot(da[1] - db[1]));
            }
            per_elem[t] = m;
        }
    }
    let global_max = per_elem.iter().cloned().fold(0.0, f64::max);
    let class_changes = a.roles.iter().zip(&b.roles).filter(|(ra, rb)| ra != rb).count();
    DeformationReport { per_elem, global_max, class_changes }
}

pub(crate) fn invert2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

pub(crate) fn matmul2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshPattern;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle(x: [f64; 2], _t: f64) -> f64 {
        (x[0] * x[0] + x[1] * x[1]).sqrt() - 0.5
    }

    fn build_circle(nx: usize, q: usize) -> (Arc<BackgroundMesh>, LevelSetSlice, Arc<MeshDeformation>) {
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)
                .unwrap();
        let space = ScalarSpace::build(mesh.clone(), q).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), q).unwrap();
        let slice = LevelSetSlice::discretize(&circle, 0.0, space.clone(), id).unwrap();
        let theta =
            MeshDeformation::build(&slice, space, DeformationParams::default()).unwrap();
        (mesh, slice, theta)
    }

    #[test]
    fn affine_levelset_gives_identity_displacement() {
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 4, 4, MeshPattern::Diagonal)
                .unwrap();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let phi = |x: [f64; 2], _t: f64| x[0] - 0.3;
        let slice = LevelSetSlice::discretize(&phi, 0.0, space.clone(), id).unwrap();
        let theta = MeshDeformation::build(&slice, space, DeformationParams::default()).unwrap();
        assert!(theta.max_displacement < 1e-13, "{}", theta.max_displacement);
    }

    #[test]
    fn q1_is_identity() {
        let (_, _, theta) = build_circle(8, 1);
        assert!(theta.is_identity());
    }

    #[test]
    fn vertices_fixed_bitwise() {
        let (mesh, _, theta) = build_circle(8, 2);
        for t in 0..mesh.n_elems() {
            let verts = mesh.triangles[t];
            for (l, &refc) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
                let (x, _) = theta.deform(t, refc);
                assert_eq!(x, mesh.vertices[verts[l]]);
            }
        }
    }

    #[test]
    fn identity_off_support() {
        let (mesh, _, theta) = build_circle(8, 2);
        for t in 0..mesh.n_elems() {
            if theta.roles[t] == ElemRole::Identity {
                let p = [0.21, 0.37];
                let (x, j) = theta.deform(t, p);
                let (xa, ja) = MeshDeformation::identity(mesh.clone(), 2)
                    .unwrap()
                    .deform(t, p);
                assert_eq!(x, xa);
                assert_eq!(j, ja);
            }
        }
    }

    #[test]
    fn displacement_is_second_order() {
        // |Theta - id| / h^2 and |D Theta - I| / h stay bounded
        let mut prev_ratio = None;
        for lx in 0..3 {
            let nx = 8 << lx;
            let (mesh, _, theta) = build_circle(nx, 2);
            let h = mesh.h_max;
            let r1 = theta.max_displacement / (h * h);
            let r2 = theta.max_grad_deviation / h;
            assert!(r1 < 2.0, "|Theta-id|/h^2 = {r1}");
            assert!(r2 < 5.0, "|DTheta-I|/h = {r2}");
            if let Some((p1, p2)) = prev_ratio {
                let (p1, p2): (f64, f64) = (p1, p2);
                assert!(r1 < 4.0 * p1.max(0.1));
                assert!(r2 < 4.0 * p2.max(0.1));
            }
            prev_ratio = Some((r1, r2));
        }
    }

    #[test]
    fn invert_identity_exact() {
        let (mesh, _, _) = build_circle(4, 2);
        let id = MeshDeformation::identity(mesh, 2).unwrap();
        let x = id.deform(3, [0.3, 0.5]).0;
        let xhat = id.invert_local(3, x, [0.0, 0.0]).unwrap();
        assert!((xhat[0] - 0.3).abs() < 1e-13 && (xhat[1] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn invert_roundtrip_random() {
        let (mesh, _, theta) = build_circle(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let support = theta.support_elems();
        assert!(!support.is_empty());
        for _ in 0..1000 {
            let t = support[rng.gen_range(0..support.len())];
            let mut p = [rng.gen::<f64>(), rng.gen::<f64>()];
            if p[0] + p[1] > 1.0 {
                p = [1.0 - p[0], 1.0 - p[1]];
            }
            let (x, _) = theta.deform(t, p);
            let back = theta.invert_local(t, x, p).unwrap();
            let err = (back[0] - p[0]).hypot(back[1] - p[1]);
            assert!(err < 1e-10 * mesh.h_max.max(1.0), "roundtrip error {err}");
        }
    }

    #[test]
    fn node_shift_between_times_is_h2() {
        // |xhat_i - yhat_i| <= C h^2 for nodes of cut elements at two nearby
        // time levels of a moving circle
        for lx in 0..2 {
            let nx = 8 << lx;
            let mesh = BackgroundMesh::build_structured(
                -1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal,
            )
            .unwrap();
            let h = mesh.h_max;
            let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
            let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
            let phi = |x: [f64; 2], t: f64| ((x[0] - 0.05 * t).powi(2) + x[1] * x[1]).sqrt() - 0.5;
            let s_m = LevelSetSlice::discretize(&phi, 0.0, space.clone(), id.clone()).unwrap();
            let s_n = LevelSetSlice::discretize(&phi, h, space.clone(), id).unwrap();
            let th_m = MeshDeformation::build(&s_m, space.clone(), Default::default()).unwrap();
            let th_n = MeshDeformation::build(&s_n, space.clone(), Default::default()).unwrap();
            let mut max_shift = 0.0f64;
            for t in 0..mesh.n_elems() {
                if th_n.roles[t] != ElemRole::Cut || !th_m.is_deformed(t) {
                    continue;
                }
                for l in 0..space.basis.n_dofs() {
                    let xhat = space.basis.nodes[l];
                    let (xn, _) = th_n.deform(t, xhat);
                    let yhat = th_m.invert_local(t, xn, xhat).unwrap();
                    max_shift = max_shift.max((yhat[0] - xhat[0]).hypot(yhat[1] - xhat[1]));
                }
            }
            // reference-space shift ~ h^2 / h = h after pullback; physical ~ h^2
            assert!(max_shift < 3.0 * h, "shift {max_shift} at h={h}");
        }
    }

    #[test]
    fn report_zero_for_same_deformation() {
        let (_, _, theta) = build_circle(8, 2);
        let rep = deformation_report(&theta, &theta);
        assert_eq!(rep.global_max, 0.0);
        assert_eq!(rep.class_changes, 0);
    }
}
