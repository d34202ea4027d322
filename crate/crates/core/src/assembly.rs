//! Element and facet assembly: mass term with BDF stencils,
//! convection-diffusion forms, the direct-version ghost penalty, right-hand
//! side, and error norms on the discrete domain.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cutquad::{decompose, interface_rule, mapped_interface, mapped_volume, volume_rule, Region};
use crate::error::{Error, Result};
use crate::fespace::{FEField, ScalarSpace};
use crate::isoparam::MeshDeformation;
use crate::levelset::{ActiveSlice, ElemClass, LevelSetSlice};
use crate::quadrature::simplex_rule;

/// Compressed sparse rows with a fixed square dimension.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

type Triplet = (u32, u32, f64, u32);

impl CsrMatrix {
    /// Builds CSR from triplets with a deterministic summation order
    /// (sorted by row, column, then source id), independent of the number
    /// of assembly workers.
    pub fn from_triplets(n: usize, mut triplets: Vec<Triplet>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1, a.3).cmp(&(b.0, b.1, b.3)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &(r, c, v, _) in &triplets {
            if col_idx.len() > row_ptr[r as usize]
                && *col_idx.last().unwrap() == c as usize
                && row_ptr[r as usize + 1] == col_idx.len()
            {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c as usize);
                values.push(v);
                row_ptr[r as usize + 1] = col_idx.len();
            }
        }
        // prefix-max to finalize empty rows
        for i in 1..=n {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ax = self.matvec(y);
        x.iter().zip(&ax).map(|(xi, yi)| xi * yi).sum()
    }

    /// Union-pattern linear combination of same-dimension matrices.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let n = terms[0].1.n;
        let mut triplets: Vec<Triplet> = Vec::new();
        for (src, (coef, m)) in terms.iter().enumerate() {
            assert_eq!(m.n, n);
            for i in 0..n {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    triplets.push((i as u32, m.col_idx[k] as u32, coef * m.values[k], src as u32));
                }
            }
        }
        CsrMatrix::from_triplets(n, triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[k])] += self.values[k];
            }
        }
        d
    }

    /// Largest relative asymmetry |A - A^T| / max|A|.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let scale = d.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((d[(i, j)] - d[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Writes the matrix in MatrixMarket coordinate format.
    pub fn write_matrix_market(&self, w: &mut dyn std::io::Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:e}", i + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Sparse linear system over the active dofs.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Active index -> global dof.
    pub active_to_global: Vec<usize>,
    /// Global dof -> active index (usize::MAX if inactive).
    pub global_to_active: Vec<usize>,
}

impl SparseSystem {
    pub fn scatter_to_global(&self, x: &[f64], n_global: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_global];
        for (a, &g) in self.active_to_global.iter().enumerate() {
            out[g] = x[a];
        }
        out
    }

    pub fn gather_from_global(&self, x: &[f64]) -> Vec<f64> {
        self.active_to_global.iter().map(|&g| x[g]).collect()
    }
}

/// Form variant for convection and diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormVariant {
    /// Skew-symmetrized convection with the interface boundary term.
    Analysis,
    /// Plain convective form without the boundary term.
    Experiment,
}

/// Coefficients and discretization choices of the scheme.
#[derive(Clone)]
pub struct SchemeParams {
    pub nu: f64,
    pub velocity: Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>,
    pub velocity_div: Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>,
    pub source: Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>,
    pub r: usize,
    pub delta: f64,
    pub c_gamma: f64,
    pub form_variant: FormVariant,
    /// Volume quadrature exactness; defaults to 2k+2.
    pub quad_volume: Option<usize>,
    /// Interface quadrature exactness; defaults to 2k+2.
    pub quad_interface: Option<usize>,
}

impl SchemeParams {
    pub fn volume_degree(&self, k: usize) -> usize {
        self.quad_volume.unwrap_or(2 * k + 2)
    }
    pub fn interface_degree(&self, k: usize) -> usize {
        self.quad_interface.unwrap_or(2 * k + 2)
    }
}

impl std::fmt::Debug for SchemeParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchemeParams")
            .field("nu", &self.nu)
            .field("r", &self.r)
            .field("delta", &self.delta)
            .field("c_gamma", &self.c_gamma)
            .field("form_variant", &self.form_variant)
            .finish()
    }
}

/// BDF stencil: time derivative ~ (lead * u^n + sum_j history[j] * u^{n-1-j}) / dt.
#[derive(Clone, Debug)]
pub struct BdfStencil {
    pub lead: f64,
    pub history: Vec<f64>,
}

pub fn bdf_stencil(r: usize) -> Result<BdfStencil> {
    match r {
        1 => Ok(BdfStencil { lead: 1.0, history: vec![-1.0] }),
        2 => Ok(BdfStencil { lead: 1.5, history: vec![-2.0, 0.5] }),
        3 => Ok(BdfStencil { lead: 11.0 / 6.0, history: vec![-3.0, 1.5, -1.0 / 3.0] }),
        _ => Err(Error::UnsupportedOrder { requested: r, supported: "1..=3".into() }),
    }
}

/// Geometry bundle of one time level.
pub struct StepGeometry<'a> {
    pub slice: &'a LevelSetSlice,
    pub active: &'a ActiveSlice,
    pub theta: &'a Arc<MeshDeformation>,
}

impl StepGeometry<'_> {
    fn neg_rule_for(&self, t: usize, degree: usize) -> Result<Option<crate::QuadratureRule>> {
        match self.active.elem_class[t] {
            ElemClass::Pos => Ok(None),
            ElemClass::Neg => Ok(Some(volume_rule(
                &decompose([-1.0, -1.0, -1.0]),
                Region::Neg,
                degree,
            )?)),
            ElemClass::Cut => Ok(Some(volume_rule(
                &decompose(self.slice.lin_values(t)),
                Region::Neg,
                degree,
            )?)),
        }
    }
}

fn active_index_map(space: &ScalarSpace, active: &ActiveSlice) -> (Vec<usize>, Vec<usize>) {
    let active_to_global = active.active_dofs.clone();
    let mut global_to_active = vec![usize::MAX; space.n_dofs];
    for (a, &g) in active_to_global.iter().enumerate() {
        global_to_active[g] = a;
    }
    (active_to_global, global_to_active)
}

/// Dense local element matrix accumulated as sum of w * (row ⊗ col).
struct LocalMat {
    n: usize,
    data: Vec<f64>,
}

impl LocalMat {
    fn new(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }
    fn rank_one(&mut self, w: f64, row: &[f64], col: &[f64]) {
        for i in 0..self.n {
            let wi = w * row[i];
            if wi == 0.0 {
                continue;
            }
            for j in 0..self.n {
                self.data[i * self.n + j] += wi * col[j];
            }
        }
    }
}

/// Mass matrix over the discrete domain (the negative region), on active dofs.
pub fn assemble_mass(geo: &StepGeometry, space: &ScalarSpace, degree: usize) -> Result<CsrMatrix> {
    let (a2g, g2a) = active_index_map(space, geo.active);
    let triplets = assemble_volume_elements(geo, space, degree, &g2a, &|_x, _t| {
        VolumeCoeffs { mass: 1.0, diffusion: 0.0, velocity: [0.0, 0.0], reaction: 0.0 }
    })?;
    Ok(CsrMatrix::from_triplets(a2g.len(), triplets))
}

struct VolumeCoeffs {
    mass: f64,
    diffusion: f64,
    velocity: [f64; 2],
    reaction: f64,
}

/// Shared element sweep for volume forms: integrates
/// mass*u*v + diffusion*grad u . grad v + (velocity . grad u) v + reaction*u*v
/// over the negative region of every active element, with the skew variant
/// handled by the caller through two passes.
fn assemble_volume_elements(
    geo: &StepGeometry,
    space: &ScalarSpace,
    degree: usize,
    g2a: &[usize],
    coeffs: &(dyn Fn([f64; 2], f64) -> VolumeCoeffs + Sync),
) -> Result<Vec<Triplet>> {
    let nloc = space.basis.n_dofs();
    let results: Vec<Result<Vec<Triplet>>> = geo
        .active
        .active_elems
        .par_iter()
        .map(|&t| {
            let rule = match geo.neg_rule_for(t, degree)? {
                Some(r) => r,
                None => return Ok(Vec::new()),
            };
            let mut local = LocalMat::new(nloc);
            let mut vals = vec![0.0; nloc];
            let mut grads = vec![[0.0; 2]; nloc];
            let mut pgrads = vec![[0.0; 2]; nloc];
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let (x, j) = geo.theta.deform(t, *p);
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det <= 0.0 {
                    return Err(Error::ElementInversion(t));
                }
                space.basis.eval(p[0], p[1], &mut vals);
                space.basis.grad(p[0], p[1], &mut grads);
                let jinv = crate::isoparam::invert2(j);
                for (pg, g) in pgrads.iter_mut().zip(&grads) {
                    // J^{-T} * reference gradient
                    *pg = [
                        jinv[0][0] * g[0] + jinv[1][0] * g[1],
                        jinv[0][1] * g[0] + jinv[1][1] * g[1],
                    ];
                }
                let c = coeffs(x, geo.slice.t);
                let wq = w * det;
                if c.mass != 0.0 || c.reaction != 0.0 {
                    local.rank_one(wq * (c.mass + c.reaction), &vals, &vals);
                }
                if c.diffusion != 0.0 {
                    for i in 0..nloc {
                        for jj in 0..nloc {
                            local.data[i * nloc + jj] += wq
                                * c.diffusion
                                * (pgrads[i][0] * pgrads[jj][0] + pgrads[i][1] * pgrads[jj][1]);
                        }
                    }
                }
                if c.velocity != [0.0, 0.0] {
                    // (w . grad u) v : row = test values, col = w . grad trial
                    let wdotg: Vec<f64> = pgrads
                        .iter()
                        .map(|g| c.velocity[0] * g[0] + c.velocity[1] * g[1])
                        .collect();
                    local.rank_one(wq, &vals, &wdotg);
                }
            }
            Ok(scatter_local(&local, &space.dof_map[t], g2a, t as u32))
        })
        .collect();
    let mut triplets = Vec::new();
    for r in results {
        triplets.extend(r?);
    }
    Ok(triplets)
}

fn scatter_local(local: &LocalMat, dofs: &[usize], g2a: &[usize], src: u32) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(local.n * local.n);
    for i in 0..local.n {
        let ra = g2a[dofs[i]];
        if ra == usize::MAX {
            continue;
        }
        for j in 0..local.n {
            let ca = g2a[dofs[j]];
            if ca == usize::MAX {
                continue;
            }
            let v = local.data[i * local.n + j];
            if v != 0.0 {
                out.push((ra as u32, ca as u32, v, src));
            }
        }
    }
    out
}

/// Convection-diffusion bilinear form on active dofs. The `Analysis` variant
/// uses the skew-symmetrized convection plus the interface boundary term;
/// the `Experiment` variant uses the plain convective form.
pub fn assemble_bilinear(
    geo: &StepGeometry,
    space: &ScalarSpace,
    params: &SchemeParams,
) -> Result<CsrMatrix> {
    let (a2g, g2a) = active_index_map(space, geo.active);
    let degree = params.volume_degree(space.k);
    let t_now = geo.slice.t;
    let nu = params.nu;
    let velocity = params.velocity.clone();
    let vdiv = params.velocity_div.clone();

    let mut triplets = match params.form_variant {
        FormVariant::Experiment => {
            // nu grad.grad + (w.grad u) v + (div w) u v
            assemble_volume_elements(geo, space, degree, &g2a, &move |x, t| VolumeCoeffs {
                mass: 0.0,
                diffusion: nu,
                velocity: velocity(x, t),
                reaction: vdiv(x, t),
            })?
        }
        FormVariant::Analysis => {
            // nu grad.grad + 1/2 [(w.grad u) v - (w.grad v) u] + 1/2 (div w) u v
            // assembled as the plain form plus its negated transpose half
            let velocity2 = params.velocity.clone();
            let vdiv2 = params.velocity_div.clone();
            let half_conv =
                assemble_volume_elements(geo, space, degree, &g2a, &move |x, t| VolumeCoeffs {
                    mass: 0.0,
                    diffusion: 0.0,
                    velocity: velocity2(x, t),
                    reaction: 0.0,
                })?;
            let velocity3 = params.velocity.clone();
            let mut trip =
                assemble_volume_elements(geo, space, degree, &g2a, &move |x, t| VolumeCoeffs {
                    mass: 0.0,
                    diffusion: nu,
                    velocity: [0.0, 0.0],
                    reaction: 0.5 * vdiv2(x, t),
                })?;
            for (r, c, v, src) in half_conv {
                trip.push((r, c, 0.5 * v, src));
                trip.push((c, r, -0.5 * v, src));
            }
            let _ = velocity3;
            trip
        }
    };

    if params.form_variant == FormVariant::Analysis {
        // 1/2 int_Gamma (w.n) u v ds over the mapped interface
        let idegree = params.interface_degree(space.k);
        let nloc = space.basis.n_dofs();
        for &t in &geo.active.active_elems {
            if geo.active.elem_class[t] != ElemClass::Cut {
                continue;
            }
            let lin = geo.slice.lin_values(t);
            let d = decompose(lin);
            let ir = interface_rule(&d, idegree)?;
            if ir.points.is_empty() {
                continue;
            }
            let mapped = mapped_interface(geo.theta, t, &ir, lin)?;
            let mut local = LocalMat::new(nloc);
            let mut vals = vec![0.0; nloc];
            for ((p, _), (x, w, n)) in ir.points.iter().zip(&ir.weights).zip(&mapped) {
                space.basis.eval(p[0], p[1], &mut vals);
                let wvec = (params.velocity)(*x, t_now);
                let wn = wvec[0] * n[0] + wvec[1] * n[1];
                local.rank_one(0.5 * w * wn, &vals, &vals);
            }
            triplets.extend(scatter_local(&local, &space.dof_map[t], &g2a, t as u32));
        }
    }

    Ok(CsrMatrix::from_triplets(a2g.len(), triplets))
}

/// Builds the local ghost-penalty matrix of one facet over the concatenated
/// dof lists of its two adjacent elements:
/// h^{-2} int_{T1 u T2} (u_1 - u_2)(v_1 - v_2) dx with u_i the canonical
/// extensions of the mapped element polynomials.
pub(crate) fn ghost_penalty_local(
    theta: &MeshDeformation,
    geo_mesh_h: f64,
    t1: usize,
    t2: usize,
    space: &ScalarSpace,
    degree: usize,
) -> Result<LocalGhost> {
    let nloc = space.basis.n_dofs();
    let rule = simplex_rule(degree)?;
    let mut local = LocalMat::new(2 * nloc);
    let mut own = vec![0.0; nloc];
    let mut other = vec![0.0; nloc];
    let mut diff = vec![0.0; 2 * nloc];
    let scale = 1.0 / (geo_mesh_h * geo_mesh_h);
    for (side, (&ta, &tb)) in [(t1, t2), (t2, t1)].iter().map(|(a, b)| (a, b)).enumerate() {
        let mapped = mapped_volume(theta, ta, &rule)?;
        for ((p, _), (x, w)) in rule.points.iter().zip(&rule.weights).zip(&mapped) {
            space.basis.eval(p[0], p[1], &mut own);
            // evaluate the neighbor's extended polynomial at the preimage of
            // the same physical point under the neighbor's extended map; the
            // relaxed inverse covers fold-over of the extension on coarse
            // meshes under strong deformation
            let guess = {
                let (l1, l2) = theta.mesh.barycentric(tb, *x);
                [l1, l2]
            };
            let yhat = theta.invert_local_relaxed(tb, *x, guess);
            space.basis.eval(yhat[0], yhat[1], &mut other);
            let (off_a, off_b) = if side == 0 { (0, nloc) } else { (nloc, 0) };
            for i in 0..nloc {
                diff[off_a + i] = own[i];
                diff[off_b + i] = -other[i];
            }
            local.rank_one(scale * w, &diff, &diff);
        }
    }
    Ok(LocalGhost { local })
}

pub(crate) struct LocalGhost {
    local: LocalMat,
}

impl LocalGhost {
    /// Energy of a broken pair of element-local coefficient vectors.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn energy(&self, c1: &[f64], c2: &[f64]) -> f64 {
        let n = c1.len();
        let c: Vec<f64> = c1.iter().chain(c2.iter()).copied().collect();
        let mut e = 0.0;
        for i in 0..2 * n {
            for j in 0..2 * n {
                e += c[i] * self.local.data[i * 2 * n + j] * c[j];
            }
        }
        e
    }
}

/// Direct-version ghost penalty over the active facets, unweighted (the
/// caller applies gamma). Positive semi-definite by construction.
pub fn assemble_ghost_penalty(
    geo: &StepGeometry,
    space: &ScalarSpace,
    params: &SchemeParams,
) -> Result<CsrMatrix> {
    let (a2g, g2a) = active_index_map(space, geo.active);
    let degree = params.volume_degree(space.k);
    let mesh = &space.mesh;
    let h = mesh.h_max;
    let results: Vec<Result<Vec<Triplet>>> = geo
        .active
        .active_facets
        .par_iter()
        .map(|&f| {
            let (t1, t2) = match mesh.facets[f].elems {
                (t1, Some(t2)) => (t1, t2),
                _ => return Ok(Vec::new()),
            };
            let lg = ghost_penalty_local(geo.theta, h, t1, t2, space, degree)?;
            let dofs: Vec<usize> = space.dof_map[t1]
                .iter()
                .chain(space.dof_map[t2].iter())
                .copied()
                .collect();
            Ok(scatter_local(&lg.local, &dofs, &g2a, f as u32))
        })
        .collect();
    let mut triplets = Vec::new();
    for r in results {
        triplets.extend(r?);
    }
    Ok(CsrMatrix::from_triplets(a2g.len(), triplets))
}

/// Right-hand side: the source integrated against test functions over the
/// discrete domain, on active dofs.
pub fn assemble_rhs(
    geo: &StepGeometry,
    space: &ScalarSpace,
    params: &SchemeParams,
    t_now: f64,
) -> Result<Vec<f64>> {
    let (a2g, g2a) = active_index_map(space, geo.active);
    let degree = params.volume_degree(space.k);
    let nloc = space.basis.n_dofs();
    let mut rhs = vec![0.0; a2g.len()];
    let mut vals = vec![0.0; nloc];
    for &t in &geo.active.active_elems {
        let rule = match geo.neg_rule_for(t, degree)? {
            Some(r) => r,
            None => continue,
        };
        let mapped = mapped_volume(geo.theta, t, &rule)?;
        let mut local = vec![0.0; nloc];
        for ((p, _), (x, w)) in rule.points.iter().zip(&rule.weights).zip(&mapped) {
            let g = (params.source)(*x, t_now);
            space.basis.eval(p[0], p[1], &mut vals);
            for i in 0..nloc {
                local[i] += w * g * vals[i];
            }
        }
        for (i, &g) in space.dof_map[t].iter().enumerate() {
            let a = g2a[g];
            if a != usize::MAX {
                rhs[a] += local[i];
            }
        }
    }
    Ok(rhs)
}

/// Assembled matrices of one time step.
pub struct StepSystem {
    pub system: SparseSystem,
    pub mass: CsrMatrix,
    pub bilinear: CsrMatrix,
    pub ghost: CsrMatrix,
    pub gamma: f64,
}

/// Assembles matrix = (lead/dt) M + B + gamma S and
/// rhs = f - M (sum_j c_j u_hist[j]) / dt on the active dofs. History fields
/// must already live on the step's deformation, newest first.
pub fn assemble_step_system(
    geo: &StepGeometry,
    space: &ScalarSpace,
    projected_history: &[&FEField],
    params: &SchemeParams,
    dt: f64,
    gamma: f64,
) -> Result<StepSystem> {
    let stencil = bdf_stencil(params.r)?;
    if projected_history.len() != params.r {
        return Err(Error::DimensionMismatch(format!(
            "history length {} != BDF order {}",
            projected_history.len(),
            params.r
        )));
    }
    let degree = params.volume_degree(space.k);
    let mass = assemble_mass(geo, space, degree)?;
    let bilinear = assemble_bilinear(geo, space, params)?;
    let ghost = assemble_ghost_penalty(geo, space, params)?;
    let matrix = CsrMatrix::linear_combination(&[
        (stencil.lead / dt, &mass),
        (1.0, &bilinear),
        (gamma, &ghost),
    ]);

    let (a2g, g2a) = active_index_map(space, geo.active);
    let mut rhs = assemble_rhs(geo, space, params, geo.slice.t)?;
    // history combination on active dofs
    let mut hist = vec![0.0; a2g.len()];
    for (j, field) in projected_history.iter().enumerate() {
        let c = stencil.history[j] / dt;
        for (a, &g) in a2g.iter().enumerate() {
            hist[a] += c * field.coeffs[g];
        }
    }
    let mh = mass.matvec(&hist);
    for (r, m) in rhs.iter_mut().zip(&mh) {
        *r -= m;
    }

    let system =
        SparseSystem { matrix, rhs, active_to_global: a2g, global_to_active: g2a };
    Ok(StepSystem { system, mass, bilinear, ghost, gamma })
}

/// L2 and H1-seminorm errors on the discrete domain against a closed-form
/// solution (which plays the role of the smooth extension).
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
}

pub fn error_norms(
    u_h: &FEField,
    u_exact: &dyn Fn([f64; 2]) -> f64,
    grad_exact: &dyn Fn([f64; 2]) -> [f64; 2],
    geo: &StepGeometry,
) -> Result<ErrorNorms> {
    let space = &u_h.space;
    let degree = 2 * space.k + 2;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for &t in &geo.active.active_elems {
        let rule = match geo.neg_rule_for(t, degree)? {
            Some(r) => r,
            None => continue,
        };
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let (x, j) = geo.theta.deform(t, *p);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let (v, g) = u_h.eval(t, *p, false);
            let ev = v - u_exact(x);
            let eg = {
                let ge = grad_exact(x);
                [g[0] - ge[0], g[1] - ge[1]]
            };
            l2 += w * det * ev * ev;
            h1 += w * det * (eg[0] * eg[0] + eg[1] * eg[1]);
        }
    }
    Ok(ErrorNorms { l2: l2.sqrt(), h1_semi: h1.sqrt() })
}

/// L2 norm of a field over the discrete domain (negative region).
pub fn field_l2_on_domain(u_h: &FEField, geo: &StepGeometry) -> Result<f64> {
    let e = error_norms(u_h, &|_| 0.0, &|_| [0.0, 0.0], geo)?;
    Ok(e.l2)
}

/// L2 norm of a field over whole (deformed) elements of a set.
pub fn field_l2_on_elems(u_h: &FEField, elems: &[usize]) -> Result<f64> {
    let rule = simplex_rule(2 * u_h.space.k + 2)?;
    let mut total = 0.0;
    for &t in elems {
        let mapped = mapped_volume(&u_h.deformation, t, &rule)?;
        for ((p, _), (_, w)) in rule.points.iter().zip(&rule.weights).zip(&mapped) {
            let v = u_h.eval_value(t, *p, false);
            total += w * v * v;
        }
    }
    Ok(total.sqrt())
}

/// H1 seminorm of a field over whole (deformed) elements of a set.
pub fn field_h1_on_elems(u_h: &FEField, elems: &[usize]) -> Result<f64> {
    let rule = simplex_rule(2 * u_h.space.k + 2)?;
    let mut total = 0.0;
    for &t in elems {
        let mapped = mapped_volume(&u_h.deformation, t, &rule)?;
        for ((p, _), (_, w)) in rule.points.iter().zip(&rule.weights).zip(&mapped) {
            let (_, g) = u_h.eval(t, *p, false);
            total += w * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    Ok(total.sqrt())
}
