//! Level set discretization, element classification and active mesh sets.
//!
//! All set membership tests are vertex-sign tests on the piecewise-linear
//! interpolant of the discrete level set. These are exact for P1 level sets;
//! a vertex value of exactly zero (or exactly on a band offset) counts as a
//! sign change, which is conservative: it never drops a cut element.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{FEField, ScalarSpace};
use crate::isoparam::MeshDeformation;
use crate::mesh::BackgroundMesh;

/// Element classification w.r.t. a piecewise-linear level set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemClass {
    /// All vertex values strictly negative (inside the domain).
    Neg,
    /// Sign change or a zero vertex value.
    Cut,
    /// All vertex values strictly positive.
    Pos,
}

/// Discrete level set at one time level: the order-q interpolant on the
/// undeformed mesh and its piecewise-linear vertex interpolant.
#[derive(Clone, Debug)]
pub struct LevelSetSlice {
    pub t: f64,
    pub phi_h: FEField,
    /// Vertex values of `phi_h` (the P1 interpolant).
    pub phi_lin: Vec<f64>,
}

impl LevelSetSlice {
    /// Lagrange interpolation of the analytic level set into the order-q
    /// space on the undeformed mesh.
    pub fn discretize(
        phi: &dyn Fn([f64; 2], f64) -> f64,
        t: f64,
        space_q: Arc<ScalarSpace>,
        identity: Arc<MeshDeformation>,
    ) -> Result<Self> {
        let mesh = space_q.mesh.clone();
        let phi_h = FEField::interpolate(space_q, identity, &|x| phi(x, t)).map_err(|e| match e {
            Error::NonFiniteField { x, y, .. } => Error::NonFiniteLevelSet(x, y),
            other => other,
        })?;
        let phi_lin: Vec<f64> = (0..mesh.n_vertices()).map(|v| phi_h.coeffs[v]).collect();
        debug_assert!(phi_lin.iter().all(|v| v.is_finite()));
        Ok(Self { t, phi_h, phi_lin })
    }

    pub fn mesh(&self) -> &Arc<BackgroundMesh> {
        &self.phi_h.space.mesh
    }

    /// Vertex values of the linear interpolant on element `t`.
    pub fn lin_values(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.mesh().triangles[t];
        [self.phi_lin[a], self.phi_lin[b], self.phi_lin[c]]
    }

    /// Linear interpolant at a reference point of element `t`.
    pub fn lin_at(&self, t: usize, xhat: [f64; 2]) -> f64 {
        let [pa, pb, pc] = self.lin_values(t);
        pa * (1.0 - xhat[0] - xhat[1]) + pb * xhat[0] + pc * xhat[1]
    }
}

/// Classifies a value triple against an offset level.
pub fn classify_values(values: [f64; 3], offset: f64) -> ElemClass {
    let shifted = values.map(|v| v - offset);
    if shifted.iter().all(|&v| v < 0.0) {
        ElemClass::Neg
    } else if shifted.iter().all(|&v| v > 0.0) {
        ElemClass::Pos
    } else {
        ElemClass::Cut
    }
}

/// Per-element classification of the whole slice against `phi_lin = offset`.
pub fn classify_elements(slice: &LevelSetSlice, offset: f64) -> Vec<ElemClass> {
    (0..slice.mesh().n_elems()).map(|t| classify_values(slice.lin_values(t), offset)).collect()
}

/// Per-time-level active mesh data: strip and active element sets, the facet
/// set used by the ghost penalty, and the active dof set.
#[derive(Clone, Debug)]
pub struct ActiveSlice {
    /// Time index (set by the caller; purely informational).
    pub n: usize,
    pub delta: f64,
    pub r: usize,
    /// Classification w.r.t. offset 0.
    pub elem_class: Vec<ElemClass>,
    pub strip_elems: Vec<usize>,
    pub active_elems: Vec<usize>,
    pub active_facets: Vec<usize>,
    pub active_dofs: Vec<usize>,
    pub strip_mask: Vec<bool>,
    pub active_mask: Vec<bool>,
    pub dof_mask: Vec<bool>,
    /// True if the active set reaches the background boundary.
    pub hits_boundary: bool,
}

/// Options for [`active_sets`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ActiveSetOpts {
    /// Skip the r layers of vertex-neighbor expansion (the plain extension by
    /// r*delta only). The inclusion properties must then be checked by the
    /// caller each step.
    pub skip_plus_layers: bool,
}

/// Builds the strip set (elements meeting the band |phi_lin| <= r*delta), the
/// active set (elements meeting phi_lin < r*delta), expands both by r layers
/// of vertex neighbors, and collects facets between active elements of which
/// at least one lies in the strip.
pub fn active_sets(
    slice: &LevelSetSlice,
    delta: f64,
    r: usize,
    space: &ScalarSpace,
    opts: ActiveSetOpts,
) -> ActiveSlice {
    let mesh = slice.mesh();
    let n_elems = mesh.n_elems();
    let width = r as f64 * delta;

    let elem_class = classify_elements(slice, 0.0);

    let mut strip_mask = vec![false; n_elems];
    let mut active_mask = vec![false; n_elems];
    for t in 0..n_elems {
        let vals = slice.lin_values(t);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // ties land in the conservative (included) side
        strip_mask[t] = min <= width && max >= -width;
        active_mask[t] = min <= width;
    }
    if !opts.skip_plus_layers {
        for _ in 0..r {
            strip_mask = expand_by_vertex_neighbors(mesh, &strip_mask);
            active_mask = expand_by_vertex_neighbors(mesh, &active_mask);
        }
    }
    // the strip stays inside the active set by construction; assert it
    debug_assert!((0..n_elems).all(|t| !strip_mask[t] || active_mask[t]));

    let strip_elems: Vec<usize> = (0..n_elems).filter(|&t| strip_mask[t]).collect();
    let active_elems: Vec<usize> = (0..n_elems).filter(|&t| active_mask[t]).collect();

    let mut active_facets = Vec::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        if let (t1, Some(t2)) = facet.elems {
            if active_mask[t1]
                && active_mask[t2]
                && (strip_mask[t1] || strip_mask[t2])
            {
                active_facets.push(f);
            }
        }
    }

    let mut dof_mask = vec![false; space.n_dofs];
    for &t in &active_elems {
        for &g in &space.dof_map[t] {
            dof_mask[g] = true;
        }
    }
    let active_dofs: Vec<usize> = (0..space.n_dofs).filter(|&g| dof_mask[g]).collect();

    let hits_boundary = active_elems.iter().any(|&t| mesh.touches_boundary(t));
    if hits_boundary {
        log::warn!(
            "extension hits background boundary (t={}, delta={delta}, r={r})",
            slice.t
        );
    }

    ActiveSlice {
        n: 0,
        delta,
        r,
        elem_class,
        strip_elems,
        active_elems,
        active_facets,
        active_dofs,
        strip_mask,
        active_mask,
        dof_mask,
        hits_boundary,
    }
}

/// One layer of vertex-neighbor expansion ("+" operation).
pub fn expand_by_vertex_neighbors(mesh: &BackgroundMesh, mask: &[bool]) -> Vec<bool> {
    let mut out = mask.to_vec();
    for (t, &inside) in mask.iter().enumerate() {
        if inside {
            for &v in &mesh.triangles[t] {
                for &s in &mesh.vertex_to_elements[v] {
                    out[s] = true;
                }
            }
        }
    }
    out
}

/// Result of the ghost-penalty path search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStats {
    /// Longest facet path from an exterior strip element to the interior.
    pub k_actual: usize,
    /// Largest number of paths terminating at a single interior element.
    pub m_actual: usize,
}

/// Breadth-first search through the active facets from every exterior strip
/// element (one with a positive vertex value) to the nearest interior
/// element. Errors when some exterior strip element cannot be reached, which
/// signals that delta is too large for the mesh or the topology pinched off.
pub fn verify_path_assumption(
    aslice: &ActiveSlice,
    slice: &LevelSetSlice,
    mesh: &BackgroundMesh,
) -> Result<PathStats> {
    // exterior strip elements: phi_lin > 0 somewhere
    let strip_plus: Vec<usize> = aslice
        .strip_elems
        .iter()
        .copied()
        .filter(|&t| slice.lin_values(t).iter().any(|&v| v > 0.0))
        .collect();
    if strip_plus.is_empty() {
        return Ok(PathStats { k_actual: 0, m_actual: 0 });
    }
    let strip_plus_mask = {
        let mut m = vec![false; mesh.n_elems()];
        for &t in &strip_plus {
            m[t] = true;
        }
        m
    };

    // adjacency through active facets
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_elems()];
    for &f in &aslice.active_facets {
        if let (t1, Some(t2)) = mesh.facets[f].elems {
            adj[t1].push(t2);
            adj[t2].push(t1);
        }
    }

    // multi-source BFS from the interior (active \ strip_plus)
    let mut dist = vec![usize::MAX; mesh.n_elems()];
    let mut terminal = vec![usize::MAX; mesh.n_elems()];
    let mut frontier: Vec<usize> = aslice
        .active_elems
        .iter()
        .copied()
        .filter(|&t| !strip_plus_mask[t])
        .collect();
    if frontier.is_empty() {
        return Err(Error::GhostGraphDisconnected(
            "no interior element in the active set".into(),
        ));
    }
    for &t in &frontier {
        dist[t] = 0;
        terminal[t] = t;
    }
    let mut level = 0usize;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &t in &frontier {
            for &s in &adj[t] {
                if dist[s] == usize::MAX {
                    dist[s] = level;
                    terminal[s] = terminal[t];
                    next.push(s);
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }

    let mut k_actual = 0usize;
    let mut paths_per_terminal = vec![0usize; mesh.n_elems()];
    for &t in &strip_plus {
        if dist[t] == usize::MAX {
            return Err(Error::GhostGraphDisconnected(format!(
                "strip element {t} unreachable from the interior"
            )));
        }
        k_actual = k_actual.max(dist[t]);
        paths_per_terminal[terminal[t]] += 1;
    }
    let m_actual = paths_per_terminal.iter().copied().max().unwrap_or(0);
    Ok(PathStats { k_actual, m_actual })
}
