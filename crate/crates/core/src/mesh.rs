//! Time-independent background triangulation of the rectangular domain.
//!
//! The mesh never changes during a run: the moving geometry is handled by
//! element classification and the mesh deformation, both built per time level
//! on top of this fixed triangulation. The mesh is immutable after
//! construction and safe to share across threads.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Subdivision pattern for [`BackgroundMesh::build_structured`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshPattern {
    /// Two triangles per cell. The diagonal direction alternates with the
    /// cell parity (i+j) to avoid a mesh-aligned bias.
    Diagonal,
    /// Four triangles per cell, split by the cell center point.
    CrissCross,
}

/// A facet (edge) of the triangulation. Orientation is fixed by ascending
/// vertex index.
#[derive(Clone, Debug)]
pub struct Facet {
    /// Endpoint vertex indices, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent element indices; interior facets have two, boundary one.
    pub elems: (usize, Option<usize>),
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.elems.1.is_none()
    }
}

/// Entity selector for [`BackgroundMesh::patch`].
#[derive(Clone, Copy, Debug)]
pub enum MeshEntity {
    Point([f64; 2]),
    Facet(usize),
    Element(usize),
}

/// Quasi-uniform triangulation of a rectangle with full adjacency.
#[derive(Clone, Debug)]
pub struct BackgroundMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, consistently counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// For each element, its three facet indices opposite to local vertices
    /// 0, 1, 2 (i.e. `elem_facets[t][k]` joins the two vertices other than k).
    pub elem_facets: Vec<[usize; 3]>,
    /// Elements incident to each vertex, ascending.
    pub vertex_to_elements: Vec<Vec<usize>>,
    /// Maximum element diameter.
    pub h_max: f64,
    /// Minimum element diameter.
    pub h_min: f64,
    /// Bounding box (xmin, ymin, xmax, ymax).
    pub bbox: [f64; 4],
}

impl BackgroundMesh {
    /// Builds a structured triangulation of the rectangle
    /// `(xmin, xmax) x (ymin, ymax)` with `nx` by `ny` cells.
    pub fn build_structured(
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
        nx: usize,
        ny: usize,
        pattern: MeshPattern,
    ) -> Result<Arc<Self>> {
        if nx < 1 || ny < 1 || !(xmax > xmin) || !(ymax > ymin) {
            return Err(Error::EmptyDomain(format!(
                "rectangle ({xmin},{ymin})-({xmax},{ymax}) with {nx}x{ny} cells"
            )));
        }
        let dx = (xmax - xmin) / nx as f64;
        let dy = (ymax - ymin) / ny as f64;
        let vid = |i: usize, j: usize| j * (nx + 1) + i;

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx { xmax } else { xmin + i as f64 * dx };
                let y = if j == ny { ymax } else { ymin + j as f64 * dy };
                vertices.push([x, y]);
            }
        }

        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let bl = vid(i, j);
                let br = vid(i + 1, j);
                let tr = vid(i + 1, j + 1);
                let tl = vid(i, j + 1);
                match pattern {
                    MeshPattern::Diagonal => {
                        if (i + j) % 2 == 0 {
                            triangles.push([bl, br, tr]);
                            triangles.push([bl, tr, tl]);
                        } else {
                            triangles.push([bl, br, tl]);
                            triangles.push([br, tr, tl]);
                        }
                    }
                    MeshPattern::CrissCross => {
                        let c = vertices.len();
                        vertices.push([
                            0.5 * (vertices[bl][0] + vertices[tr][0]),
                            0.5 * (vertices[bl][1] + vertices[tr][1]),
                        ]);
                        triangles.push([bl, br, c]);
                        triangles.push([br, tr, c]);
                        triangles.push([tr, tl, c]);
                        triangles.push([tl, bl, c]);
                    }
                }
            }
        }
        Ok(Arc::new(Self::from_raw(vertices, triangles)))
    }

    /// Assembles adjacency from vertex and triangle lists.
    ///
    /// Panics if a triangle has non-positive signed area or a facet has more
    /// than two adjacent elements. Quasi-uniformity (diameter ratio <= 4) is
    /// asserted, matching the structured meshes produced here.
    pub fn from_raw(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Self {
        let mut facet_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut elem_facets = vec![[usize::MAX; 3]; triangles.len()];
        let mut vertex_to_elements = vec![Vec::new(); vertices.len()];
        let mut h_max = 0.0f64;
        let mut h_min = f64::INFINITY;
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for v in &vertices {
            bbox[0] = bbox[0].min(v[0]);
            bbox[1] = bbox[1].min(v[1]);
            bbox[2] = bbox[2].max(v[0]);
            bbox[3] = bbox[3].max(v[1]);
        }

        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let area = signed_area(&vertices[a], &vertices[b], &vertices[c]);
            assert!(area > 0.0, "triangle {t} has non-positive signed area {area}");
            let mut diam = 0.0f64;
            for k in 0..3 {
                let p = vertices[tri[k]];
                let q = vertices[tri[(k + 1) % 3]];
                diam = diam.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            h_max = h_max.max(diam);
            h_min = h_min.min(diam);

            for k in 0..3 {
                vertex_to_elements[tri[k]].push(t);
                // facet k is opposite to local vertex k
                let p = tri[(k + 1) % 3];
                let q = tri[(k + 2) % 3];
                let key = (p.min(q), p.max(q));
                let fid = *facet_ids.entry(key).or_insert_with(|| {
                    facets.push(Facet { vertices: [key.0, key.1], elems: (t, None) });
                    facets.len() - 1
                });
                if facets[fid].elems.0 != t {
                    assert!(
                        facets[fid].elems.1.is_none(),
                        "facet {key:?} adjacent to more than two elements"
                    );
                    facets[fid].elems.1 = Some(t);
                }
                elem_facets[t][k] = fid;
            }
        }
        assert!(
            h_max / h_min <= 4.0,
            "mesh not quasi-uniform: diameter ratio {}",
            h_max / h_min
        );

        Self { vertices, triangles, facets, elem_facets, vertex_to_elements, h_max, h_min, bbox }
    }

    pub fn n_elems(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Regular refinement: each triangle is split into 4 congruent children
    /// by its edge midpoints. `h_max` halves exactly.
    pub fn refine(&self) -> Arc<Self> {
        let mut vertices = self.vertices.clone();
        // one new vertex per facet
        let mut mid = vec![0usize; self.facets.len()];
        for (f, facet) in self.facets.iter().enumerate() {
            let a = self.vertices[facet.vertices[0]];
            let b = self.vertices[facet.vertices[1]];
            mid[f] = vertices.len();
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            // midpoints opposite each local vertex
            let mab = mid[self.elem_facets[t][2]];
            let mbc = mid[self.elem_facets[t][0]];
            let mca = mid[self.elem_facets[t][1]];
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Arc::new(Self::from_raw(vertices, triangles))
    }

    /// Neighborhood of a point, facet, or element, per the patch maps used by
    /// averaging and stabilization: a point maps to all elements whose
    /// closure contains it, a facet to its adjacent elements, an element to
    /// all elements sharing at least one vertex with it (itself included).
    pub fn patch(&self, entity: MeshEntity) -> Result<Vec<usize>> {
        match entity {
            MeshEntity::Point(p) => self.point_patch(p),
            MeshEntity::Facet(f) => Ok(self.facet_patch(f)),
            MeshEntity::Element(t) => Ok(self.elem_patch(t)),
        }
    }

    /// All elements whose closure contains `p` (tolerance `1e-12 * h_max`).
    pub fn point_patch(&self, p: [f64; 2]) -> Result<Vec<usize>> {
        let tol = 1e-12 * self.h_max;
        let mut out = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let (l1, l2) = self.barycentric(t, p);
            let l0 = 1.0 - l1 - l2;
            if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                out.push(t);
            }
            let _ = tri;
        }
        if out.is_empty() {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        Ok(out)
    }

    /// The 1-2 elements adjacent to a facet.
    pub fn facet_patch(&self, f: usize) -> Vec<usize> {
        let facet = &self.facets[f];
        match facet.elems.1 {
            Some(e1) => vec![facet.elems.0, e1],
            None => vec![facet.elems.0],
        }
    }

    /// Vertex-neighbors of an element, itself included, ascending.
    pub fn elem_patch(&self, t: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.triangles[t]
            .iter()
            .flat_map(|&v| self.vertex_to_elements[v].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Reference coordinates (l1, l2) of `p` in the affine frame of element
    /// `t` (vertex 0 at the origin).
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> (f64, f64) {
        let [a, b, c] = self.triangles[t];
        let va = self.vertices[a];
        let e1 = sub(self.vertices[b], va);
        let e2 = sub(self.vertices[c], va);
        let d = sub(p, va);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        ((d[0] * e2[1] - d[1] * e2[0]) / det, (e1[0] * d[1] - e1[1] * d[0]) / det)
    }

    /// Element area (positive by the orientation invariant).
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    /// True if the element has at least one boundary facet.
    pub fn touches_boundary(&self, t: usize) -> bool {
        self.elem_facets[t].iter().any(|&f| self.facets[f].is_boundary())
    }
}

fn signed_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}
