//! Quadrature on cut reference elements.
//!
//! The linear level set splits the reference simplex into uniformly signed
//! sub-triangles plus an interface segment; composite rules on the pieces
//! inherit strictly positive weights from the base rules. Mapping through
//! the deformation multiplies in the change-of-variables factors.

use crate::error::{Error, Result};
use crate::isoparam::{invert2, MeshDeformation};
use crate::quadrature::{gauss_legendre_01, simplex_rule, QuadratureRule};

/// Sign of a uniformly signed sub-triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Neg,
    Pos,
}

/// Integration region selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Neg,
    Pos,
    All,
}

/// Decomposition of the reference simplex w.r.t. a linear level set given by
/// its three vertex values.
#[derive(Clone, Debug)]
pub struct CutDecomposition {
    pub sub_triangles: Vec<([[f64; 2]; 3], Sign)>,
    pub interface_segments: Vec<[[f64; 2]; 2]>,
}

const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Splits the reference simplex along the zero line of the linear
/// interpolant of `values`. Vertex values of exactly zero belong to the
/// positive side geometrically (the negative region keeps its measure).
pub fn decompose(values: [f64; 3]) -> CutDecomposition {
    let strictly_neg: Vec<usize> = (0..3).filter(|&i| values[i] < 0.0).collect();
    let strictly_pos: Vec<usize> = (0..3).filter(|&i| values[i] > 0.0).collect();

    if strictly_neg.is_empty() {
        return CutDecomposition {
            sub_triangles: vec![(REF_VERTS, Sign::Pos)],
            interface_segments: vec![],
        };
    }
    if strictly_pos.is_empty() {
        return CutDecomposition {
            sub_triangles: vec![(REF_VERTS, Sign::Neg)],
            interface_segments: vec![],
        };
    }

    let crossing = |i: usize, j: usize| -> [f64; 2] {
        let t = values[i] / (values[i] - values[j]);
        [
            REF_VERTS[i][0] + t * (REF_VERTS[j][0] - REF_VERTS[i][0]),
            REF_VERTS[i][1] + t * (REF_VERTS[j][1] - REF_VERTS[i][1]),
        ]
    };

    if strictly_neg.len() == 1 && strictly_pos.len() == 1 {
        // one vertex is exactly zero: the interface runs from it to the
        // crossing on the opposite edge
        let n = strictly_neg[0];
        let p = strictly_pos[0];
        let z = 3 - n - p;
        let x = crossing(n, p);
        return CutDecomposition {
            sub_triangles: vec![
                ([REF_VERTS[z], REF_VERTS[n], x], Sign::Neg),
                ([REF_VERTS[z], x, REF_VERTS[p]], Sign::Pos),
            ],
            interface_segments: vec![[REF_VERTS[z], x]],
        };
    }

    // generic cut: a lone vertex L against two vertices M, N of the other sign
    let (lone, lone_sign) = if strictly_neg.len() == 1 {
        (strictly_neg[0], Sign::Neg)
    } else {
        (strictly_pos[0], Sign::Pos)
    };
    let m = (lone + 1) % 3;
    let n = (lone + 2) % 3;
    let other_sign = if lone_sign == Sign::Neg { Sign::Pos } else { Sign::Neg };
    let x1 = crossing(lone, m);
    let x2 = crossing(lone, n);

    let mut sub_triangles = vec![([REF_VERTS[lone], x1, x2], lone_sign)];
    // quad x1 - M - N - x2, split along the shorter diagonal
    let d1 = dist(x1, REF_VERTS[n]);
    let d2 = dist(REF_VERTS[m], x2);
    if d1 <= d2 {
        sub_triangles.push(([x1, REF_VERTS[m], REF_VERTS[n]], other_sign));
        sub_triangles.push(([x1, REF_VERTS[n], x2], other_sign));
    } else {
        sub_triangles.push(([x1, REF_VERTS[m], x2], other_sign));
        sub_triangles.push(([REF_VERTS[m], REF_VERTS[n], x2], other_sign));
    }
    CutDecomposition { sub_triangles, interface_segments: vec![[x1, x2]] }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn tri_area(t: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]))
        .abs()
}

/// Composite rule over the sub-triangles matching `region`, exact for
/// polynomials of total degree <= `order` on that region.
pub fn volume_rule(decomp: &CutDecomposition, region: Region, order: usize) -> Result<QuadratureRule> {
    let base = simplex_rule(order)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (tri, sign) in &decomp.sub_triangles {
        let wanted = match region {
            Region::All => true,
            Region::Neg => *sign == Sign::Neg,
            Region::Pos => *sign == Sign::Pos,
        };
        if !wanted {
            continue;
        }
        let scale = 2.0 * tri_area(tri);
        if scale == 0.0 {
            continue;
        }
        for (p, w) in base.points.iter().zip(&base.weights) {
            points.push([
                tri[0][0] + p[0] * (tri[1][0] - tri[0][0]) + p[1] * (tri[2][0] - tri[0][0]),
                tri[0][1] + p[0] * (tri[1][1] - tri[0][1]) + p[1] * (tri[2][1] - tri[0][1]),
            ]);
            weights.push(w * scale);
        }
    }
    Ok(QuadratureRule { points, weights, degree: order })
}

/// Gauss points on the reference interface segments, paired with the unit
/// reference tangent for the later mapping. Weights sum to the reference
/// segment length.
#[derive(Clone, Debug)]
pub struct InterfaceRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub tangents: Vec<[f64; 2]>,
}

pub fn interface_rule(decomp: &CutDecomposition, order: usize) -> Result<InterfaceRule> {
    if order > crate::quadrature::MAX_DEGREE {
        return Err(Error::UnsupportedOrder {
            requested: order,
            supported: format!("0..={}", crate::quadrature::MAX_DEGREE),
        });
    }
    let n = order / 2 + 1;
    let (x, w) = gauss_legendre_01(n);
    let mut out = InterfaceRule { points: vec![], weights: vec![], tangents: vec![] };
    for seg in &decomp.interface_segments {
        let len = dist(seg[0], seg[1]);
        if len == 0.0 {
            continue;
        }
        let tangent = [(seg[1][0] - seg[0][0]) / len, (seg[1][1] - seg[0][1]) / len];
        for (xi, wi) in x.iter().zip(&w) {
            out.points.push([
                seg[0][0] + xi * (seg[1][0] - seg[0][0]),
                seg[0][1] + xi * (seg[1][1] - seg[0][1]),
            ]);
            out.weights.push(wi * len);
            out.tangents.push(tangent);
        }
    }
    Ok(out)
}

/// Volume rule points mapped through the deformed geometry of an element:
/// physical point and total weight (reference weight times |det J|).
pub fn mapped_volume(
    theta: &MeshDeformation,
    elem: usize,
    rule: &QuadratureRule,
) -> Result<Vec<([f64; 2], f64)>> {
    let mut out = Vec::with_capacity(rule.points.len());
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let (x, j) = theta.deform(elem, *p);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det <= 0.0 {
            return Err(Error::ElementInversion(elem));
        }
        out.push((x, w * det));
    }
    Ok(out)
}

/// Interface rule points mapped through the deformed geometry: physical
/// point, arc-length weight and unit normal pointing out of the negative
/// region (direction of increasing level set).
pub fn mapped_interface(
    theta: &MeshDeformation,
    elem: usize,
    rule: &InterfaceRule,
    lin_values: [f64; 3],
) -> Result<Vec<([f64; 2], f64, [f64; 2])>> {
    // reference gradient of the linear level set on this element
    let ghat = [lin_values[1] - lin_values[0], lin_values[2] - lin_values[0]];
    let mut out = Vec::with_capacity(rule.points.len());
    for ((p, w), t) in rule.points.iter().zip(&rule.weights).zip(&rule.tangents) {
        let (x, j) = theta.deform(elem, *p);
        let jt = [j[0][0] * t[0] + j[0][1] * t[1], j[1][0] * t[0] + j[1][1] * t[1]];
        let stretch = jt[0].hypot(jt[1]);
        if !(stretch > 0.0) {
            return Err(Error::ElementInversion(elem));
        }
        let mut normal = [jt[1] / stretch, -jt[0] / stretch];
        // orient outward: J^{-T} ghat points towards increasing phi
        let jinv = invert2(j);
        let up = [
            jinv[0][0] * ghat[0] + jinv[1][0] * ghat[1],
            jinv[0][1] * ghat[0] + jinv[1][1] * ghat[1],
        ];
        if normal[0] * up[0] + normal[1] * up[1] < 0.0 {
            normal = [-normal[0], -normal[1]];
        }
        out.push((x, w * stretch, normal));
    }
    Ok(out)
}
