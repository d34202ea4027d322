//! Legacy ASCII VTK unstructured-grid export and import (cell type 5).

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::FEField;
use crate::isoparam::MeshDeformation;
use crate::levelset::ElemClass;
use crate::mesh::BackgroundMesh;

/// Writes the (undeformed) mesh.
pub fn write_mesh(mesh: &BackgroundMesh, w: &mut dyn Write) -> Result<()> {
    write_header(w, mesh.vertices.len(), |i, out| {
        let v = mesh.vertices[i];
        writeln!(out, "{} {} 0", v[0], v[1])
    })?;
    write_cells(w, &mesh.triangles)?;
    Ok(())
}

fn write_header(
    w: &mut dyn Write,
    n_points: usize,
    mut point: impl FnMut(usize, &mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "cutfem output")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n_points} double")?;
    for i in 0..n_points {
        point(i, w)?;
    }
    Ok(())
}

fn write_cells(w: &mut dyn Write, triangles: &[[usize; 3]]) -> Result<()> {
    writeln!(w, "CELLS {} {}", triangles.len(), 4 * triangles.len())?;
    for t in triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", triangles.len())?;
    for _ in triangles {
        writeln!(w, "5")?;
    }
    Ok(())
}

/// Per-time-level export: points displaced by the deformation (with one
/// level of subdivision so the order-q geometry is visible), point-data
/// scalars, and cell-data element classes.
pub fn write_state(
    mesh: &BackgroundMesh,
    theta: &MeshDeformation,
    fields: &[(&str, &FEField)],
    classes: Option<&[ElemClass]>,
    subdivide: bool,
    w: &mut dyn Write,
) -> Result<()> {
    if !subdivide {
        write_header(w, mesh.vertices.len(), |i, out| {
            let v = mesh.vertices[i];
            writeln!(out, "{} {} 0", v[0], v[1])
        })?;
        write_cells(w, &mesh.triangles)?;
        writeln!(w, "POINT_DATA {}", mesh.vertices.len())?;
        for (name, field) in fields {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            // vertex dofs come first in the dof numbering
            for v in 0..mesh.vertices.len() {
                writeln!(w, "{}", field.coeffs[v])?;
            }
        }
        write_cell_classes(w, mesh.triangles.len(), classes, 1)?;
        return Ok(());
    }

    // subdivided: vertices plus one point per facet midpoint, deformed
    let n_pts = mesh.vertices.len() + mesh.facets.len();
    let mut points = Vec::with_capacity(n_pts);
    for v in &mesh.vertices {
        points.push(*v);
    }
    // midpoint of each facet, mapped through the deformation of an adjacent
    // element (conforming across the facet)
    for facet in &mesh.facets {
        let t = facet.elems.0;
        let [a, b, c] = mesh.triangles[t];
        let refc = |v: usize| -> [f64; 2] {
            if v == a {
                [0.0, 0.0]
            } else if v == b {
                [1.0, 0.0]
            } else {
                debug_assert_eq!(v, c);
                [0.0, 1.0]
            }
        };
        let r0 = refc(facet.vertices[0]);
        let r1 = refc(facet.vertices[1]);
        let mid = [(r0[0] + r1[0]) / 2.0, (r0[1] + r1[1]) / 2.0];
        let (x, _) = theta.deform(t, mid);
        points.push(x);
    }
    write_header(w, n_pts, |i, out| {
        let p = points[i];
        writeln!(out, "{} {} 0", p[0], p[1])
    })?;
    let mut tris = Vec::with_capacity(4 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let m = |k: usize| mesh.vertices.len() + mesh.elem_facets[t][k];
        // facet k is opposite local vertex k
        let (mab, mbc, mca) = (m(2), m(0), m(1));
        tris.push([a, mab, mca]);
        tris.push([mab, b, mbc]);
        tris.push([mca, mbc, c]);
        tris.push([mab, mbc, mca]);
    }
    write_cells(w, &tris)?;
    writeln!(w, "POINT_DATA {n_pts}")?;
    for (name, field) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in 0..mesh.vertices.len() {
            writeln!(w, "{}", field.coeffs[v])?;
        }
        for facet in &mesh.facets {
            let t = facet.elems.0;
            let [a, b, c] = mesh.triangles[t];
            let refc = |v: usize| -> [f64; 2] {
                if v == a {
                    [0.0, 0.0]
                } else if v == b {
                    [1.0, 0.0]
                } else {
                    debug_assert_eq!(v, c);
                    [0.0, 1.0]
                }
            };
            let r0 = refc(facet.vertices[0]);
            let r1 = refc(facet.vertices[1]);
            let mid = [(r0[0] + r1[0]) / 2.0, (r0[1] + r1[1]) / 2.0];
            writeln!(w, "{}", field.eval_value(t, mid, false))?;
        }
    }
    write_cell_classes(w, mesh.triangles.len(), classes, 4)?;
    Ok(())
}

fn write_cell_classes(
    w: &mut dyn Write,
    n_elems: usize,
    classes: Option<&[ElemClass]>,
    repeat: usize,
) -> Result<()> {
    if let Some(classes) = classes {
        writeln!(w, "CELL_DATA {}", n_elems * repeat)?;
        writeln!(w, "SCALARS element_class int 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for c in classes {
            let v = match c {
                ElemClass::Neg => 0,
                ElemClass::Cut => 1,
                ElemClass::Pos => 2,
            };
            for _ in 0..repeat {
                writeln!(w, "{v}")?;
            }
        }
    }
    Ok(())
}

/// Reads POINTS and triangle CELLS from a legacy ASCII VTK unstructured grid.
pub fn read_mesh(r: &mut dyn BufRead) -> Result<Arc<BackgroundMesh>> {
    let mut tokens: Vec<String> = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') {
            continue;
        }
        tokens.extend(line.split_whitespace().map(|s| s.to_string()));
    }
    let mut i = 0usize;
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut types: Vec<usize> = Vec::new();
    while i < tokens.len() {
        match tokens[i].as_str() {
            "POINTS" => {
                let n: usize = parse(&tokens, i + 1)?;
                i += 3; // POINTS n dtype
                for _ in 0..n {
                    let x: f64 = parse(&tokens, i)?;
                    let y: f64 = parse(&tokens, i + 1)?;
                    points.push([x, y]);
                    i += 3; // skip z
                }
            }
            "CELLS" => {
                let n: usize = parse(&tokens, i + 1)?;
                i += 3; // CELLS n total
                for _ in 0..n {
                    let m: usize = parse(&tokens, i)?;
                    let mut cell = Vec::with_capacity(m);
                    for k in 0..m {
                        cell.push(parse(&tokens, i + 1 + k)?);
                    }
                    cells.push(cell);
                    i += m + 1;
                }
            }
            "CELL_TYPES" => {
                let n: usize = parse(&tokens, i + 1)?;
                i += 2;
                for _ in 0..n {
                    types.push(parse(&tokens, i)?);
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    if points.is_empty() {
        return Err(Error::VtkParse("no POINTS section".into()));
    }
    let mut triangles = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let is_tri = types.get(c).map_or(cell.len() == 3, |&t| t == 5);
        if is_tri {
            if cell.len() != 3 {
                return Err(Error::VtkParse(format!("cell {c} marked triangle but has {} points", cell.len())));
            }
            triangles.push([cell[0], cell[1], cell[2]]);
        }
    }
    if triangles.is_empty() {
        return Err(Error::VtkParse("no triangle cells".into()));
    }
    Ok(Arc::new(BackgroundMesh::from_raw(points, triangles)))
}

fn parse<T: std::str::FromStr>(tokens: &[String], i: usize) -> Result<T> {
    tokens
        .get(i)
        .ok_or_else(|| Error::VtkParse("unexpected end of file".into()))?
        .parse()
        .map_err(|_| Error::VtkParse(format!("bad token '{}' at {i}", tokens[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::ScalarSpace;
    use crate::mesh::MeshPattern;

    #[test]
    fn mesh_roundtrip_exact() {
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 5, 4, MeshPattern::Diagonal)
                .unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back = read_mesh(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.triangles, mesh.triangles);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        // the shortest round-trip float format is in fact exact
        assert_eq!(back.vertices, mesh.vertices);
    }

    #[test]
    fn state_export_counts() {
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 3, 3, MeshPattern::Diagonal)
                .unwrap();
        let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
        let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
        let field = FEField::interpolate(space, id.clone(), &|x| x[0]).unwrap();
        let classes = vec![ElemClass::Neg; mesh.n_elems()];
        let mut buf = Vec::new();
        write_state(&mesh, &id, &[("u", &field)], Some(&classes), true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expect_pts = mesh.n_vertices() + mesh.facets.len();
        assert!(text.contains(&format!("POINTS {expect_pts} double")));
        assert!(text.contains(&format!("CELLS {} {}", 4 * mesh.n_elems(), 16 * mesh.n_elems())));
        assert!(text.contains("SCALARS u double 1"));
        assert!(text.contains("SCALARS element_class int 1"));
    }

    #[test]
    fn empty_mesh_export_valid_header() {
        // a mesh with zero triangles cannot be built, but the writer still
        // emits a structurally valid file for an empty cell list
        let mut buf = Vec::new();
        write_header(&mut buf, 0, |_, _| Ok(())).unwrap();
        write_cells(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 0 double"));
        assert!(text.contains("CELLS 0 0"));
    }
}
