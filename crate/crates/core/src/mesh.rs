//! Simplicial meshes in 1 and 2 dimensions: uniform interval/rectangle
//! construction, element geometry (measures, P1 shape gradients), boundary
//! tagging, and a plain-text exchange format.

use crate::error::{Result, SimError};
use std::fmt::Write as _;
use std::path::Path;

/// Boundary facet tags. The displacement is clamped on `dirichlet_u` facets,
/// the heat flux acts on `neumann_theta` facets; with the fixed boundary
/// conditions both families cover the whole boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetTags {
    pub dirichlet_u: bool,
    pub neumann_theta: bool,
}

/// A boundary facet: a point (1D) or an edge (2D).
#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub nodes: Vec<usize>,
    pub tags: FacetTags,
}

/// Conforming simplicial mesh with uniform element type.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// Node coordinates, `dim` entries per node.
    pub coords: Vec<f64>,
    /// Element connectivity, `dim + 1` node indices per simplex.
    pub elements: Vec<Vec<usize>>,
    pub boundary: Vec<BoundaryFacet>,
    pub quadrature_order: usize,
}

/// Extents and resolution of a structured interval/rectangle mesh.
#[derive(Debug, Clone)]
pub struct MeshSpec {
    pub dim: usize,
    /// 1D: [x0, x1]; 2D: [x0, x1, y0, y1].
    pub extents: Vec<f64>,
    /// Nodes per axis.
    pub resolution: Vec<usize>,
    pub quadrature_order: usize,
}

/// Builds a conforming uniform simplicial mesh from the spec; node count is
/// the product of the per-axis resolutions.
pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    match spec.dim {
        1 => {
            if spec.resolution.len() != 1 || spec.extents.len() != 2 {
                return Err(SimError::Mesh(
                    "1D mesh needs resolution = [n] and extents = [x0, x1]".into(),
                ));
            }
            build_interval(
                spec.extents[0],
                spec.extents[1],
                spec.resolution[0],
                spec.quadrature_order,
            )
        }
        2 => {
            if spec.resolution.len() != 2 || spec.extents.len() != 4 {
                return Err(SimError::Mesh(
                    "2D mesh needs resolution = [nx, ny] and extents = [x0, x1, y0, y1]".into(),
                ));
            }
            build_rectangle(
                [spec.extents[0], spec.extents[1]],
                [spec.extents[2], spec.extents[3]],
                spec.resolution[0],
                spec.resolution[1],
                spec.quadrature_order,
            )
        }
        d => Err(SimError::Mesh(format!("unsupported dimension {d}"))),
    }
}

pub fn build_interval(x0: f64, x1: f64, n_nodes: usize, quad_order: usize) -> Result<Mesh> {
    if n_nodes < 2 {
        return Err(SimError::Mesh(format!(
            "degenerate 1D mesh: need at least 2 nodes, got {n_nodes}"
        )));
    }
    if !(x1 > x0) {
        return Err(SimError::Mesh(format!("degenerate extents [{x0}, {x1}]")));
    }
    let h = (x1 - x0) / (n_nodes - 1) as f64;
    let coords: Vec<f64> = (0..n_nodes).map(|i| x0 + i as f64 * h).collect();
    let elements = (0..n_nodes - 1).map(|i| vec![i, i + 1]).collect();
    let tags = FacetTags {
        dirichlet_u: true,
        neumann_theta: true,
    };
    let boundary = vec![
        BoundaryFacet {
            nodes: vec![0],
            tags,
        },
        BoundaryFacet {
            nodes: vec![n_nodes - 1],
            tags,
        },
    ];
    Ok(Mesh {
        dim: 1,
        coords,
        elements,
        boundary,
        quadrature_order: quad_order,
    })
}

/// Structured right-triangle mesh: each grid cell is split along the same
/// diagonal, so every triangle is non-obtuse.
pub fn build_rectangle(
    xext: [f64; 2],
    yext: [f64; 2],
    nx: usize,
    ny: usize,
    quad_order: usize,
) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(SimError::Mesh(format!(
            "degenerate 2D mesh: need at least 2 nodes per axis, got {nx}x{ny}"
        )));
    }
    if !(xext[1] > xext[0]) || !(yext[1] > yext[0]) {
        return Err(SimError::Mesh("degenerate extents".into()));
    }
    let hx = (xext[1] - xext[0]) / (nx - 1) as f64;
    let hy = (yext[1] - yext[0]) / (ny - 1) as f64;
    let idx = |i: usize, j: usize| j * nx + i;
    let mut coords = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            coords.push(xext[0] + i as f64 * hx);
            coords.push(yext[0] + j as f64 * hy);
        }
    }
    let mut elements = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push(vec![a, b, c]);
            elements.push(vec![a, c, d]);
        }
    }
    let tags = FacetTags {
        dirichlet_u: true,
        neumann_theta: true,
    };
    let mut boundary = Vec::new();
    for i in 0..nx - 1 {
        boundary.push(BoundaryFacet {
            nodes: vec![idx(i, 0), idx(i + 1, 0)],
            tags,
        });
        boundary.push(BoundaryFacet {
            nodes: vec![idx(i, ny - 1), idx(i + 1, ny - 1)],
            tags,
        });
    }
    for j in 0..ny - 1 {
        boundary.push(BoundaryFacet {
            nodes: vec![idx(0, j), idx(0, j + 1)],
            tags,
        });
        boundary.push(BoundaryFacet {
            nodes: vec![idx(nx - 1, j), idx(nx - 1, j + 1)],
            tags,
        });
    }
    Ok(Mesh {
        dim: 2,
        coords,
        elements,
        boundary,
        quadrature_order: quad_order,
    })
}

/// Geometry of one element: measure plus constant P1 shape-function
/// gradients (`grads[local][component]`).
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub measure: f64,
    pub grads: Vec<[f64; 2]>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_coord(&self, i: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coords[i], 0.0],
            _ => [self.coords[2 * i], self.coords[2 * i + 1]],
        }
    }

    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        let nodes = &self.elements[e];
        match self.dim {
            1 => {
                let x0 = self.coords[nodes[0]];
                let x1 = self.coords[nodes[1]];
                let h = x1 - x0;
                ElementGeometry {
                    measure: h.abs(),
                    grads: vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]],
                }
            }
            _ => {
                let p: Vec<[f64; 2]> = nodes.iter().map(|&n| self.node_coord(n)).collect();
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let area = 0.5 * det.abs();
                let inv = 1.0 / det;
                // ∇λ_i from the inverse Jacobian of the affine map
                let g0 = [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv];
                let g1 = [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv];
                let g2 = [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv];
                ElementGeometry {
                    measure: area,
                    grads: vec![g0, g1, g2],
                }
            }
        }
    }

    pub fn facet_measure(&self, f: &BoundaryFacet) -> f64 {
        match self.dim {
            // The 1D boundary carries the counting measure.
            1 => 1.0,
            _ => {
                let a = self.node_coord(f.nodes[0]);
                let b = self.node_coord(f.nodes[1]);
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            }
        }
    }

    /// Node indices lying on Dirichlet-tagged boundary facets.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        let mut mark = vec![false; self.n_nodes()];
        for f in &self.boundary {
            if f.tags.dirichlet_u {
                for &n in &f.nodes {
                    mark[n] = true;
                }
            }
        }
        mark.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Quadrature rule on the reference simplex as (barycentric weights,
    /// point-local barycentric coordinates). Exact for quadratics at the
    /// default order 2.
    pub fn quadrature(&self) -> Vec<(f64, Vec<f64>)> {
        match (self.dim, self.quadrature_order) {
            (1, 0 | 1) => vec![(1.0, vec![0.5, 0.5])],
            (1, _) => {
                let a = 0.5 - 0.5 / 3.0_f64.sqrt();
                let b = 0.5 + 0.5 / 3.0_f64.sqrt();
                vec![(0.5, vec![1.0 - a, a]), (0.5, vec![1.0 - b, b])]
            }
            (_, 0 | 1) => vec![(1.0, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])],
            (_, _) => {
                // midpoint-of-edge rule, exact for quadratics
                vec![
                    (1.0 / 3.0, vec![0.5, 0.5, 0.0]),
                    (1.0 / 3.0, vec![0.0, 0.5, 0.5]),
                    (1.0 / 3.0, vec![0.5, 0.0, 0.5]),
                ]
            }
        }
    }

    /// Serializes the mesh in the plain-text exchange format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "MESH {} {} {}",
            self.dim,
            self.n_nodes(),
            self.n_elements()
        );
        let _ = writeln!(s, "QUAD {}", self.quadrature_order);
        for i in 0..self.n_nodes() {
            let c = self.node_coord(i);
            if self.dim == 1 {
                let _ = writeln!(s, "N {:.17e}", c[0]);
            } else {
                let _ = writeln!(s, "N {:.17e} {:.17e}", c[0], c[1]);
            }
        }
        for e in &self.elements {
            let ids: Vec<String> = e.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "E {}", ids.join(" "));
        }
        for f in &self.boundary {
            let ids: Vec<String> = f.nodes.iter().map(|n| n.to_string()).collect();
            let mut tags = Vec::new();
            if f.tags.dirichlet_u {
                tags.push("dirichlet_u");
            }
            if f.tags.neumann_theta {
                tags.push("neumann_theta");
            }
            let _ = writeln!(s, "B {} {}", ids.join(" "), tags.join(","));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| SimError::Parse("empty mesh file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "MESH" {
            return Err(SimError::Parse(format!("bad mesh header: {header}")));
        }
        let dim: usize = parts[1]
            .parse()
            .map_err(|_| SimError::Parse("bad dimension".into()))?;
        let n_nodes: usize = parts[2]
            .parse()
            .map_err(|_| SimError::Parse("bad node count".into()))?;
        let n_elems: usize = parts[3]
            .parse()
            .map_err(|_| SimError::Parse("bad element count".into()))?;
        let mut coords = Vec::new();
        let mut elements = Vec::new();
        let mut boundary = Vec::new();
        let mut quad = 2usize;
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("QUAD") => {
                    quad = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| SimError::Parse("bad QUAD line".into()))?;
                }
                Some("N") => {
                    for v in it {
                        coords.push(
                            v.parse::<f64>()
                                .map_err(|_| SimError::Parse("bad node coord".into()))?,
                        );
                    }
                }
                Some("E") => {
                    let e: std::result::Result<Vec<usize>, _> =
                        it.map(|v| v.parse::<usize>()).collect();
                    elements.push(e.map_err(|_| SimError::Parse("bad element line".into()))?);
                }
                Some("B") => {
                    let toks: Vec<&str> = it.collect();
                    if toks.is_empty() {
                        return Err(SimError::Parse("bad boundary line".into()));
                    }
                    let (node_toks, tag_tok) = toks.split_at(toks.len() - 1);
                    let nodes: std::result::Result<Vec<usize>, _> =
                        node_toks.iter().map(|v| v.parse::<usize>()).collect();
                    let tags_str = tag_tok[0];
                    boundary.push(BoundaryFacet {
                        nodes: nodes.map_err(|_| SimError::Parse("bad facet nodes".into()))?,
                        tags: FacetTags {
                            dirichlet_u: tags_str.contains("dirichlet_u"),
                            neumann_theta: tags_str.contains("neumann_theta"),
                        },
                    });
                }
                _ => return Err(SimError::Parse(format!("unrecognized line: {line}"))),
            }
        }
        if coords.len() != dim * n_nodes || elements.len() != n_elems {
            return Err(SimError::Parse("mesh counts do not match header".into()));
        }
        let mesh = Mesh {
            dim,
            coords,
            elements,
            boundary,
            quadrature_order: quad,
        };
        mesh.check_conforming()?;
        Ok(mesh)
    }

    /// Positive measures and index sanity.
    pub fn check_conforming(&self) -> Result<()> {
        let n = self.n_nodes();
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.len() != self.dim + 1 || conn.iter().any(|&i| i >= n) {
                return Err(SimError::Mesh(format!("element {e} has bad connectivity")));
            }
            if self.element_geometry(e).measure <= 0.0 {
                return Err(SimError::Mesh(format!(
                    "element {e} has non-positive measure"
                )));
            }
        }
        for f in &self.boundary {
            if f.nodes.len() != self.dim || f.nodes.iter().any(|&i| i >= n) {
                return Err(SimError::Mesh("bad boundary facet".into()));
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| SimError::io(path.display().to_string(), e))
    }

    pub fn read_file(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::io(path.display().to_string(), e))?;
        Mesh::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn interval_counts() {
        let m = build_interval(0.0, 1.0, 5, 2).unwrap();
        assert_eq!(m.n_nodes(), 5);
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.boundary.len(), 2);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(build_interval(0.0, 1.0, 1, 2).is_err());
        assert!(build_interval(1.0, 1.0, 4, 2).is_err());
        assert!(build_rectangle([0.0, 1.0], [0.0, 1.0], 1, 3, 2).is_err());
    }

    #[test]
    fn rectangle_counts_and_euler_formula() {
        // 3x3 nodes → 9 nodes, 8 triangles; V − E + F = 2 with the outer face
        let m = build_rectangle([0.0, 1.0], [0.0, 1.0], 3, 3, 2).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_elements(), 8);
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for e in &m.elements {
            for k in 0..3 {
                let (a, b) = (e[k], e[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let v = m.n_nodes() as i64;
        let ed = edges.len() as i64;
        let f = m.n_elements() as i64 + 1;
        assert_eq!(v - ed + f, 2);
    }

    #[test]
    fn element_measures_and_gradients() {
        let m = build_rectangle([0.0, 2.0], [0.0, 1.0], 3, 3, 2).unwrap();
        let total: f64 = (0..m.n_elements())
            .map(|e| m.element_geometry(e).measure)
            .sum();
        assert!((total - 2.0).abs() < 1e-12);
        // shape gradients sum to zero per element
        for e in 0..m.n_elements() {
            let g = m.element_geometry(e);
            let sx: f64 = g.grads.iter().map(|v| v[0]).sum();
            let sy: f64 = g.grads.iter().map(|v| v[1]).sum();
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        for m in [
            build_interval(0.0, 1.0, 7, 2).unwrap(),
            build_rectangle([0.0, 1.0], [0.0, 0.5], 3, 4, 2).unwrap(),
        ] {
            let t = m.to_text();
            let m2 = Mesh::from_text(&t).unwrap();
            assert_eq!(m.dim, m2.dim);
            assert_eq!(m.coords, m2.coords);
            assert_eq!(m.elements, m2.elements);
            assert_eq!(m.boundary.len(), m2.boundary.len());
        }
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for m in [
            build_interval(0.0, 1.0, 3, 2).unwrap(),
            build_rectangle([0.0, 1.0], [0.0, 1.0], 3, 3, 2).unwrap(),
        ] {
            let w: f64 = m.quadrature().iter().map(|(w, _)| w).sum();
            assert!((w - 1.0).abs() < 1e-14);
        }
    }
}
