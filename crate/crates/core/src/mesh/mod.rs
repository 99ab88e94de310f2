//! Admissible two-dimensional finite-volume meshes.
//!
//! A mesh is a set of control volumes with centers `x_K`, and a set of edges
//! each carrying its measure `|σ|`, the center distance `d_σ` and the
//! transmissibility `τ_σ = |σ| / d_σ`. Interior edges store an ordered pair
//! `(K, L)`; differences `D_{K,σ} u = u_{K,σ} - u_K` are taken from the cell
//! passed in, so fluxes are antisymmetric by construction.
//!
//! Only uniform tensor grids are generated here. Other admissible meshes
//! can be loaded from the text format in [`file`].

pub mod file;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension of every mesh handled by this crate.
pub const DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// One side of a rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    /// `x = x0`
    Left,
    /// `x = x1`
    Right,
    /// `y = y0`
    Bottom,
    /// `y = y1`
    Top,
}

impl Face {
    pub fn parse(s: &str) -> Result<Face> {
        match s.trim() {
            "x0" | "left" => Ok(Face::Left),
            "x1" | "right" => Ok(Face::Right),
            "y0" | "bottom" => Ok(Face::Bottom),
            "y1" | "top" => Ok(Face::Top),
            other => Err(Error::invalid(format!(
                "unknown face '{other}' (expected x0, x1, y0, y1)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Left => "x0",
            Face::Right => "x1",
            Face::Bottom => "y0",
            Face::Top => "y1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Interior { k: usize, l: usize },
    Dirichlet { k: usize },
    Neumann { k: usize },
}

impl EdgeKind {
    /// The cell an edge term is evaluated from: `K` for interior edges,
    /// the only incident cell otherwise.
    pub fn owner(&self) -> usize {
        match *self {
            EdgeKind::Interior { k, .. } | EdgeKind::Dirichlet { k } | EdgeKind::Neumann { k } => k,
        }
    }

    pub fn is_boundary(&self) -> bool {
        !matches!(self, EdgeKind::Interior { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: [f64; 2],
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    /// `|σ|`
    pub measure: f64,
    /// `d_σ`: `d(x_K, x_L)` for interior edges, `d(x_K, σ)` on the boundary.
    pub d_sigma: f64,
    /// `d(x_K, σ)` for the owner cell.
    pub d_k: f64,
    /// `d(x_L, σ)`, interior edges only.
    pub d_l: Option<f64>,
    /// `τ_σ = |σ| / d_σ`
    pub tau: f64,
    /// Edge midpoint, when the geometry is known.
    pub midpoint: Option<[f64; 2]>,
    /// Unit normal pointing from `K` to `L` (or outward), when known.
    pub normal: Option<[f64; 2]>,
    /// Domain side a boundary edge lies on (rectangular meshes only).
    pub face: Option<Face>,
}

/// What lies across an edge as seen from one of its cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Across {
    Cell(usize),
    /// Index into the Dirichlet value vectors.
    Dirichlet(usize),
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    cell_edges: Vec<Vec<usize>>,
    dirichlet_edges: Vec<usize>,
    dirichlet_slot: Vec<Option<usize>>,
    /// Index of the boundary segment each boundary edge was assigned to.
    edge_segment: Vec<Option<usize>>,
    domain_measure: f64,
    grid: Option<Grid>,
}

/// Regularity constants `ξ` and `c₀` of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshRegularity {
    /// `min d(x_K, σ) / d_σ` over cells and their edges.
    pub xi: f64,
    /// `min τ_σ` over all edges.
    pub c0: f64,
}

/// Rule selecting boundary edges for a boundary segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRule {
    pub name: String,
    /// Faces the segment covers; empty means every boundary edge.
    pub faces: Vec<Face>,
    /// Optional interval of the tangential coordinate of the edge midpoint.
    pub window: Option<(f64, f64)>,
    pub kind: BoundaryKind,
}

impl SegmentRule {
    pub fn new(name: impl Into<String>, faces: &[Face], kind: BoundaryKind) -> Self {
        Self {
            name: name.into(),
            faces: faces.to_vec(),
            window: None,
            kind,
        }
    }

    fn matches(&self, edge: &Edge) -> bool {
        let on_face = if self.faces.is_empty() {
            true
        } else {
            matches!(edge.face, Some(f) if self.faces.contains(&f))
        };
        if !on_face {
            return false;
        }
        match self.window {
            None => true,
            Some((lo, hi)) => {
                let (Some(face), Some(m)) = (edge.face, edge.midpoint) else {
                    return false;
                };
                let t = match face {
                    Face::Left | Face::Right => m[1],
                    Face::Bottom | Face::Top => m[0],
                };
                t >= lo && t <= hi
            }
        }
    }
}

const ORTHOGONALITY_TOL: f64 = 1e-10;
const DISTANCE_TOL: f64 = 1e-12;

impl Mesh {
    /// Builds a mesh from raw parts and checks admissibility.
    pub fn from_parts(cells: Vec<Cell>, edges: Vec<Edge>, grid: Option<Grid>) -> Result<Mesh> {
        let n = cells.len();
        let mut cell_edges = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            match edge.kind {
                EdgeKind::Interior { k, l } => {
                    if k >= n || l >= n {
                        return Err(Error::invalid(format!("edge {e} references missing cell")));
                    }
                    if k == l {
                        return Err(Error::invalid(format!("interior edge {e} references cell {k} twice")));
                    }
                    cell_edges[k].push(e);
                    cell_edges[l].push(e);
                }
                EdgeKind::Dirichlet { k } | EdgeKind::Neumann { k } => {
                    if k >= n {
                        return Err(Error::invalid(format!("edge {e} references missing cell")));
                    }
                    cell_edges[k].push(e);
                }
            }
        }
        let domain_measure = match grid {
            Some(g) => g.rect.area(),
            None => cells.iter().map(|c| c.measure).sum(),
        };
        let mut mesh = Mesh {
            cells,
            edges,
            cell_edges,
            dirichlet_edges: Vec::new(),
            dirichlet_slot: Vec::new(),
            edge_segment: Vec::new(),
            domain_measure,
            grid,
        };
        mesh.edge_segment = vec![None; mesh.edges.len()];
        mesh.reindex_dirichlet();
        mesh.validate()?;
        Ok(mesh)
    }

    fn reindex_dirichlet(&mut self) {
        self.dirichlet_edges.clear();
        self.dirichlet_slot = vec![None; self.edges.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if let EdgeKind::Dirichlet { .. } = edge.kind {
                self.dirichlet_slot[e] = Some(self.dirichlet_edges.len());
                self.dirichlet_edges.push(e);
            }
        }
    }

    /// Checks the structural invariants and the two-point orthogonality condition.
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::invalid("mesh has no cells"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.measure > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "cell {i} has non-positive measure or bad center"
                )));
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            if !(edge.measure > 0.0 && edge.d_sigma > 0.0 && edge.d_k > 0.0) {
                return Err(Error::invalid(format!("edge {e} has non-positive geometry")));
            }
            let tau = edge.measure / edge.d_sigma;
            if !(edge.tau > 0.0) || (edge.tau - tau).abs() > 1e-14 * tau {
                return Err(Error::invalid(format!("edge {e} transmissibility inconsistent")));
            }
            match edge.kind {
                EdgeKind::Interior { k, l } => {
                    let d_l = edge
                        .d_l
                        .ok_or_else(|| Error::invalid(format!("interior edge {e} lacks d(x_L, σ)")))?;
                    if (edge.d_k + d_l - edge.d_sigma).abs() > DISTANCE_TOL * edge.d_sigma {
                        return Err(Error::invalid(format!(
                            "edge {e}: d(x_K,σ) + d(x_L,σ) != d_σ (not admissible)"
                        )));
                    }
                    let a = self.cells[k].center;
                    let b = self.cells[l].center;
                    let seg = [b[0] - a[0], b[1] - a[1]];
                    let len = seg[0].hypot(seg[1]);
                    if (len - edge.d_sigma).abs() > ORTHOGONALITY_TOL * edge.d_sigma {
                        return Err(Error::invalid(format!("edge {e}: |x_K - x_L| != d_σ")));
                    }
                    if let Some(nrm) = edge.normal {
                        // sine of the angle between x_L - x_K and the edge normal
                        let cross = (seg[0] * nrm[1] - seg[1] * nrm[0]) / len;
                        let dot = (seg[0] * nrm[0] + seg[1] * nrm[1]) / len;
                        if cross.abs() > ORTHOGONALITY_TOL || dot <= 0.0 {
                            return Err(Error::invalid(format!("edge {e}: x_K x_L not orthogonal to σ")));
                        }
                    }
                }
                EdgeKind::Dirichlet { .. } | EdgeKind::Neumann { .. } => {
                    if (edge.d_k - edge.d_sigma).abs() > DISTANCE_TOL * edge.d_sigma {
                        return Err(Error::invalid(format!("boundary edge {e}: d_σ != d(x_K, σ)")));
                    }
                }
            }
        }
        let total: f64 = self.cells.iter().map(|c| c.measure).sum();
        if (total - self.domain_measure).abs() > 1e-12 * self.domain_measure {
            return Err(Error::invalid(format!(
                "cell measures sum to {total}, domain measure is {}",
                self.domain_measure
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_edges(&self, k: usize) -> &[usize] {
        &self.cell_edges[k]
    }

    /// Edge indices of the Dirichlet edges, in Dirichlet-vector order.
    pub fn dirichlet_edges(&self) -> &[usize] {
        &self.dirichlet_edges
    }

    pub fn dirichlet_count(&self) -> usize {
        self.dirichlet_edges.len()
    }

    pub fn dirichlet_slot(&self, edge: usize) -> Option<usize> {
        self.dirichlet_slot[edge]
    }

    pub fn edge_segment(&self, edge: usize) -> Option<usize> {
        self.edge_segment[edge]
    }

    pub fn interior_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.kind.is_boundary()).count()
    }

    pub fn neumann_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, EdgeKind::Neumann { .. }))
            .count()
    }

    /// `m(Ω)`
    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    /// Total measure of the Dirichlet boundary.
    pub fn dirichlet_measure(&self) -> f64 {
        self.dirichlet_edges.iter().map(|&e| self.edges[e].measure).sum()
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    /// Bounding box: the grid rectangle, or the hull of the cell centers.
    pub fn bounds(&self) -> Rect {
        if let Some(g) = self.grid {
            return g.rect;
        }
        let mut r = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.cells {
            r.x0 = r.x0.min(c.center[0]);
            r.x1 = r.x1.max(c.center[0]);
            r.y0 = r.y0.min(c.center[1]);
            r.y1 = r.y1.max(c.center[1]);
        }
        r
    }

    /// Extent of cell `k` when the mesh is a tensor grid.
    pub fn cell_rect(&self, k: usize) -> Option<Rect> {
        let g = self.grid?;
        let (i, j) = (k % g.nx, k / g.nx);
        let hx = g.rect.width() / g.nx as f64;
        let hy = g.rect.height() / g.ny as f64;
        Some(Rect::new(
            g.rect.x0 + i as f64 * hx,
            g.rect.x0 + (i + 1) as f64 * hx,
            g.rect.y0 + j as f64 * hy,
            g.rect.y0 + (j + 1) as f64 * hy,
        ))
    }

    /// What lies across `edge` as seen from cell `k`.
    #[inline]
    pub fn across(&self, edge: usize, k: usize) -> Across {
        match self.edges[edge].kind {
            EdgeKind::Interior { k: a, l: b } => {
                debug_assert!(k == a || k == b);
                Across::Cell(if k == a { b } else { a })
            }
            EdgeKind::Dirichlet { .. } => Across::Dirichlet(self.dirichlet_slot[edge].unwrap_or(0)),
            EdgeKind::Neumann { .. } => Across::Neumann,
        }
    }

    /// `u_{K,σ}`: the neighbour value, the Dirichlet value, or `u_K` on Neumann edges.
    #[inline]
    pub fn value_across(&self, cells: &[f64], dirichlet: &[f64], edge: usize, k: usize) -> f64 {
        match self.across(edge, k) {
            Across::Cell(l) => cells[l],
            Across::Dirichlet(s) => dirichlet[s],
            Across::Neumann => cells[k],
        }
    }

    /// `D_{K,σ} u = u_{K,σ} - u_K`.
    #[inline]
    pub fn diff(&self, cells: &[f64], dirichlet: &[f64], edge: usize, k: usize) -> f64 {
        self.value_across(cells, dirichlet, edge, k) - cells[k]
    }

    /// Retags boundary edges according to `rules`; every boundary edge must
    /// match exactly one rule and at least one edge must end up Dirichlet.
    pub fn boundary_partition(&self, rules: &[SegmentRule]) -> Result<Mesh> {
        let mut out = self.clone();
        for (e, edge) in out.edges.iter_mut().enumerate() {
            if !edge.kind.is_boundary() {
                continue;
            }
            let hits: Vec<usize> = rules
                .iter()
                .enumerate()
                .filter(|(_, r)| r.matches(edge))
                .map(|(i, _)| i)
                .collect();
            let seg = match hits.as_slice() {
                [one] => *one,
                [] => {
                    return Err(Error::Partition(format!(
                        "boundary edge {e} (face {:?}) matched by no segment",
                        edge.face
                    )))
                }
                many => {
                    let names: Vec<&str> = many.iter().map(|&i| rules[i].name.as_str()).collect();
                    return Err(Error::Partition(format!(
                        "boundary edge {e} matched by several segments: {}",
                        names.join(", ")
                    )));
                }
            };
            let k = edge.kind.owner();
            edge.kind = match rules[seg].kind {
                BoundaryKind::Dirichlet => EdgeKind::Dirichlet { k },
                BoundaryKind::Neumann => EdgeKind::Neumann { k },
            };
            out.edge_segment[e] = Some(seg);
        }
        out.reindex_dirichlet();
        if out.dirichlet_measure() <= 0.0 {
            return Err(Error::MeasureZeroDirichlet);
        }
        Ok(out)
    }

    /// Assigns every existing Dirichlet edge to segment `seg` and keeps the
    /// stored tags. Used for meshes read from file, which carry no face data.
    pub fn assign_dirichlet_segment(&self, seg: usize) -> Result<Mesh> {
        let mut out = self.clone();
        for (e, edge) in out.edges.iter().enumerate() {
            if edge.kind.is_boundary() {
                out.edge_segment[e] = Some(seg);
            }
        }
        if out.dirichlet_measure() <= 0.0 {
            return Err(Error::MeasureZeroDirichlet);
        }
        Ok(out)
    }

    pub fn regularity_constants(&self) -> MeshRegularity {
        let mut xi = f64::INFINITY;
        let mut c0 = f64::INFINITY;
        for edge in &self.edges {
            c0 = c0.min(edge.tau);
            xi = xi.min(edge.d_k / edge.d_sigma);
            if let Some(d_l) = edge.d_l {
                xi = xi.min(d_l / edge.d_sigma);
            }
        }
        MeshRegularity { xi, c0 }
    }
}

/// Uniform `nx × ny` tensor grid of `domain`, every boundary edge Neumann.
pub fn build_rectangular_mesh(nx: usize, ny: usize, domain: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!("cell counts must be positive, got {nx} x {ny}")));
    }
    let (w, h) = (domain.width(), domain.height());
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(Error::invalid("degenerate rectangle"));
    }
    let hx = w / nx as f64;
    let hy = h / ny as f64;
    let xc = |i: usize| domain.x0 + (i as f64 + 0.5) * hx;
    let yc = |j: usize| domain.y0 + (j as f64 + 0.5) * hy;
    let id = |i: usize, j: usize| i + nx * j;

    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(Cell {
                center: [xc(i), yc(j)],
                measure: hx * hy,
            });
        }
    }

    let mut edges = Vec::new();
    let interior = |k, l, measure: f64, d: f64, mid, normal| Edge {
        kind: EdgeKind::Interior { k, l },
        measure,
        d_sigma: d,
        d_k: 0.5 * d,
        d_l: Some(0.5 * d),
        tau: measure / d,
        midpoint: Some(mid),
        normal: Some(normal),
        face: None,
    };
    for j in 0..ny {
        for i in 0..nx.saturating_sub(1) {
            let mid = [domain.x0 + (i + 1) as f64 * hx, yc(j)];
            edges.push(interior(id(i, j), id(i + 1, j), hy, hx, mid, [1.0, 0.0]));
        }
    }
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx {
            let mid = [xc(i), domain.y0 + (j + 1) as f64 * hy];
            edges.push(interior(id(i, j), id(i, j + 1), hx, hy, mid, [0.0, 1.0]));
        }
    }

    let boundary = |k, measure: f64, d: f64, mid, normal, face| Edge {
        kind: EdgeKind::Neumann { k },
        measure,
        d_sigma: d,
        d_k: d,
        d_l: None,
        tau: measure / d,
        midpoint: Some(mid),
        normal: Some(normal),
        face: Some(face),
    };
    for i in 0..nx {
        edges.push(boundary(
            id(i, 0),
            hx,
            0.5 * hy,
            [xc(i), domain.y0],
            [0.0, -1.0],
            Face::Bottom,
        ));
    }
    for j in 0..ny {
        edges.push(boundary(
            id(nx - 1, j),
            hy,
            0.5 * hx,
            [domain.x1, yc(j)],
            [1.0, 0.0],
            Face::Right,
        ));
    }
    for i in 0..nx {
        edges.push(boundary(
            id(i, ny - 1),
            hx,
            0.5 * hy,
            [xc(i), domain.y1],
            [0.0, 1.0],
            Face::Top,
        ));
    }
    for j in 0..ny {
        edges.push(boundary(
            id(0, j),
            hy,
            0.5 * hx,
            [domain.x0, yc(j)],
            [-1.0, 0.0],
            Face::Left,
        ));
    }

    Mesh::from_parts(cells, edges, Some(Grid { nx, ny, rect: domain }))
}

/// Unit-square grid with Dirichlet contacts on `x = 0` and `x = 1` and
/// insulated `y` faces.
pub fn unit_square_with_x_contacts(n: usize) -> Result<Mesh> {
    build_rectangular_mesh(n, n, Rect::unit())?.boundary_partition(&[
        SegmentRule::new("contacts", &[Face::Left, Face::Right], BoundaryKind::Dirichlet),
        SegmentRule::new("insulated", &[Face::Bottom, Face::Top], BoundaryKind::Neumann),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_contacts() -> Vec<SegmentRule> {
        vec![
            SegmentRule::new("contacts", &[Face::Left, Face::Right], BoundaryKind::Dirichlet),
            SegmentRule::new("rest", &[Face::Bottom, Face::Top], BoundaryKind::Neumann),
        ]
    }

    #[test]
    fn two_by_two_unit_square() {
        let m = build_rectangular_mesh(2, 2, Rect::unit()).unwrap();
        assert_eq!(m.cell_count(), 4);
        assert!(m.cells().iter().all(|c| c.measure == 0.25));
        let interior: Vec<_> = m.edges().iter().filter(|e| !e.kind.is_boundary()).collect();
        let boundary: Vec<_> = m.edges().iter().filter(|e| e.kind.is_boundary()).collect();
        assert_eq!(interior.len(), 4);
        assert!(interior.iter().all(|e| e.tau == 1.0));
        assert_eq!(boundary.len(), 8);
        assert!(boundary.iter().all(|e| e.d_sigma == 0.25 && e.tau == 2.0));
        assert_eq!(m.neumann_edge_count(), 8);
    }

    #[test]
    fn single_cell() {
        let m = build_rectangular_mesh(1, 1, Rect::unit()).unwrap();
        assert_eq!(m.cell_count(), 1);
        assert_eq!(m.interior_edge_count(), 0);
        assert_eq!(m.edge_count(), 4);
    }

    #[test]
    fn four_by_two() {
        let m = build_rectangular_mesh(4, 2, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        assert_eq!(m.cell_count(), 8);
        assert!(m.cells().iter().all(|c| c.measure == 0.25));
        assert!(m.edges().iter().filter(|e| !e.kind.is_boundary()).all(|e| e.tau == 1.0));
        assert_eq!(m.cell_rect(5).unwrap(), Rect::new(0.5, 1.0, 0.5, 1.0));
    }

    #[test]
    fn bad_arguments() {
        assert!(matches!(
            build_rectangular_mesh(0, 3, Rect::unit()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_rectangular_mesh(2, 2, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(build_rectangular_mesh(2, 2, Rect::new(1.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn partition_x_faces() {
        let m = build_rectangular_mesh(2, 2, Rect::unit()).unwrap();
        let p = m.boundary_partition(&x_contacts()).unwrap();
        assert_eq!(p.dirichlet_count(), 4);
        assert_eq!(p.neumann_edge_count(), 4);
        for (slot, &e) in p.dirichlet_edges().iter().enumerate() {
            assert_eq!(p.dirichlet_slot(e), Some(slot));
            assert!(matches!(p.edges()[e].face, Some(Face::Left | Face::Right)));
        }
    }

    #[test]
    fn partition_all_dirichlet() {
        let m = build_rectangular_mesh(2, 2, Rect::unit()).unwrap();
        let p = m
            .boundary_partition(&[SegmentRule::new("all", &[], BoundaryKind::Dirichlet)])
            .unwrap();
        assert_eq!(p.dirichlet_count(), 8);
        assert_eq!(p.neumann_edge_count(), 0);
    }

    #[test]
    fn partition_errors() {
        let m = build_rectangular_mesh(2, 2, Rect::unit()).unwrap();
        let missing = vec![
            SegmentRule::new("contacts", &[Face::Left, Face::Right], BoundaryKind::Dirichlet),
            SegmentRule::new("bottom", &[Face::Bottom], BoundaryKind::Neumann),
        ];
        assert!(matches!(m.boundary_partition(&missing), Err(Error::Partition(_))));
        let double = vec![
            SegmentRule::new("all", &[], BoundaryKind::Dirichlet),
            SegmentRule::new("top", &[Face::Top], BoundaryKind::Neumann),
        ];
        assert!(matches!(m.boundary_partition(&double), Err(Error::Partition(_))));
        let neumann = vec![SegmentRule::new("all", &[], BoundaryKind::Neumann)];
        assert!(matches!(
            m.boundary_partition(&neumann),
            Err(Error::MeasureZeroDirichlet)
        ));
    }

    #[test]
    fn partition_window() {
        let m = build_rectangular_mesh(4, 4, Rect::unit()).unwrap();
        let mut contact = SegmentRule::new("contact", &[Face::Left], BoundaryKind::Dirichlet);
        contact.window = Some((0.0, 0.5));
        let mut rest_left = SegmentRule::new("left-rest", &[Face::Left], BoundaryKind::Neumann);
        rest_left.window = Some((0.5, 1.0));
        let others = SegmentRule::new("others", &[Face::Right, Face::Top, Face::Bottom], BoundaryKind::Neumann);
        let p = m.boundary_partition(&[contact, rest_left, others]).unwrap();
        assert_eq!(p.dirichlet_count(), 2);
        assert_eq!(p.dirichlet_measure(), 0.5);
    }

    #[test]
    fn regularity() {
        let r = build_rectangular_mesh(2, 2, Rect::unit())
            .unwrap()
            .regularity_constants();
        assert_eq!(r, MeshRegularity { xi: 0.5, c0: 1.0 });
        let r = build_rectangular_mesh(1, 1, Rect::unit())
            .unwrap()
            .regularity_constants();
        assert_eq!(r, MeshRegularity { xi: 1.0, c0: 2.0 });
        let r = build_rectangular_mesh(4, 1, Rect::unit())
            .unwrap()
            .regularity_constants();
        assert!(r.xi > 0.0 && r.xi <= 1.0 && r.c0 > 0.0);
        for n in [2, 4, 8, 16] {
            let r = build_rectangular_mesh(n, n, Rect::unit())
                .unwrap()
                .regularity_constants();
            assert_eq!(r.xi, 0.5);
        }
    }

    #[test]
    fn interior_distances_add_up() {
        let m = build_rectangular_mesh(7, 3, Rect::new(-1.0, 2.5, 0.0, 0.3)).unwrap();
        for e in m.edges() {
            if let Some(d_l) = e.d_l {
                assert!((e.d_k + d_l - e.d_sigma).abs() <= 1e-12 * e.d_sigma);
            }
            assert!(e.measure > 0.0);
        }
        let total: f64 = m.cells().iter().map(|c| c.measure).sum();
        assert!((total - m.domain_measure()).abs() <= 1e-12 * m.domain_measure());
    }

    #[test]
    fn rejects_non_orthogonal() {
        let m = build_rectangular_mesh(2, 1, Rect::unit()).unwrap();
        let mut cells = m.cells().to_vec();
        cells[1].center[1] += 0.1;
        assert!(Mesh::from_parts(cells, m.edges().to_vec(), m.grid().copied()).is_err());
    }
}
