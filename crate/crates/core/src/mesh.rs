//! Structured triangulations of rectangles and their two-subdomain splits.
//!
//! A [`Mesh`] is a plain node/triangle listing. A [`Decomposition`] tags every
//! triangle with a [`Subdomain`], classifies nodes, and exposes the local
//! degree-of-freedom sets used by the assembly routines. Local subdomain
//! fields are laid out interior-first followed by the interface nodes in
//! interface order, so the trace of a field is its trailing block.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// Nominal mesh width.
    pub h: f64,
}

/// Twice the signed area of the triangle `(a, b, c)`.
pub(crate) fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn near_integer(v: f64) -> Option<usize> {
    let r = v.round();
    if r >= 0.0 && (v - r).abs() <= GRID_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Structured grid on `[0, width] x [0, height]` with every cell cut along
/// its lower-left to upper-right diagonal.
pub fn build_rect_mesh(width: f64, height: f64, h: f64) -> Result<Mesh> {
    if !(width > 0.0 && height > 0.0 && h > 0.0) || !(width.is_finite() && height.is_finite()) {
        return Err(Error::Mesh(format!(
            "width, height and h must be positive and finite (got {width}, {height}, {h})"
        )));
    }
    let nx = near_integer(width / h).ok_or_else(|| {
        Error::Mesh(format!("width {width} is not an integer multiple of h = {h}"))
    })?;
    let ny = near_integer(height / h).ok_or_else(|| {
        Error::Mesh(format!("height {height} is not an integer multiple of h = {h}"))
    })?;
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh("mesh must have at least one cell".into()));
    }

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Pin the last row/column to the exact extent.
            let x = if i == nx { width } else { i as f64 * h };
            let y = if j == ny { height } else { j as f64 * h };
            nodes.push([x, y]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(Mesh { nodes, triangles, h })
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * signed_area2(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn is_on_boundary(&self, node: usize) -> bool {
        let (lo, hi) = self.bounding_box();
        self.point_on_box(self.nodes[node], lo, hi)
    }

    fn point_on_box(&self, p: Point, lo: Point, hi: Point) -> bool {
        let tol = GRID_TOL * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
        (p[0] - lo[0]).abs() <= tol
            || (p[0] - hi[0]).abs() <= tol
            || (p[1] - lo[1]).abs() <= tol
            || (p[1] - hi[1]).abs() <= tol
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Checks positivity of every triangle, conformity, and that the
    /// triangles tile the bounding box.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        if self.nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        let mut total = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let area = self.area(t);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            total += area;
        }
        let (lo, hi) = self.bounding_box();
        let boundary_edge = |a: usize, b: usize| {
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let tol = GRID_TOL * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
            (0..2).any(|k| {
                ((pa[k] - lo[k]).abs() <= tol && (pb[k] - lo[k]).abs() <= tol)
                    || ((pa[k] - hi[k]).abs() <= tol && (pb[k] - hi[k]).abs() <= tol)
            })
        };
        for (&(a, b), &count) in &self.edge_counts() {
            let expected = if boundary_edge(a, b) { 1 } else { 2 };
            if count != expected {
                return Err(Error::Mesh(format!(
                    "edge ({a}, {b}) is shared by {count} triangles, expected {expected}"
                )));
            }
        }
        let box_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        if (total - box_area).abs() > 1e-12 * box_area {
            return Err(Error::Mesh(format!(
                "triangle areas sum to {total}, bounding box area is {box_area}"
            )));
        }
        Ok(())
    }

    /// Writes the debugging dump: an `h` line, then `nodes N` followed by one
    /// `x y` line per node, then `triangles M` followed by one `i j k` line
    /// per triangle.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "h {}", self.h)?;
        writeln!(out, "nodes {}", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(out, "{} {}", p[0], p[1])?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Parses the format produced by [`Mesh::write_dump`] and validates the result.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_dump(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line, value) = dump_header(&mut lines, "h")?;
        let h: f64 = value
            .parse()
            .map_err(|_| parse_err(line, format!("bad mesh width '{value}'")))?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(parse_err(line, format!("mesh width must be positive, got {h}")));
        }

        let (line, value) = dump_header(&mut lines, "nodes")?;
        let n_nodes: usize = value
            .parse()
            .map_err(|_| parse_err(line, format!("bad node count '{value}'")))?;
        let mut nodes = Vec::new();
        for _ in 0..n_nodes {
            let (line, l) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of node list".into()))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(line, "bad coordinate".into()))?;
            if vals.len() != 2 {
                return Err(parse_err(line, "node line must be 'x y'".into()));
            }
            nodes.push([vals[0], vals[1]]);
        }

        let (line, value) = dump_header(&mut lines, "triangles")?;
        let n_tri: usize = value
            .parse()
            .map_err(|_| parse_err(line, format!("bad triangle count '{value}'")))?;
        let mut triangles = Vec::new();
        for _ in 0..n_tri {
            let (line, l) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of triangle list".into()))?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(str::parse::<usize>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(line, "bad node index".into()))?;
            if vals.len() != 3 {
                return Err(parse_err(line, "triangle line must be 'i j k'".into()));
            }
            triangles.push([vals[0], vals[1], vals[2]]);
        }
        if let Some((line, _)) = lines.next() {
            return Err(parse_err(line, "trailing content after triangle list".into()));
        }
        let mesh = Mesh { nodes, triangles, h };
        mesh.validate()?;
        Ok(mesh)
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn dump_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<(usize, &'a str)> {
    let (line, l) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing '{key}' header")))?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some(key) {
        return Err(parse_err(line, format!("expected '{key}' header")));
    }
    let value = parts
        .next()
        .ok_or_else(|| parse_err(line, format!("'{key}' needs a value")))?;
    if parts.next().is_some() {
        return Err(parse_err(line, "trailing tokens".into()));
    }
    Ok((line, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    One,
    Two,
}

impl Subdomain {
    pub const BOTH: [Subdomain; 2] = [Subdomain::One, Subdomain::Two];

    pub fn index(self) -> usize {
        match self {
            Subdomain::One => 0,
            Subdomain::Two => 1,
        }
    }

    /// 1-based label.
    pub fn id(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl fmt::Display for Subdomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior(Subdomain),
    Interface,
    Exterior,
}

/// An ordered set of mesh nodes carrying unknowns, together with the
/// triangles that are integrated over. Nodes outside the set read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DofSet {
    nodes: Vec<usize>,
    local_of: Vec<usize>,
    triangles: Vec<usize>,
}

impl DofSet {
    pub const NONE: usize = usize::MAX;

    pub fn new(num_mesh_nodes: usize, nodes: Vec<usize>, triangles: Vec<usize>) -> Self {
        let mut local_of = vec![Self::NONE; num_mesh_nodes];
        for (k, &n) in nodes.iter().enumerate() {
            local_of[n] = k;
        }
        DofSet {
            nodes,
            local_of,
            triangles,
        }
    }

    /// Every node of the mesh, every triangle.
    pub fn all(mesh: &Mesh) -> Self {
        Self::new(
            mesh.num_nodes(),
            (0..mesh.num_nodes()).collect(),
            (0..mesh.num_triangles()).collect(),
        )
    }

    /// Every node off the outer boundary, every triangle.
    pub fn free(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let nodes = (0..mesh.num_nodes())
            .filter(|&n| !mesh.point_on_box(mesh.nodes[n], lo, hi))
            .collect();
        Self::new(mesh.num_nodes(), nodes, (0..mesh.num_triangles()).collect())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[usize] {
        &self.triangles
    }

    /// Local index of a mesh node, if it carries an unknown.
    pub fn local(&self, node: usize) -> Option<usize> {
        match self.local_of.get(node) {
            Some(&k) if k != Self::NONE => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub subdomain_of_triangle: Vec<Subdomain>,
    pub node_class: Vec<NodeClass>,
    /// Interface nodes, ordered by ascending y then x.
    pub interface_dofs: Vec<usize>,
    pub interior_dofs: [Vec<usize>; 2],
    local: [DofSet; 2],
    global: DofSet,
}

impl Decomposition {
    /// Builds a decomposition from a per-triangle tag.
    pub fn from_tags(mesh: &Mesh, subdomain_of_triangle: Vec<Subdomain>) -> Result<Self> {
        if subdomain_of_triangle.len() != mesh.num_triangles() {
            return Err(Error::dimension(
                "triangle tags",
                mesh.num_triangles(),
                subdomain_of_triangle.len(),
            ));
        }
        let n = mesh.num_nodes();
        let mut touches = vec![[false; 2]; n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let s = subdomain_of_triangle[t].index();
            for &v in tri {
                touches[v][s] = true;
            }
        }
        let (lo, hi) = mesh.bounding_box();
        let mut node_class = Vec::with_capacity(n);
        for (v, touch) in touches.iter().enumerate() {
            let class = if mesh.point_on_box(mesh.nodes[v], lo, hi) {
                NodeClass::Exterior
            } else {
                match touch {
                    [true, true] => NodeClass::Interface,
                    [true, false] => NodeClass::Interior(Subdomain::One),
                    [false, true] => NodeClass::Interior(Subdomain::Two),
                    [false, false] => {
                        return Err(Error::Decomposition(format!(
                            "node {v} belongs to no triangle"
                        )))
                    }
                }
            };
            node_class.push(class);
        }

        let mut interface_dofs: Vec<usize> = (0..n)
            .filter(|&v| node_class[v] == NodeClass::Interface)
            .collect();
        interface_dofs.sort_by(|&a, &b| {
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
        });
        if interface_dofs.is_empty() {
            return Err(Error::Decomposition("interface has no free nodes".into()));
        }

        let interior_dofs = Subdomain::BOTH.map(|s| {
            (0..n)
                .filter(|&v| node_class[v] == NodeClass::Interior(s))
                .collect::<Vec<_>>()
        });
        let local = Subdomain::BOTH.map(|s| {
            let mut nodes = interior_dofs[s.index()].clone();
            nodes.extend_from_slice(&interface_dofs);
            let tris = (0..mesh.num_triangles())
                .filter(|&t| subdomain_of_triangle[t] == s)
                .collect();
            DofSet::new(n, nodes, tris)
        });
        let global = DofSet::new(
            n,
            (0..n)
                .filter(|&v| node_class[v] != NodeClass::Exterior)
                .collect(),
            (0..mesh.num_triangles()).collect(),
        );
        Ok(Decomposition {
            subdomain_of_triangle,
            node_class,
            interface_dofs,
            interior_dofs,
            local,
            global,
        })
    }

    pub fn interface_len(&self) -> usize {
        self.interface_dofs.len()
    }

    pub fn interior_len(&self, s: Subdomain) -> usize {
        self.interior_dofs[s.index()].len()
    }

    /// Interior nodes of `s` followed by the interface nodes.
    pub fn local_dofs(&self, s: Subdomain) -> &DofSet {
        &self.local[s.index()]
    }

    /// All non-exterior nodes over the whole mesh.
    pub fn global_dofs(&self) -> &DofSet {
        &self.global
    }

    /// Restriction of a subdomain field to the interface (the trace).
    pub fn trace(&self, s: Subdomain, u: &SubdomainField) -> Result<InterfaceVector> {
        let n = self.local_dofs(s).len();
        if u.len() != n {
            return Err(Error::dimension("subdomain field", n, u.len()));
        }
        Ok(InterfaceVector(u[self.interior_len(s)..].to_vec()))
    }

    /// The field equal to `eta` on the interface and zero on interior nodes.
    pub fn extension_by_zero(&self, s: Subdomain, eta: &InterfaceVector) -> Result<SubdomainField> {
        if eta.len() != self.interface_len() {
            return Err(Error::dimension("interface vector", self.interface_len(), eta.len()));
        }
        let mut u = vec![0.0; self.interior_len(s)];
        u.extend_from_slice(eta);
        Ok(SubdomainField(u))
    }

    /// Scatters a field over the global free dofs into the two subdomain layouts.
    pub fn restrict_global(&self, u: &[f64]) -> Result<[SubdomainField; 2]> {
        if u.len() != self.global.len() {
            return Err(Error::dimension("global field", self.global.len(), u.len()));
        }
        Ok(Subdomain::BOTH.map(|s| {
            SubdomainField(
                self.local_dofs(s)
                    .nodes()
                    .iter()
                    .map(|&v| u[self.global.local(v).expect("free node")])
                    .collect(),
            )
        }))
    }
}

/// Tags triangles with centroid `x < x_split` as subdomain 1, the rest as 2.
pub fn decompose_vertical(mesh: &Mesh, x_split: f64) -> Result<Decomposition> {
    let (lo, hi) = mesh.bounding_box();
    check_grid_line(mesh, x_split, lo[0], hi[0], "x_split")?;
    let tags = (0..mesh.num_triangles())
        .map(|t| {
            if mesh.centroid(t)[0] < x_split {
                Subdomain::One
            } else {
                Subdomain::Two
            }
        })
        .collect();
    Decomposition::from_tags(mesh, tags)
}

/// Two L-shaped subdomains meeting along a staircase interface: subdomain 1
/// is `{x < x_low} ∪ {x < x_high, y < y_step}`.
pub fn decompose_l_shaped(mesh: &Mesh, x_low: f64, x_high: f64, y_step: f64) -> Result<Decomposition> {
    let (lo, hi) = mesh.bounding_box();
    check_grid_line(mesh, x_low, lo[0], hi[0], "x_low")?;
    check_grid_line(mesh, x_high, lo[0], hi[0], "x_high")?;
    check_grid_line(mesh, y_step, lo[1], hi[1], "y_step")?;
    if x_low >= x_high {
        return Err(Error::Decomposition(format!(
            "x_low ({x_low}) must be smaller than x_high ({x_high})"
        )));
    }
    let tags = (0..mesh.num_triangles())
        .map(|t| {
            let [cx, cy] = mesh.centroid(t);
            if cx < x_low || (cx < x_high && cy < y_step) {
                Subdomain::One
            } else {
                Subdomain::Two
            }
        })
        .collect();
    Decomposition::from_tags(mesh, tags)
}

fn check_grid_line(mesh: &Mesh, value: f64, lo: f64, hi: f64, name: &str) -> Result<()> {
    if !(value > lo && value < hi) {
        return Err(Error::Decomposition(format!(
            "{name} = {value} must lie strictly inside ({lo}, {hi})"
        )));
    }
    if near_integer((value - lo) / mesh.h).is_none() {
        return Err(Error::Decomposition(format!(
            "{name} = {value} is not a grid line for h = {}",
            mesh.h
        )));
    }
    Ok(())
}

macro_rules! vector_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                $name(vec![0.0; n])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }
    };
}

vector_newtype!(
    /// Nodal values on the interface dofs.
    InterfaceVector
);
vector_newtype!(
    /// Nodal values on one subdomain's interior and interface dofs.
    SubdomainField
);
vector_newtype!(
    /// A functional on interface data, stored as its action on the interface
    /// nodal basis functions.
    InterfaceFunctional
);
