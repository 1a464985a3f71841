//! P1 finite-element assembly on a [`DofSet`].
//!
//! Fields passed to these routines are indexed by the dof set's local
//! numbering; mesh nodes outside the set contribute zero. Triangles are
//! visited in dof-set order and coordinate entries are merged with a stable
//! sort, so assembled output is bitwise reproducible.

use crate::error::{Error, Result};
use crate::mesh::{
    build_rect_mesh, decompose_vertical, signed_area2, Decomposition, DofSet, Mesh, Point,
};
use crate::problems::ProblemDef;

/// Mesh, two-subdomain split and quadrature rule used together by the solvers.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub decomp: Decomposition,
    pub rule: QuadratureRule,
}

impl Discretization {
    pub fn new(mesh: Mesh, decomp: Decomposition) -> Self {
        Discretization {
            mesh,
            decomp,
            rule: QuadratureRule::default(),
        }
    }

    /// `[0, width] x [0, height]` split at `x = x_split`.
    pub fn vertical(width: f64, height: f64, h: f64, x_split: f64) -> Result<Self> {
        let mesh = build_rect_mesh(width, height, h)?;
        let decomp = decompose_vertical(&mesh, x_split)?;
        Ok(Self::new(mesh, decomp))
    }
}

/// Barycentric quadrature on a triangle; weights sum to one and are scaled
/// by the triangle area at use.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl QuadratureRule {
    pub fn centroid() -> Self {
        QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            degree: 1,
        }
    }

    /// Three edge midpoints, exact for quadratics.
    pub fn edge_midpoint() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    /// Six-point symmetric rule, exact for quartics.
    pub fn six_point() -> Self {
        let (a, b) = (0.445_948_490_915_965, 0.091_576_213_509_771);
        let (wa, wb) = (0.223_381_589_678_011, 0.109_951_743_655_322);
        let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
        QuadratureRule {
            points: vec![
                [a, a, ca],
                [a, ca, a],
                [ca, a, a],
                [b, b, cb],
                [b, cb, b],
                [cb, b, b],
            ],
            weights: vec![wa, wa, wa, wb, wb, wb],
            degree: 4,
        }
    }

    /// Cheapest shipped rule exact to at least `degree`.
    pub fn with_degree(degree: u32) -> Result<Self> {
        match degree {
            0 | 1 => Ok(Self::centroid()),
            2 => Ok(Self::edge_midpoint()),
            3 | 4 => Ok(Self::six_point()),
            d => Err(Error::Config(format!("no quadrature rule of degree {d}"))),
        }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::edge_midpoint()
    }
}

/// Constant gradients of the three hat functions and the triangle area.
pub fn local_p1_basis(v: [Point; 3]) -> Result<([[f64; 2]; 3], f64)> {
    let det = signed_area2(v[0], v[1], v[2]);
    let scale = (v[1][0] - v[0][0])
        .abs()
        .max((v[1][1] - v[0][1]).abs())
        .max((v[2][0] - v[0][0]).abs())
        .max((v[2][1] - v[0][1]).abs());
    if !(det.abs() > 1e-14 * scale * scale) {
        return Err(Error::DegenerateTriangle(0.5 * det));
    }
    let mut grads = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = (v[(a + 1) % 3], v[(a + 2) % 3]);
        grads[a] = [(b[1] - c[1]) / det, (c[0] - b[0]) / det];
    }
    Ok((grads, 0.5 * det.abs()))
}

/// A square matrix in coordinate form. Duplicate entries are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub dimension: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSystem {
    pub fn new(dimension: usize) -> Self {
        SparseSystem {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn identity(dimension: usize) -> Self {
        SparseSystem {
            dimension,
            entries: (0..dimension).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Sums duplicates and sorts column-major.
    pub fn compress(&mut self) {
        self.entries.sort_by_key(|e| (e.1, e.0));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        self.entries = merged;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    /// Rows `rows`, columns `cols` as a rectangular entry list.
    pub fn block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Vec<(usize, usize, f64)> {
        self.entries
            .iter()
            .filter(|(r, c, _)| rows.contains(r) && cols.contains(c))
            .map(|&(r, c, v)| (r - rows.start, c - cols.start, v))
            .collect()
    }

    /// Upper-left `n x n` block.
    pub fn leading(&self, n: usize) -> SparseSystem {
        SparseSystem {
            dimension: n,
            entries: self.block(0..n, 0..n),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.dimension]; self.dimension];
        for &(r, c, v) in &self.entries {
            a[r][c] += v;
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }
}

struct Element {
    local: [Option<usize>; 3],
    verts: [Point; 3],
    grads: [[f64; 2]; 3],
    area: f64,
}

fn elements<'a>(mesh: &'a Mesh, dofs: &'a DofSet) -> impl Iterator<Item = Result<Element>> + 'a {
    dofs.triangles().iter().map(move |&t| {
        let nodes = mesh.triangles[t];
        let verts = mesh.vertices(t);
        let (grads, area) = local_p1_basis(verts)?;
        Ok(Element {
            local: nodes.map(|n| dofs.local(n)),
            verts,
            grads,
            area,
        })
    })
}

impl Element {
    fn values(&self, u: &[f64]) -> [f64; 3] {
        self.local.map(|k| k.map_or(0.0, |k| u[k]))
    }

    fn gradient(&self, vals: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..3 {
            g[0] += vals[a] * self.grads[a][0];
            g[1] += vals[a] * self.grads[a][1];
        }
        g
    }

    fn point(&self, bary: [f64; 3]) -> Point {
        let mut p = [0.0; 2];
        for a in 0..3 {
            p[0] += bary[a] * self.verts[a][0];
            p[1] += bary[a] * self.verts[a][1];
        }
        p
    }
}

fn check_len(what: &'static str, dofs: &DofSet, u: &[f64]) -> Result<()> {
    if u.len() != dofs.len() {
        return Err(Error::dimension(what, dofs.len(), u.len()));
    }
    Ok(())
}

/// `r_j = <A u - f, φ_j>` for every dof `j`.
pub fn assemble_residual(
    problem: &ProblemDef,
    mesh: &Mesh,
    dofs: &DofSet,
    rule: &QuadratureRule,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_len("residual input", dofs, u)?;
    let mut r = vec![0.0; dofs.len()];
    for el in elements(mesh, dofs) {
        let el = el?;
        let vals = el.values(u);
        let grad = el.gradient(vals);
        let mut local = [0.0; 3];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = el.point(*bary);
            let uq = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            let flux = problem.alpha(x, uq, grad);
            let reaction = problem.beta(x, uq, grad) - problem.source(x);
            let wa = w * el.area;
            for a in 0..3 {
                local[a] += wa
                    * (flux[0] * el.grads[a][0] + flux[1] * el.grads[a][1] + reaction * bary[a]);
            }
        }
        for a in 0..3 {
            if let Some(k) = el.local[a] {
                r[k] += local[a];
            }
        }
    }
    Ok(r)
}

/// Derivative of [`assemble_residual`] at `u`: entries
/// `∫ J_a(∇u) ∇φ_k · ∇φ_j + J_b(u) φ_k φ_j` with row `j`, column `k`.
pub fn assemble_jacobian(
    problem: &ProblemDef,
    mesh: &Mesh,
    dofs: &DofSet,
    rule: &QuadratureRule,
    u: &[f64],
) -> Result<SparseSystem> {
    check_len("jacobian input", dofs, u)?;
    let mut sys = SparseSystem::new(dofs.len());
    sys.entries.reserve(9 * dofs.triangles().len());
    for el in elements(mesh, dofs) {
        let el = el?;
        let vals = el.values(u);
        let grad = el.gradient(vals);
        let mut local = [[0.0; 3]; 3];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = el.point(*bary);
            let uq = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            let ja = problem.j_alpha(x, grad);
            let jb = problem.j_beta(x, uq);
            let wa = w * el.area;
            for b in 0..3 {
                let g = el.grads[b];
                let flux = [ja[0][0] * g[0] + ja[0][1] * g[1], ja[1][0] * g[0] + ja[1][1] * g[1]];
                for a in 0..3 {
                    local[a][b] += wa
                        * (flux[0] * el.grads[a][0]
                            + flux[1] * el.grads[a][1]
                            + jb * bary[b] * bary[a]);
                }
            }
        }
        push_local(&mut sys, &el, &local);
    }
    sys.compress();
    Ok(sys)
}

fn push_local(sys: &mut SparseSystem, el: &Element, local: &[[f64; 3]; 3]) {
    for a in 0..3 {
        let Some(row) = el.local[a] else { continue };
        for b in 0..3 {
            if let Some(col) = el.local[b] {
                sys.push(row, col, local[a][b]);
            }
        }
    }
}

/// Stiffness matrix of `∫ ∇u · ∇v` on the dof set.
pub fn assemble_laplace_stiffness(mesh: &Mesh, dofs: &DofSet) -> Result<SparseSystem> {
    let mut sys = SparseSystem::new(dofs.len());
    for el in elements(mesh, dofs) {
        let el = el?;
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                local[a][b] = el.area
                    * (el.grads[a][0] * el.grads[b][0] + el.grads[a][1] * el.grads[b][1]);
            }
        }
        push_local(&mut sys, &el, &local);
    }
    sys.compress();
    Ok(sys)
}

/// Mass matrix of `∫ u v`, exact for P1.
pub fn assemble_mass(mesh: &Mesh, dofs: &DofSet) -> Result<SparseSystem> {
    let mut sys = SparseSystem::new(dofs.len());
    for el in elements(mesh, dofs) {
        let el = el?;
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                local[a][b] = el.area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
            }
        }
        push_local(&mut sys, &el, &local);
    }
    sys.compress();
    Ok(sys)
}

/// `<f, φ_j>` for every dof.
pub fn assemble_load(
    problem: &ProblemDef,
    mesh: &Mesh,
    dofs: &DofSet,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; dofs.len()];
    for el in elements(mesh, dofs) {
        let el = el?;
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let f = problem.source(el.point(*bary)) * w * el.area;
            for a in 0..3 {
                if let Some(k) = el.local[a] {
                    b[k] += f * bary[a];
                }
            }
        }
    }
    Ok(b)
}

/// `(‖u‖²_L2, ‖∇u‖²_L2)` over the dof set's triangles.
fn squared_norms(mesh: &Mesh, dofs: &DofSet, u: &[f64]) -> Result<(f64, f64)> {
    check_len("norm input", dofs, u)?;
    let rule = QuadratureRule::edge_midpoint();
    let (mut l2, mut semi) = (0.0, 0.0);
    for el in elements(mesh, dofs) {
        let el = el?;
        let vals = el.values(u);
        let g = el.gradient(vals);
        semi += el.area * (g[0] * g[0] + g[1] * g[1]);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let uq = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            l2 += w * el.area * uq * uq;
        }
    }
    Ok((l2, semi))
}

pub fn l2_norm(mesh: &Mesh, dofs: &DofSet, u: &[f64]) -> Result<f64> {
    Ok(squared_norms(mesh, dofs, u)?.0.sqrt())
}

pub fn h1_seminorm(mesh: &Mesh, dofs: &DofSet, u: &[f64]) -> Result<f64> {
    Ok(squared_norms(mesh, dofs, u)?.1.sqrt())
}

/// `‖u‖_L2 + |u|_H1`, the sum rather than the root of squares.
pub fn h1_norm(mesh: &Mesh, dofs: &DofSet, u: &[f64]) -> Result<f64> {
    let (l2, semi) = squared_norms(mesh, dofs, u)?;
    Ok(l2.sqrt() + semi.sqrt())
}
