//! Dense reference computations built directly from grid geometry, sharing
//! no assembly code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub struct Grid {
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub width: f64,
    pub height: f64,
}

impl Grid {
    pub fn new(width: f64, height: f64, h: f64) -> Grid {
        let nx = (width / h).round() as usize;
        let ny = (height / h).round() as usize;
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 * width / nx as f64, j as f64 * height / ny as f64]);
            }
        }
        let mut tris = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        Grid { nodes, tris, width, height }
    }

    pub fn on_boundary(&self, n: usize) -> bool {
        let [x, y] = self.nodes[n];
        let tol = 1e-12;
        x.abs() < tol || y.abs() < tol || (x - self.width).abs() < tol || (y - self.height).abs() < tol
    }

    fn centroid_x(&self, t: usize) -> f64 {
        self.tris[t].iter().map(|&n| self.nodes[n][0]).sum::<f64>() / 3.0
    }
}

/// Node and triangle lists of one side of a vertical split, interior nodes
/// first and interface nodes last in ascending y.
pub struct Side {
    pub tris: Vec<usize>,
    pub interior: Vec<usize>,
    pub interface: Vec<usize>,
}

pub fn split_sides(g: &Grid, x_split: f64) -> [Side; 2] {
    let tol = 1e-9;
    let mut interface: Vec<usize> = (0..g.nodes.len())
        .filter(|&n| (g.nodes[n][0] - x_split).abs() < tol && !g.on_boundary(n))
        .collect();
    interface.sort_by(|&a, &b| g.nodes[a][1].partial_cmp(&g.nodes[b][1]).unwrap());
    let side = |left: bool| {
        let tris: Vec<usize> = (0..g.tris.len())
            .filter(|&t| (g.centroid_x(t) < x_split) == left)
            .collect();
        let interior = (0..g.nodes.len())
            .filter(|&n| {
                let x = g.nodes[n][0];
                !g.on_boundary(n) && if left { x < x_split - tol } else { x > x_split + tol }
            })
            .collect();
        Side {
            tris,
            interior,
            interface: interface.clone(),
        }
    };
    [side(true), side(false)]
}

fn gradients(g: &Grid, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = g.tris[t].map(|n| g.nodes[n]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    // gradient of the hat at vertex i is the rotated opposite edge over det
    let grad = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
    ([grad(b, c), grad(c, a), grad(a, b)], det.abs() / 2.0)
}

/// Dense Laplace stiffness over `tris` restricted to `dofs` (in that order).
pub fn dense_stiffness(g: &Grid, tris: &[usize], dofs: &[usize]) -> DMatrix<f64> {
    let n = dofs.len();
    let pos = |node: usize| dofs.iter().position(|&d| d == node);
    let mut k = DMatrix::zeros(n, n);
    for &t in tris {
        let (gr, area) = gradients(g, t);
        for a in 0..3 {
            for b in 0..3 {
                if let (Some(i), Some(j)) = (pos(g.tris[t][a]), pos(g.tris[t][b])) {
                    k[(i, j)] += area * (gr[a][0] * gr[b][0] + gr[a][1] * gr[b][1]);
                }
            }
        }
    }
    k
}

/// Load vector with the three edge-midpoint rule: each midpoint carries
/// weight area/3 and a hat value of 1/2 on the two adjacent vertices.
pub fn dense_load(g: &Grid, tris: &[usize], dofs: &[usize], f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
    let pos = |node: usize| dofs.iter().position(|&d| d == node);
    let mut b = DVector::zeros(dofs.len());
    for &t in tris {
        let (_, area) = gradients(g, t);
        let v = g.tris[t];
        for e in 0..3 {
            let (p, q) = (v[e], v[(e + 1) % 3]);
            let m = [
                0.5 * (g.nodes[p][0] + g.nodes[q][0]),
                0.5 * (g.nodes[p][1] + g.nodes[q][1]),
            ];
            let val = f(m[0], m[1]) * area / 3.0 * 0.5;
            for node in [p, q] {
                if let Some(i) = pos(node) {
                    b[i] += val;
                }
            }
        }
    }
    b
}

/// Blocks of a local system ordered interior then interface.
pub struct LocalBlocks {
    pub kii: DMatrix<f64>,
    pub kig: DMatrix<f64>,
    pub kgi: DMatrix<f64>,
    pub kgg: DMatrix<f64>,
    pub bi: DVector<f64>,
    pub bg: DVector<f64>,
}

pub fn local_blocks(g: &Grid, side: &Side, f: &dyn Fn(f64, f64) -> f64) -> LocalBlocks {
    let dofs: Vec<usize> = side.interior.iter().chain(&side.interface).copied().collect();
    let k = dense_stiffness(g, &side.tris, &dofs);
    let b = dense_load(g, &side.tris, &dofs, f);
    let ni = side.interior.len();
    let ng = side.interface.len();
    LocalBlocks {
        kii: k.view((0, 0), (ni, ni)).into_owned(),
        kig: k.view((0, ni), (ni, ng)).into_owned(),
        kgi: k.view((ni, 0), (ng, ni)).into_owned(),
        kgg: k.view((ni, ni), (ng, ng)).into_owned(),
        bi: b.rows(0, ni).into_owned(),
        bg: b.rows(ni, ng).into_owned(),
    }
}

/// Laplace Steklov-Poincare residual `sum_i (K_gg - K_gi K_ii^-1 K_ig) eta - (b_g - K_gi K_ii^-1 b_i)`.
pub fn dense_schur_residual(g: &Grid, x_split: f64, f: &dyn Fn(f64, f64) -> f64, eta: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(eta.len());
    for side in split_sides(g, x_split) {
        let b = local_blocks(g, &side, f);
        let lu = b.kii.clone().lu();
        let ui = lu.solve(&(&b.bi - &b.kig * eta)).expect("interior block invertible");
        out += &b.kgi * ui + &b.kgg * eta - &b.bg;
    }
    out
}

pub fn dense_schur_matrix(g: &Grid, x_split: f64) -> DMatrix<f64> {
    let mut s = None::<DMatrix<f64>>;
    for side in split_sides(g, x_split) {
        let b = local_blocks(g, &side, &|_, _| 0.0);
        let inv = b.kii.clone().try_inverse().expect("interior block invertible");
        let local = &b.kgg - &b.kgi * inv * &b.kig;
        s = Some(match s {
            Some(acc) => acc + local,
            None => local,
        });
    }
    s.unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn paper_source(x: f64, y: f64) -> f64 {
    x * y * (3.0 - x) * (2.0 - y)
}

/// Residual of `-lap u + |u| u - f` on every mesh node, integrated over
/// `tris` with exact stiffness and the edge-midpoint rule for the rest.
pub fn semilinear_residual_full(
    g: &Grid,
    tris: &[usize],
    u: &[f64],
    f: &dyn Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut r = vec![0.0; g.nodes.len()];
    for &t in tris {
        let (gr, area) = gradients(g, t);
        let v = g.tris[t];
        let grad_u = [0, 1].map(|d| (0..3).map(|a| u[v[a]] * gr[a][d]).sum::<f64>());
        for a in 0..3 {
            r[v[a]] += area * (grad_u[0] * gr[a][0] + grad_u[1] * gr[a][1]);
        }
        for e in 0..3 {
            let (p, q) = (v[e], v[(e + 1) % 3]);
            let um = 0.5 * (u[p] + u[q]);
            let xm = 0.5 * (g.nodes[p][0] + g.nodes[q][0]);
            let ym = 0.5 * (g.nodes[p][1] + g.nodes[q][1]);
            let val = (um.abs() * um - f(xm, ym)) * area / 6.0;
            r[p] += val;
            r[q] += val;
        }
    }
    r
}

/// Dense central-difference Jacobian of `res` rows/cols `unknowns` at `u`.
pub fn fd_jacobian(unknowns: &[usize], u: &[f64], res: &dyn Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let n = unknowns.len();
    let mut j = DMatrix::zeros(n, n);
    let step = 1e-7;
    for (c, &k) in unknowns.iter().enumerate() {
        let (mut up, mut um) = (u.to_vec(), u.to_vec());
        up[k] += step;
        um[k] -= step;
        let (rp, rm) = (res(&up), res(&um));
        for (r, &row) in unknowns.iter().enumerate() {
            j[(r, c)] = (rp[row] - rm[row]) / (2.0 * step);
        }
    }
    j
}

/// Solves `res(u)[unknowns] = target` by Newton with a finite-difference
/// Jacobian, updating `u` in place; other entries of `u` stay fixed.
pub fn fd_newton(
    unknowns: &[usize],
    u: &mut [f64],
    target: &[f64],
    res: &dyn Fn(&[f64]) -> Vec<f64>,
) {
    for _ in 0..60 {
        let r = res(u);
        let defect = DVector::from_iterator(
            unknowns.len(),
            unknowns.iter().zip(target).map(|(&k, t)| r[k] - t),
        );
        if defect.norm() < 1e-13 {
            return;
        }
        let j = fd_jacobian(unknowns, u, res);
        let step = j.lu().solve(&defect).expect("jacobian invertible");
        for (i, &k) in unknowns.iter().enumerate() {
            u[k] -= step[i];
        }
    }
    panic!("oracle newton did not converge");
}
