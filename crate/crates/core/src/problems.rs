//! Coefficient structure of the equations `-div a(x, u, grad u) + b(x, u, grad u) = f`.
//!
//! The shipped coefficient sets are the semilinear reaction equation
//! `-Δu + |u|u = f`, the quasilinear sine perturbation of the Laplacian and the
//! p-Laplacian with a zeroth-order term. New equations plug in by implementing
//! [`Coefficients`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Regularization of `|z|` inside the p-Laplace Jacobian.
pub const P_LAPLACE_JACOBIAN_EPS: f64 = 1e-8;

pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Flux `a(x, y, z)`.
    fn alpha(&self, x: Point, y: f64, z: Vec2) -> Vec2;
    /// Reaction `b(x, y, z)`.
    fn beta(&self, x: Point, y: f64, z: Vec2) -> f64;
    /// Jacobian of the flux with respect to `z`, `J[i][j] = d a_i / d z_j`.
    fn j_alpha(&self, x: Point, z: Vec2) -> Mat2;
    /// Derivative of the reaction with respect to `y`.
    fn j_beta(&self, x: Point, y: f64) -> f64;
    /// True iff the flux is linear in `z` and the reaction does not depend on `z`.
    fn is_semilinear(&self) -> bool;
    fn name(&self) -> &str;
}

#[derive(Clone)]
pub enum Source {
    Zero,
    Constant(f64),
    /// `f(x, y) = x y (3 - x)(2 - y)`.
    Paper,
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl Source {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Constant(c) => *c,
            Source::Paper => paper_source(x),
            Source::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Constant(c) => write!(f, "Constant({c})"),
            Source::Paper => write!(f, "Paper"),
            Source::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The source used in all benchmark runs on `[0, 3] x [0, 2]`; it vanishes on the boundary.
pub fn paper_source(p: Point) -> f64 {
    let [x, y] = p;
    x * y * (3.0 - x) * (2.0 - y)
}

/// Coefficients plus right-hand side.
#[derive(Clone, Debug)]
pub struct ProblemDef {
    pub coefficients: Arc<dyn Coefficients>,
    pub source: Source,
}

impl ProblemDef {
    pub fn new(coefficients: Arc<dyn Coefficients>, source: Source) -> Self {
        ProblemDef {
            coefficients,
            source,
        }
    }

    pub fn with_source(&self, source: Source) -> Self {
        ProblemDef {
            coefficients: Arc::clone(&self.coefficients),
            source,
        }
    }

    pub fn alpha(&self, x: Point, y: f64, z: Vec2) -> Vec2 {
        self.coefficients.alpha(x, y, z)
    }

    pub fn beta(&self, x: Point, y: f64, z: Vec2) -> f64 {
        self.coefficients.beta(x, y, z)
    }

    pub fn j_alpha(&self, x: Point, z: Vec2) -> Mat2 {
        self.coefficients.j_alpha(x, z)
    }

    pub fn j_beta(&self, x: Point, y: f64) -> f64 {
        self.coefficients.j_beta(x, y)
    }

    pub fn source(&self, x: Point) -> f64 {
        self.source.eval(x)
    }

    pub fn is_semilinear(&self) -> bool {
        self.coefficients.is_semilinear()
    }

    pub fn name(&self) -> &str {
        self.coefficients.name()
    }
}

fn norm(z: Vec2) -> f64 {
    z[0].hypot(z[1])
}

/// `-Δu = f`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Laplace;

impl Coefficients for Laplace {
    fn alpha(&self, _x: Point, _y: f64, z: Vec2) -> Vec2 {
        z
    }
    fn beta(&self, _x: Point, _y: f64, _z: Vec2) -> f64 {
        0.0
    }
    fn j_alpha(&self, _x: Point, _z: Vec2) -> Mat2 {
        [[1.0, 0.0], [0.0, 1.0]]
    }
    fn j_beta(&self, _x: Point, _y: f64) -> f64 {
        0.0
    }
    fn is_semilinear(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "laplace"
    }
}

/// `-Δu + |u|u = f`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SemilinearReaction;

impl Coefficients for SemilinearReaction {
    fn alpha(&self, _x: Point, _y: f64, z: Vec2) -> Vec2 {
        z
    }
    fn beta(&self, _x: Point, y: f64, _z: Vec2) -> f64 {
        y.abs() * y
    }
    fn j_alpha(&self, _x: Point, _z: Vec2) -> Mat2 {
        [[1.0, 0.0], [0.0, 1.0]]
    }
    fn j_beta(&self, _x: Point, y: f64) -> f64 {
        2.0 * y.abs()
    }
    fn is_semilinear(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "semilinear"
    }
}

/// Flux `z + γ sin(|z|) (1, 1)`, no reaction.
#[derive(Debug, Clone, Copy)]
pub struct QuasilinearSin {
    pub gamma: f64,
}

impl Coefficients for QuasilinearSin {
    fn alpha(&self, _x: Point, _y: f64, z: Vec2) -> Vec2 {
        let s = self.gamma * norm(z).sin();
        [z[0] + s, z[1] + s]
    }
    fn beta(&self, _x: Point, _y: f64, _z: Vec2) -> f64 {
        0.0
    }
    fn j_alpha(&self, _x: Point, z: Vec2) -> Mat2 {
        let r = norm(z);
        if r == 0.0 {
            return [[1.0, 0.0], [0.0, 1.0]];
        }
        let c = self.gamma * r.cos() / r;
        [[1.0 + c * z[0], c * z[1]], [c * z[0], 1.0 + c * z[1]]]
    }
    fn j_beta(&self, _x: Point, _y: f64) -> f64 {
        0.0
    }
    fn is_semilinear(&self) -> bool {
        self.gamma == 0.0
    }
    fn name(&self) -> &str {
        "quasilinear-sin"
    }
}

/// Flux `|z|^(p-2) z`, reaction `y`.
#[derive(Debug, Clone, Copy)]
pub struct PLaplace {
    p: f64,
}

impl PLaplace {
    pub fn new(p: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Problem(format!("p-Laplace needs p >= 2, got {p}")));
        }
        Ok(PLaplace { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl Coefficients for PLaplace {
    fn alpha(&self, _x: Point, _y: f64, z: Vec2) -> Vec2 {
        if self.p == 2.0 {
            return z;
        }
        let w = norm(z).powf(self.p - 2.0);
        [w * z[0], w * z[1]]
    }
    fn beta(&self, _x: Point, y: f64, _z: Vec2) -> f64 {
        y
    }
    fn j_alpha(&self, _x: Point, z: Vec2) -> Mat2 {
        if self.p == 2.0 {
            return [[1.0, 0.0], [0.0, 1.0]];
        }
        let r = (z[0] * z[0] + z[1] * z[1] + P_LAPLACE_JACOBIAN_EPS * P_LAPLACE_JACOBIAN_EPS).sqrt();
        let a = r.powf(self.p - 2.0);
        let b = (self.p - 2.0) * r.powf(self.p - 4.0);
        [
            [a + b * z[0] * z[0], b * z[0] * z[1]],
            [b * z[1] * z[0], a + b * z[1] * z[1]],
        ]
    }
    fn j_beta(&self, _x: Point, _y: f64) -> f64 {
        1.0
    }
    fn is_semilinear(&self) -> bool {
        self.p == 2.0
    }
    fn name(&self) -> &str {
        "p-laplace"
    }
}

pub fn laplace() -> ProblemDef {
    ProblemDef::new(Arc::new(Laplace), Source::Paper)
}

pub fn semilinear_reaction() -> ProblemDef {
    ProblemDef::new(Arc::new(SemilinearReaction), Source::Paper)
}

pub fn quasilinear_sin(gamma: f64) -> ProblemDef {
    ProblemDef::new(Arc::new(QuasilinearSin { gamma }), Source::Paper)
}

pub fn p_laplace(p: f64) -> Result<ProblemDef> {
    Ok(ProblemDef::new(Arc::new(PLaplace::new(p)?), Source::Paper))
}

/// Problem names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Laplace,
    Semilinear,
    QuasilinearSin,
    PLaplace,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Laplace => "laplace",
            ProblemKind::Semilinear => "semilinear",
            ProblemKind::QuasilinearSin => "quasilinear-sin",
            ProblemKind::PLaplace => "p-laplace",
        }
    }

    pub fn build(self, gamma: f64, p: f64) -> Result<ProblemDef> {
        match self {
            ProblemKind::Laplace => Ok(laplace()),
            ProblemKind::Semilinear => Ok(semilinear_reaction()),
            ProblemKind::QuasilinearSin => Ok(quasilinear_sin(gamma)),
            ProblemKind::PLaplace => p_laplace(p),
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(ProblemKind::Laplace),
            "semilinear" => Ok(ProblemKind::Semilinear),
            "quasilinear-sin" => Ok(ProblemKind::QuasilinearSin),
            "p-laplace" => Ok(ProblemKind::PLaplace),
            other => Err(Error::Config(format!(
                "unknown problem '{other}' (expected laplace, semilinear, quasilinear-sin or p-laplace)"
            ))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
