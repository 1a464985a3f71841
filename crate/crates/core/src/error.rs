use thiserror::Error;

use crate::mesh::Subdomain;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid decomposition: {0}")]
    Decomposition(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate triangle with signed area {0:e}")]
    DegenerateTriangle(f64),

    #[error("invalid problem parameter: {0}")]
    Problem(String),

    #[error("linear solve failed{}: {reason}", context_suffix(.context))]
    LinearSolve {
        reason: String,
        context: Option<String>,
    },

    #[error(
        "newton did not converge on {}{} after {} iterations (residual {:e})",
        .context,
        subdomain_suffix(.subdomain),
        .stats.newton_iters,
        .stats.final_residual
    )]
    NewtonFailed {
        context: &'static str,
        subdomain: Option<Subdomain>,
        stats: crate::solver::SolveStats,
        best: Vec<f64>,
    },

    #[error("reference solution has zero norm")]
    ZeroReference,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

fn subdomain_suffix(subdomain: &Option<Subdomain>) -> String {
    match subdomain {
        Some(s) => format!(" in subdomain {}", s.id()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn dimension(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    /// Attaches a context string to a linear-solve error, leaving other variants untouched.
    pub(crate) fn with_solve_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::LinearSolve { reason, context } => Error::LinearSolve {
                reason,
                context: Some(match context {
                    Some(inner) => format!("{}; {}", ctx.into(), inner),
                    None => ctx.into(),
                }),
            },
            other => other,
        }
    }
}
