//! Counted sparse direct solves and Newton's method for the subdomain problems.

use std::ops::AddAssign;
use std::sync::atomic::{AtomicUsize, Ordering};

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::fem::{assemble_jacobian, assemble_residual, Discretization, SparseSystem};
use crate::mesh::{InterfaceFunctional, InterfaceVector, Subdomain, SubdomainField};
use crate::problems::{ProblemDef, Source};

/// Accepted solve residual `‖Ax - b‖ <= LINEAR_TOL (1 + ‖b‖)`.
pub const LINEAR_TOL: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the algebraic residual.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Start Dirichlet solves from a supplied previous field.
    pub warm_start: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            residual_tol: 1e-10,
            max_iters: 50,
            warm_start: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config(format!(
                "newton residual tolerance must be positive, got {}",
                self.residual_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("newton max iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub newton_iters: usize,
    pub linear_solves: usize,
    pub final_residual: f64,
}

impl AddAssign for SolveStats {
    fn add_assign(&mut self, rhs: Self) {
        self.newton_iters += rhs.newton_iters;
        self.linear_solves += rhs.linear_solves;
        self.final_residual = self.final_residual.max(rhs.final_residual);
    }
}

/// Shared tally of linear systems solved.
#[derive(Debug, Default)]
pub struct SolveCounter(AtomicUsize);

impl SolveCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

/// Sparse LU factors of a square system, reusable across right-hand sides.
pub struct Factorization {
    matrix: SparseSystem,
    lu: Option<Lu<usize, f64>>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("dimension", &self.matrix.dimension)
            .field("nnz", &self.matrix.entries.len())
            .finish()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve_err(reason: impl Into<String>) -> Error {
    Error::LinearSolve {
        reason: reason.into(),
        context: None,
    }
}

impl Factorization {
    pub fn new(system: &SparseSystem) -> Result<Self> {
        let n = system.dimension;
        if system.entries.iter().any(|&(r, c, _)| r >= n || c >= n) {
            return Err(solve_err("entry index out of range"));
        }
        if system.entries.iter().any(|e| !e.2.is_finite()) {
            return Err(solve_err("matrix has non-finite entries"));
        }
        let mut matrix = system.clone();
        matrix.compress();
        if n == 0 {
            return Ok(Factorization { matrix, lu: None });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = matrix
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| solve_err(format!("could not build sparse matrix: {e:?}")))?;
        let lu = csc
            .sp_lu()
            .map_err(|e| solve_err(format!("factorization failed: {e:?}")))?;
        Ok(Factorization {
            matrix,
            lu: Some(lu),
        })
    }

    pub fn dimension(&self) -> usize {
        self.matrix.dimension
    }

    fn raw_solve(&self, lu: &Lu<usize, f64>, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }

    /// Solves `A x = rhs` and counts one linear solve.
    pub fn solve(&self, rhs: &[f64], counter: &SolveCounter) -> Result<Vec<f64>> {
        let n = self.dimension();
        if rhs.len() != n {
            return Err(Error::dimension("linear solve right-hand side", n, rhs.len()));
        }
        counter.bump();
        let Some(lu) = &self.lu else {
            return Ok(Vec::new());
        };
        let mut x = self.raw_solve(lu, rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(solve_err("singular system (non-finite solution)"));
        }
        let tol = LINEAR_TOL * (1.0 + norm2(rhs));
        for _ in 0..REFINEMENT_STEPS {
            let ax = self.matrix.matvec(&x);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if norm2(&res) <= tol {
                return Ok(x);
            }
            let dx = self.raw_solve(lu, &res);
            if dx.iter().any(|v| !v.is_finite()) {
                break;
            }
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        let ax = self.matrix.matvec(&x);
        let res = norm2(&rhs.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
        if res <= tol {
            Ok(x)
        } else {
            Err(solve_err(format!(
                "ill-conditioned system: residual {res:e} exceeds {tol:e}"
            )))
        }
    }
}

/// Factor and solve once, counting one linear solve.
pub fn linear_solve(system: &SparseSystem, rhs: &[f64], counter: &SolveCounter) -> Result<Vec<f64>> {
    Factorization::new(system)?.solve(rhs, counter)
}

/// Plain Newton iteration `x <- x - J(x)^{-1} r(x)` with one counted linear
/// solve per step. On failure the iterate with the smallest residual is
/// returned inside [`Error::NewtonFailed`].
pub(crate) fn newton<R, J>(
    mut x: Vec<f64>,
    mut residual: R,
    mut jacobian: J,
    cfg: &NewtonConfig,
    counter: &SolveCounter,
    context: &'static str,
    subdomain: Option<Subdomain>,
) -> Result<(Vec<f64>, SolveStats)>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<SparseSystem>,
{
    let mut stats = SolveStats::default();
    let mut r = residual(&x)?;
    let mut rnorm = norm2(&r);
    let mut best = (rnorm, x.clone());
    let fail = |stats: SolveStats, best: (f64, Vec<f64>)| Error::NewtonFailed {
        context,
        subdomain,
        stats: SolveStats {
            final_residual: best.0,
            ..stats
        },
        best: best.1,
    };
    loop {
        stats.final_residual = rnorm;
        if rnorm <= cfg.residual_tol {
            return Ok((x, stats));
        }
        if !rnorm.is_finite() || stats.newton_iters >= cfg.max_iters {
            return Err(fail(stats, best));
        }
        let jac = jacobian(&x)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let ctx = || match subdomain {
            Some(s) => format!("{context}, subdomain {s}, newton step {}", stats.newton_iters + 1),
            None => format!("{context}, newton step {}", stats.newton_iters + 1),
        };
        let step = Factorization::new(&jac)
            .and_then(|f| f.solve(&neg, counter))
            .map_err(|e| e.with_solve_context(ctx()));
        stats.linear_solves += 1;
        let step = match step {
            Ok(s) => s,
            Err(Error::LinearSolve { .. }) if stats.newton_iters > 0 => {
                // a singular Jacobian mid-iteration is a convergence failure
                stats.newton_iters += 1;
                return Err(fail(stats, best));
            }
            Err(e) => return Err(e),
        };
        for (xi, d) in x.iter_mut().zip(&step) {
            *xi += d;
        }
        stats.newton_iters += 1;
        r = residual(&x)?;
        rnorm = norm2(&r);
        if rnorm < best.0 {
            best = (rnorm, x.clone());
        }
    }
}

/// The discrete Dirichlet solution operator on one subdomain: interface
/// values are pinned to `eta` and Newton runs on the interior dofs.
pub fn solve_dirichlet(
    problem: &ProblemDef,
    disc: &Discretization,
    s: Subdomain,
    eta: &InterfaceVector,
    cfg: &NewtonConfig,
    guess: Option<&SubdomainField>,
    counter: &SolveCounter,
) -> Result<(SubdomainField, SolveStats)> {
    let decomp = &disc.decomp;
    let dofs = decomp.local_dofs(s);
    let n_int = decomp.interior_len(s);
    if eta.len() != decomp.interface_len() {
        return Err(Error::dimension("dirichlet data", decomp.interface_len(), eta.len()));
    }
    let interior = match guess {
        Some(g) if cfg.warm_start => {
            if g.len() != dofs.len() {
                return Err(Error::dimension("initial guess", dofs.len(), g.len()));
            }
            g[..n_int].to_vec()
        }
        _ => vec![0.0; n_int],
    };
    let full = |x: &[f64]| {
        let mut u = Vec::with_capacity(dofs.len());
        u.extend_from_slice(x);
        u.extend_from_slice(eta);
        u
    };
    if n_int == 0 {
        return Ok((SubdomainField(full(&[])), SolveStats::default()));
    }
    let result = newton(
        interior,
        |x| {
            let mut r = assemble_residual(problem, &disc.mesh, dofs, &disc.rule, &full(x))?;
            r.truncate(n_int);
            Ok(r)
        },
        |x| Ok(assemble_jacobian(problem, &disc.mesh, dofs, &disc.rule, &full(x))?.leading(n_int)),
        cfg,
        counter,
        "dirichlet solve",
        Some(s),
    );
    match result {
        Ok((x, stats)) => Ok((SubdomainField(full(&x)), stats)),
        Err(Error::NewtonFailed {
            context,
            subdomain,
            stats,
            best,
        }) => Err(Error::NewtonFailed {
            context,
            subdomain,
            stats,
            best: full(&best),
        }),
        Err(e) => Err(e),
    }
}

/// Nonlinear Neumann problem with zero source: find `w` on the interior and
/// interface dofs of `s` with `<A w, v> = <d, T v>` for all such `v`.
pub fn solve_nonlinear_neumann(
    problem: &ProblemDef,
    disc: &Discretization,
    s: Subdomain,
    flux: &InterfaceFunctional,
    cfg: &NewtonConfig,
    counter: &SolveCounter,
) -> Result<(SubdomainField, SolveStats)> {
    let decomp = &disc.decomp;
    let dofs = decomp.local_dofs(s);
    let n_int = decomp.interior_len(s);
    if flux.len() != decomp.interface_len() {
        return Err(Error::dimension("neumann data", decomp.interface_len(), flux.len()));
    }
    let homogeneous = problem.with_source(Source::Zero);
    let (w, stats) = newton(
        vec![0.0; dofs.len()],
        |w| {
            let mut r = assemble_residual(&homogeneous, &disc.mesh, dofs, &disc.rule, w)?;
            for (k, d) in flux.iter().enumerate() {
                r[n_int + k] -= d;
            }
            Ok(r)
        },
        |w| assemble_jacobian(&homogeneous, &disc.mesh, dofs, &disc.rule, w),
        cfg,
        counter,
        "neumann solve",
        Some(s),
    )?;
    Ok((SubdomainField(w), stats))
}

/// Runs `f` for both subdomains, on two threads when `parallel` is set.
pub(crate) fn per_subdomain<T, F>(parallel: bool, f: F) -> [T; 2]
where
    T: Send,
    F: Fn(Subdomain) -> T + Sync,
{
    if parallel {
        std::thread::scope(|scope| {
            let second = scope.spawn(|| f(Subdomain::Two));
            let first = f(Subdomain::One);
            [first, second.join().expect("subdomain worker panicked")]
        })
    } else {
        [f(Subdomain::One), f(Subdomain::Two)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_laplace_stiffness, h1_norm};
    use crate::mesh::DofSet;
    use crate::problems::{laplace, semilinear_reaction};

    #[test]
    fn identity_and_diagonal_systems() {
        let c = SolveCounter::new();
        let b = vec![1.5, -2.0, 3.25];
        assert_eq!(linear_solve(&SparseSystem::identity(3), &b, &c).unwrap(), b);
        let mut d = SparseSystem::new(2);
        d.push(0, 0, 2.0);
        d.push(1, 1, 4.0);
        assert_eq!(linear_solve(&d, &[2.0, 4.0], &c).unwrap(), vec![1.0, 1.0]);
        assert_eq!(c.get(), 2);
    }

    #[test]
    fn single_dof_laplace() {
        let m = crate::mesh::build_rect_mesh(1.0, 1.0, 0.5).unwrap();
        let k = assemble_laplace_stiffness(&m, &DofSet::free(&m)).unwrap();
        let x = linear_solve(&k, &[1.0], &SolveCounter::new()).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn singular_system_is_an_error() {
        let mut a = SparseSystem::new(2);
        a.push(0, 0, 1.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        a.push(1, 1, 1.0);
        let err = linear_solve(&a, &[1.0, 0.0], &SolveCounter::new()).unwrap_err();
        assert!(matches!(err, Error::LinearSolve { .. }), "{err}");
    }

    #[test]
    fn rhs_dimension_checked() {
        assert!(linear_solve(&SparseSystem::identity(2), &[1.0], &SolveCounter::new()).is_err());
    }

    fn small() -> Discretization {
        Discretization::vertical(3.0, 2.0, 0.25, 1.5).unwrap()
    }

    #[test]
    fn linear_dirichlet_takes_one_step() {
        let disc = small();
        let eta = InterfaceVector((0..disc.decomp.interface_len()).map(|k| k as f64 * 0.1).collect());
        let counter = SolveCounter::new();
        for s in Subdomain::BOTH {
            let (u, stats) =
                solve_dirichlet(&laplace(), &disc, s, &eta, &NewtonConfig::default(), None, &counter)
                    .unwrap();
            assert_eq!(stats.newton_iters, 1);
            assert_eq!(stats.linear_solves, stats.newton_iters);
            assert_eq!(disc.decomp.trace(s, &u).unwrap(), eta);
        }
        assert_eq!(counter.get(), 2);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let disc = small();
        let p = semilinear_reaction().with_source(Source::Zero);
        let eta = InterfaceVector::zeros(disc.decomp.interface_len());
        let (u, stats) = solve_dirichlet(
            &p,
            &disc,
            Subdomain::One,
            &eta,
            &NewtonConfig::default(),
            None,
            &SolveCounter::new(),
        )
        .unwrap();
        assert!(stats.newton_iters <= 1);
        assert!(u.iter().all(|&v| v == 0.0));

        let d = InterfaceFunctional::zeros(disc.decomp.interface_len());
        let (w, _) = solve_nonlinear_neumann(
            &p,
            &disc,
            Subdomain::Two,
            &d,
            &NewtonConfig::default(),
            &SolveCounter::new(),
        )
        .unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn semilinear_dirichlet_is_deterministic_and_converged() {
        let disc = small();
        let p = semilinear_reaction();
        let eta = InterfaceVector(vec![0.2; disc.decomp.interface_len()]);
        let cfg = NewtonConfig::default();
        let run = || {
            solve_dirichlet(&p, &disc, Subdomain::One, &eta, &cfg, None, &SolveCounter::new())
                .unwrap()
        };
        let (a, sa) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(sa.final_residual <= 1e-10);
        assert_eq!(sa.newton_iters, sa.linear_solves);

        // warm start from the converged field needs no further steps
        let (_, warm) = solve_dirichlet(
            &p,
            &disc,
            Subdomain::One,
            &eta,
            &cfg,
            Some(&a),
            &SolveCounter::new(),
        )
        .unwrap();
        assert_eq!(warm.newton_iters, 0);
    }

    #[test]
    fn newton_failure_reports_best_iterate() {
        let disc = small();
        let p = semilinear_reaction();
        let eta = InterfaceVector(vec![0.2; disc.decomp.interface_len()]);
        let cfg = NewtonConfig {
            residual_tol: 1e-300,
            max_iters: 2,
            warm_start: false,
        };
        let err = solve_dirichlet(&p, &disc, Subdomain::Two, &eta, &cfg, None, &SolveCounter::new())
            .unwrap_err();
        match err {
            Error::NewtonFailed { best, stats, .. } => {
                assert_eq!(best.len(), disc.decomp.local_dofs(Subdomain::Two).len());
                assert_eq!(stats.newton_iters, 2);
                let dofs = disc.decomp.local_dofs(Subdomain::Two);
                assert!(h1_norm(&disc.mesh, dofs, &best).unwrap() > 0.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let bad = NewtonConfig {
            residual_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NewtonConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
