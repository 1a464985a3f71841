//! Outer interface iteration `eta <- eta - P^{-1} S eta` for the three methods.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{assemble_jacobian, assemble_residual, h1_norm, Discretization};
use crate::mesh::{InterfaceVector, Subdomain, SubdomainField};
use crate::problems::ProblemDef;
use crate::solver::{newton, NewtonConfig, SolveCounter, SolveStats};
use crate::steklov::{apply_precond_linearized, apply_s, nn_auxiliary_parts, LaplaceOperators};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    /// Standard nonlinear Neumann–Neumann.
    Nn,
    /// Laplace preconditioner.
    Mnn1,
    /// Linearized preconditioner.
    Mnn2,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::Nn, MethodKind::Mnn1, MethodKind::Mnn2];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Nn => "nn",
            MethodKind::Mnn1 => "mnn1",
            MethodKind::Mnn2 => "mnn2",
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(MethodKind::Nn),
            "mnn1" => Ok(MethodKind::Mnn1),
            "mnn2" => Ok(MethodKind::Mnn2),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected nn, mnn1 or mnn2)"
            ))),
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub rel_error: f64,
    /// Linear solves spent up to and including the Dirichlet solves of this row.
    pub cumulative_linear_solves: usize,
    /// Newton steps spent since the previous row.
    pub newton_iters: usize,
    /// Energy norm of `eta^n - eta^{n-1}`; zero on the first row.
    pub update_norm: f64,
    /// An auxiliary solve leading to this row did not converge.
    pub inner_failure: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub method: MethodKind,
    pub rows: Vec<TraceRow>,
    /// Some inner solve failed during the run.
    pub failed: bool,
    /// The run stopped before `max_outer` because of a failure.
    pub aborted: bool,
    pub failure: Option<String>,
}

impl IterationTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_error).collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.rows.last().map(|r| r.rel_error)
    }

    pub fn total_linear_solves(&self) -> usize {
        self.rows.last().map_or(0, |r| r.cumulative_linear_solves)
    }

    fn flag(&mut self, message: String) {
        self.failed = true;
        if self.failure.is_none() {
            self.failure = Some(message);
        }
    }
}

/// Newton solve of the undecomposed problem, restricted to both subdomains.
pub fn monolithic_solve(
    problem: &ProblemDef,
    disc: &Discretization,
    cfg: &NewtonConfig,
) -> Result<([SubdomainField; 2], SolveStats)> {
    let dofs = disc.decomp.global_dofs();
    let (u, stats) = newton(
        vec![0.0; dofs.len()],
        |u| assemble_residual(problem, &disc.mesh, dofs, &disc.rule, u),
        |u| assemble_jacobian(problem, &disc.mesh, dofs, &disc.rule, u),
        cfg,
        &SolveCounter::new(),
        "monolithic solve",
        None,
    )?;
    Ok((disc.decomp.restrict_global(&u)?, stats))
}

fn subdomain_norm(disc: &Discretization, s: Subdomain, u: &[f64]) -> Result<f64> {
    h1_norm(&disc.mesh, disc.decomp.local_dofs(s), u)
}

/// `(‖u_1 - r_1‖ + ‖u_2 - r_2‖) / (‖r_1‖ + ‖r_2‖)` in the subdomain
/// `L2 + H1-seminorm` norms.
pub fn relative_error(
    disc: &Discretization,
    current: [&SubdomainField; 2],
    reference: [&SubdomainField; 2],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in Subdomain::BOTH {
        let (u, r) = (current[s.index()], reference[s.index()]);
        if u.len() != r.len() {
            return Err(Error::dimension("subdomain field", r.len(), u.len()));
        }
        let diff: Vec<f64> = u.iter().zip(r.iter()).map(|(a, b)| a - b).collect();
        num += subdomain_norm(disc, s, &diff)?;
        den += subdomain_norm(disc, s, r)?;
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(num / den)
}

/// Everything shared by runs on one problem and mesh: the factorized
/// Laplace operators and the monolithic reference solution.
#[derive(Debug)]
pub struct DdSetup {
    pub problem: ProblemDef,
    pub disc: Discretization,
    pub laplace: LaplaceOperators,
    pub reference: [SubdomainField; 2],
    pub newton: NewtonConfig,
    /// Solve the two subdomains on separate threads.
    pub parallel: bool,
}

impl DdSetup {
    pub fn new(problem: ProblemDef, disc: Discretization, newton: NewtonConfig) -> Result<Self> {
        newton.validate()?;
        let laplace = LaplaceOperators::new(&disc)?;
        let (reference, _) = monolithic_solve(&problem, &disc, &newton)?;
        Ok(DdSetup {
            problem,
            disc,
            laplace,
            reference,
            newton,
            parallel: false,
        })
    }

    /// Interface values of the monolithic solution.
    pub fn exact_interface(&self) -> InterfaceVector {
        self.disc
            .decomp
            .trace(Subdomain::One, &self.reference[0])
            .expect("reference matches decomposition")
    }

    pub fn zero_interface(&self) -> InterfaceVector {
        InterfaceVector::zeros(self.disc.decomp.interface_len())
    }

    pub fn relative_error(&self, u: [&SubdomainField; 2]) -> Result<f64> {
        relative_error(&self.disc, u, [&self.reference[0], &self.reference[1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationParams {
    pub s1: f64,
    pub s2: f64,
    pub max_outer: usize,
    /// Stop once the relative error drops below this.
    pub stop_tol: f64,
}

impl Default for IterationParams {
    fn default() -> Self {
        IterationParams {
            s1: 0.19,
            s2: 0.19,
            max_outer: 30,
            stop_tol: 1e-8,
        }
    }
}

impl IterationParams {
    pub fn with_step(s: f64) -> Self {
        IterationParams {
            s1: s,
            s2: s,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s1 > 0.0 && self.s2 > 0.0) || !(self.s1.is_finite() && self.s2.is_finite()) {
            return Err(Error::Config(format!(
                "step parameters must be positive (got s1 = {}, s2 = {})",
                self.s1, self.s2
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Config(format!(
                "stop tolerance must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

/// Runs the interface iteration from `eta0`. Row `n` holds the error of the
/// Dirichlet solutions `F_i eta^n`. Inner failures never abort silently: a
/// nonconverged nonlinear Neumann solve flags the row and continues with the
/// best Newton iterate; any other failure ends the trace with `aborted` set.
pub fn run(
    method: MethodKind,
    setup: &DdSetup,
    params: &IterationParams,
    eta0: &InterfaceVector,
) -> Result<IterationTrace> {
    params.validate()?;
    let disc = &setup.disc;
    if eta0.len() != disc.decomp.interface_len() {
        return Err(Error::dimension("initial interface data", disc.decomp.interface_len(), eta0.len()));
    }
    let cfg = &setup.newton;
    let counter = SolveCounter::new();
    let mut trace = IterationTrace {
        method,
        rows: Vec::with_capacity(params.max_outer + 1),
        failed: false,
        aborted: false,
        failure: None,
    };

    let mut eta = eta0.clone();
    let mut warm: Option<[SubdomainField; 2]> = None;
    let mut pending_newton = 0;
    let mut update_norm = 0.0;
    let mut row_failure = false;

    for n in 0..=params.max_outer {
        let guess = match &warm {
            Some([a, b]) => [Some(a), Some(b)],
            None => [None, None],
        };
        let eval = match apply_s(&setup.problem, disc, &eta, cfg, guess, &counter, setup.parallel) {
            Ok(ev) => ev,
            Err(e) => {
                trace.aborted = true;
                trace.flag(format!("iteration {n}: {e}"));
                break;
            }
        };
        pending_newton += eval.stats.newton_iters;
        let rel_error = match setup.relative_error([&eval.fields[0], &eval.fields[1]]) {
            Ok(e) => e,
            Err(e) => {
                trace.aborted = true;
                trace.flag(format!("iteration {n}: {e}"));
                break;
            }
        };
        trace.rows.push(TraceRow {
            n,
            rel_error,
            cumulative_linear_solves: counter.get(),
            newton_iters: pending_newton,
            update_norm,
            inner_failure: row_failure,
        });
        pending_newton = 0;
        row_failure = false;

        if rel_error < params.stop_tol || n == params.max_outer {
            break;
        }

        let correction = match method {
            MethodKind::Mnn1 => setup.laplace.apply_precond_laplace(
                &eval.residual,
                params.s1,
                params.s2,
                &counter,
            ),
            MethodKind::Mnn2 => apply_precond_linearized(
                &setup.problem,
                disc,
                &eval.residual,
                [&eval.fields[0], &eval.fields[1]],
                params.s1,
                params.s2,
                &counter,
                setup.parallel,
            ),
            MethodKind::Nn => {
                let parts = nn_auxiliary_parts(
                    &setup.problem,
                    disc,
                    &eval.residual,
                    cfg,
                    &counter,
                    setup.parallel,
                );
                let mut traces = Vec::with_capacity(2);
                let mut hard = None;
                for (s, part) in Subdomain::BOTH.into_iter().zip(parts) {
                    match part {
                        Ok((w, stats)) => {
                            pending_newton += stats.newton_iters;
                            traces.push(disc.decomp.trace(s, &w));
                        }
                        Err(Error::NewtonFailed { stats, best, .. }) => {
                            pending_newton += stats.newton_iters;
                            row_failure = true;
                            trace.flag(format!(
                                "iteration {n}: neumann solve in subdomain {s} did not converge \
                                 (residual {:e} after {} steps)",
                                stats.final_residual, stats.newton_iters
                            ));
                            traces.push(disc.decomp.trace(s, &SubdomainField(best)));
                        }
                        Err(e) => {
                            hard = Some(e);
                            break;
                        }
                    }
                }
                match hard {
                    Some(e) => Err(e),
                    None => {
                        let t1 = traces.remove(0)?;
                        let t2 = traces.remove(0)?;
                        Ok(InterfaceVector(
                            t1.iter()
                                .zip(t2.iter())
                                .map(|(a, b)| params.s1 * a + params.s2 * b)
                                .collect(),
                        ))
                    }
                }
            }
        };
        let correction = match correction {
            Ok(c) => c,
            Err(e) => {
                trace.aborted = true;
                trace.flag(format!("iteration {n}: {e}"));
                break;
            }
        };
        for (e, c) in eta.iter_mut().zip(correction.iter()) {
            *e -= c;
        }
        update_norm = setup.laplace.p_energy_norm(&correction)?;
        if cfg.warm_start {
            warm = Some(eval.fields);
        }
    }
    Ok(trace)
}
