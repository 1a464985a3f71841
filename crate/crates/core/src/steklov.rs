//! Discrete Steklov–Poincaré residual and the three interface preconditioners.
//!
//! `apply_s` evaluates the flux jump of the two Dirichlet solutions against
//! interface test functions extended by zero. The corrections returned by the
//! preconditioners are `s1 T w_1 + s2 T w_2`, where `w_i` solves a Neumann
//! problem driven by that functional: the Laplacian ([`LaplaceOperators`]),
//! the equation linearized at the current Dirichlet solutions, or the full
//! nonlinear equation with zero source.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_jacobian, assemble_laplace_stiffness, assemble_residual, Discretization, SparseSystem,
};
pub use crate::mesh::InterfaceFunctional;
use crate::mesh::{InterfaceVector, Subdomain, SubdomainField};
use crate::problems::ProblemDef;
use crate::solver::{
    per_subdomain, solve_dirichlet, solve_nonlinear_neumann, Factorization, NewtonConfig,
    SolveCounter, SolveStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    /// Nonlinear Neumann auxiliary problems.
    None,
    /// Laplace Neumann problems.
    Laplace,
    /// Neumann problems of the equation linearized at the current iterate.
    Linearized,
}

/// Output of [`apply_s`].
#[derive(Debug, Clone)]
pub struct SpEvaluation {
    pub residual: InterfaceFunctional,
    /// Dirichlet solutions `F_1 eta`, `F_2 eta`.
    pub fields: [SubdomainField; 2],
    pub stats: SolveStats,
}

fn check_interface(disc: &Discretization, len: usize, what: &'static str) -> Result<()> {
    let n = disc.decomp.interface_len();
    if len != n {
        return Err(Error::dimension(what, n, len));
    }
    Ok(())
}

/// Interface block of the local residual `<A u - f, R e_k>` on subdomain `s`.
pub fn interface_flux(
    problem: &ProblemDef,
    disc: &Discretization,
    s: Subdomain,
    u: &SubdomainField,
) -> Result<InterfaceFunctional> {
    let r = assemble_residual(problem, &disc.mesh, disc.decomp.local_dofs(s), &disc.rule, u)?;
    Ok(InterfaceFunctional(r[disc.decomp.interior_len(s)..].to_vec()))
}

/// `S eta = S_1 eta + S_2 eta` together with the Dirichlet solutions.
pub fn apply_s(
    problem: &ProblemDef,
    disc: &Discretization,
    eta: &InterfaceVector,
    cfg: &NewtonConfig,
    warm: [Option<&SubdomainField>; 2],
    counter: &SolveCounter,
    parallel: bool,
) -> Result<SpEvaluation> {
    check_interface(disc, eta.len(), "interface data")?;
    let [r1, r2] = per_subdomain(parallel, |s| {
        let (u, stats) = solve_dirichlet(problem, disc, s, eta, cfg, warm[s.index()], counter)?;
        let flux = interface_flux(problem, disc, s, &u)?;
        Ok::<_, Error>((u, flux, stats))
    });
    let (u1, d1, mut stats) = r1?;
    let (u2, d2, st2) = r2?;
    stats += st2;
    let residual = InterfaceFunctional(d1.iter().zip(d2.iter()).map(|(a, b)| a + b).collect());
    Ok(SpEvaluation {
        residual,
        fields: [u1, u2],
        stats,
    })
}

fn neumann_rhs(n_int: usize, d: &InterfaceFunctional) -> Vec<f64> {
    let mut rhs = vec![0.0; n_int];
    rhs.extend_from_slice(d);
    rhs
}

fn combine(disc: &Discretization, w: [&[f64]; 2], s1: f64, s2: f64) -> InterfaceVector {
    let t1 = &w[0][disc.decomp.interior_len(Subdomain::One)..];
    let t2 = &w[1][disc.decomp.interior_len(Subdomain::Two)..];
    InterfaceVector(t1.iter().zip(t2).map(|(a, b)| s1 * a + s2 * b).collect())
}

/// Factorized Laplace operators on both subdomains: the Neumann stiffness
/// (interior and interface dofs) for the preconditioner, and its interior
/// block for discrete harmonic extensions.
#[derive(Debug)]
pub struct LaplaceOperators {
    stiffness: [SparseSystem; 2],
    neumann: [Factorization; 2],
    dirichlet: [Factorization; 2],
    n_int: [usize; 2],
}

impl LaplaceOperators {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let build = |s: Subdomain| -> Result<(SparseSystem, Factorization, Factorization)> {
            let k = assemble_laplace_stiffness(&disc.mesh, disc.decomp.local_dofs(s))?;
            let neumann = Factorization::new(&k)?;
            let dirichlet = Factorization::new(&k.leading(disc.decomp.interior_len(s)))?;
            Ok((k, neumann, dirichlet))
        };
        let (k1, n1, d1) = build(Subdomain::One)?;
        let (k2, n2, d2) = build(Subdomain::Two)?;
        Ok(LaplaceOperators {
            stiffness: [k1, k2],
            neumann: [n1, n2],
            dirichlet: [d1, d2],
            n_int: Subdomain::BOTH.map(|s| disc.decomp.interior_len(s)),
        })
    }

    pub fn interface_len(&self) -> usize {
        self.stiffness[0].dimension - self.n_int[0]
    }

    pub fn stiffness(&self, s: Subdomain) -> &SparseSystem {
        &self.stiffness[s.index()]
    }

    /// Solves `∫ ∇w · ∇v = <d, T v>` on subdomain `s`; counts one linear solve.
    pub fn neumann_solve(
        &self,
        s: Subdomain,
        d: &InterfaceFunctional,
        counter: &SolveCounter,
    ) -> Result<SubdomainField> {
        if d.len() != self.interface_len() {
            return Err(Error::dimension("neumann data", self.interface_len(), d.len()));
        }
        let rhs = neumann_rhs(self.n_int[s.index()], d);
        Ok(SubdomainField(self.neumann[s.index()].solve(&rhs, counter)?))
    }

    /// `(s1 P_1^{-1} + s2 P_2^{-1}) d`; counts two linear solves.
    pub fn apply_precond_laplace(
        &self,
        d: &InterfaceFunctional,
        s1: f64,
        s2: f64,
        counter: &SolveCounter,
    ) -> Result<InterfaceVector> {
        let w1 = self.neumann_solve(Subdomain::One, d, counter)?;
        let w2 = self.neumann_solve(Subdomain::Two, d, counter)?;
        let t1 = &w1[self.n_int[0]..];
        let t2 = &w2[self.n_int[1]..];
        Ok(InterfaceVector(
            t1.iter().zip(t2).map(|(a, b)| s1 * a + s2 * b).collect(),
        ))
    }

    /// Discrete harmonic extension of `eta` into subdomain `s`.
    pub fn harmonic_extension(&self, s: Subdomain, eta: &InterfaceVector) -> Result<SubdomainField> {
        if eta.len() != self.interface_len() {
            return Err(Error::dimension("interface data", self.interface_len(), eta.len()));
        }
        let i = s.index();
        let n_int = self.n_int[i];
        let k = &self.stiffness[i];
        let mut rhs = vec![0.0; n_int];
        for (r, c, v) in k.block(0..n_int, n_int..k.dimension) {
            rhs[r] -= v * eta[c];
        }
        let mut u = self.dirichlet[i].solve(&rhs, &SolveCounter::new())?;
        u.extend_from_slice(eta);
        Ok(SubdomainField(u))
    }

    /// `P_s eta`, the Laplace Steklov–Poincaré operator of subdomain `s`.
    pub fn apply_sp(&self, s: Subdomain, eta: &InterfaceVector) -> Result<InterfaceFunctional> {
        let u = self.harmonic_extension(s, eta)?;
        let ku = self.stiffness[s.index()].matvec(&u);
        Ok(InterfaceFunctional(ku[self.n_int[s.index()]..].to_vec()))
    }

    /// `sqrt(<(P_1 + P_2) eta, eta>)`, the harmonic-extension energy norm
    /// used as the interface norm throughout.
    pub fn p_energy_norm(&self, eta: &InterfaceVector) -> Result<f64> {
        let mut energy = 0.0;
        for s in Subdomain::BOTH {
            let p = self.apply_sp(s, eta)?;
            energy += p.iter().zip(eta.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(energy.max(0.0).sqrt())
    }
}

/// `(s1 P_1(u)^{-1} + s2 P_2(u)^{-1}) d` with `P_i(u)` the Steklov–Poincaré
/// operator of the equation linearized at the Dirichlet solutions `fields`.
/// Counts two linear solves.
#[allow(clippy::too_many_arguments)]
pub fn apply_precond_linearized(
    problem: &ProblemDef,
    disc: &Discretization,
    d: &InterfaceFunctional,
    fields: [&SubdomainField; 2],
    s1: f64,
    s2: f64,
    counter: &SolveCounter,
    parallel: bool,
) -> Result<InterfaceVector> {
    check_interface(disc, d.len(), "neumann data")?;
    let [w1, w2] = per_subdomain(parallel, |s| {
        let dofs = disc.decomp.local_dofs(s);
        let u = fields[s.index()];
        if u.len() != dofs.len() {
            return Err(Error::dimension("linearization point", dofs.len(), u.len()));
        }
        let jac = assemble_jacobian(problem, &disc.mesh, dofs, &disc.rule, u)?;
        let rhs = neumann_rhs(disc.decomp.interior_len(s), d);
        Factorization::new(&jac)
            .and_then(|f| f.solve(&rhs, counter))
            .map_err(|e| e.with_solve_context(format!("linearized neumann, subdomain {s}")))
    });
    let (w1, w2) = (w1?, w2?);
    Ok(combine(disc, [&w1, &w2], s1, s2))
}

/// Both nonlinear Neumann solves, without merging failures.
pub(crate) fn nn_auxiliary_parts(
    problem: &ProblemDef,
    disc: &Discretization,
    d: &InterfaceFunctional,
    cfg: &NewtonConfig,
    counter: &SolveCounter,
    parallel: bool,
) -> [Result<(SubdomainField, SolveStats)>; 2] {
    per_subdomain(parallel, |s| solve_nonlinear_neumann(problem, disc, s, d, cfg, counter))
}

/// `(s1 S_1^{-1} + s2 S_2^{-1}) d` through the nonlinear Neumann problems
/// with zero source.
#[allow(clippy::too_many_arguments)]
pub fn apply_nn_auxiliary(
    problem: &ProblemDef,
    disc: &Discretization,
    d: &InterfaceFunctional,
    s1: f64,
    s2: f64,
    cfg: &NewtonConfig,
    counter: &SolveCounter,
    parallel: bool,
) -> Result<(InterfaceVector, SolveStats)> {
    check_interface(disc, d.len(), "neumann data")?;
    let [a, b] = nn_auxiliary_parts(problem, disc, d, cfg, counter, parallel);
    let (w1, mut stats) = a?;
    let (w2, st2) = b?;
    stats += st2;
    Ok((combine(disc, [&w1, &w2], s1, s2), stats))
}
