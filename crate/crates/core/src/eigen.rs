//! Principal eigenvalues `λ̄`, `λ_under` and their eigenfunctions.
//!
//! `λ̄_h` is the supremum of the `λ` for which the discrete problem admits a
//! positive supersolution of `F_h[u] ≥ λu`, `B_h[u] ≥ 0`. A probe at `λ`
//! solves `F_h[u] = λu + 1`. A positive solution certifies `λ < λ̄_h`. A
//! solution with a non-positive entry, or a missing solution for a
//! concave operator, certifies `λ ≥ λ̄_h`.
//!
//! Every positive `u` with exact boundary relation also yields the two-sided
//! bound `min F_h[u]/u ≤ λ̄_h ≤ max F_h[u]/u` over interior nodes. This
//! follows from degenerate ellipticity and homogeneity; the upper half
//! tightens the bracket after each feasible probe.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discretize::{CertMode, DiscreteProblem, GridFunction};
use crate::error::{Error, Result};
use crate::operators::{BoundaryLaw, Shape};
use crate::solve::{solve_direct, solve_neumann, SolveConfig, SolveStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    /// Target width of the returned bracket.
    pub bisect_tol: f64,
    /// Cauchy tolerance of the normalized ladder iterates.
    pub eig_tol: f64,
    /// Optional initial bracket; each end is checked by a probe.
    pub lambda_lo: Option<f64>,
    pub lambda_hi: Option<f64>,
    /// First rung of the eigenfunction ladder sits this far below `lo`.
    pub ladder_step: f64,
    pub max_probes: usize,
    pub max_ladder: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            bisect_tol: 1e-7,
            eig_tol: 1e-9,
            lambda_lo: None,
            lambda_hi: None,
            ladder_step: 0.1,
            max_probes: 400,
            max_ladder: 80,
        }
    }
}

impl EigenConfig {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.bisect_tol, "bisect_tol"), (self.eig_tol, "eig_tol"), (self.ladder_step, "ladder_step")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.lambda_lo, self.lambda_hi) {
            if lo > hi {
                return Err(Error::config(format!("lambda_lo = {lo} exceeds lambda_hi = {hi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Bar,
    Under,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenEstimate {
    pub lambda: f64,
    #[serde(skip)]
    pub eigenfunction: GridFunction,
    /// `|F_h[φ] − λφ|∞` over interior nodes together with `|B_h[φ]|∞`.
    pub residual: f64,
    pub bracket: (f64, f64),
    pub probes: usize,
    /// Probes that neither converged nor diverged; counted as infeasible.
    pub indeterminate: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub enum ProbeOutcome {
    Feasible { solution: GridFunction, norm: f64 },
    Infeasible,
    Indeterminate,
}

impl ProbeOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ProbeOutcome::Feasible { .. })
    }
}

fn positive(problem: &DiscreteProblem, u: &[f64]) -> bool {
    let dirichlet = problem.boundary().is_dirichlet();
    let grid = problem.grid();
    (0..grid.len()).all(|i| (dirichlet && !grid.is_interior(i)) || u[i] > 0.0)
}

/// Probe problem: `g ≡ 1`.
fn probe_problem(problem: &DiscreteProblem) -> DiscreteProblem {
    problem.with_rhs(GridFunction::constant(problem.grid().len(), 1.0))
}

/// Feasibility of `λ`: whether `F_h[u] = λu + 1`, `B_h[u] = 0` has a
/// positive solution.
pub fn feasibility_probe(problem: &DiscreteProblem, lambda: f64, config: &SolveConfig) -> Result<ProbeOutcome> {
    Prober::new(problem, config.clone()).probe(lambda)
}

/// Stateful prober that warm-starts from earlier feasible solutions.
struct Prober {
    base: DiscreteProblem,
    config: SolveConfig,
    /// Feasible `(λ, u)` pairs in probe order.
    feasible: Vec<(f64, GridFunction)>,
    probes: usize,
    indeterminate: usize,
}

/// Continuation steps allowed per probe.
const MAX_CONTINUATION: usize = 2000;

impl Prober {
    fn new(problem: &DiscreteProblem, config: SolveConfig) -> Self {
        Prober { base: probe_problem(problem), config, feasible: Vec::new(), probes: 0, indeterminate: 0 }
    }

    fn feasible(u: GridFunction) -> ProbeOutcome {
        let norm = u.sup_norm();
        ProbeOutcome::Feasible { solution: u, norm }
    }

    /// Feasible solution with the largest `λ` below `lambda`.
    fn warm_below(&self, lambda: f64) -> Option<&(f64, GridFunction)> {
        self.feasible.iter().filter(|(l, _)| *l < lambda).max_by(|a, b| a.0.total_cmp(&b.0))
    }

    fn probe(&mut self, lambda: f64) -> Result<ProbeOutcome> {
        self.probes += 1;
        let out = match self.base.operator().shape() {
            Shape::Linear | Shape::Concave => self.probe_concave(lambda)?,
            Shape::Convex | Shape::General => self.probe_continuation(lambda)?,
        };
        match &out {
            ProbeOutcome::Feasible { solution, .. } => self.feasible.push((lambda, solution.clone())),
            ProbeOutcome::Indeterminate => self.indeterminate += 1,
            ProbeOutcome::Infeasible => {}
        }
        Ok(out)
    }

    /// For concave `F` every policy matrix dominates `F`, so below `λ̄`
    /// policy iteration settles on the unique, positive solution. A
    /// non-positive or missing solution therefore rules `λ` out.
    fn probe_concave(&self, lambda: f64) -> Result<ProbeOutcome> {
        let p = self.base.with_lambda(lambda);
        let warm = self.warm_below(lambda).map(|(_, u)| u);
        let mut u = solve_direct(&p, warm, &self.config)?;
        if u.is_none() && warm.is_some() {
            u = solve_direct(&p, None, &self.config)?;
        }
        Ok(match u {
            Some(u) if positive(&p, &u) => Self::feasible(u),
            _ => ProbeOutcome::Infeasible,
        })
    }

    /// Convex and game operators may have non-positive solutions below
    /// `λ̄`. Starting from a positive solution at `λ_w`, a Newton step to
    /// `λ < λ_w + 1/|u_w|∞` keeps a positive supersolution, so the walk
    /// stays feasible. It stops when it reaches `λ`, or when the ratio bound
    /// of the current iterate certifies `λ ≥ λ̄`.
    fn probe_continuation(&self, lambda: f64) -> Result<ProbeOutcome> {
        let p = self.base.with_lambda(lambda);
        let (mut lam, mut u) = match self.warm_below(lambda) {
            Some((l, u)) => (*l, u.clone()),
            None => {
                // Below every family's zeroth-order coefficient all policy
                // matrices are monotone and the solve is globally convergent.
                let l0 = lambda.min(self.base.zeroth_min() - 1.0);
                match solve_direct(&self.base.with_lambda(l0), None, &self.config)? {
                    Some(u) if positive(&p, &u) => (l0, u),
                    _ => return self.probe_fallback(lambda),
                }
            }
        };
        if lam == lambda {
            return Ok(Self::feasible(u));
        }
        // A direct jump usually succeeds well below λ̄.
        if let Some(v) = solve_direct(&p, Some(&u), &self.config)? {
            if positive(&p, &v) {
                return Ok(Self::feasible(v));
            }
        }
        for _ in 0..MAX_CONTINUATION {
            if ratio_bounds(&self.base, &u).1 <= lambda {
                return Ok(ProbeOutcome::Infeasible);
            }
            let target = lambda.min(lam + 0.9 / u.sup_norm());
            match solve_direct(&self.base.with_lambda(target), Some(&u), &self.config)? {
                Some(v) if positive(&p, &v) => {
                    lam = target;
                    u = v;
                    if lam >= lambda {
                        return Ok(Self::feasible(u));
                    }
                }
                _ => return self.probe_fallback(lambda),
            }
        }
        Ok(ProbeOutcome::Indeterminate)
    }

    /// The shifted monotone iteration from `u₁ = 0`.
    fn probe_fallback(&self, lambda: f64) -> Result<ProbeOutcome> {
        let p = self.base.with_lambda(lambda);
        let rep = solve_neumann(&p, &self.config)?;
        Ok(match rep.status {
            SolveStatus::Converged if positive(&p, &rep.solution) => Self::feasible(rep.solution),
            SolveStatus::Converged | SolveStatus::Diverged => ProbeOutcome::Infeasible,
            SolveStatus::MaxIterations => ProbeOutcome::Indeterminate,
        })
    }
}

/// Smallest and largest `F_h[u]_i / u_i` over interior nodes. For `u > 0`
/// satisfying `B_h[u] = 0` they bracket `λ̄_h`.
fn ratio_bounds(problem: &DiscreteProblem, u: &GridFunction) -> (f64, f64) {
    let homog = problem.with_lambda(0.0).with_rhs(GridFunction::zeros(u.len()));
    let f = homog.apply_discrete_operator(u);
    problem
        .grid()
        .interior_nodes()
        .map(|i| f[i] / u[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// Explicit bracket `[lo, hi]` for `λ̄` from the barriers `e^{∓k d(x)}`.
///
/// With `γ ≡ 0` both barriers are constant and the bracket is the range of
/// `F(x,1,0,0)` over the grid. Otherwise `lo` is the largest `λ` for which
/// `e^{−|γ|∞ d}` is a discrete supersolution and `hi` the smallest `λ` for
/// which `e^{k d}` is a discrete subsolution, with `k ≥ |γ|∞` enlarged until
/// the discrete boundary inequality holds.
pub fn constant_bounds(problem: &DiscreteProblem) -> Result<(f64, f64)> {
    let grid = problem.grid();
    let gamma = match problem.boundary() {
        BoundaryLaw::Dirichlet => return Err(Error::config("constant_bounds requires a Robin boundary law")),
        BoundaryLaw::Robin { .. } => problem.boundary().gamma_sup(grid)?,
    };
    if gamma == 0.0 {
        let (lo, hi) = (0..grid.len())
            .map(|i| problem.constant_response(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
        return Ok((lo, hi));
    }
    let homog = problem.with_lambda(0.0).with_rhs(GridFunction::zeros(grid.len()));
    let barrier = |k: f64| GridFunction::from_fn(grid, |i| (k * grid.distance(i)).exp());
    let v = barrier(-gamma);
    let lo = ratio_bounds(&homog, &v).0;
    debug_assert!(homog.certify_solution_class(&v, CertMode::Super, 1e-12).violations.iter().all(|(i, _)| grid.is_interior(*i)));
    let mut k = gamma;
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let w = barrier(k);
        let boundary_ok = grid.boundary_nodes().all(|b| homog.apply_discrete_boundary(&w, b).is_ok_and(|r| r <= 0.0));
        if boundary_ok {
            hi = ratio_bounds(&homog, &w).1;
            break;
        }
        k *= 1.05;
    }
    if !hi.is_finite() {
        return Err(Error::config(format!(
            "no exponential subsolution satisfies the discrete boundary law for |γ|∞ = {gamma}; refine the grid"
        )));
    }
    Ok((lo, hi))
}

/// Bracket state: `lo` probed feasible, `hi` certified `≥ λ̄`.
struct Bracket<'a> {
    problem: &'a DiscreteProblem,
    lo: f64,
    hi: f64,
    /// `(λ, 1/|u(λ)|∞)` for every feasible probe.
    feasible: Vec<(f64, f64)>,
}

impl Bracket<'_> {
    fn record(&mut self, lam: f64, out: &ProbeOutcome) {
        match out {
            ProbeOutcome::Feasible { solution, norm } => {
                self.lo = self.lo.max(lam);
                let upper = ratio_bounds(self.problem, solution).1;
                self.hi = self.hi.min(upper.max(self.lo));
                self.feasible.push((lam, 1.0 / norm));
            }
            _ => self.hi = self.hi.min(lam),
        }
    }
}

fn too_many(prober: &Prober, config: &EigenConfig, what: &'static str, width: f64) -> Result<()> {
    if prober.probes > config.max_probes {
        return Err(Error::NonConvergence { what, iterations: prober.probes, residual: width });
    }
    Ok(())
}

/// Certified bracket of width at most `bisect_tol` around the discrete `λ̄`.
fn bracket_eigenvalue(problem: &DiscreteProblem, initial: (f64, f64), prober: &mut Prober, config: &EigenConfig) -> Result<(f64, f64)> {
    let tol = config.bisect_tol;
    let (lo, hi) = initial;
    if hi - lo <= tol {
        return Ok((lo, hi));
    }
    let mut b = Bracket { problem, lo, hi: f64::INFINITY, feasible: Vec::new() };
    // Lower end: step down until a probe is feasible.
    let mut step = (hi - lo).max(1.0);
    let mut lam = lo;
    loop {
        let out = prober.probe(lam)?;
        if out.is_feasible() {
            b.lo = lam;
            b.record(lam, &out);
            break;
        }
        b.hi = b.hi.min(lam);
        lam -= step;
        step *= 2.0;
        too_many(prober, config, "eigenvalue bracket (lower end)", f64::NAN)?;
    }
    // Upper end: the ratio bound is certified; otherwise step up until infeasible.
    let mut step = (hi - lo).max(1.0);
    let mut lam = hi.min(b.hi);
    while lam < b.hi {
        let out = prober.probe(lam)?;
        b.record(lam, &out);
        if !out.is_feasible() {
            break;
        }
        lam = b.hi.min(lam + step);
        step *= 2.0;
        too_many(prober, config, "eigenvalue bracket (upper end)", f64::NAN)?;
    }
    let mut secant_failed = false;
    while b.hi - b.lo > tol {
        too_many(prober, config, "eigenvalue bisection", b.hi - b.lo)?;
        let estimate = if secant_failed { None } else { secant_root(&b.feasible) };
        match estimate.filter(|s| *s > b.lo && *s < b.hi) {
            Some(s) => {
                let eps = tol / 4.0;
                let before = b.hi - b.lo;
                for lam in [s - eps, s + eps] {
                    if lam > b.lo && lam < b.hi {
                        let out = prober.probe(lam)?;
                        b.record(lam, &out);
                    }
                }
                // Take a bisection step next when the estimate missed badly.
                secant_failed = b.hi - b.lo > 0.5 * before;
            }
            None => {
                let mid = 0.5 * (b.lo + b.hi);
                let out = prober.probe(mid)?;
                b.record(mid, &out);
                secant_failed = false;
            }
        }
    }
    Ok((b.lo, b.hi))
}

/// Zero of the line through the two feasible points closest to `λ̄` in the
/// data `(λ, 1/|u(λ)|∞)`.
fn secant_root(feasible: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = feasible.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let ((l1, f1), (l2, f2)) = (pts[n - 2], pts[n - 1]);
    if f1 <= f2 {
        return None;
    }
    Some(l2 + f2 * (l2 - l1) / (f1 - f2))
}

fn initial_bracket(problem: &DiscreteProblem, config: &EigenConfig) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = match problem.boundary() {
        BoundaryLaw::Robin { .. } => constant_bounds(problem)?,
        BoundaryLaw::Dirichlet => {
            // v = 1 inside, 0 on the boundary: min F_h[v] is a lower bound.
            let grid = problem.grid();
            let v = GridFunction::from_fn(grid, |i| if grid.is_interior(i) { 1.0 } else { 0.0 });
            let lo = ratio_bounds(problem, &v).0;
            (lo - 1e-3 * lo.abs().max(1.0), f64::INFINITY)
        }
    };
    if let Some(l) = config.lambda_lo {
        lo = l;
    }
    if let Some(h) = config.lambda_hi {
        hi = h;
    }
    if !hi.is_finite() {
        // Replaced by the ratio bound of the first feasible probe.
        hi = lo + 1.0;
    }
    Ok((lo, hi))
}

fn residual_of(problem: &DiscreteProblem, lambda: f64, phi: &GridFunction) -> f64 {
    problem.with_lambda(lambda).with_rhs(GridFunction::zeros(phi.len())).apply_discrete_operator(phi).sup_norm()
}

/// Normalized ladder `u_k/|u_k|∞` with `λ_k = lo − step·2^{−k}`, `g ≡ 1`,
/// until successive iterates agree to `eig_tol`.
fn eigenfunction_ladder(lo: f64, prober: &mut Prober, config: &EigenConfig) -> Result<GridFunction> {
    let mut prev: Option<GridFunction> = None;
    let mut last_diff = f64::NAN;
    for k in 0..config.max_ladder {
        let lam = lo - config.ladder_step * 0.5f64.powi(k as i32);
        let v = match prober.probe(lam)? {
            ProbeOutcome::Feasible { solution, norm } => solution.scaled(1.0 / norm),
            _ => {
                return Err(Error::NonConvergence { what: "eigenfunction ladder (infeasible rung)", iterations: k, residual: last_diff });
            }
        };
        if let Some(p) = &prev {
            last_diff = v.distance(p);
            if last_diff <= config.eig_tol {
                return Ok(v);
            }
        }
        prev = Some(v);
    }
    Err(Error::NonConvergence { what: "eigenfunction ladder", iterations: config.max_ladder, residual: last_diff })
}

fn estimate_bar(problem: &DiscreteProblem, config: &EigenConfig, solve: &SolveConfig) -> Result<EigenEstimate> {
    config.validate()?;
    solve.validate()?;
    let start = Instant::now();
    let mut prober = Prober::new(problem, solve.clone());
    let initial = initial_bracket(problem, config)?;
    let (lo, hi) = bracket_eigenvalue(problem, initial, &mut prober, config)?;
    let lambda = 0.5 * (lo + hi);
    let mut phi = eigenfunction_ladder(lo, &mut prober, config)?;
    if problem.boundary().is_dirichlet() {
        for i in problem.grid().boundary_nodes() {
            phi[i] = 0.0;
        }
    }
    Ok(EigenEstimate {
        lambda,
        residual: residual_of(problem, lambda, &phi),
        eigenfunction: phi,
        bracket: (lo, hi),
        probes: prober.probes,
        indeterminate: prober.indeterminate,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `λ̄` and `λ_under` with eigenfunctions `φ⁺ > 0` and `φ⁻ < 0`.
/// `λ_under` is `λ̄` of the dual operator and `φ⁻ = −φ⁺(dual)`.
pub fn principal_eigenvalues(problem: &DiscreteProblem, config: &EigenConfig, solve: &SolveConfig) -> Result<(EigenEstimate, EigenEstimate)> {
    Ok((
        principal_eigenfunction(problem, Which::Bar, config, solve)?,
        principal_eigenfunction(problem, Which::Under, config, solve)?,
    ))
}

pub fn principal_eigenfunction(problem: &DiscreteProblem, which: Which, config: &EigenConfig, solve: &SolveConfig) -> Result<EigenEstimate> {
    if problem.boundary().is_dirichlet() {
        return Err(Error::config("principal eigenvalues require a Robin boundary law; use dirichlet_eigenvalue"));
    }
    match which {
        Which::Bar => estimate_bar(problem, config, solve),
        Which::Under => {
            let mut est = estimate_bar(&problem.dual()?, config, solve)?;
            est.eigenfunction = est.eigenfunction.scaled(-1.0);
            est.residual = residual_of(problem, est.lambda, &est.eigenfunction);
            Ok(est)
        }
    }
}

/// `λ̄` of the same operator with the boundary law `u = 0`.
pub fn dirichlet_eigenvalue(problem: &DiscreteProblem, config: &EigenConfig, solve: &SolveConfig) -> Result<EigenEstimate> {
    estimate_bar(&problem.with_boundary(BoundaryLaw::Dirichlet)?, config, solve)
}

/// Right-hand side of the sufficient condition on `β₂` for `λ̄ > 0` with the
/// piecewise zeroth-order bound `c₀ ≥ β₁` on `ρ < |x| ≤ R − ε`, `c₀ ≥ −β₂` on
/// `|x| ≤ ρ`.
pub fn beta2_threshold(a: f64, big_a: f64, dim: usize, radius: f64, rho: f64, beta1: f64, k: f64) -> Result<f64> {
    let finite = [a, big_a, radius, rho, beta1, k].iter().all(|v| v.is_finite());
    if !finite || !(0.0 < rho && rho < radius) || !(0.0 < a && a <= big_a) || beta1 <= 0.0 || k <= 0.0 || dim == 0 {
        return Err(Error::config(format!(
            "beta2_threshold needs 0 < rho < R, 0 < a <= A, beta1 > 0, k > 0, N >= 1 (got a={a}, A={big_a}, N={dim}, R={radius}, rho={rho}, beta1={beta1}, k={k})"
        )));
    }
    let n = dim as f64;
    let num = k * (-k * rho).exp() * a * (k + (n - 1.0) / rho);
    let den = k * (radius - rho) / 4.0
        + k * (2.0 * n * big_a * radius - (n - 1.0) * a * (radius + rho)) / (beta1 * radius * (radius - rho))
        + 1.0
        - (-k * rho).exp();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainGeometry, Grid};
    use crate::operators::{CoefficientField, EllipticityBounds, LinearTerm, OperatorSpec, PucciTerm};

    fn cf(s: &str) -> CoefficientField {
        CoefficientField::parse(s).unwrap()
    }

    fn interval(n: usize) -> Grid {
        build_grid(DomainGeometry::Interval { x0: 0.0, x1: 1.0 }, n).unwrap()
    }

    fn pucci_plus(c: &str) -> OperatorSpec {
        OperatorSpec::PucciPlus(PucciTerm::new(EllipticityBounds::new(1.0, 2.0).unwrap(), cf(c)))
    }

    fn problem(g: Grid, op: OperatorSpec, law: BoundaryLaw) -> DiscreteProblem {
        DiscreteProblem::homogeneous(g, op, law).unwrap()
    }

    #[test]
    fn probe_examples() {
        let p = problem(interval(21), pucci_plus("3"), BoundaryLaw::neumann());
        match feasibility_probe(&p, 2.0, &SolveConfig::default()).unwrap() {
            ProbeOutcome::Feasible { solution, norm } => {
                assert!((norm - 1.0).abs() < 1e-10);
                assert!(solution.iter().all(|v| (v - 1.0).abs() < 1e-10));
            }
            other => panic!("{other:?}"),
        }
        assert!(!feasibility_probe(&p, 3.5, &SolveConfig::default()).unwrap().is_feasible());
        let q = problem(interval(21), pucci_plus("sin(3*x)"), BoundaryLaw::Robin { gamma: cf("1") });
        let (lo, _) = constant_bounds(&q).unwrap();
        assert!(feasibility_probe(&q, lo - 1.0, &SolveConfig::default()).unwrap().is_feasible());
    }

    #[test]
    fn constant_bounds_examples() {
        let lin = OperatorSpec::Linear(LinearTerm::isotropic(cf("1"), cf("2+sin(3.141592653589793*x)")));
        let p = problem(interval(201), lin, BoundaryLaw::neumann());
        let (lo, hi) = constant_bounds(&p).unwrap();
        assert_eq!(lo, 2.0);
        assert!((hi - 3.0).abs() < 1e-15);
        let c = problem(interval(11), pucci_plus("1.25"), BoundaryLaw::neumann());
        assert_eq!(constant_bounds(&c).unwrap(), (1.25, 1.25));
        assert!(constant_bounds(&c.with_boundary(BoundaryLaw::Dirichlet).unwrap()).is_err());
    }

    #[test]
    fn robin_bounds_bracket_eigenvalue() {
        let p = problem(interval(41), pucci_plus("x"), BoundaryLaw::Robin { gamma: cf("1") });
        let (lo, hi) = constant_bounds(&p).unwrap();
        let est = principal_eigenfunction(&p, Which::Bar, &EigenConfig::default(), &SolveConfig::default()).unwrap();
        assert!(lo <= est.bracket.0 && est.bracket.1 <= hi, "{lo} {hi} {:?}", est.bracket);
        assert!(feasibility_probe(&p, est.bracket.0, &SolveConfig::default()).unwrap().is_feasible());
        assert!(!feasibility_probe(&p, est.bracket.1, &SolveConfig::default()).unwrap().is_feasible());
    }

    #[test]
    fn constant_coefficient_eigenpair() {
        let p = problem(interval(51), pucci_plus("2"), BoundaryLaw::neumann());
        let (bar, under) = principal_eigenvalues(&p, &EigenConfig::default(), &SolveConfig::default()).unwrap();
        assert_eq!(bar.lambda, 2.0);
        assert_eq!(under.lambda, 2.0);
        assert!(bar.eigenfunction.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(under.eigenfunction.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn shift_moves_both_eigenvalues() {
        let cfg = EigenConfig::default();
        let s = SolveConfig::default();
        let a = problem(interval(41), pucci_plus("sin(3.141592653589793*x)"), BoundaryLaw::neumann());
        let b = problem(interval(41), pucci_plus("sin(3.141592653589793*x)+0.75"), BoundaryLaw::neumann());
        let (ab, au) = principal_eigenvalues(&a, &cfg, &s).unwrap();
        let (bb, bu) = principal_eigenvalues(&b, &cfg, &s).unwrap();
        assert!((bb.lambda - ab.lambda - 0.75).abs() < 2e-7);
        assert!((bu.lambda - au.lambda - 0.75).abs() < 2e-7);
        // The dual of PucciPlus dominates it, so λ_under sits above λ̄.
        assert!(au.lambda > ab.lambda + 1e-3);
        assert!(ab.bracket.1 - ab.bracket.0 <= cfg.bisect_tol);
        assert!(ab.eigenfunction.distance(&bb.eigenfunction) < 1e-6);
    }

    #[test]
    fn linear_is_self_dual() {
        let lin = OperatorSpec::Linear(LinearTerm { diffusion: vec![cf("1+x")], drift: vec![cf("x")], zeroth: cf("cos(4*x)") });
        let p = problem(interval(41), lin, BoundaryLaw::Robin { gamma: cf("0.5") });
        let (bar, under) = principal_eigenvalues(&p, &EigenConfig::default(), &SolveConfig::default()).unwrap();
        assert!((bar.lambda - under.lambda).abs() <= 2e-7);
        assert!(bar.eigenfunction.min() > 0.0);
        assert!(under.eigenfunction.max() < 0.0);
        assert!((bar.eigenfunction.sup_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_tridiagonal_formula() {
        let n = 41;
        let lap = OperatorSpec::Linear(LinearTerm::isotropic(cf("1"), cf("0")));
        let p = problem(interval(n), lap, BoundaryLaw::neumann());
        let est = dirichlet_eigenvalue(&p, &EigenConfig::default(), &SolveConfig::default()).unwrap();
        let h = 1.0 / (n - 1) as f64;
        let exact = 2.0 / (h * h) * (1.0 - (std::f64::consts::PI * h).cos());
        assert!((est.lambda - exact).abs() < 1e-6, "{} vs {exact}", est.lambda);
        assert_eq!(est.eigenfunction[0], 0.0);
        assert!(est.eigenfunction[n / 2] > 0.99);
    }

    #[test]
    fn convex_and_game_operators() {
        let l = |d: &str, c: &str| LinearTerm::isotropic(cf(d), cf(c));
        let s = SolveConfig::default();
        let cfg = EigenConfig::default();
        let minus = OperatorSpec::PucciMinus(PucciTerm::new(EllipticityBounds::new(1.0, 2.0).unwrap(), cf("sin(3.141592653589793*x)")));
        let bellman = OperatorSpec::Bellman(vec![l("1", "x"), l("2", "1-x")]);
        let isaacs = OperatorSpec::Isaacs {
            order: crate::operators::GameOrder::SupInf,
            groups: vec![vec![l("1", "x"), l("2", "0.5")], vec![l("1.5", "1-x")]],
        };
        for op in [minus, bellman, isaacs] {
            let p = problem(interval(31), op, BoundaryLaw::neumann());
            let (bar, under) = principal_eigenvalues(&p, &cfg, &s).unwrap();
            if p.operator().shape() == Shape::Convex {
                assert!(bar.lambda >= under.lambda - 2e-7, "{} {}", bar.lambda, under.lambda);
            }
            assert!(bar.eigenfunction.min() > 0.0);
            assert!(bar.residual < 1e-4, "{}", bar.residual);
        }
    }

    #[test]
    fn beta2_formula() {
        let v = beta2_threshold(1.0, 1.0, 2, 1.0, 0.5, 1.0, 2.0).unwrap();
        let e = (-1.0f64).exp();
        let expect = 2.0 * e * (2.0 + 2.0) / (2.0 * 0.125 + 2.0 * (4.0 - 1.5) / 0.5 + 1.0 - e);
        assert!((v - expect).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for rho in [0.9, 0.99, 0.999, 0.9999] {
            let t = beta2_threshold(1.0, 2.0, 3, 1.0, rho, 1.0, 1.0).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!(prev < 1e-3);
        assert!(beta2_threshold(1.0, 2.0, 2, 1.0, 0.5, 1e-9, 1.0).unwrap() < 1e-8);
        assert!(beta2_threshold(1.0, 2.0, 2, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(beta2_threshold(2.0, 1.0, 2, 1.0, 0.5, 1.0, 1.0).is_err());
        assert!(beta2_threshold(1.0, 2.0, 2, 1.0, 0.5, 1.0, 0.0).is_err());
    }
}
