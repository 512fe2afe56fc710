//! Shifted monotone iteration for `F_h[u] = λu + g`.
//!
//! The outer loop is `F_h[u_{n+1}] + σu_{n+1} = g + (σ+λ)u_n` from `u₁ = 0`.
//! Each shifted subproblem is proper (strictly increasing in `u`), so it has
//! a unique discrete solution. It is computed by policy iteration, i.e.
//! Newton's method on the piecewise-linear residual with a banded solve per
//! step, falling back to lexicographic nonlinear Gauss–Seidel when the
//! policies cycle. Gauss–Seidel can also be selected directly.

use serde::{Deserialize, Serialize};

use crate::discretize::{DiscreteProblem, GridFunction};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

/// Smallest `c` used in the default shift `2c + |λ|`.
const SHIFT_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Policy iteration with Gauss–Seidel fallback.
    #[default]
    Policy,
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Shift `σ`; `None` means `2c + |λ|`.
    pub sigma: Option<f64>,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Policy iterations, or Gauss–Seidel sweeps, per shifted solve.
    pub max_inner: usize,
    pub norm_cap: f64,
    pub inner: InnerSolver,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            sigma: None,
            inner_tol: 1e-11,
            outer_tol: 1e-9,
            max_outer: 20_000,
            max_inner: 200,
            norm_cap: 1e8,
            inner: InnerSolver::Policy,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.inner_tol, "inner_tol")?;
        positive(self.outer_tol, "outer_tol")?;
        positive(self.norm_cap, "norm_cap")?;
        if let Some(s) = self.sigma {
            positive(s, "sigma")?;
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::config("max_outer and max_inner must be at least 1"));
        }
        Ok(())
    }

    /// The shift used for `problem`, checked against `σ > c + |λ|`.
    pub fn shift_for(&self, problem: &DiscreteProblem) -> Result<f64> {
        let c = problem.zeroth_sup();
        let lam = problem.lambda().abs();
        match self.sigma {
            None => Ok(2.0 * c.max(SHIFT_FLOOR) + lam),
            Some(s) if s > c + lam => Ok(s),
            Some(s) => Err(Error::config(format!("sigma = {s} must exceed c + |λ| = {}", c + lam))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    #[serde(skip)]
    pub solution: GridFunction,
    pub outer_iterations: usize,
    /// `|F_h[u] − λu − g|∞` over interior nodes together with `|B_h[u]|∞`.
    pub final_residual: f64,
    /// Whether successive iterates were nondecreasing at every node.
    pub monotone_flag: bool,
    pub sigma: f64,
    /// Shifted solves that needed the Gauss–Seidel fallback.
    pub fallbacks: usize,
}

/// Sup norm of the residual of `F_h[u] + shift·u = f` (boundary rows: `B_h[u]`).
fn shifted_residual(problem: &DiscreteProblem, shift: f64, f: &[f64], u: &[f64]) -> f64 {
    let grid = problem.grid();
    (0..grid.len())
        .map(|i| {
            let v = problem.node_form(u, i).dot(u);
            if grid.is_interior(i) {
                v + shift * u[i] - f[i]
            } else {
                v
            }
        })
        .fold(0.0, |m, r: f64| m.max(r.abs()))
}

/// Requested tolerance, floored at the rounding level of a residual whose
/// rows have absolute sum `row` applied to values of size `unorm`.
fn tolerance(tol: f64, row: f64, unorm: f64, scale: f64) -> f64 {
    tol.max(2.0 * f64::EPSILON * (row * unorm + scale))
}

/// Looser floor for policies that cycle between near ties. A row has at
/// most 9 terms, hence the factor 16.
fn cycling_floor(row: f64, unorm: f64, scale: f64) -> f64 {
    16.0 * f64::EPSILON * (row * unorm + scale)
}

/// Policy iteration for `F_h[u] + shift·u = f`. `Ok(None)` means the
/// policies did not settle within `max_iter` steps.
pub(crate) fn policy_iteration(
    problem: &DiscreteProblem,
    shift: f64,
    f: &[f64],
    init: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Option<(Vec<f64>, usize)>> {
    let grid = problem.grid();
    let n = grid.len();
    let bw = problem.bandwidth();
    let mut rhs = f.to_vec();
    for i in grid.boundary_nodes() {
        rhs[i] = 0.0;
    }
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut u = init;
    let mut best = f64::INFINITY;
    let mut best_res = f64::INFINITY;
    let mut best_u = u.clone();
    let mut stalls = 0;
    for it in 0..max_iter {
        let mut m = BandMatrix::new(n, bw, bw);
        let mut res = 0.0f64;
        let mut row = 0.0f64;
        for i in 0..n {
            let form = problem.node_form(&u, i);
            let mut r = form.dot(&u) - rhs[i];
            let mut abs_sum = shift.abs();
            for (j, c) in form.iter() {
                m.add(i, j, c);
                abs_sum += c.abs();
            }
            row = row.max(abs_sum);
            if grid.is_interior(i) {
                m.add(i, i, shift);
                r += shift * u[i];
            }
            res = res.max(r.abs());
        }
        let unorm = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if res <= tolerance(tol, row, unorm, scale) {
            return Ok(Some((u, it)));
        }
        if res < best_res {
            best_res = res;
            best_u.clone_from(&u);
        }
        if res < 0.5 * best {
            best = res;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 8 {
                let ok = best_res <= tol.max(cycling_floor(row, unorm, scale));
                return Ok(ok.then_some((best_u, it)));
            }
        }
        let next = m.solve(&rhs)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        // A repeated policy reproduces the same iterate up to rounding.
        let step = next.iter().zip(&u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        u = next;
        if step <= 8.0 * f64::EPSILON * unorm.max(f64::MIN_POSITIVE) {
            return Ok(Some((u, it + 1)));
        }
    }
    Ok(None)
}

/// Scalar residual at node `i` as a function of `u[i]`, others fixed.
fn node_residual(problem: &DiscreteProblem, shift: f64, fi: f64, u: &mut [f64], i: usize, x: f64) -> (f64, f64) {
    u[i] = x;
    let form = problem.node_form(u, i);
    if problem.grid().is_interior(i) {
        (form.dot(u) + shift * x - fi, form.coefficient(i) + shift)
    } else {
        (form.dot(u), form.coefficient(i))
    }
}

/// Solves the nodewise equation at `i` by Newton, then bisection on a
/// geometrically widened bracket if Newton does not settle.
fn node_solve(problem: &DiscreteProblem, shift: f64, fi: f64, u: &mut [f64], i: usize) {
    let x0 = u[i];
    let mut x = x0;
    let eps = |x: f64, r0: f64| 1e-15 * (1.0 + x.abs() + r0.abs());
    for _ in 0..16 {
        let (r, d) = node_residual(problem, shift, fi, u, i, x);
        if r.abs() <= eps(x, fi) {
            u[i] = x;
            return;
        }
        if d <= 0.0 {
            break;
        }
        let next = x - r / d;
        if next == x {
            u[i] = x;
            return;
        }
        x = next;
    }
    let (r0, _) = node_residual(problem, shift, fi, u, i, x0);
    let mut width = r0.abs().max(1e-12) / shift.max(1e-12);
    let (mut lo, mut hi) = if r0 > 0.0 { (x0 - width, x0) } else { (x0, x0 + width) };
    for _ in 0..200 {
        if node_residual(problem, shift, fi, u, i, lo).0 <= 0.0 && node_residual(problem, shift, fi, u, i, hi).0 >= 0.0 {
            break;
        }
        width *= 2.0;
        if r0 > 0.0 {
            lo = x0 - width;
        } else {
            hi = x0 + width;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if node_residual(problem, shift, fi, u, i, mid).0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    u[i] = 0.5 * (lo + hi);
}

/// Lexicographic nonlinear Gauss–Seidel for `F_h[u] + shift·u = f`.
pub(crate) fn gauss_seidel(
    problem: &DiscreteProblem,
    shift: f64,
    f: &[f64],
    init: Vec<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    let n = problem.grid().len();
    let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let row = (0..n)
        .map(|i| problem.node_form(&init, i).iter().map(|(_, c)| c.abs()).sum::<f64>() + shift.abs())
        .fold(0.0, f64::max);
    let mut u = init;
    let mut res = f64::INFINITY;
    for _ in 0..max_sweeps {
        for i in 0..n {
            node_solve(problem, shift, f[i], &mut u, i);
        }
        res = shifted_residual(problem, shift, f, &u);
        let unorm = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if res <= tolerance(tol, row, unorm, scale) {
            return Ok(u);
        }
    }
    Err(Error::NonConvergence { what: "gauss-seidel", iterations: max_sweeps, residual: res })
}

fn shifted_with_init(
    problem: &DiscreteProblem,
    sigma: f64,
    rhs: &[f64],
    init: Vec<f64>,
    config: &SolveConfig,
) -> Result<(Vec<f64>, bool)> {
    if config.inner == InnerSolver::Policy {
        if let Some((u, _)) = policy_iteration(problem, sigma, rhs, init.clone(), config.inner_tol, config.max_inner)? {
            return Ok((u, false));
        }
    }
    // Gauss–Seidel converges slowly on fine grids; allow enough sweeps.
    let sweeps = config.max_inner.max(problem.grid().len().pow(2) * 40);
    Ok((gauss_seidel(problem, sigma, rhs, init, config.inner_tol, sweeps)?, true))
}

/// Unique solution of `F_h[u] + σu = rhs` with `B_h[u] = 0`.
pub fn solve_shifted(problem: &DiscreteProblem, sigma: f64, rhs: &GridFunction, config: &SolveConfig) -> Result<GridFunction> {
    config.validate()?;
    let c = problem.zeroth_sup();
    if sigma <= c {
        return Err(Error::config(format!("sigma = {sigma} must exceed c = {c}")));
    }
    let init = vec![0.0; problem.grid().len()];
    Ok(GridFunction::new(shifted_with_init(problem, sigma, rhs, init, config)?.0))
}

/// Solves `F_h[u] = λu + g`, `B_h[u] = 0` by the shifted monotone iteration
/// from `u₁ = 0`.
pub fn solve_neumann(problem: &DiscreteProblem, config: &SolveConfig) -> Result<SolveReport> {
    outer_iteration(problem, GridFunction::zeros(problem.grid().len()), config)
}

/// Same iteration for a sign-changing `g`, started from `−w` where `w`
/// solves the dual problem with right-hand side `|g|∞`. Intended for
/// `λ < min(λ̄, λ_under)`.
pub fn solve_sign_changing(problem: &DiscreteProblem, config: &SolveConfig) -> Result<SolveReport> {
    let n = problem.grid().len();
    let gmax = problem.rhs().sup_norm();
    let dual = problem.dual()?.with_rhs(GridFunction::constant(n, gmax));
    let w = solve_neumann(&dual, config)?;
    if w.status != SolveStatus::Converged {
        return Ok(SolveReport { solution: GridFunction::zeros(n), ..w });
    }
    outer_iteration(problem, w.solution.scaled(-1.0), config)
}

fn outer_iteration(problem: &DiscreteProblem, u0: GridFunction, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let sigma = config.shift_for(problem)?;
    let lambda = problem.lambda();
    let g = problem.rhs();
    let mut u = u0;
    let mut monotone = true;
    let mut fallbacks = 0;
    let mut prev_norm = u.sup_norm();
    let mut growth_run = 0;
    let report = |status, u: GridFunction, it, monotone, fallbacks| {
        let final_residual = problem.apply_discrete_operator(&u).sup_norm();
        SolveReport { status, solution: u, outer_iterations: it, final_residual, monotone_flag: monotone, sigma, fallbacks }
    };
    for it in 1..=config.max_outer {
        let rhs: Vec<f64> = (0..u.len()).map(|i| g[i] + (sigma + lambda) * u[i]).collect();
        let (next, fell_back) = shifted_with_init(problem, sigma, &rhs, u.to_vec(), config)?;
        fallbacks += fell_back as usize;
        let next = GridFunction::new(next);
        let scale = next.sup_norm().max(1.0);
        if next.iter().zip(u.iter()).any(|(a, b)| a < &(b - 1e-10 * scale)) {
            monotone = false;
        }
        let increment = next.distance(&u);
        let norm = next.sup_norm();
        u = next;
        if !norm.is_finite() || norm > config.norm_cap {
            return Ok(report(SolveStatus::Diverged, u, it, monotone, fallbacks));
        }
        // Geometric growth of |u_n|∞ over consecutive steps signals λ ≥ λ̄.
        if it > 20 && norm > prev_norm * (1.0 + 1e-3) && increment > config.outer_tol {
            growth_run += 1;
            if growth_run >= 5 && norm > 1e3 * (1.0 + g.sup_norm()) {
                return Ok(report(SolveStatus::Diverged, u, it, monotone, fallbacks));
            }
        } else {
            growth_run = 0;
        }
        prev_norm = norm;
        if increment <= config.outer_tol {
            let r = report(SolveStatus::Converged, u, it, monotone, fallbacks);
            if r.final_residual <= config.outer_tol {
                return Ok(r);
            }
            u = r.solution;
        }
    }
    Ok(report(SolveStatus::MaxIterations, u, config.max_outer, monotone, fallbacks))
}

/// Direct policy-iteration solve of `F_h[u] − λu = g` without the outer
/// loop. Returns `None` when the policies do not settle.
pub(crate) fn solve_direct(problem: &DiscreteProblem, init: Option<&GridFunction>, config: &SolveConfig) -> Result<Option<GridFunction>> {
    let n = problem.grid().len();
    let init = init.map_or_else(|| vec![0.0; n], |u| u.to_vec());
    match policy_iteration(problem, -problem.lambda(), problem.rhs(), init, config.inner_tol, config.max_inner) {
        Ok(Some((u, _))) => Ok(Some(GridFunction::new(u))),
        Ok(None) | Err(Error::Singular(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainGeometry, Grid};
    use crate::operators::{BoundaryLaw, CoefficientField, EllipticityBounds, LinearTerm, OperatorSpec, PucciTerm};

    fn cf(s: &str) -> CoefficientField {
        CoefficientField::parse(s).unwrap()
    }

    fn interval(n: usize) -> Grid {
        build_grid(DomainGeometry::Interval { x0: 0.0, x1: 1.0 }, n).unwrap()
    }

    fn pucci_const(c: f64) -> OperatorSpec {
        OperatorSpec::PucciPlus(PucciTerm::new(EllipticityBounds::new(1.0, 2.0).unwrap(), CoefficientField::constant(c)))
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = interval(21);
        let p = DiscreteProblem::homogeneous(g.clone(), pucci_const(1.0), BoundaryLaw::neumann()).unwrap();
        let u = solve_shifted(&p, 3.0, &GridFunction::zeros(g.len()), &SolveConfig::default()).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn constant_rhs_gives_constant() {
        let g = interval(21);
        let p = DiscreteProblem::homogeneous(g.clone(), pucci_const(1.5), BoundaryLaw::neumann()).unwrap();
        for inner in [InnerSolver::Policy, InnerSolver::GaussSeidel] {
            let cfg = SolveConfig { inner, ..SolveConfig::default() };
            let u = solve_shifted(&p, 2.5, &GridFunction::constant(g.len(), 2.0), &cfg).unwrap();
            for v in u.iter() {
                assert!((v - 0.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn manufactured_cosine() {
        let tau = std::f64::consts::TAU;
        let mut prev = f64::INFINITY;
        for n in [41, 81] {
            let g = interval(n);
            // −u'' + σu with σ = 1 playing the role of c ≡ 1.
            let op = OperatorSpec::Linear(LinearTerm::isotropic(cf("1"), cf("0")));
            let p = DiscreteProblem::homogeneous(g.clone(), op, BoundaryLaw::neumann()).unwrap();
            let rhs = GridFunction::from_fn(&g, |i| 1.0 + (tau * g.node(i)[0]).cos());
            let u = solve_shifted(&p, 1.0, &rhs, &SolveConfig::default()).unwrap();
            let err = (0..g.len())
                .map(|i| (u[i] - 1.0 - (tau * g.node(i)[0]).cos() / (1.0 + tau * tau)).abs())
                .fold(0.0, f64::max);
            assert!(err < 5e-3, "n={n}: {err}");
            assert!(err < prev / 3.0);
            prev = err;
        }
    }

    #[test]
    fn unit_solution_and_divergence() {
        let g = interval(31);
        let c0 = 2.0;
        let one = GridFunction::constant(g.len(), 1.0);
        let p = DiscreteProblem::new(g.clone(), pucci_const(c0), BoundaryLaw::neumann(), c0 - 1.0, one.clone()).unwrap();
        let rep = solve_neumann(&p, &SolveConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!(rep.monotone_flag);
        assert!(rep.final_residual <= 1e-9);
        for v in rep.solution.iter() {
            assert!((v - 1.0).abs() < 1e-8);
        }
        let bad = p.with_lambda(c0 + 1.0);
        assert_eq!(solve_neumann(&bad, &SolveConfig::default()).unwrap().status, SolveStatus::Diverged);
    }

    #[test]
    fn positive_increasing_iterates() {
        let g = interval(41);
        let op = OperatorSpec::PucciMinus(PucciTerm {
            bounds: EllipticityBounds::new(1.0, 3.0).unwrap(),
            drift: vec![cf("x-0.5")],
            zeroth: cf("1+sin(6*x)"),
        });
        let rhs = GridFunction::from_fn(&g, |i| g.node(i)[0]);
        let p = DiscreteProblem::new(g.clone(), op, BoundaryLaw::Robin { gamma: cf("0.5") }, -0.5, rhs).unwrap();
        let rep = solve_neumann(&p, &SolveConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!(rep.monotone_flag);
        assert!(rep.solution.min() > 0.0);
    }

    #[test]
    fn comparison_in_rhs() {
        let g = interval(31);
        let op = pucci_const(1.0);
        let g1 = GridFunction::from_fn(&g, |i| g.node(i)[0]);
        let g2 = GridFunction::from_fn(&g, |i| g.node(i)[0] + 0.1);
        let p = DiscreteProblem::new(g.clone(), op, BoundaryLaw::neumann(), 0.0, g1).unwrap();
        let u1 = solve_neumann(&p, &SolveConfig::default()).unwrap().solution;
        let u2 = solve_neumann(&p.with_rhs(g2), &SolveConfig::default()).unwrap().solution;
        assert!(u1.iter().zip(u2.iter()).all(|(a, b)| a <= &(b + 1e-10)));
    }

    #[test]
    fn sign_changing_rhs() {
        let g = interval(41);
        let tau = std::f64::consts::TAU;
        let rhs = GridFunction::from_fn(&g, |i| (tau * g.node(i)[0]).cos());
        let lin = OperatorSpec::Linear(LinearTerm::isotropic(cf("1"), cf("2")));
        let p = DiscreteProblem::new(g.clone(), lin, BoundaryLaw::neumann(), 0.5, rhs.clone()).unwrap();
        let rep = solve_sign_changing(&p, &SolveConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        for i in 0..g.len() {
            let exact = (tau * g.node(i)[0]).cos() / (1.5 + tau * tau);
            assert!((rep.solution[i] - exact).abs() < 2e-3);
        }
        let q = DiscreteProblem::new(g.clone(), pucci_const(2.0), BoundaryLaw::neumann(), 0.5, rhs).unwrap();
        let rep = solve_sign_changing(&q, &SolveConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!(rep.final_residual <= 1e-9);
    }

    #[test]
    fn sigma_invariant_enforced() {
        let g = interval(11);
        let p = DiscreteProblem::new(g.clone(), pucci_const(1.0), BoundaryLaw::neumann(), 2.0, GridFunction::zeros(11)).unwrap();
        let cfg = SolveConfig { sigma: Some(2.5), ..SolveConfig::default() };
        assert!(matches!(solve_neumann(&p, &cfg), Err(Error::Config(_))));
        assert!(SolveConfig { outer_tol: 0.0, ..SolveConfig::default() }.validate().is_err());
    }

    #[test]
    fn deterministic_reports() {
        let g = interval(21);
        let rhs = GridFunction::from_fn(&g, |i| 1.0 + g.node(i)[0]);
        let p = DiscreteProblem::new(g.clone(), pucci_const(1.0), BoundaryLaw::neumann(), 0.2, rhs).unwrap();
        let a = solve_neumann(&p, &SolveConfig::default()).unwrap();
        let b = solve_neumann(&p, &SolveConfig::default()).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.outer_iterations, b.outer_iterations);
    }
}
