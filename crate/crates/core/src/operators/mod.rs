//! Symbolic operators `F(x, r, p, X)` and boundary laws `B(x, r, p)`.
//!
//! The Hessian argument `X` is always passed as a list of curvatures
//! (eigenvalues, or directional second differences in the discrete scheme).

pub mod expr;

use serde::{Deserialize, Serialize};

pub use expr::{CoefficientField, Point};

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Ellipticity constants `0 < a ≤ A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
}

impl EllipticityBounds {
    pub fn new(a: f64, big_a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= big_a && big_a.is_finite()) {
            return Err(Error::config(format!("ellipticity bounds need 0 < a <= A, got a={a}, A={big_a}")));
        }
        Ok(EllipticityBounds { a, big_a })
    }

    /// Weight given to a curvature `e` by `M⁺`.
    #[inline]
    pub fn plus_weight(&self, e: f64) -> f64 {
        if e > 0.0 {
            self.big_a
        } else {
            self.a
        }
    }

    /// Weight given to a curvature `e` by `M⁻`.
    #[inline]
    pub fn minus_weight(&self, e: f64) -> f64 {
        if e > 0.0 {
            self.a
        } else {
            self.big_a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Plus,
    Minus,
}

/// `M⁺(X) = A Σ_{e>0} e + a Σ_{e<0} e`, `M⁻(X) = a Σ_{e>0} e + A Σ_{e<0} e`.
pub fn pucci_extremal(bounds: EllipticityBounds, eigenvalues: &[f64], sign: Extremal) -> f64 {
    eigenvalues
        .iter()
        .map(|&e| match sign {
            Extremal::Plus => bounds.plus_weight(e) * e,
            Extremal::Minus => bounds.minus_weight(e) * e,
        })
        .sum()
}

/// `-tr(A(x) X) + b(x)·p + c(x) r` with a diagonal diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTerm {
    /// One entry (isotropic) or one entry per axis.
    pub diffusion: Vec<CoefficientField>,
    /// Empty means no drift.
    pub drift: Vec<CoefficientField>,
    pub zeroth: CoefficientField,
}

impl LinearTerm {
    pub fn isotropic(diffusion: CoefficientField, zeroth: CoefficientField) -> Self {
        LinearTerm { diffusion: vec![diffusion], drift: Vec::new(), zeroth }
    }

    fn evaluate(&self, x: Point, r: f64, p: &[f64], eigs: &[f64]) -> Result<f64> {
        let second = if self.diffusion.len() == 1 {
            self.diffusion[0].eval(x)? * eigs.iter().sum::<f64>()
        } else {
            if !eigs.is_empty() && self.diffusion.len() != eigs.len() {
                return Err(Error::config(format!(
                    "per-axis diffusion has {} entries but {} curvatures were given",
                    self.diffusion.len(),
                    eigs.len()
                )));
            }
            let mut s = 0.0;
            for (d, e) in self.diffusion.iter().zip(eigs) {
                s += d.eval(x)? * e;
            }
            s
        };
        Ok(-second + drift_dot(&self.drift, x, p)? + self.zeroth.eval(x)? * r)
    }
}

/// Drift and zeroth-order part of a Pucci operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PucciTerm {
    pub bounds: EllipticityBounds,
    pub drift: Vec<CoefficientField>,
    pub zeroth: CoefficientField,
}

impl PucciTerm {
    pub fn new(bounds: EllipticityBounds, zeroth: CoefficientField) -> Self {
        PucciTerm { bounds, drift: Vec::new(), zeroth }
    }
}

/// Order of the two optimizations of a finite Isaacs operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameOrder {
    /// `max` over groups of `min` within a group.
    SupInf,
    /// `min` over groups of `max` within a group.
    InfSup,
}

impl GameOrder {
    fn flip(self) -> Self {
        match self {
            GameOrder::SupInf => GameOrder::InfSup,
            GameOrder::InfSup => GameOrder::SupInf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// `-M⁺(X) + b·p + c r`
    PucciPlus(PucciTerm),
    /// `-M⁻(X) + b·p + c r`
    PucciMinus(PucciTerm),
    Linear(LinearTerm),
    /// Supremum over linear families.
    Bellman(Vec<LinearTerm>),
    Isaacs { order: GameOrder, groups: Vec<Vec<LinearTerm>> },
}

/// Convexity of `F` in `(r, p, X)`, which decides how the eigen probes
/// start their policy iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Linear,
    /// Pointwise minimum of linear maps.
    Concave,
    /// Pointwise maximum of linear maps.
    Convex,
    General,
}

impl OperatorSpec {
    pub fn evaluate(&self, x: Point, r: f64, p: &[f64], eigs: &[f64]) -> Result<f64> {
        evaluate_operator(self, x, r, p, eigs)
    }

    /// The operator `G(x,r,p,X) = -F(x,-r,-p,-X)`.
    pub fn dual(&self) -> OperatorSpec {
        dual_operator(self)
    }

    pub fn shape(&self) -> Shape {
        match self {
            OperatorSpec::Linear(_) => Shape::Linear,
            OperatorSpec::PucciPlus(t) | OperatorSpec::PucciMinus(t) if t.bounds.a == t.bounds.big_a => Shape::Linear,
            OperatorSpec::PucciPlus(_) => Shape::Concave,
            OperatorSpec::PucciMinus(_) => Shape::Convex,
            OperatorSpec::Bellman(f) if f.len() == 1 => Shape::Linear,
            OperatorSpec::Bellman(_) => Shape::Convex,
            OperatorSpec::Isaacs { order, groups } => {
                let singletons = groups.iter().all(|g| g.len() == 1);
                match (order, groups.len(), singletons) {
                    (_, 1, true) => Shape::Linear,
                    (GameOrder::SupInf, 1, _) | (GameOrder::InfSup, _, true) => Shape::Concave,
                    (GameOrder::InfSup, 1, _) | (GameOrder::SupInf, _, true) => Shape::Convex,
                    _ => Shape::General,
                }
            }
        }
    }

    /// All linear families, for coefficient checks. Pucci operators have none.
    pub fn linear_families(&self) -> Vec<&LinearTerm> {
        match self {
            OperatorSpec::PucciPlus(_) | OperatorSpec::PucciMinus(_) => Vec::new(),
            OperatorSpec::Linear(t) => vec![t],
            OperatorSpec::Bellman(f) => f.iter().collect(),
            OperatorSpec::Isaacs { groups, .. } => groups.iter().flatten().collect(),
        }
    }

    /// Checks the structure of the operator against a grid: non-empty
    /// families, consistent vector lengths, and `a ≤ A_{αβ}(x) ≤ A` on
    /// every node (only positivity when `bounds` is `None`).
    pub fn validate(&self, grid: &Grid, bounds: Option<EllipticityBounds>) -> Result<()> {
        let axes = grid.axes();
        let check_drift = |d: &[CoefficientField]| {
            if !d.is_empty() && d.len() != axes {
                Err(Error::config(format!("drift has {} components on a {axes}-axis grid", d.len())))
            } else {
                Ok(())
            }
        };
        match self {
            OperatorSpec::PucciPlus(t) | OperatorSpec::PucciMinus(t) => {
                EllipticityBounds::new(t.bounds.a, t.bounds.big_a)?;
                check_drift(&t.drift)?;
            }
            OperatorSpec::Bellman(f) if f.is_empty() => return Err(Error::config("Bellman operator has no families")),
            OperatorSpec::Isaacs { groups, .. } if groups.is_empty() || groups.iter().any(|g| g.is_empty()) => {
                return Err(Error::config("Isaacs operator has an empty group"))
            }
            _ => {}
        }
        for fam in self.linear_families() {
            check_drift(&fam.drift)?;
            let nd = fam.diffusion.len();
            let radial = matches!(grid.domain(), crate::geometry::DomainGeometry::RadialBall { .. });
            if nd == 0 || (nd != 1 && (nd != axes || radial)) {
                return Err(Error::config(format!("diffusion needs 1 or {axes} entries, got {nd}")));
            }
            for i in 0..grid.len() {
                for d in &fam.diffusion {
                    let v = d.eval(grid.point(i))?;
                    let ok = match bounds {
                        Some(b) => v >= b.a * (1.0 - 1e-12) && v <= b.big_a * (1.0 + 1e-12),
                        None => v > 0.0,
                    };
                    if !ok {
                        return Err(Error::config(format!(
                            "diffusion `{d}` = {v} at node {i} violates uniform ellipticity"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Structure constants `(b, c)`: sup-norms over grid nodes of the drift
    /// and zeroth-order coefficients across all families.
    pub fn structure_constants(&self, grid: &Grid) -> Result<(f64, f64)> {
        let mut b: f64 = 0.0;
        let mut c: f64 = 0.0;
        let mut visit = |drift: &[CoefficientField], zeroth: &CoefficientField| -> Result<()> {
            for i in 0..grid.len() {
                let x = grid.point(i);
                let mut s = 0.0;
                for d in drift {
                    s += d.eval(x)?.powi(2);
                }
                b = b.max(s.sqrt());
                c = c.max(zeroth.eval(x)?.abs());
            }
            Ok(())
        };
        match self {
            OperatorSpec::PucciPlus(t) | OperatorSpec::PucciMinus(t) => visit(&t.drift, &t.zeroth)?,
            _ => {
                for fam in self.linear_families() {
                    visit(&fam.drift, &fam.zeroth)?;
                }
            }
        }
        Ok((b, c))
    }

    /// `F(x, 1, 0, 0)`: the zeroth-order coefficient, optimized over families.
    pub fn at_constant_one(&self, x: Point) -> Result<f64> {
        self.evaluate(x, 1.0, &[], &[])
    }
}

fn drift_dot(drift: &[CoefficientField], x: Point, p: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (b, pk) in drift.iter().zip(p) {
        s += b.eval(x)? * pk;
    }
    Ok(s)
}

/// Evaluates `F(x, r, p, X)` with `X` given by its eigenvalues.
///
/// Bellman takes the maximum over families; Isaacs takes the maximum over
/// groups of the minimum within a group (or the reverse for
/// [`GameOrder::InfSup`]).
pub fn evaluate_operator(spec: &OperatorSpec, x: Point, r: f64, p: &[f64], eigs: &[f64]) -> Result<f64> {
    match spec {
        OperatorSpec::PucciPlus(t) => Ok(-pucci_extremal(t.bounds, eigs, Extremal::Plus)
            + drift_dot(&t.drift, x, p)?
            + t.zeroth.eval(x)? * r),
        OperatorSpec::PucciMinus(t) => Ok(-pucci_extremal(t.bounds, eigs, Extremal::Minus)
            + drift_dot(&t.drift, x, p)?
            + t.zeroth.eval(x)? * r),
        OperatorSpec::Linear(t) => t.evaluate(x, r, p, eigs),
        OperatorSpec::Bellman(fams) => {
            let mut best = f64::NEG_INFINITY;
            for f in fams {
                best = best.max(f.evaluate(x, r, p, eigs)?);
            }
            Ok(best)
        }
        OperatorSpec::Isaacs { order, groups } => {
            let (outer_init, inner_init) = match order {
                GameOrder::SupInf => (f64::NEG_INFINITY, f64::INFINITY),
                GameOrder::InfSup => (f64::INFINITY, f64::NEG_INFINITY),
            };
            let mut outer = outer_init;
            for g in groups {
                let mut inner = inner_init;
                for f in g {
                    let v = f.evaluate(x, r, p, eigs)?;
                    inner = match order {
                        GameOrder::SupInf => inner.min(v),
                        GameOrder::InfSup => inner.max(v),
                    };
                }
                outer = match order {
                    GameOrder::SupInf => outer.max(inner),
                    GameOrder::InfSup => outer.min(inner),
                };
            }
            Ok(outer)
        }
    }
}

/// Sign-flip dual `G(x,r,p,X) = -F(x,-r,-p,-X)`.
///
/// Pucci plus and minus swap, linear operators are self-dual, and the
/// sup/inf of Bellman and Isaacs operators swap. A dual that is again a
/// supremum over single families is returned as [`OperatorSpec::Bellman`],
/// so dualizing twice gives back the original spec.
pub fn dual_operator(spec: &OperatorSpec) -> OperatorSpec {
    match spec {
        OperatorSpec::PucciPlus(t) => OperatorSpec::PucciMinus(t.clone()),
        OperatorSpec::PucciMinus(t) => OperatorSpec::PucciPlus(t.clone()),
        OperatorSpec::Linear(t) => OperatorSpec::Linear(t.clone()),
        OperatorSpec::Bellman(fams) => OperatorSpec::Isaacs {
            order: GameOrder::InfSup,
            groups: fams.iter().map(|f| vec![f.clone()]).collect(),
        },
        OperatorSpec::Isaacs { order, groups } => {
            let order = order.flip();
            if order == GameOrder::SupInf && groups.iter().all(|g| g.len() == 1) {
                OperatorSpec::Bellman(groups.iter().map(|g| g[0].clone()).collect())
            } else {
                OperatorSpec::Isaacs { order, groups: groups.clone() }
            }
        }
    }
}

/// Boundary law `B(x, r, p)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryLaw {
    /// `γ(x) r + ⟨p, n(x)⟩` with `γ ≥ 0`; `γ ≡ 0` is the pure Neumann law.
    Robin { gamma: CoefficientField },
    /// `u = 0`.
    Dirichlet,
}

impl BoundaryLaw {
    pub fn neumann() -> Self {
        BoundaryLaw::Robin { gamma: CoefficientField::constant(0.0) }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryLaw::Dirichlet)
    }

    /// Checks `γ ≥ 0` on the boundary nodes.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if let BoundaryLaw::Robin { gamma } = self {
            for i in grid.boundary_nodes() {
                let g = gamma.eval(grid.point(i))?;
                if g < 0.0 {
                    return Err(Error::config(format!("Robin coefficient `{gamma}` = {g} < 0 at node {i}")));
                }
            }
        }
        Ok(())
    }

    /// `sup |γ|` over boundary nodes (0 for Dirichlet).
    pub fn gamma_sup(&self, grid: &Grid) -> Result<f64> {
        let mut s: f64 = 0.0;
        if let BoundaryLaw::Robin { gamma } = self {
            for i in grid.boundary_nodes() {
                s = s.max(gamma.eval(grid.point(i))?.abs());
            }
        }
        Ok(s)
    }

    pub fn is_neumann(&self) -> bool {
        matches!(self, BoundaryLaw::Robin { gamma } if gamma.as_constant() == Some(0.0))
    }
}

/// Robin: `γ(x) r + p·n`; Dirichlet: `r`.
pub fn evaluate_boundary(law: &BoundaryLaw, x: Point, r: f64, p_dot_n: f64) -> Result<f64> {
    match law {
        BoundaryLaw::Robin { gamma } => Ok(gamma.eval(x)? * r + p_dot_n),
        BoundaryLaw::Dirichlet => Ok(r),
    }
}
