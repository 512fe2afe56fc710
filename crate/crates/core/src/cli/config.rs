//! JSON problem configuration.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::discretize::{DiscreteProblem, GridFunction};
use crate::eigen::EigenConfig;
use crate::error::{Error, Result};
use crate::geometry::{build_grid, DomainGeometry, Grid};
use crate::operators::{BoundaryLaw, CoefficientField, EllipticityBounds, GameOrder, LinearTerm, OperatorSpec, PucciTerm};
use crate::solve::SolveConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub operator: OperatorConfig,
    pub boundary: BoundaryConfig,
    #[serde(default = "zero")]
    pub rhs: String,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
}

fn zero() -> String {
    "0".into()
}

fn one() -> Vec<String> {
    vec!["1".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Interval { x0: f64, x1: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    RadialBall { radius: f64, dim: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

/// One linear family `−tr(diag(diffusion) X) + drift·p + zeroth·r`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "one")]
    pub diffusion: Vec<String>,
    #[serde(default)]
    pub drift: Vec<String>,
    #[serde(default = "zero")]
    pub zeroth: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    PucciPlus {
        a: f64,
        #[serde(rename = "A")]
        big_a: f64,
        #[serde(default)]
        drift: Vec<String>,
        #[serde(default = "zero")]
        zeroth: String,
    },
    PucciMinus {
        a: f64,
        #[serde(rename = "A")]
        big_a: f64,
        #[serde(default)]
        drift: Vec<String>,
        #[serde(default = "zero")]
        zeroth: String,
    },
    Linear {
        #[serde(default = "one")]
        diffusion: Vec<String>,
        #[serde(default)]
        drift: Vec<String>,
        #[serde(default = "zero")]
        zeroth: String,
    },
    Bellman {
        families: Vec<FamilyConfig>,
    },
    Isaacs {
        order: GameOrder,
        groups: Vec<Vec<FamilyConfig>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Robin {
        #[serde(default = "zero")]
        gamma: String,
    },
    Dirichlet,
}

fn field(s: &str) -> Result<CoefficientField> {
    Ok(CoefficientField::parse(s)?)
}

fn fields(v: &[String]) -> Result<Vec<CoefficientField>> {
    v.iter().map(|s| field(s)).collect()
}

fn family(f: &FamilyConfig) -> Result<LinearTerm> {
    Ok(LinearTerm { diffusion: fields(&f.diffusion)?, drift: fields(&f.drift)?, zeroth: field(&f.zeroth)? })
}

fn pucci(a: f64, big_a: f64, drift: &[String], zeroth: &str) -> Result<PucciTerm> {
    Ok(PucciTerm { bounds: EllipticityBounds::new(a, big_a)?, drift: fields(drift)?, zeroth: field(zeroth)? })
}

/// A parsed configuration together with the SHA-256 of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProblemConfig,
    pub hash: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ProblemConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.solver.validate()?;
        config.eigen.validate()?;
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok(LoadedConfig { config, hash })
    }
}

impl ProblemConfig {
    pub fn domain(&self) -> DomainGeometry {
        match self.domain {
            DomainConfig::Interval { x0, x1 } => DomainGeometry::Interval { x0, x1 },
            DomainConfig::Rectangle { x0, x1, y0, y1 } => DomainGeometry::Rectangle { x0, x1, y0, y1 },
            DomainConfig::RadialBall { radius, dim } => DomainGeometry::RadialBall { radius, dim },
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.domain(), self.grid.n)
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        Ok(match &self.operator {
            OperatorConfig::PucciPlus { a, big_a, drift, zeroth } => OperatorSpec::PucciPlus(pucci(*a, *big_a, drift, zeroth)?),
            OperatorConfig::PucciMinus { a, big_a, drift, zeroth } => OperatorSpec::PucciMinus(pucci(*a, *big_a, drift, zeroth)?),
            OperatorConfig::Linear { diffusion, drift, zeroth } => OperatorSpec::Linear(LinearTerm {
                diffusion: fields(diffusion)?,
                drift: fields(drift)?,
                zeroth: field(zeroth)?,
            }),
            OperatorConfig::Bellman { families } => OperatorSpec::Bellman(families.iter().map(family).collect::<Result<_>>()?),
            OperatorConfig::Isaacs { order, groups } => OperatorSpec::Isaacs {
                order: *order,
                groups: groups.iter().map(|g| g.iter().map(family).collect()).collect::<Result<_>>()?,
            },
        })
    }

    pub fn boundary(&self) -> Result<BoundaryLaw> {
        Ok(match &self.boundary {
            BoundaryConfig::Robin { gamma } => BoundaryLaw::Robin { gamma: field(gamma)? },
            BoundaryConfig::Dirichlet => BoundaryLaw::Dirichlet,
        })
    }

    /// The discrete problem `F[u] = λu + g`.
    pub fn problem(&self, lambda: f64) -> Result<DiscreteProblem> {
        let grid = self.grid()?;
        let g = field(&self.rhs)?;
        let rhs = grid.interior_nodes().try_fold(vec![0.0; grid.len()], |mut v, i| -> Result<_> {
            v[i] = g.eval(grid.point(i))?;
            Ok(v)
        })?;
        DiscreteProblem::new(grid, self.operator()?, self.boundary()?, lambda, GridFunction::new(rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "domain": {"type": "interval", "x0": 0, "x1": 1},
        "grid": {"n": 21},
        "operator": {"type": "pucci_plus", "a": 1, "A": 2, "zeroth": "2"},
        "boundary": {"type": "robin", "gamma": "0"}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = LoadedConfig::parse(BASE).unwrap();
        assert_eq!(c.hash.len(), 64);
        let p = c.config.problem(0.0).unwrap();
        assert_eq!(p.grid().len(), 21);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BASE.replace("\"zeroth\": \"2\"", "\"zeroth\": \"2\", \"diffusivity\": \"1\"");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("diffusivity"), "{err}");
        let top = BASE.replacen('{', "{\"diffusivity\": 1,", 1);
        assert!(LoadedConfig::parse(&top).unwrap_err().to_string().contains("diffusivity"));
    }

    #[test]
    fn nested_families_and_game_order() {
        let text = r#"{
            "domain": {"type": "rectangle", "x0": 0, "x1": 1, "y0": 0, "y1": 2},
            "grid": {"n": 9},
            "operator": {"type": "isaacs", "order": "inf_sup", "groups": [[{"zeroth": "1"}], [{"diffusion": ["1", "2"], "drift": ["x", "0"]}]]},
            "boundary": {"type": "dirichlet"},
            "solver": {"outer_tol": 1e-8},
            "eigen": {"bisect_tol": 1e-6}
        }"#;
        let c = LoadedConfig::parse(text).unwrap().config;
        assert!(matches!(c.operator().unwrap(), OperatorSpec::Isaacs { order: GameOrder::InfSup, .. }));
        assert!(c.boundary().unwrap().is_dirichlet());
    }

    #[test]
    fn rejects_bad_tolerances_and_bounds() {
        let text = BASE.replace("\"grid\"", "\"solver\": {\"outer_tol\": -1}, \"grid\"");
        assert!(LoadedConfig::parse(&text).is_err());
        let text = BASE.replace("\"a\": 1", "\"a\": 3");
        assert!(LoadedConfig::parse(&text).unwrap().config.operator().is_err());
    }
}
