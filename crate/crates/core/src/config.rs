//! Run configuration: type parameters, precision, budgets.

use crate::error::{CjError, Result};
use crate::generators::GenTag;
use crate::oracle::OracleSpec;
use crate::rat::{rat, rat_from_str, Rat};
use num_traits::One;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrecisionCfg {
    /// working mantissa bits for float estimation
    pub mantissa_bits: u32,
    /// starting grid size for norm maximization
    pub grid0: u32,
    /// refinement passes before giving up on grid convergence
    pub max_passes: u32,
    /// relative agreement between successive refinements
    pub rel_tol: f64,
}

impl Default for PrecisionCfg {
    fn default() -> Self {
        PrecisionCfg { mantissa_bits: 256, grid0: 1 << 10, max_passes: 6, rel_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetCfg {
    /// cap on witness denominators, in decimal digits
    pub denominator_digits: f64,
    /// cap for materializing exact integers, in bits
    pub materialize_bits: u64,
    /// cap on enumerated level-set components
    pub component_cap: u64,
    /// cap on |i| in orbit scans
    pub orbit_cap: u64,
    /// witness candidates examined per search
    pub max_candidates: usize,
}

impl Default for BudgetCfg {
    fn default() -> Self {
        BudgetCfg {
            denominator_digits: 1e3,
            materialize_bits: 4_000_000,
            component_cap: 1_000_000,
            orbit_cap: 10_000,
            max_candidates: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// target type: "III_lambda" | "III_inf" | "III_0" | "II_inf"
    pub kind: String,
    #[serde(default)]
    pub lambda: Option<String>,
    #[serde(default)]
    pub lambda1: Option<String>,
    #[serde(default)]
    pub lambda2: Option<String>,
    pub r: u32,
    pub max_stages: u32,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub precision: PrecisionCfg,
    #[serde(default)]
    pub budgets: BudgetCfg,
    /// lower bound for ∏(1−δ'_n), as "p/q"
    #[serde(default = "default_target_product")]
    pub target_product: String,
    /// added to the stage index when picking family slopes (families whose
    /// slopes grow with the index may start higher up the ramp)
    #[serde(default)]
    pub stage_index_offset: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_target_product() -> String {
    "9/10".into()
}

impl RunConfig {
    pub fn target_product_rat(&self) -> Result<Rat> {
        rat_from_str(&self.target_product)
            .filter(|t| t < &Rat::one())
            .ok_or_else(|| CjError::Config(format!("bad target_product '{}'", self.target_product)))
    }

    /// Validates type parameters and resolves the generator family.
    pub fn family(&self) -> Result<GenTag> {
        let get = |s: &Option<String>, name: &str| -> Result<Rat> {
            s.as_deref()
                .and_then(rat_from_str)
                .ok_or_else(|| CjError::Config(format!("{name} required for kind {}", self.kind)))
        };
        if self.r < 1 {
            return Err(CjError::Config("r must be at least 1".into()));
        }
        if self.max_stages < 1 {
            return Err(CjError::Config("max_stages must be at least 1".into()));
        }
        match self.kind.as_str() {
            "III_lambda" => {
                let lambda = get(&self.lambda, "lambda")?;
                if lambda <= Rat::one() {
                    return Err(CjError::Config("lambda must exceed 1".into()));
                }
                if crate::rat::sqrt_exact(&lambda).is_none() {
                    return Err(CjError::Config(
                        "lambda must be the square of a rational (pick e.g. 4, 9, 25/4); \
                         other targets are realized by squaring a rational root approximation"
                            .into(),
                    ));
                }
                Ok(GenTag::IiiLambda { lambda })
            }
            "III_inf" => {
                let l1 = self.lambda1.as_deref().and_then(rat_from_str).unwrap_or_else(|| rat(2, 1));
                let l2 = self.lambda2.as_deref().and_then(rat_from_str).unwrap_or_else(|| rat(3, 1));
                if !(Rat::one() < l1 && l1 < l2) {
                    return Err(CjError::Config("need 1 < lambda1 < lambda2".into()));
                }
                Ok(GenTag::IiiInfty { n: 0, lambda1: l1, lambda2: l2 })
            }
            "III_0" => Ok(GenTag::Iii0 { n: 0 }),
            "II_inf" => Ok(GenTag::IiInfty { n: 0 }),
            other => Err(CjError::Config(format!("unknown kind '{other}'"))),
        }
    }

    pub fn norm_ctx(&self, base: u32) -> crate::norms::NormCtx {
        crate::norms::NormCtx {
            prec: self.precision.mantissa_bits,
            base,
            grid0: self.precision.grid0,
            max_passes: self.precision.max_passes,
            rel_tol: self.precision.rel_tol,
        }
    }

    pub fn oracle_base(&self) -> u32 {
        match &self.oracle {
            OracleSpec::FactorialSeries { base } => *base,
            OracleSpec::PlantedQuotients { base, .. } => *base,
            _ => 10,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_validation() {
        let mut cfg = RunConfig {
            kind: "III_lambda".into(),
            lambda: Some("4".into()),
            lambda1: None,
            lambda2: None,
            r: 1,
            max_stages: 2,
            oracle: OracleSpec::FactorialSeries { base: 10 },
            precision: Default::default(),
            budgets: Default::default(),
            target_product: "9/10".into(),
            stage_index_offset: 0,
            seed: 0,
        };
        assert!(cfg.family().is_ok());
        cfg.lambda = Some("1".into());
        assert!(matches!(cfg.family(), Err(CjError::Config(_))));
        cfg.lambda = Some("2".into()); // no rational square root
        assert!(matches!(cfg.family(), Err(CjError::Config(_))));
        cfg.kind = "III_inf".into();
        assert!(cfg.family().is_ok());
        cfg.kind = "nope".into();
        assert!(cfg.family().is_err());
    }
}
