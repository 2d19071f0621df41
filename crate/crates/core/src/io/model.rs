use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{Bundle, SolverConfig};
use crate::error::{Error, Result};
use crate::market::{check_non_redundancy, Claim, FiniteMarket, MarketView, MartingalePolytope};
use crate::risk::{Preference, RiskModel, Utility};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub market: MarketSpec,
    pub agents: Vec<AgentSpec>,
    pub bundle: Vec<ClaimSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub states: Vec<String>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub assets: Vec<AssetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Entropic,
    Utility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    Exponential,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub family: UtilityFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
    /// Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endowment: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_wealth: Option<f64>,
    /// 0-based asset indices; every asset when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpec {
    pub name: String,
    pub payoff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

/// A validated model ready for computation.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub market: FiniteMarket,
    pub agents: Vec<RiskModel>,
    pub agent_names: Vec<String>,
    pub bundle: Bundle,
    pub claim_names: Vec<String>,
    pub solver: SolverConfig,
    pub warnings: Vec<String>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ModelFile::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn into_model(&self) -> Result<LoadedModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let m = &self.market;
        if m.states.len() != m.probs.len() {
            return Err(Error::validation(
                "probs",
                format!("{} probabilities for {} states", m.probs.len(), m.states.len()),
            ));
        }
        let market = FiniteMarket::new(
            m.states.clone(),
            m.assets.iter().map(|a| a.name.clone()).collect(),
            m.probs.clone(),
            m.assets.iter().map(|a| a.increments.clone()).collect(),
        )
        .map_err(|e| match e {
            Error::InvalidProbabilities(msg) => Error::validation("probs", msg),
            Error::Dimension(msg) => Error::validation("market.assets", msg),
            other => other,
        })?;
        let n = market.num_states();
        let d = market.num_assets();

        if self.agents.is_empty() {
            return Err(Error::validation("agents", "at least one agent is required"));
        }
        let mut agents = Vec::with_capacity(self.agents.len());
        let mut covered = vec![false; d];
        for (i, a) in self.agents.iter().enumerate() {
            let field = |f: &str| format!("agents[{i}].{f}");
            let endowment = a.endowment.clone().unwrap_or_else(|| vec![0.0; n]);
            if endowment.len() != n {
                return Err(Error::validation(field("endowment"), format!("{} entries for {n} states", endowment.len())));
            }
            let view = match &a.view {
                Some(v) => {
                    if let Some(j) = v.iter().find(|&&j| j >= d) {
                        return Err(Error::validation(
                            "view",
                            format!("agent {i} references asset index {j}, market has {d} assets"),
                        ));
                    }
                    MarketView::new(v.clone())
                }
                None => market.full_view(),
            };
            for &j in view.indices() {
                covered[j] = true;
            }
            let preference = match a.kind {
                AgentKind::Entropic => {
                    if a.utility.is_some() || a.initial_wealth.is_some() {
                        return Err(Error::validation(field("kind"), "entropic agents take gamma only"));
                    }
                    let gamma = a.gamma.ok_or_else(|| Error::validation(field("gamma"), "missing"))?;
                    Preference::Entropic { gamma }
                }
                AgentKind::Utility => {
                    if a.gamma.is_some() {
                        return Err(Error::validation(field("gamma"), "utility agents specify gamma inside `utility`"));
                    }
                    let u = a
                        .utility
                        .as_ref()
                        .ok_or_else(|| Error::validation(field("utility"), "missing"))?;
                    let utility = match u.family {
                        UtilityFamily::Exponential => {
                            if u.exponent.is_some() || u.lower_bound.is_some() {
                                return Err(Error::validation(field("utility"), "exponential utility takes gamma only"));
                            }
                            Utility::Exponential {
                                gamma: u.gamma.ok_or_else(|| Error::validation(field("utility.gamma"), "missing"))?,
                            }
                        }
                        UtilityFamily::Power => {
                            if u.gamma.is_some() {
                                return Err(Error::validation(field("utility"), "power utility takes exponent and lower_bound"));
                            }
                            Utility::Power {
                                exponent: u
                                    .exponent
                                    .ok_or_else(|| Error::validation(field("utility.exponent"), "missing"))?,
                                lower_bound: u.lower_bound.unwrap_or(0.0),
                            }
                        }
                    };
                    Preference::Utility {
                        utility,
                        initial_wealth: a.initial_wealth.unwrap_or(0.0),
                    }
                }
            };
            let model = RiskModel {
                preference,
                endowment: Claim(endowment),
                view,
            };
            model.validate(&market).map_err(|e| match e {
                Error::Validation { field: f, message } => Error::validation(field(&f), message),
                other => other,
            })?;
            agents.push(model);
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(Error::validation("view", format!("asset {j} is not traded by any agent")));
        }

        let claims = self
            .bundle
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if c.payoff.len() != n {
                    Err(Error::validation(
                        format!("bundle[{k}].payoff"),
                        format!("{} entries for {n} states", c.payoff.len()),
                    ))
                } else {
                    Ok(Claim(c.payoff.clone()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let bundle = Bundle::new(claims)?;

        let mut solver = SolverConfig::default();
        if let Some(s) = &self.solver {
            if let Some(t) = &s.tolerances {
                if let Some(g) = t.gradient {
                    solver.gradient_tol = g;
                }
                if let Some(r) = t.residual {
                    solver.residual_tol = r;
                }
            }
            if let Some(it) = s.max_iterations {
                solver.max_iterations = it;
            }
            if let Some(b) = s.divergence_bound {
                solver.divergence_bound = b;
            }
            if !(solver.gradient_tol > 0.0 && solver.residual_tol > 0.0 && solver.divergence_bound > 0.0) {
                return Err(Error::validation("solver", "tolerances and divergence bound must be positive"));
            }
        }

        let mut warnings = Vec::new();
        let common = MartingalePolytope::intersection(agents.iter().map(|a| &a.view));
        let nr = check_non_redundancy(&market, &bundle, &common);
        if !nr.holds {
            let msg = format!(
                "non-redundancy fails for the bundle: delta = {:?} has a constant price",
                nr.witness.unwrap_or_default()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(LoadedModel {
            market,
            agents,
            agent_names: self.agents.iter().map(|a| a.name.clone()).collect(),
            bundle,
            claim_names: self.bundle.iter().map(|c| c.name.clone()).collect(),
            solver,
            warnings,
        })
    }
}

/// Reads, parses and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    ModelFile::read(path)?.into_model()
}
