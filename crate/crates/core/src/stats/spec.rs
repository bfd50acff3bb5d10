// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

labeled_enum! {
    /// Response variable and the table column it is read from.
    Outcome {
        LogWager => "log_wager",
        Wager => "wager",
        RiskProfile => "risk_profile",
        WagerDelta => "wager_delta",
        RiskDelta => "risk_delta",
    }
}

impl Outcome {
    pub fn column(self) -> &'static str {
        match self {
            Outcome::LogWager | Outcome::Wager => "wager",
            other => other.as_str(),
        }
    }
}

labeled_enum! {
    Term {
        /// Indicators for the `condition` column, baseline omitted.
        Condition => "condition",
        /// The `projection` column, standardised over the analysis sample.
        StandardizedProjection => "standardized_projection",
        ProjectionDelta => "projection_delta",
    }
}

impl Term {
    pub fn column(self) -> &'static str {
        match self {
            Term::Condition => "condition",
            Term::StandardizedProjection => "projection",
            Term::ProjectionDelta => "projection_delta",
        }
    }
}

labeled_enum! {
    /// Categorical fixed effects; each label is also the column name.
    Factor {
        Model => "model",
        Temperature => "temperature",
        PromptVersion => "prompt_version",
        PairRole => "pair_role",
        Domain => "domain",
        OutcomeValence => "outcome_valence",
        AmountBucket => "amount_bucket",
        PromptSource => "prompt_source",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub outcome: Outcome,
    #[serde(default)]
    pub predictors: Vec<Term>,
    #[serde(default)]
    pub fixed_effects: Vec<Factor>,
    /// Omitted level per categorical column (`condition` or a factor label).
    /// Unlisted columns omit their lexicographically first level.
    #[serde(default)]
    pub baselines: BTreeMap<String, String>,
}

impl RegressionSpec {
    pub fn new(outcome: Outcome) -> Self {
        RegressionSpec {
            outcome,
            predictors: Vec::new(),
            fixed_effects: Vec::new(),
            baselines: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in self
            .predictors
            .iter()
            .map(|t| t.as_str())
            .chain(self.fixed_effects.iter().map(|f| f.as_str()))
        {
            if !seen.insert(name) {
                return Err(LabError::Invalid(format!("duplicate regression term {name:?}")));
            }
        }
        let categorical: BTreeSet<&str> = self
            .predictors
            .iter()
            .filter(|t| **t == Term::Condition)
            .map(|t| t.column())
            .chain(self.fixed_effects.iter().map(|f| f.as_str()))
            .collect();
        for key in self.baselines.keys() {
            if !categorical.contains(key.as_str()) {
                return Err(LabError::Invalid(format!(
                    "baseline given for {key:?}, which is not a categorical term"
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: RegressionSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}
