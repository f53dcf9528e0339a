use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Opaque participant identifier, unique within a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ParticipantId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Level of the hierarchy a participant sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Company,
    Station,
}

/// Role inside a vertical training group. Companies hold labels and act as
/// the active party; stations contribute feature blocks only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Active,
    Passive,
}

/// A simulated data owner: identity, hierarchy tier, vertical role, and the
/// dataset it commits to training.
#[derive(Debug, Clone)]
pub struct Participant {
    id: ParticipantId,
    tier: Tier,
    role: Role,
    dataset: TimeSeriesDataset,
    sample_count: usize,
}

impl Participant {
    pub fn new(
        id: ParticipantId,
        tier: Tier,
        role: Role,
        dataset: TimeSeriesDataset,
    ) -> Result<Self> {
        match role {
            Role::Active if !dataset.has_target() => {
                return Err(Error::Config(format!(
                    "active participant `{id}` must hold a target series"
                )))
            }
            Role::Passive if dataset.has_target() => {
                return Err(Error::Config(format!(
                    "passive participant `{id}` must not hold a target series"
                )))
            }
            _ => {}
        }
        let sample_count = dataset.rows();
        Ok(Self {
            id,
            tier,
            role,
            dataset,
            sample_count,
        })
    }

    pub fn id(&self) -> &ParticipantId {
        &self.id
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dataset(&self) -> &TimeSeriesDataset {
        &self.dataset
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Same participant with a different dataset (e.g. a training split).
    pub fn with_dataset(&self, dataset: TimeSeriesDataset) -> Result<Self> {
        Self::new(self.id.clone(), self.tier, self.role, dataset)
    }
}

/// Two-tier topology: companies at the top, each with the heating stations
/// it is responsible for, plus the reward pools of the company tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub companies: Vec<ParticipantId>,
    pub stations_by_company: BTreeMap<ParticipantId, Vec<ParticipantId>>,
    pub r_data: f64,
    pub r_model: f64,
}

impl HierarchyConfig {
    /// Structural checks that hold regardless of which tier runs.
    pub fn validate(&self) -> Result<()> {
        if self.r_data < 0.0 || self.r_model < 0.0 {
            return Err(Error::Config("reward pools must be non-negative".into()));
        }
        let companies: BTreeSet<&ParticipantId> = self.companies.iter().collect();
        if companies.len() != self.companies.len() {
            return Err(Error::Config("duplicate company id".into()));
        }
        let mut seen_stations = BTreeSet::new();
        for (company, stations) in &self.stations_by_company {
            if !companies.contains(company) {
                return Err(Error::Config(format!(
                    "stations listed under unknown company `{company}`"
                )));
            }
            for station in stations {
                if !seen_stations.insert(station) {
                    return Err(Error::Config(format!(
                        "station `{station}` belongs to more than one company"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The horizontal tier needs at least two companies to federate.
    pub fn validate_for_hfl(&self) -> Result<()> {
        self.validate()?;
        if self.companies.len() < 2 {
            return Err(Error::Config(format!(
                "horizontal run needs at least 2 companies, got {}",
                self.companies.len()
            )));
        }
        Ok(())
    }

    /// Every vertical group needs at least one station under its company.
    pub fn validate_for_vfl(&self) -> Result<()> {
        self.validate()?;
        for company in &self.companies {
            let n = self.stations_by_company.get(company).map_or(0, Vec::len);
            if n == 0 {
                return Err(Error::Config(format!(
                    "vertical run needs at least 1 station under company `{company}`"
                )));
            }
        }
        Ok(())
    }

    pub fn stations_of(&self, company: &ParticipantId) -> &[ParticipantId] {
        self.stations_by_company
            .get(company)
            .map_or(&[], Vec::as_slice)
    }
}
