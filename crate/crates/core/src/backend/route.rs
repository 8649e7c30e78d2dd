use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::Backend;

/// Pipeline stage or agent role that can be assigned its own backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteKey {
    CodRank,
    MedAgentsGather,
    MedAgentsAnalyze,
    MedAgentsSummarize,
    MedAgentsConsult,
    MedAgentsDecide,
    ClinicDoctor,
    ClinicPatient,
    ClinicMeasurement,
    ClinicModerator,
}

impl RouteKey {
    pub const ALL: [RouteKey; 10] = [
        Self::CodRank,
        Self::MedAgentsGather,
        Self::MedAgentsAnalyze,
        Self::MedAgentsSummarize,
        Self::MedAgentsConsult,
        Self::MedAgentsDecide,
        Self::ClinicDoctor,
        Self::ClinicPatient,
        Self::ClinicMeasurement,
        Self::ClinicModerator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CodRank => "cod.rank",
            Self::MedAgentsGather => "medagents.gather",
            Self::MedAgentsAnalyze => "medagents.analyze",
            Self::MedAgentsSummarize => "medagents.summarize",
            Self::MedAgentsConsult => "medagents.consult",
            Self::MedAgentsDecide => "medagents.decide",
            Self::ClinicDoctor => "agentclinic.doctor",
            Self::ClinicPatient => "agentclinic.patient",
            Self::ClinicMeasurement => "agentclinic.measurement",
            Self::ClinicModerator => "agentclinic.moderator",
        }
    }
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown route key `{0}`")]
pub struct UnknownRouteKey(pub String);

impl FromStr for RouteKey {
    type Err = UnknownRouteKey;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownRouteKey(s.to_string()))
    }
}

impl Serialize for RouteKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RouteKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

fn default_route_name() -> String {
    "default".to_string()
}

/// Named assignment of backbones to stages and roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    #[serde(default = "default_route_name")]
    pub name: String,
    pub default_backend: String,
    #[serde(default)]
    pub overrides: BTreeMap<RouteKey, String>,
}

impl RouteConfig {
    /// Every stage on the same backbone.
    pub fn uniform(name: impl Into<String>, backend: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            default_backend: backend.into(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, key: RouteKey, backend: impl Into<String>) -> Self {
        self.overrides.insert(key, backend.into());
        self
    }

    /// `GPT4-EG`: everything on `strong` except expert gathering on `baseline`.
    pub fn gpt4_eg(baseline: &str, strong: &str) -> Self {
        Self::uniform("GPT4-EG", strong).with_override(RouteKey::MedAgentsGather, baseline)
    }

    /// `o1-doctor`: only the doctor agent on `strong`.
    pub fn o1_doctor(baseline: &str, strong: &str) -> Self {
        Self::uniform("o1-doctor", baseline).with_override(RouteKey::ClinicDoctor, strong)
    }

    /// `o1-patient`: only the patient agent on `strong`.
    pub fn o1_patient(baseline: &str, strong: &str) -> Self {
        Self::uniform("o1-patient", baseline).with_override(RouteKey::ClinicPatient, strong)
    }

    /// `o1-all`: every agent on `strong`.
    pub fn o1_all(strong: &str) -> Self {
        Self::uniform("o1-all", strong)
    }

    /// Backend name serving `key`: the override if present, else the default.
    pub fn backend_for(&self, key: RouteKey) -> &str {
        self.overrides
            .get(&key)
            .map(String::as_str)
            .unwrap_or(&self.default_backend)
    }

    /// Every backend name the config refers to, paired with the key that
    /// references it (`"default"` for the default backend).
    pub fn references(&self) -> impl Iterator<Item = (String, &str)> {
        std::iter::once(("default".to_string(), self.default_backend.as_str()))
            .chain(self.overrides.iter().map(|(k, v)| (k.to_string(), v.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("route key `{key}` refers to unregistered backend `{backend}`")]
    UnregisteredBackend { key: String, backend: String },
    #[error("backend `{0}` registered twice")]
    DuplicateBackend(String),
    #[error(transparent)]
    UnknownKey(#[from] UnknownRouteKey),
}

/// A route config bound to concrete backends.
#[derive(Clone)]
pub struct Router {
    config: RouteConfig,
    backends: BTreeMap<String, Arc<dyn Backend>>,
}

impl fmt::Debug for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Router")
            .field("config", &self.config)
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Router {
    pub fn new(
        config: RouteConfig,
        backends: impl IntoIterator<Item = Arc<dyn Backend>>,
    ) -> Result<Self, RouteError> {
        let mut registry = BTreeMap::new();
        for backend in backends {
            let name = backend.name().to_string();
            if registry.insert(name.clone(), backend).is_some() {
                return Err(RouteError::DuplicateBackend(name));
            }
        }
        for (key, backend) in config.references() {
            if !registry.contains_key(backend) {
                return Err(RouteError::UnregisteredBackend {
                    key,
                    backend: backend.to_string(),
                });
            }
        }
        Ok(Self {
            config,
            backends: registry,
        })
    }

    /// Router sending every stage to a single backend.
    pub fn single(backend: Arc<dyn Backend>) -> Self {
        let config = RouteConfig::uniform("default", backend.name());
        Self::new(config, [backend]).expect("single backend is always registered")
    }

    pub fn config(&self) -> &RouteConfig {
        &self.config
    }

    pub fn route(&self, key: RouteKey) -> Arc<dyn Backend> {
        self.backends[self.config.backend_for(key)].clone()
    }

    pub fn route_name(&self, key: &str) -> Result<Arc<dyn Backend>, RouteError> {
        Ok(self.route(key.parse()?))
    }
}
