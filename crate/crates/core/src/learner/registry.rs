use std::collections::BTreeMap;

use super::oracle::OracleLearner;
use super::remote::RemoteLearner;
use super::{Learner, LearnerConfig, LearnerError};

pub type LearnerFactory =
    Box<dyn Fn(&LearnerConfig) -> Result<Box<dyn Learner>, LearnerError> + Send + Sync>;

/// Learner implementations by `kind` name.
pub struct LearnerRegistry {
    factories: BTreeMap<String, LearnerFactory>,
}

impl LearnerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `remote`, `oracle-deterministic` and `oracle-stochastic`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("remote", |cfg| Ok(Box::new(RemoteLearner::from_config(cfg)?)));
        r.register("oracle-deterministic", |cfg| {
            Ok(Box::new(OracleLearner::from_config(cfg, true)?))
        });
        r.register("oracle-stochastic", |cfg| {
            Ok(Box::new(OracleLearner::from_config(cfg, false)?))
        });
        r
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&LearnerConfig) -> Result<Box<dyn Learner>, LearnerError> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_owned(), Box::new(factory));
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.factories.contains_key(kind)
    }

    pub fn build(&self, cfg: &LearnerConfig) -> Result<Box<dyn Learner>, LearnerError> {
        let factory = self.factories.get(&cfg.kind).ok_or_else(|| {
            LearnerError::Config(format!(
                "{}: unknown learner kind `{}` (known: {})",
                cfg.name,
                cfg.kind,
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(cfg)
    }
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
