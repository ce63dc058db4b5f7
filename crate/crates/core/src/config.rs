//! File-backed run configuration. Values set on the command line win over environment
//! variables, which win over the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, LlmError};
use crate::llmclient::{HttpClient, HttpConfig, LlmClient, MockClient, ScoringMode, ENV_BASE_URL};
use crate::prefs::{default_personas, default_tasks, PersonaSpec, TaskPack};
use crate::refdpo::ReflectionConfig;
use crate::student::HeuristicStudentClient;
use crate::world::{default_catalog, load_catalog, load_custom_catalog, Catalog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Heuristic,
    Http,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Backend::Mock),
            "heuristic" => Ok(Backend::Heuristic),
            "http" => Ok(Backend::Http),
            _ => Err(format!("unknown backend {s}; expected mock, heuristic or http")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Option<Backend>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub max_retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub timeout_s: Option<u64>,
    pub max_concurrency: Option<usize>,
    pub supports_grammar: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub mode: Option<String>,
    pub retries: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub history_budget: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub personas: Option<Vec<String>>,
    pub tasks: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub inclusion_probability: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectionSection {
    pub epsilon1: Option<f64>,
    pub epsilon2: Option<f64>,
    pub skip_equal: Option<bool>,
    pub scoring: Option<ScoringMode>,
    pub simulated_reply: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub personas_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub persona_mode: Option<String>,
    pub llm: LlmSection,
    pub policy: PolicySection,
    pub suite: SuiteSection,
    pub reflection: ReflectionSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolved(base)
    }

    /// Resolves relative paths against `base` and checks that referenced files exist.
    fn resolved(mut self, base: &Path) -> Result<Self, HarnessError> {
        for p in [&mut self.catalog, &mut self.tasks, &mut self.personas_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(HarnessError::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(self)
    }

    pub fn load_catalog(&self) -> Result<Catalog, HarnessError> {
        match &self.catalog {
            None => Ok(default_catalog().clone()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                load_catalog(&text).or_else(|strict| match load_custom_catalog(&text) {
                    Ok(c) => {
                        eprintln!("warning: custom catalog accepted without size checks: {strict}");
                        Ok(c)
                    }
                    Err(e) => Err(HarnessError::World(e)),
                })
            }
        }
    }

    pub fn load_tasks(&self) -> Result<TaskPack, HarnessError> {
        match &self.tasks {
            None => Ok(default_tasks().clone()),
            Some(p) => Ok(TaskPack::from_json(&std::fs::read_to_string(p)?)?),
        }
    }

    pub fn load_personas(&self) -> Result<Vec<PersonaSpec>, HarnessError> {
        let Some(dir) = &self.personas_dir else { return Ok(default_personas().to_vec()) };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.push(PersonaSpec::from_json(&std::fs::read_to_string(&f)?)?);
        }
        Ok(out)
    }

    pub fn reflection(&self, eps1: Option<f64>, eps2: Option<f64>) -> Result<ReflectionConfig, HarnessError> {
        let r = &self.reflection;
        let epsilon1 = eps1.or(r.epsilon1).ok_or_else(|| HarnessError::Config("epsilon1 is required (--eps1 or [reflection] epsilon1)".into()))?;
        let epsilon2 = eps2.or(r.epsilon2).ok_or_else(|| HarnessError::Config("epsilon2 is required (--eps2 or [reflection] epsilon2)".into()))?;
        let d = ReflectionConfig::default();
        let cfg = ReflectionConfig {
            epsilon1,
            epsilon2,
            skip_equal: r.skip_equal.unwrap_or(d.skip_equal),
            scoring: r.scoring.unwrap_or(d.scoring),
            simulated_reply: r.simulated_reply.unwrap_or(d.simulated_reply),
            retries: d.retries,
        };
        cfg.validate().map_err(HarnessError::Config)?;
        Ok(cfg)
    }

    /// Chooses the backend: flag, then file, then http when an endpoint is configured, else
    /// the offline heuristic student.
    pub fn backend(&self, flag: Option<Backend>) -> Backend {
        flag.or(self.llm.backend).unwrap_or_else(|| {
            let env = std::env::var(ENV_BASE_URL).ok().filter(|v| !v.is_empty());
            if env.is_some() || self.llm.base_url.is_some() {
                Backend::Http
            } else {
                Backend::Heuristic
            }
        })
    }

    pub fn client(&self, backend: Backend, trace: bool) -> Result<Arc<dyn LlmClient>, LlmError> {
        Ok(match backend {
            Backend::Mock => Arc::new(MockClient::new()),
            Backend::Heuristic => Arc::new(HeuristicStudentClient),
            Backend::Http => {
                let env_url = std::env::var(ENV_BASE_URL).ok().filter(|v| !v.is_empty());
                let url = env_url.or_else(|| self.llm.base_url.clone());
                let model = self.llm.model.clone().unwrap_or_else(|| "default".into());
                let mut h = HttpConfig::from_env(url.as_deref(), &model)?;
                let l = &self.llm;
                h.max_retries = l.max_retries.unwrap_or(h.max_retries);
                h.backoff_ms = l.backoff_ms.unwrap_or(h.backoff_ms);
                h.timeout_s = l.timeout_s.unwrap_or(h.timeout_s);
                h.max_concurrency = l.max_concurrency.unwrap_or(h.max_concurrency);
                h.supports_grammar = l.supports_grammar.unwrap_or(false);
                h.trace = trace;
                Arc::new(HttpClient::new(h))
            }
        })
    }
}
