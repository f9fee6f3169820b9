//! Run configuration: defaults, `key = value` files, `--set` overrides and
//! the manifest every run leaves behind.
//!
//! Keys are the field names of [`CliConfig`]; nested fields use dots
//! (`oracle.target_recall`, `train.learning_rate`, `sparse.trials`). A key
//! that does not name a field is an error, not a silent no-op.

use std::fmt;
use std::path::Path;

use lca_core::trainer::{RunConfig, SparsenessConfig};
use lca_core::world::{ObjectId, Task};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Invalid or inconsistent configuration; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    pub sparse: SparsenessConfig,
    /// Task for `train` and `record-demo`.
    pub task: Task,
    /// `false` runs the baseline that learns from external rewards only.
    pub subgoals: bool,
    pub transfer_tasks: Vec<Task>,
    pub instruction: String,
    pub checkpoint: Option<String>,
    /// Skill library file; defaults to `skills.json` beside the checkpoint.
    pub skills: Option<String>,
    pub demo: Option<String>,
    /// Seeded start states tried by `schedule` and `imitate`.
    pub trials: usize,
    pub skill_budget: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        use ObjectId::*;
        CliConfig {
            run: RunConfig::default(),
            sparse: SparsenessConfig::default(),
            task: Task::PairStack { top: Red, bottom: Blue },
            subgoals: true,
            transfer_tasks: vec![
                Task::PairStack { top: Red, bottom: Blue },
                Task::PairStack { top: Blue, bottom: Green },
                Task::PairStack { top: Green, bottom: Red },
            ],
            instruction: "Stack the red object on top of the blue object".into(),
            checkpoint: None,
            skills: None,
            demo: None,
            trials: 10,
            skill_budget: lca_core::executive::DEFAULT_SKILL_BUDGET,
        }
    }
}

impl CliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run.validate().map_err(bad)?;
        if self.sparse.trials == 0 || self.sparse.triple_trials == 0 || self.sparse.max_steps == 0 {
            return Err(bad("sparse.trials, sparse.triple_trials and sparse.max_steps must be positive"));
        }
        if self.transfer_tasks.len() < 2 {
            return Err(bad("transfer_tasks needs at least two tasks"));
        }
        if self.trials == 0 || self.skill_budget == 0 {
            return Err(bad("trials and skill_budget must be positive"));
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_value(value: Value) -> Result<CliConfig, ConfigError> {
        serde_json::from_value(value).map_err(|e| bad(format!("invalid configuration: {e}")))
    }
}

/// Resolved configuration under construction. Overrides are applied to the
/// JSON form so that key checking and type checking come from the schema.
pub struct ConfigBuilder {
    value: Value,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        ConfigBuilder { value: CliConfig::default().to_value() }
    }

    /// Starts from a full config, e.g. one read from a manifest.
    pub fn from_config(config: &CliConfig) -> Self {
        ConfigBuilder { value: config.to_value() }
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<&mut Self, ConfigError> {
        let key = key.trim();
        let mut slot = &mut self.value;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| bad(format!("unknown configuration key `{key}`")))?;
        }
        if slot.is_object() {
            return Err(bad(format!("`{key}` is a group; set one of its fields instead")));
        }
        *slot = parse_value(slot, raw.trim());
        Ok(self)
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<&mut Self, ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{pair}`")))?;
        self.set(k, v)
    }

    /// Applies every `key = value` line of a config file. Blank lines and
    /// `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<&mut Self, ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_pair(line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        }
        Ok(self)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<&mut Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn build(&self) -> Result<CliConfig, ConfigError> {
        let config = CliConfig::from_value(self.value.clone())?;
        config.validate()?;
        Ok(config)
    }
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        ConfigBuilder::new()
    }
}

// String-typed fields take the text verbatim; everything else is read as
// JSON, falling back to a string so that type errors surface on build.
fn parse_value(current: &Value, raw: &str) -> Value {
    if current.is_string() {
        return Value::String(unquote(raw).to_string());
    }
    if raw.eq_ignore_ascii_case("none") {
        return Value::Null;
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(unquote(raw).to_string()))
}

fn unquote(raw: &str) -> &str {
    raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(raw)
}

/// What a run records so it can be repeated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub master_seed: u64,
    pub config: CliConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &CliConfig) -> Self {
        Manifest {
            command: command.to_string(),
            master_seed: config.run.master_seed,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn read(path: &Path) -> Result<Manifest, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read manifest {}: {e}", path.display())))?;
        let raw: Map<String, Value> =
            serde_json::from_str(&text).map_err(|e| bad(format!("malformed manifest: {e}")))?;
        let command = raw
            .get("command")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("manifest has no command"))?
            .to_string();
        // Rebuild through the key checker so stale or misspelled keys fail.
        let mut builder = ConfigBuilder::new();
        let config = raw.get("config").cloned().ok_or_else(|| bad("manifest has no config"))?;
        merge_checked(&mut builder.value, &config, "")?;
        let config = builder.build()?;
        Ok(Manifest::new(&command, &config))
    }
}

fn merge_checked(into: &mut Value, from: &Value, prefix: &str) -> Result<(), ConfigError> {
    let (Some(dst), Some(src)) = (into.as_object_mut(), from.as_object()) else {
        return Err(bad("manifest config must be an object"));
    };
    for (k, v) in src {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let slot = dst.get_mut(k).ok_or_else(|| bad(format!("unknown configuration key `{key}`")))?;
        if slot.is_object() && v.is_object() {
            merge_checked(slot, v, &key)?;
        } else {
            *slot = v.clone();
        }
    }
    Ok(())
}
