//! Experiment configuration: JSON files, presets and the effective-config echo.
//!
//! A config file has the shape
//!
//! ```json
//! { "command": "best-response", "preset": "ethereum",
//!   "params": { "mean_latency_us": 500000 },
//!   "settings": { "step_us": 5000 } }
//! ```
//!
//! `params` is merged over the defaults and then the preset; only the keys given are
//! overridden. `settings` depends on the command. Unknown keys at any of these levels
//! are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::engine::{FocalDeviation, RecordLevel};
use crate::error::{Error, Result};
use crate::latency::LatencyDistribution;
use crate::market::BidStreamConfig;
use crate::params::{ProtocolParams, MICROS_PER_SECOND};
use crate::strategy::{AttesterStrategy, ProposerStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Sweep,
    CheckEquilibrium,
    BestResponse,
    Mvot,
    Curves,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::CheckEquilibrium => "check-equilibrium",
            Command::BestResponse => "best-response",
            Command::Mvot => "mvot",
            Command::Curves => "curves",
        }
    }
}

/// Named parameter bundles for the protocol families the model covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two-thirds notarization threshold.
    Streamlet,
    /// Simple-majority slot vote.
    BlockSlot,
    /// 12 s slots, 4 s attestation deadline, majority threshold.
    Ethereum,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset> {
        serde_json::from_value(Value::String(name.to_owned()))
            .map_err(|_| Error::config(format!("unknown preset `{name}` (expected streamlet, block-slot or ethereum)")))
    }

    fn apply(self, params: &mut Map<String, Value>) {
        let set = |params: &mut Map<String, Value>, key: &str, value: Value| {
            params.insert(key.to_owned(), value);
        };
        match self {
            Preset::Streamlet => set(params, "vote_threshold", Value::from(2.0 / 3.0)),
            Preset::BlockSlot => set(params, "vote_threshold", Value::from(0.5)),
            Preset::Ethereum => {
                set(params, "slot_length_us", Value::from(12 * MICROS_PER_SECOND));
                set(params, "attestation_deadline_us", Value::from(4 * MICROS_PER_SECOND));
                set(params, "vote_threshold", Value::from(0.5));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub proposer: ProposerStrategy,
    pub attester: AttesterStrategy,
    /// Per-slot proposer strategies (JSON keys are slot numbers).
    pub proposer_overrides: BTreeMap<u64, ProposerStrategy>,
    pub attester_deviation: Option<FocalDeviation>,
    pub record_level: RecordLevel,
    pub runs: u64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            proposer: ProposerStrategy::Equilibrium,
            attester: AttesterStrategy::Equilibrium,
            proposer_overrides: BTreeMap::new(),
            attester_deviation: None,
            record_level: RecordLevel::Summary,
            runs: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Empty means `{0, Δ/4, Δ/2, 3Δ/4, Δ}`.
    pub delta_star_us: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckEquilibriumSettings {
    /// Empty means `{0, Δ/4, Δ/2, 3Δ/4, Δ}`.
    pub delta_star_us: Vec<i64>,
    pub proposer_grid_points: usize,
    pub attester_mc_samples: u64,
}

impl Default for CheckEquilibriumSettings {
    fn default() -> Self {
        CheckEquilibriumSettings {
            delta_star_us: Vec::new(),
            proposer_grid_points: 50,
            attester_mc_samples: 1_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BestResponseSettings {
    pub start_us: i64,
    /// Defaults to the attestation deadline.
    pub end_us: Option<i64>,
    pub step_us: i64,
    pub runs_per_point: u64,
}

impl Default for BestResponseSettings {
    fn default() -> Self {
        BestResponseSettings {
            start_us: 0,
            end_us: None,
            step_us: 10_000,
            runs_per_point: 30,
        }
    }
}

impl BestResponseSettings {
    pub fn grid(&self) -> Result<Vec<i64>> {
        let end = self.end_us.unwrap_or(self.start_us);
        if self.step_us <= 0 {
            return Err(Error::config("step_us must be positive"));
        }
        if end < self.start_us {
            return Err(Error::EmptyGrid);
        }
        Ok((self.start_us..=end).step_by(self.step_us as usize).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvotSettings {
    /// Bid file (JSONL, or CSV by extension). When absent, bids are generated.
    pub input: Option<PathBuf>,
    /// Generator settings; its seed and planted rate come from `params`.
    pub generator: BidStreamConfig,
    pub bin_ms: i64,
    pub get_header_ms: i64,
    pub signing_delay_ms: LatencyDistribution,
    /// Also write the bids that were analysed to `bids.jsonl`.
    pub export_bids: bool,
}

impl Default for MvotSettings {
    fn default() -> Self {
        MvotSettings {
            input: None,
            generator: BidStreamConfig::default(),
            bin_ms: 250,
            get_header_ms: 0,
            signing_delay_ms: LatencyDistribution::default_signing(),
            export_bids: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMode {
    /// Every proposer releases at each fixed offset in turn.
    #[default]
    Offsets,
    /// Proposers release after a sampled signing delay.
    Laggy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSettings {
    pub mode: CurveMode,
    pub offsets_ms: Vec<i64>,
    pub signing_delay_ms: LatencyDistribution,
    pub runs: u64,
    pub bucket_ms: i64,
}

impl Default for CurvesSettings {
    fn default() -> Self {
        CurvesSettings {
            mode: CurveMode::Offsets,
            offsets_ms: vec![0, 1000, 2000, 3000, 3900],
            signing_delay_ms: LatencyDistribution::default_signing(),
            runs: 100,
            bucket_ms: 100,
        }
    }
}

/// Settings of one command. Serialized as the bare settings object.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Settings {
    Simulate(SimulateSettings),
    Sweep(SweepSettings),
    CheckEquilibrium(CheckEquilibriumSettings),
    BestResponse(BestResponseSettings),
    Mvot(MvotSettings),
    Curves(CurvesSettings),
}

/// Fully resolved configuration; serializes to the effective-config echo.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub preset: Option<Preset>,
    pub params: ProtocolParams,
    pub settings: Settings,
}

/// Command-line level overrides, applied on top of the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
}

fn keys_of<T: Serialize>(value: &T) -> Vec<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn check_keys(section: &str, map: &Map<String, Value>, allowed: &[String]) -> Result<()> {
    let unknown: Vec<String> = map.keys().filter(|k| !allowed.contains(k)).cloned().collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownKeys {
            section: section.to_owned(),
            keys: unknown,
        })
    }
}

fn as_object<'a>(section: &str, value: &'a Value) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::config(format!("`{section}` must be a JSON object")))
}

fn settings_from<T: Serialize + DeserializeOwned + Default>(command: Command, raw: &Map<String, Value>) -> Result<T> {
    check_keys(&format!("settings ({})", command.name()), raw, &keys_of(&T::default()))?;
    serde_json::from_value(Value::Object(raw.clone()))
        .map_err(|e| Error::config(format!("settings ({}): {e}", command.name())))
}

fn quarter_grid(params: &ProtocolParams) -> Vec<i64> {
    (0..=4).map(|k| params.slot_length_us * k / 4).collect()
}

/// Parses and resolves a config document.
pub fn parse_config(text: &str, overrides: Overrides) -> Result<ExperimentConfig> {
    let doc: Value = serde_json::from_str(text)?;
    resolve(as_object("config", &doc)?, overrides)
}

pub fn load_config(path: &Path, overrides: Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, overrides).map_err(|e| match e {
        Error::Json(inner) => Error::config(format!("{}: {inner}", path.display())),
        other => other,
    })
}

/// Configuration for `overrides.command` with nothing but defaults and overrides.
/// Without a file, `curves` runs in offsets mode.
pub fn default_config(overrides: Overrides) -> Result<ExperimentConfig> {
    let mut doc = Map::new();
    if overrides.command == Some(Command::Curves) {
        doc.insert("settings".into(), serde_json::json!({ "mode": "offsets" }));
    }
    resolve(&doc, overrides)
}

fn resolve(doc: &Map<String, Value>, overrides: Overrides) -> Result<ExperimentConfig> {
    let top: Vec<String> = ["command", "preset", "params", "settings"].map(String::from).to_vec();
    check_keys("config", doc, &top)?;

    let file_command: Option<Command> = doc
        .get("command")
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| Error::config(format!("command: {e}"))))
        .transpose()?;
    let command = match (overrides.command, file_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config(format!(
                "config is for `{}` but `{}` was requested",
                b.name(),
                a.name()
            )))
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::MissingKeys {
                schema: "experiment".into(),
                keys: vec!["command".into()],
            })
        }
    };

    let file_preset: Option<Preset> = match doc.get("preset") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| Error::config(format!("preset: {e}")))?),
    };
    let preset = overrides.preset.or(file_preset);

    let defaults = ProtocolParams::default();
    let Value::Object(mut merged) = serde_json::to_value(&defaults)? else {
        unreachable!("parameters serialize to an object")
    };
    if let Some(p) = preset {
        p.apply(&mut merged);
    }
    if let Some(explicit) = doc.get("params") {
        let explicit = as_object("params", explicit)?;
        check_keys("params", explicit, &keys_of(&defaults))?;
        merged.extend(explicit.clone());
    }
    let file_seed = merged.get("seed").and_then(Value::as_u64);
    if let Some(seed) = overrides.seed {
        merged.insert("seed".into(), Value::from(seed));
    }
    let params: ProtocolParams =
        serde_json::from_value(Value::Object(merged)).map_err(|e| Error::config(format!("params: {e}")))?;
    params.validate()?;

    let empty = Map::new();
    let raw = match doc.get("settings") {
        None | Some(Value::Null) => &empty,
        Some(v) => as_object("settings", v)?,
    };
    let settings = match command {
        Command::Simulate => {
            let s: SimulateSettings = settings_from(command, raw)?;
            if s.runs == 0 {
                return Err(Error::config("runs must be positive"));
            }
            Settings::Simulate(s)
        }
        Command::Sweep => {
            let mut s: SweepSettings = settings_from(command, raw)?;
            if s.delta_star_us.is_empty() {
                s.delta_star_us = quarter_grid(&params);
            }
            Settings::Sweep(s)
        }
        Command::CheckEquilibrium => {
            let mut s: CheckEquilibriumSettings = settings_from(command, raw)?;
            if s.delta_star_us.is_empty() {
                s.delta_star_us = quarter_grid(&params);
            }
            Settings::CheckEquilibrium(s)
        }
        Command::BestResponse => {
            let mut s: BestResponseSettings = settings_from(command, raw)?;
            s.end_us.get_or_insert(params.attestation_deadline_us.min(params.slot_length_us));
            s.grid()?;
            Settings::BestResponse(s)
        }
        Command::Mvot => {
            let mut s: MvotSettings = settings_from(command, raw)?;
            // Seed and planted rate follow params; an echoed config repeats them verbatim
            // (a command-line seed still takes precedence).
            let generator = raw.get("generator").and_then(Value::as_object);
            for (key, matches) in [
                ("seed", Some(s.generator.seed) == file_seed),
                ("mev_rate", s.generator.mev_rate == params.mev_rate),
            ] {
                if generator.is_some_and(|g| g.contains_key(key)) && !matches {
                    return Err(Error::config(format!(
                        "settings.generator.{key} is taken from params; set params.{key} instead"
                    )));
                }
            }
            s.generator.seed = params.seed;
            s.generator.mev_rate = params.mev_rate;
            s.generator.validate()?;
            s.signing_delay_ms.validate()?;
            if s.bin_ms <= 0 {
                return Err(Error::config("bin_ms must be positive"));
            }
            Settings::Mvot(s)
        }
        Command::Curves => {
            if !raw.contains_key("mode") {
                return Err(Error::MissingKeys {
                    schema: command.name().into(),
                    keys: vec!["mode".into()],
                });
            }
            let s: CurvesSettings = settings_from(command, raw)?;
            if s.runs == 0 || s.bucket_ms <= 0 {
                return Err(Error::config("runs and bucket_ms must be positive"));
            }
            s.signing_delay_ms.validate()?;
            Settings::Curves(s)
        }
    };

    Ok(ExperimentConfig {
        command,
        preset,
        params,
        settings,
    })
}

impl ExperimentConfig {
    /// Pretty-printed effective configuration; parsing it back yields `self`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
