//! Run configuration shared by the CLI subcommands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_text;
use super::tally_file::TallyMetadata;
use crate::decoy::SliceAcceptance;
use crate::error::{Error, Result};
use crate::model::{ChannelConfig, SecurityParams, SourceParams};
use crate::optimize::OptimizerConfig;
use crate::sim::{PhaseModel, Schedule, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StatsMode {
    Mean,
    #[default]
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AoppMode {
    /// Analytic estimate from pre-AOPP statistics.
    #[default]
    Bound,
    /// Pair the simulated raw keys and count the outcome directly.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMethod {
    /// Windows up to [`WINDOW_LIMIT`], counts beyond.
    #[default]
    Auto,
    Windows,
    Counts,
}

/// Largest session simulated window by window under [`SimulationMethod::Auto`].
pub const WINDOW_LIMIT: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelPreset {
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Preset { preset: ChannelPreset, total_km: f64 },
    Full(ChannelConfig),
}

impl ChannelSpec {
    pub fn build(&self) -> ChannelConfig {
        match *self {
            ChannelSpec::Preset {
                preset: ChannelPreset::Long,
                total_km,
            } => ChannelConfig::long_distance(total_km / 2.0, total_km / 2.0),
            ChannelSpec::Preset {
                preset: ChannelPreset::Short,
                total_km,
            } => ChannelConfig::short_distance(total_km),
            ChannelSpec::Full(c) => c,
        }
    }
}

/// Published after-AOPP values, for the `keyrate` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostAopp {
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_t: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub parameter_set: Option<String>,
    #[serde(default)]
    pub source: Option<SourceParams>,
    #[serde(default)]
    pub security: SecurityParams,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub mode: StatsMode,
    #[serde(default)]
    pub aopp: AoppMode,
    #[serde(default)]
    pub seed: u64,
    /// Windows to simulate.
    #[serde(default)]
    pub n_pairs: Option<u64>,
    /// Pulse pairs assumed by `optimize` and `scan`.
    #[serde(default)]
    pub n_total: Option<f64>,
    #[serde(default)]
    pub phase_model: Option<PhaseModel>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub delta_slice: Option<f64>,
    #[serde(default)]
    pub slice: Option<SliceAcceptance>,
    #[serde(default)]
    pub simulation: SimulationMethod,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub post_aopp: Option<PostAopp>,
}

fn preset_source(label: &str) -> Result<SourceParams> {
    SourceParams::preset(label).ok_or_else(|| Error::Validation(vec![format!("unknown parameter set `{label}`")]))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    /// Explicit source, else the named preset, else the tally's preset.
    pub fn source(&self, meta: Option<&TallyMetadata>) -> Result<SourceParams> {
        if let Some(s) = self.source {
            return Ok(s);
        }
        let label = self
            .parameter_set
            .as_deref()
            .or_else(|| meta.and_then(|m| m.parameter_set.as_deref()))
            .ok_or_else(|| Error::Validation(vec!["no source parameters: set `source` or `parameter_set`".into()]))?;
        preset_source(label)
    }

    /// Explicit channel, else one derived from tally metadata: the preset
    /// follows the parameter set, the length the recorded distance, and the
    /// attenuation is matched to the recorded fibre loss.
    pub fn channel(&self, meta: Option<&TallyMetadata>) -> Result<ChannelConfig> {
        if let Some(c) = self.channel {
            return Ok(c.build());
        }
        let meta = meta.ok_or_else(|| Error::Validation(vec!["no channel: set `channel`".into()]))?;
        let distance = meta
            .distance_km
            .ok_or_else(|| Error::Validation(vec!["no channel in config and no distance in tally metadata".into()]))?;
        let label = self
            .parameter_set
            .as_deref()
            .or(meta.parameter_set.as_deref())
            .unwrap_or("#1");
        let mut ch = match label.trim_start_matches('#') {
            "2" => ChannelConfig::short_distance(distance),
            _ => ChannelConfig::long_distance(distance / 2.0, distance / 2.0),
        };
        if let (Some(db), true) = (meta.attenuation_db, distance > 0.0) {
            ch.atten_db_per_km = db / distance;
        }
        if let Some(clock) = meta.clock_hz {
            ch.clock_hz = clock;
        }
        Ok(ch)
    }

    /// Slice acceptance: config, else the width recorded in the tally, else
    /// inferred from the tally.
    pub fn slice(&self, meta: Option<&TallyMetadata>) -> SliceAcceptance {
        self.slice
            .or_else(|| meta.and_then(|m| m.ds_width_rad).map(SliceAcceptance::Width))
            .unwrap_or(SliceAcceptance::Inferred)
    }

    pub fn session(&self) -> Result<SessionConfig> {
        let source = self.source(None)?;
        let channel = self.channel(None)?;
        let n_pairs = self
            .n_pairs
            .ok_or_else(|| Error::Validation(vec!["simulation needs `n_pairs`".into()]))?;
        let schedule = match self.schedule {
            Some(s) => s,
            None if (channel.clock_hz - 900e6).abs() < 1.0 => Schedule::short_distance(),
            None if (channel.clock_hz - 351e6).abs() < 1.0 => Schedule::long_distance(),
            None => Schedule {
                system_clock_hz: channel.clock_hz,
                outer_quantum_s: 0.1,
                inner_quantum_s: 1e-6,
                guard_fraction: 1.0,
                ..Schedule::long_distance()
            },
        };
        let cfg = SessionConfig {
            source,
            channel,
            n_pairs,
            phase_model: self.phase_model.unwrap_or_default(),
            schedule,
            delta_slice: self.delta_slice.unwrap_or(crate::optimize::DEFAULT_SLICE),
            seed: self.seed,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn n_total(&self) -> Result<f64> {
        self.n_total
            .ok_or_else(|| Error::Validation(vec!["config needs `n_total`".into()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_preset_config() {
        let c = RunConfig::parse(
            r##"{"parameter_set": "#1", "channel": {"preset": "long", "total_km": 1002}, "n_pairs": 1000}"##,
        )
        .unwrap();
        assert_eq!(c.source(None).unwrap(), SourceParams::parameter_set_1());
        assert_eq!(c.channel(None).unwrap().total_length_km(), 1002.0);
        assert_eq!(c.security, SecurityParams::default());
        let s = c.session().unwrap();
        assert_eq!(s.schedule, Schedule::long_distance());
    }

    #[test]
    fn partial_security_block() {
        let c = RunConfig::parse(r#"{"security": {"f": 1.1}}"#).unwrap();
        assert_eq!(c.security.f, 1.1);
        assert_eq!(c.security.eps_pa, 1e-10);
    }

    #[test]
    fn unknown_field_is_parse_error() {
        assert!(matches!(RunConfig::parse(r#"{"sourc": {}}"#), Err(Error::Parse { .. })));
    }

    #[test]
    fn channel_from_metadata() {
        let meta = TallyMetadata {
            distance_km: Some(202.0),
            attenuation_db: Some(31.6),
            parameter_set: Some("#2".into()),
            ..TallyMetadata::default()
        };
        let ch = RunConfig::default().channel(Some(&meta)).unwrap();
        assert_eq!(ch.clock_hz, 900e6);
        assert!((ch.fibre_loss_db(crate::model::Side::Total) - 31.6).abs() < 1e-9);
    }
}
