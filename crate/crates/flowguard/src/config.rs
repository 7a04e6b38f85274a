//! Run configuration: a single TOML file names the design, the stimulus,
//! the fault plan, the monitor set and the report parameters, so that a
//! campaign is reproducible from one artifact. The random seed is part of
//! the file — nothing falls back to wall-clock entropy.
//!
//! Referenced files (stimulus, net definitions, learned tables) are
//! resolved relative to the config file and parsed eagerly: a config
//! either loads completely or not at all.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::analysis::AreaCoeffs;
use crate::designs::{parse_stimulus, DesignId, Stimulus};
use crate::error::{Error, Result};
use crate::fault::{CampaignOptions, FaultCase};
use crate::petri::{parse_net_file, ParsedNet};
use crate::seqcheck::{parse_seq_file, SequenceTable};

/// On-disk schema. Unknown keys are rejected so typos fail loudly.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    design: String,
    seed: u64,
    stimulus: Option<String>,
    out: Option<String>,
    #[serde(default)]
    campaign: RawCampaign,
    #[serde(default)]
    monitors: RawMonitors,
    #[serde(default)]
    area: RawArea,
    #[serde(default)]
    report: RawReport,
    noc: Option<RawNoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCampaign {
    case: Option<u8>,
    upsets_per_bit: Option<usize>,
    bursts: Option<usize>,
    budget_multiplier: Option<f64>,
    burst_duration: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitors {
    nets: Option<String>,
    tables: Option<String>,
    presets: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArea {
    place: Option<f64>,
    transition: Option<f64>,
    key_bit: Option<f64>,
    pair: Option<f64>,
    dup_bit: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    budgets: Option<Vec<f64>>,
    dr_target: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoc {
    unicast_cycles: Vec<u64>,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub design: DesignId,
    /// Root of all derived randomness: fault plans, burst values and the
    /// bundled default stimulus.
    pub seed: u64,
    /// Output directory, when the file names one (`--out` overrides it).
    pub out: Option<PathBuf>,
    /// Resolved input data: the referenced stimulus file, the network
    /// scenario section, or the seed-derived default.
    pub stimulus: Stimulus,
    /// Restricts the fault plan to one case; `None` plans both.
    pub case: Option<FaultCase>,
    /// Register-upset injections per control-register bit.
    pub upsets_per_bit: usize,
    /// Input-burst injection count.
    pub bursts: usize,
    pub budget_multiplier: f64,
    pub burst_duration: u64,
    pub workers: usize,
    /// Custom net definitions replacing the bundled set.
    pub net_defs: Option<Vec<ParsedNet>>,
    /// Pre-learned sequence tables replacing golden-run learning.
    pub tables: Option<Vec<SequenceTable>>,
    /// Restricts learned checkers to the named bundled presets.
    pub presets: Option<Vec<String>>,
    pub area: AreaCoeffs,
    /// Cost budgets for the trade-off sweep, ascending.
    pub budgets: Vec<f64>,
    /// Detection-rate floor for cost-minimizing selection.
    pub dr_target: Option<f64>,
    /// Hex digest of the raw config bytes, stamped into every report.
    pub sha256: String,
}

fn toml_error(file: &str, text: &str, err: toml::de::Error) -> Error {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1)
        .unwrap_or(1);
    Error::parse(file, line, err.message().to_string())
}

fn read_relative(base: &Path, name: &str) -> Result<(String, String)> {
    let path = base.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path.display().to_string(), text))
}

impl Config {
    /// Loads, digests and fully resolves a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_text(&path.display().to_string(), &text, base)
    }

    /// Parses config text. `file` labels errors; `base` anchors relative
    /// paths referenced by the file.
    pub fn from_text(file: &str, text: &str, base: &Path) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(|e| toml_error(file, text, e))?;
        let digest = format!("{:x}", Sha256::digest(text.as_bytes()));

        let design = DesignId::parse(&raw.design)?;
        let case = match raw.campaign.case {
            None => None,
            Some(c) => Some(FaultCase::from_code(c)?),
        };

        let stimulus = match (&raw.stimulus, &raw.noc) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "both a stimulus file and a [noc] section given; choose one".into(),
                ));
            }
            (Some(name), None) => {
                let (label, text) = read_relative(base, name)?;
                let stim = parse_stimulus(&label, &text)?;
                if stim.design() != design {
                    return Err(Error::Config(format!(
                        "stimulus file {label} is for design {}, config names {}",
                        stim.design().name(),
                        design.name()
                    )));
                }
                stim
            }
            (None, Some(noc)) => {
                if design != DesignId::Noc {
                    return Err(Error::Config(format!(
                        "[noc] section is only valid for design noc, config names {}",
                        design.name()
                    )));
                }
                let Stimulus::Noc { payloads, .. } = design.default_stimulus(raw.seed) else {
                    unreachable!("noc default stimulus is a noc stimulus");
                };
                Stimulus::Noc {
                    payloads,
                    unicast_cycles: noc.unicast_cycles.clone(),
                }
            }
            (None, None) => design.default_stimulus(raw.seed),
        };

        if raw.monitors.tables.is_some() && raw.monitors.presets.is_some() {
            return Err(Error::Config(
                "monitors.tables and monitors.presets are mutually exclusive".into(),
            ));
        }
        let net_defs = match &raw.monitors.nets {
            None => None,
            Some(name) => {
                let (label, text) = read_relative(base, name)?;
                Some(parse_net_file(&label, &text)?)
            }
        };
        let tables = match &raw.monitors.tables {
            None => None,
            Some(name) => {
                let (label, text) = read_relative(base, name)?;
                Some(parse_seq_file(&label, &text)?)
            }
        };

        let d = AreaCoeffs::default();
        let area = AreaCoeffs {
            place: raw.area.place.unwrap_or(d.place),
            transition: raw.area.transition.unwrap_or(d.transition),
            key_bit: raw.area.key_bit.unwrap_or(d.key_bit),
            pair: raw.area.pair.unwrap_or(d.pair),
            dup_bit: raw.area.dup_bit.unwrap_or(d.dup_bit),
        };
        area.validate()?;

        let config = Config {
            design,
            seed: raw.seed,
            out: raw.out.map(|o| base.join(o)),
            stimulus,
            case,
            upsets_per_bit: raw.campaign.upsets_per_bit.unwrap_or(8),
            bursts: raw.campaign.bursts.unwrap_or(64),
            budget_multiplier: raw.campaign.budget_multiplier.unwrap_or(2.0),
            burst_duration: raw.campaign.burst_duration.unwrap_or(10),
            workers: raw.campaign.workers.unwrap_or(1),
            net_defs,
            tables,
            presets: raw.monitors.presets,
            area,
            budgets: raw.report.budgets.unwrap_or_default(),
            dr_target: raw.report.dr_target,
            sha256: digest,
        };
        config.campaign_options().validate()?;
        Ok(config)
    }

    /// Campaign parameters carried by this config.
    pub fn campaign_options(&self) -> CampaignOptions {
        CampaignOptions {
            seed: self.seed,
            budget_multiplier: self.budget_multiplier,
            duration: self.burst_duration,
            workers: self.workers,
            preset_filter: self.presets.clone(),
            net_defs: self.net_defs.clone(),
            tables: self.tables.clone(),
            area: self.area,
            config_sha256: self.sha256.clone(),
        }
    }
}
