//! Campaign configuration and its flat `key = value` file format.
//!
//! ```text
//! # desk preset
//! n_data_re = 720
//! snr_db = 0, 10, 20
//! n_ue = 4, 6
//! n_drops = 2000
//!
//! [scheme]
//! scheme = tsp
//!
//! [scheme]
//! scheme = imp
//! w = 2
//! ```
//!
//! Keys before the first `[scheme]` header are global; `scheme`, `w`,
//! `n_pilot_re` and `pilot_boost_db` given there become defaults for every
//! section. Without any section the globals describe a single scheme, and
//! with no scheme keys at all the TSP / IMP(w = 2) pair is simulated.

use std::path::Path;

use crate::channel::ChannelMode;
use crate::error::{invalid, Error, Result};
use crate::pilots::{PilotLayout, Scheme};
use crate::rx::{DuplicatePolicy, IcCeMode, Procedure, RxOptions};
use crate::tx::{ResourceConfig, DEFAULT_TRANSPORT_BLOCK};

/// One simulated access scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub layout: PilotLayout,
    pub pilot_boost_db: f64,
}

impl SchemeConfig {
    pub fn new(layout: PilotLayout) -> Self {
        Self {
            layout,
            pilot_boost_db: 0.0,
        }
    }

    /// Stable 64-bit tag used to derive per-drop seeds.
    pub fn seed_tag(&self) -> u64 {
        let scheme = match self.layout.scheme() {
            Scheme::Tsp => 1u64,
            Scheme::Imp => 2u64,
        };
        super::mix(&[
            scheme,
            self.layout.w() as u64,
            self.layout.total_pilot_re() as u64,
            self.pilot_boost_db.to_bits(),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub schemes: Vec<SchemeConfig>,
    pub n_data_re: usize,
    pub n_rx: usize,
    pub transport_block_size: usize,
    pub snr_db_list: Vec<f64>,
    pub n_ue_list: Vec<usize>,
    pub n_drops: usize,
    pub rx_options: RxOptions,
    pub base_seed: u64,
}

impl SimConfig {
    /// Reduced-size grid: 24 pilot and 720 data resource elements,
    /// 160-bit transport blocks, two receive antennas.
    pub fn desk_preset() -> Self {
        Self {
            schemes: vec![
                SchemeConfig::new(PilotLayout::tsp(24).expect("valid layout")),
                SchemeConfig::new(PilotLayout::imp(24, 2).expect("valid layout")),
            ],
            n_data_re: 720,
            n_rx: 2,
            transport_block_size: DEFAULT_TRANSPORT_BLOCK,
            snr_db_list: vec![10.0],
            n_ue_list: vec![4],
            n_drops: 1000,
            rx_options: RxOptions::default(),
            base_seed: 1,
        }
    }

    pub fn resource(&self, scheme: &SchemeConfig) -> Result<ResourceConfig> {
        ResourceConfig::new(scheme.layout, self.n_data_re, self.n_rx)?
            .with_boost(scheme.pilot_boost_db)
            .with_transport_block(self.transport_block_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.snr_db_list.is_empty() || self.n_ue_list.is_empty() {
            return invalid("schemes, snr_db and n_ue must all be non-empty");
        }
        if self.n_drops == 0 {
            return invalid("n_drops must be at least 1");
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return invalid("snr_db values must be finite");
        }
        for s in &self.schemes {
            self.resource(s)?;
        }
        self.rx_options.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk_preset();
        let mut defaults = SchemeDraft::default();
        let mut sections: Vec<(usize, SchemeDraft)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if line != "[scheme]" {
                    return Err(err(format!("unknown section {line}")));
                }
                sections.push((line_no, SchemeDraft::default()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            if value.is_empty() {
                return Err(err(format!("missing value for `{key}`")));
            }
            let target = match sections.last_mut() {
                Some((_, draft)) => draft,
                None => &mut defaults,
            };
            match key {
                "scheme" => {
                    target.scheme = Some(match value {
                        "tsp" => Scheme::Tsp,
                        "imp" => Scheme::Imp,
                        _ => return Err(err(format!("scheme must be tsp or imp, got `{value}`"))),
                    })
                }
                "w" => target.w = Some(parse_num(value, key).map_err(err)?),
                "pilot_boost_db" => target.boost = Some(parse_num(value, key).map_err(err)?),
                "n_pilot_re" => target.n_pilot_re = Some(parse_num(value, key).map_err(err)?),
                _ if !sections.is_empty() => {
                    return Err(err(format!(
                        "`{key}` is not a per-scheme key; set it before the first [scheme]"
                    )))
                }
                "n_data_re" => cfg.n_data_re = parse_num(value, key).map_err(err)?,
                "n_rx" => cfg.n_rx = parse_num(value, key).map_err(err)?,
                "transport_block_size" => cfg.transport_block_size = parse_num(value, key).map_err(err)?,
                "snr_db" => cfg.snr_db_list = parse_list(value, key).map_err(err)?,
                "n_ue" => cfg.n_ue_list = parse_list(value, key).map_err(err)?,
                "n_drops" => cfg.n_drops = parse_num(value, key).map_err(err)?,
                "base_seed" => cfg.base_seed = parse_num(value, key).map_err(err)?,
                "aud_gamma" => cfg.rx_options.aud_gamma = parse_num(value, key).map_err(err)?,
                "max_rounds" => cfg.rx_options.max_rounds = parse_num(value, key).map_err(err)?,
                "rx_procedure" => {
                    cfg.rx_options.procedure = match value {
                        "serial" => Procedure::Serial,
                        "parallel" => Procedure::Parallel,
                        _ => return Err(err(format!("rx_procedure must be serial or parallel, got `{value}`"))),
                    }
                }
                "ic_ce_mode" => {
                    cfg.rx_options.ic_ce_mode = match value {
                        "pilot" => IcCeMode::PilotOnly,
                        "data_aided" => IcCeMode::DataAided,
                        _ => return Err(err(format!("ic_ce_mode must be pilot or data_aided, got `{value}`"))),
                    }
                }
                "channel_mode" => {
                    cfg.rx_options.channel_mode = match value {
                        "flat" => ChannelMode::Flat,
                        "per_block" => ChannelMode::PerBlock,
                        _ => return Err(err(format!("channel_mode must be flat or per_block, got `{value}`"))),
                    }
                }
                "duplicate_policy" => {
                    cfg.rx_options.duplicate_policy = match value {
                        "stronger" => DuplicatePolicy::StrongerPilot,
                        "average" => DuplicatePolicy::Average,
                        _ => {
                            return Err(err(format!(
                                "duplicate_policy must be stronger or average, got `{value}`"
                            )))
                        }
                    }
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }

        if sections.is_empty() {
            if defaults.scheme.is_some() || defaults.w.is_some() {
                sections.push((0, SchemeDraft::default()));
            } else {
                let total = defaults.n_pilot_re.unwrap_or(24);
                let boost = defaults.boost.unwrap_or(0.0);
                cfg.schemes = [(Scheme::Tsp, 1), (Scheme::Imp, 2)]
                    .into_iter()
                    .map(|(scheme, w)| {
                        PilotLayout::new(scheme, total, w).map(|layout| SchemeConfig {
                            layout,
                            pilot_boost_db: boost,
                        })
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| Error::Config {
                        line: 0,
                        message: e.to_string(),
                    })?;
            }
        }
        if !sections.is_empty() {
            cfg.schemes = sections
                .into_iter()
                .map(|(line, draft)| draft.resolve(&defaults, line))
                .collect::<Result<_>>()?;
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidArgument(message) => Error::Config { line: 0, message },
            other => other,
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SchemeDraft {
    scheme: Option<Scheme>,
    w: Option<usize>,
    n_pilot_re: Option<usize>,
    boost: Option<f64>,
}

impl SchemeDraft {
    fn resolve(self, defaults: &SchemeDraft, line: usize) -> Result<SchemeConfig> {
        let w = self.w.or(defaults.w);
        let scheme =
            self.scheme
                .or(defaults.scheme)
                .unwrap_or(if w.unwrap_or(1) > 1 { Scheme::Imp } else { Scheme::Tsp });
        let w = w.unwrap_or(match scheme {
            Scheme::Tsp => 1,
            Scheme::Imp => 2,
        });
        let total = self.n_pilot_re.or(defaults.n_pilot_re).unwrap_or(24);
        let layout = PilotLayout::new(scheme, total, w).map_err(|e| Error::Config {
            line,
            message: e.to_string(),
        })?;
        Ok(SchemeConfig {
            layout,
            pilot_boost_db: self.boost.or(defaults.boost).unwrap_or(0.0),
        })
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> std::result::Result<Vec<T>, String> {
    value.split(',').map(|v| parse_num(v.trim(), key)).collect()
}
