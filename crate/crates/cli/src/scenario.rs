//! Scenario files: a TOML document with sections `[topology]`, `[mode]`,
//! `[constants]`, `[channel]`, `[battery]`, `[workload]` and `[run]`,
//! mirroring `ScenarioConfig` one key per field. Every key except
//! `topology.n_devices` and `run.slots` has a default; unknown and
//! duplicate keys are rejected. Per-device keys accept a scalar (applied
//! uniformly), a length-N array, or, where a grid is meaningful, an N×N
//! array of arrays.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use eacc_core::channel::ChannelConfig;
use eacc_core::control::{ControllerConstants, UtilitySpec};
use eacc_core::energy::BatteryModel;
use eacc_core::engine::{Policy, ScenarioConfig};
use eacc_core::model::{NodeId, QueueMatrix};
use eacc_core::NetworkMode;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    /// Malformed TOML (includes the line and column).
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A scalar applied uniformly, a per-device list, or a full N×N grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Spread {
    Scalar(f64),
    PerDevice(Vec<f64>),
    Grid(Vec<Vec<f64>>),
}

impl Spread {
    fn per_device(&self, n: usize, key: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            Spread::Scalar(v) => Ok(vec![*v; n]),
            Spread::PerDevice(values) => {
                if values.len() != n {
                    return Err(invalid(
                        key,
                        format!("expected {n} entries, got {}", values.len()),
                    ));
                }
                Ok(values.clone())
            }
            Spread::Grid(_) => Err(invalid(key, "expected a scalar or a per-device array")),
        }
    }

    /// Grid resolution: a scalar fills the grid, a per-device list fills the
    /// corresponding row, a nested array is taken verbatim.
    fn grid(&self, n: usize, key: &str) -> Result<QueueMatrix, ScenarioError> {
        match self {
            Spread::Scalar(v) => Ok(QueueMatrix::filled(n, *v)),
            Spread::PerDevice(values) => {
                if values.len() != n {
                    return Err(invalid(
                        key,
                        format!("expected {n} entries, got {}", values.len()),
                    ));
                }
                let mut grid = QueueMatrix::zeros(n);
                for (dev, &v) in values.iter().enumerate() {
                    grid.row_mut(dev).fill(v);
                }
                Ok(grid)
            }
            Spread::Grid(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(key, format!("expected an {n}x{n} grid")));
                }
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                Ok(QueueMatrix::from_rows(&refs))
            }
        }
    }
}

fn spread_probability(
    spread: &Spread,
    n: usize,
    key: &str,
    grid_ok: bool,
) -> Result<Vec<f64>, ScenarioError> {
    let values = if grid_ok {
        let grid = spread.grid(n, key)?;
        (0..n).flat_map(|dev| grid.row(dev).to_vec()).collect()
    } else {
        spread.per_device(n, key)?
    };
    for &p in &values {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(invalid(key, format!("probability {p} outside [0,1]")));
        }
    }
    Ok(values)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    n_devices: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeSection {
    network: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsSection {
    m: Option<f64>,
    r_max: Option<Spread>,
    d_max: Option<Spread>,
    e_max: Option<Spread>,
    utility: Option<String>,
    log_epsilon: Option<f64>,
    power_theta: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    source_on_prob: Option<Spread>,
    source_rate: Option<Spread>,
    d2d_on_prob: Option<Spread>,
    d2d_rate: Option<Spread>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatterySection {
    initial_level: Option<Spread>,
    threshold: Option<Spread>,
    credit_rate: Option<Spread>,
    drain_per_processed: Option<Spread>,
    drain_per_transmitted: Option<Spread>,
    joules_per_processed: Option<Spread>,
    joules_per_transmitted: Option<Spread>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadSection {
    receivers: Option<Vec<usize>>,
    work_factor: Option<Spread>,
    alpha: Option<Spread>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    slots: u64,
    seed: Option<u64>,
    policy: Option<String>,
    report_period: Option<u64>,
    enumeration_limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    topology: TopologySection,
    mode: Option<ModeSection>,
    constants: Option<ConstantsSection>,
    channel: Option<ChannelSection>,
    battery: Option<BatterySection>,
    workload: Option<WorkloadSection>,
    run: RunSection,
}

/// Parses and validates a scenario document into a runnable config,
/// applying the documented defaults to every omitted key.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let n = file.topology.n_devices;
    if n == 0 {
        return Err(invalid("topology.n_devices", "must be at least 1"));
    }

    let mut config = ScenarioConfig::with_defaults(n);
    config.slots = file.run.slots;
    config.seed = file.run.seed.unwrap_or(0);
    if let Some(policy) = &file.run.policy {
        config.policy = parse_policy(policy)?;
    }
    if let Some(period) = file.run.report_period {
        config.report_period_slots = period;
    }
    if let Some(limit) = file.run.enumeration_limit {
        config.enumeration_limit = limit;
    }

    if let Some(mode) = &file.mode {
        if let Some(network) = &mode.network {
            config.mode = match network.as_str() {
                "cellular-d2d" => NetworkMode::CellularPlusD2d,
                "wifi-d2d" => NetworkMode::WifiPlusD2d,
                other => {
                    return Err(invalid(
                        "mode.network",
                        format!(
                            "unknown mode {other:?}, expected \"cellular-d2d\" or \"wifi-d2d\""
                        ),
                    ))
                }
            };
        }
    }

    if let Some(constants) = &file.constants {
        let defaults = &config.constants;
        let utility = match constants.utility.as_deref() {
            None | Some("log") => UtilitySpec::Log {
                epsilon: constants.log_epsilon.unwrap_or(1e-6),
            },
            Some("power") => UtilitySpec::Power {
                theta: constants.power_theta.unwrap_or(0.5),
            },
            Some(other) => {
                return Err(invalid(
                    "constants.utility",
                    format!("unknown utility {other:?}, expected \"log\" or \"power\""),
                ))
            }
        };
        config.constants = ControllerConstants {
            m: constants.m.unwrap_or(defaults.m),
            r_max: match &constants.r_max {
                Some(spread) => spread.per_device(n, "constants.r_max")?,
                None => defaults.r_max.clone(),
            },
            d_max: match &constants.d_max {
                Some(spread) => spread.per_device(n, "constants.d_max")?,
                None => defaults.d_max.clone(),
            },
            e_max: match &constants.e_max {
                Some(spread) => spread.grid(n, "constants.e_max")?,
                None => defaults.e_max.clone(),
            },
            utility,
        };
    }

    if let Some(channel) = &file.channel {
        let defaults = &config.channel;
        config.channel = ChannelConfig {
            source_on_prob: match &channel.source_on_prob {
                Some(spread) => spread_probability(spread, n, "channel.source_on_prob", false)?,
                None => defaults.source_on_prob.clone(),
            },
            source_rate: match &channel.source_rate {
                Some(spread) => spread.per_device(n, "channel.source_rate")?,
                None => defaults.source_rate.clone(),
            },
            d2d_on_prob: match &channel.d2d_on_prob {
                Some(spread) => spread_probability(spread, n, "channel.d2d_on_prob", true)?,
                None => defaults.d2d_on_prob.clone(),
            },
            d2d_rate: match &channel.d2d_rate {
                Some(spread) => {
                    let grid = spread.grid(n, "channel.d2d_rate")?;
                    (0..n).flat_map(|dev| grid.row(dev).to_vec()).collect()
                }
                None => defaults.d2d_rate.clone(),
            },
        };
    }

    if let Some(battery) = &file.battery {
        let field =
            |spread: &Option<Spread>, key: &str, default: f64| -> Result<Vec<f64>, ScenarioError> {
                match spread {
                    Some(s) => s.per_device(n, key),
                    None => Ok(vec![default; n]),
                }
            };
        let initial = match &battery.initial_level {
            Some(s) => spread_probability(s, n, "battery.initial_level", false)?,
            None => vec![1.0; n],
        };
        let threshold = match &battery.threshold {
            Some(s) => spread_probability(s, n, "battery.threshold", false)?,
            None => vec![0.4; n],
        };
        let credit = field(&battery.credit_rate, "battery.credit_rate", 100.0)?;
        let drain_p = field(
            &battery.drain_per_processed,
            "battery.drain_per_processed",
            0.0,
        )?;
        let drain_t = field(
            &battery.drain_per_transmitted,
            "battery.drain_per_transmitted",
            0.0,
        )?;
        let joule_p = field(
            &battery.joules_per_processed,
            "battery.joules_per_processed",
            1.0,
        )?;
        let joule_t = field(
            &battery.joules_per_transmitted,
            "battery.joules_per_transmitted",
            1.0,
        )?;
        config.battery = (0..n)
            .map(|dev| BatteryModel {
                initial_level: initial[dev],
                threshold: threshold[dev],
                credit_rate_above: credit[dev],
                drain_per_processed: drain_p[dev],
                drain_per_transmitted: drain_t[dev],
                joules_per_processed: joule_p[dev],
                joules_per_transmitted: joule_t[dev],
            })
            .collect();
    }

    if let Some(workload) = &file.workload {
        if let Some(receivers) = &workload.receivers {
            let mut ids: Vec<usize> = receivers.clone();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != receivers.len() {
                return Err(invalid("workload.receivers", "duplicate device listed"));
            }
            if let Some(&bad) = ids.iter().find(|&&r| r >= n) {
                return Err(invalid(
                    "workload.receivers",
                    format!("device {bad} out of range for {n} devices"),
                ));
            }
            config.receivers = ids.into_iter().map(NodeId).collect();
        }
        if let Some(spread) = &workload.work_factor {
            config.work_factor = spread.per_device(n, "workload.work_factor")?;
        }
        if let Some(spread) = &workload.alpha {
            config.alpha = spread.grid(n, "workload.alpha")?;
        }
    }

    config
        .validate()
        .map_err(|e| invalid("scenario", e.to_string()))?;
    Ok(config)
}

fn parse_policy(name: &str) -> Result<Policy, ScenarioError> {
    match name {
        "eacc" => Ok(Policy::Eacc),
        "no-coop" => Ok(Policy::NoCooperation),
        "coop" => Ok(Policy::CooperationOnly),
        other => Err(invalid(
            "run.policy",
            format!("unknown policy {other:?}, expected \"eacc\", \"no-coop\" or \"coop\""),
        )),
    }
}

pub fn policy_name(policy: Policy) -> &'static str {
    match policy {
        Policy::Eacc => "eacc",
        Policy::NoCooperation => "no-coop",
        Policy::CooperationOnly => "coop",
    }
}

/// Serializes a config back into scenario-file form with every key
/// explicit. `parse_scenario` of the output reproduces the config exactly.
pub fn scenario_to_toml(config: &ScenarioConfig) -> String {
    let n = config.n_devices;
    let grid_rows = |grid: &QueueMatrix| -> Vec<Vec<f64>> {
        (0..n).map(|dev| grid.row(dev).to_vec()).collect()
    };
    let chunk = |flat: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|dev| flat[dev * n..(dev + 1) * n].to_vec())
            .collect()
    };
    let (utility, log_epsilon, power_theta) = match config.constants.utility {
        UtilitySpec::Log { epsilon } => ("log", Some(epsilon), None),
        UtilitySpec::Power { theta } => ("power", None, Some(theta)),
    };

    let file = ScenarioFile {
        topology: TopologySection { n_devices: n },
        mode: Some(ModeSection {
            network: Some(
                match config.mode {
                    NetworkMode::CellularPlusD2d => "cellular-d2d",
                    NetworkMode::WifiPlusD2d => "wifi-d2d",
                }
                .to_string(),
            ),
        }),
        constants: Some(ConstantsSection {
            m: Some(config.constants.m),
            r_max: Some(Spread::PerDevice(config.constants.r_max.clone())),
            d_max: Some(Spread::PerDevice(config.constants.d_max.clone())),
            e_max: Some(Spread::Grid(grid_rows(&config.constants.e_max))),
            utility: Some(utility.to_string()),
            log_epsilon,
            power_theta,
        }),
        channel: Some(ChannelSection {
            source_on_prob: Some(Spread::PerDevice(config.channel.source_on_prob.clone())),
            source_rate: Some(Spread::PerDevice(config.channel.source_rate.clone())),
            d2d_on_prob: Some(Spread::Grid(chunk(&config.channel.d2d_on_prob))),
            d2d_rate: Some(Spread::Grid(chunk(&config.channel.d2d_rate))),
        }),
        battery: Some(BatterySection {
            initial_level: Some(Spread::PerDevice(
                config.battery.iter().map(|b| b.initial_level).collect(),
            )),
            threshold: Some(Spread::PerDevice(
                config.battery.iter().map(|b| b.threshold).collect(),
            )),
            credit_rate: Some(Spread::PerDevice(
                config.battery.iter().map(|b| b.credit_rate_above).collect(),
            )),
            drain_per_processed: Some(Spread::PerDevice(
                config
                    .battery
                    .iter()
                    .map(|b| b.drain_per_processed)
                    .collect(),
            )),
            drain_per_transmitted: Some(Spread::PerDevice(
                config
                    .battery
                    .iter()
                    .map(|b| b.drain_per_transmitted)
                    .collect(),
            )),
            joules_per_processed: Some(Spread::PerDevice(
                config
                    .battery
                    .iter()
                    .map(|b| b.joules_per_processed)
                    .collect(),
            )),
            joules_per_transmitted: Some(Spread::PerDevice(
                config
                    .battery
                    .iter()
                    .map(|b| b.joules_per_transmitted)
                    .collect(),
            )),
        }),
        workload: Some(WorkloadSection {
            receivers: Some(config.receivers.iter().map(|r| r.0).collect()),
            work_factor: Some(Spread::PerDevice(config.work_factor.clone())),
            alpha: Some(Spread::Grid(grid_rows(&config.alpha))),
        }),
        run: RunSection {
            slots: config.slots,
            seed: Some(config.seed),
            policy: Some(policy_name(config.policy).to_string()),
            report_period: Some(config.report_period_slots),
            enumeration_limit: Some(config.enumeration_limit),
        },
    };
    toml::to_string_pretty(&file).expect("scenario serialization cannot fail")
}
