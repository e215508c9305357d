//! Flat `key = value` scenario files describing one experiment: network
//! makeup, timing, adversary policy, horizon and repetition count.

use thiserror::Error;

use crate::miner::SelfishPolicy;
use crate::simnet::{
    ConfigError, Horizon, MinerSpec, MiningBackend, PropagationModel, Role, SimConfig,
};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub repetitions: u32,
}

impl Scenario {
    /// Config for one repetition; seeds are derived as base seed + index.
    pub fn rep_config(&self, rep: u32) -> SimConfig {
        let mut c = self.config.clone();
        c.seed = self.config.seed.wrapping_add(rep as u64);
        c
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    NotKeyValue { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    BadValue {
        line: usize,
        key: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("config invalid: {0}")]
    Invalid(#[from] ConfigError),
}

fn bad(line: usize, key: &'static str, value: &str) -> ScenarioError {
    ScenarioError::BadValue {
        line,
        key,
        value: value.to_string(),
    }
}

fn parse_f64(line: usize, key: &'static str, v: &str) -> Result<f64, ScenarioError> {
    v.parse::<f64>().map_err(|_| bad(line, key, v))
}

fn parse_u64(line: usize, key: &'static str, v: &str) -> Result<u64, ScenarioError> {
    v.parse::<u64>().map_err(|_| bad(line, key, v))
}

fn parse_bool(line: usize, key: &'static str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, key, v)),
    }
}

fn parse_role(line: usize, v: &str) -> Result<Role, ScenarioError> {
    Ok(match v {
        "honest" => Role::Honest,
        "selfish-vanilla" => Role::Selfish(SelfishPolicy::VanillaBitcoin),
        "selfish-zeroblock" => Role::Selfish(SelfishPolicy::AgainstZeroblock {
            keep_private_branch: false,
        }),
        "selfish-zeroblock-keep" => Role::Selfish(SelfishPolicy::AgainstZeroblock {
            keep_private_branch: true,
        }),
        _ => return Err(bad(line, "miner role", v)),
    })
}

fn parse_propagation(line: usize, v: &str) -> Result<PropagationModel, ScenarioError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    match parts.as_slice() {
        ["constant", d] => Ok(PropagationModel::Constant(parse_f64(line, "propagation", d)?)),
        ["uniform", lo, hi] => Ok(PropagationModel::Uniform(
            parse_f64(line, "propagation", lo)?,
            parse_f64(line, "propagation", hi)?,
        )),
        ["empirical", table] => {
            let delays = table
                .split(',')
                .map(|d| parse_f64(line, "propagation", d))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(PropagationModel::Empirical(delays))
        }
        _ => Err(bad(line, "propagation", v)),
    }
}

fn parse_backend(line: usize, v: &str) -> Result<MiningBackend, ScenarioError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    match parts.as_slice() {
        ["stochastic"] => Ok(MiningBackend::Stochastic),
        ["hash", width, threshold, nethp] => Ok(MiningBackend::Hash {
            width: parse_u64(line, "backend", width)? as u32,
            threshold: parse_u64(line, "backend", threshold)?,
            nethp: parse_f64(line, "backend", nethp)?,
        }),
        _ => Err(bad(line, "backend", v)),
    }
}

/// Parses scenario text. Every diagnostic carries the 1-based line number.
pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let mut name: Option<String> = None;
    let mut mode: Option<bool> = None; // zeroblock on/off
    let mut avt_net: Option<f64> = None;
    let mut ipt: Option<f64> = None;
    let mut propagation: Option<PropagationModel> = None;
    let mut gamma: Option<f64> = None;
    let mut horizon: Option<Horizon> = None;
    let mut seed: Option<u64> = None;
    let mut reps: u32 = 1;
    let mut epoch: u64 = 0;
    let mut backend = MiningBackend::Stochastic;
    let mut mine_full_interval = false;
    let mut clock_skew = 0.0;
    let mut allow_majority = false;
    let mut miners: Vec<MinerSpec> = Vec::new();

    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or(ScenarioError::NotKeyValue { line })?;
        let key = key.trim();
        let value = value.trim();
        if key != "miner" {
            if seen.iter().any(|k| k == key) {
                return Err(ScenarioError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
        }
        match key {
            "name" => name = Some(value.to_string()),
            "mode" => {
                mode = Some(match value {
                    "zeroblock" => true,
                    "vanilla" => false,
                    _ => return Err(bad(line, "mode", value)),
                })
            }
            "avt_net" => avt_net = Some(parse_f64(line, "avt_net", value)?),
            "ipt" => ipt = Some(parse_f64(line, "ipt", value)?),
            "propagation" => propagation = Some(parse_propagation(line, value)?),
            "gamma" => gamma = Some(parse_f64(line, "gamma", value)?),
            "horizon_blocks" => {
                horizon = Some(Horizon::StandardBlocks(parse_u64(line, "horizon_blocks", value)?))
            }
            "horizon_seconds" => {
                horizon = Some(Horizon::Seconds(parse_f64(line, "horizon_seconds", value)?))
            }
            "seed" => seed = Some(parse_u64(line, "seed", value)?),
            "reps" => {
                reps = parse_u64(line, "reps", value)? as u32;
                if reps == 0 {
                    return Err(bad(line, "reps", value));
                }
            }
            "difficulty_epoch" => epoch = parse_u64(line, "difficulty_epoch", value)?,
            "backend" => backend = parse_backend(line, value)?,
            "mine_full_interval" => {
                mine_full_interval = parse_bool(line, "mine_full_interval", value)?
            }
            "clock_skew" => clock_skew = parse_f64(line, "clock_skew", value)?,
            "allow_majority_adversary" => {
                allow_majority = parse_bool(line, "allow_majority_adversary", value)?
            }
            "miner" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [mname, role, frac] = parts.as_slice() else {
                    return Err(bad(line, "miner", value));
                };
                miners.push(MinerSpec {
                    name: mname.to_string(),
                    role: parse_role(line, role)?,
                    hash_power: parse_f64(line, "miner hash power", frac)?,
                });
            }
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }

    let config = SimConfig {
        miners,
        avt_net: avt_net.ok_or(ScenarioError::Missing("avt_net"))?,
        ipt: ipt.ok_or(ScenarioError::Missing("ipt"))?,
        propagation: propagation.ok_or(ScenarioError::Missing("propagation"))?,
        zeroblock_enabled: mode.ok_or(ScenarioError::Missing("mode"))?,
        forced_gamma: gamma,
        horizon: horizon.ok_or(ScenarioError::Missing("horizon_blocks"))?,
        seed: seed.ok_or(ScenarioError::Missing("seed"))?,
        difficulty_epoch: epoch,
        backend,
        mine_full_interval,
        clock_skew,
        allow_majority_adversary: allow_majority,
    };
    config.validate()?;
    Ok(Scenario {
        name: name.ok_or(ScenarioError::Missing("name"))?,
        config,
        repetitions: reps,
    })
}
