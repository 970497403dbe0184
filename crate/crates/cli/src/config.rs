//! Experiment configuration: a flat table of `key = value` settings with
//! defaults, overridden by a config file and then by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spikelab::model::{DomainMode, ModelParams};
use spikelab::sim::{InitialCondition, Ramp, SpikeLevel};

/// One configurable key.
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

pub const KEYS: &[Key] = &[
    key("a", "0.5", "activator source a"),
    key("b", "1", "inhibitor decay b"),
    key("c", "1", "substrate decay c"),
    key("delta1", "1e-4", "activator diffusivity delta1"),
    key("delta2", "auto", "substrate diffusivity delta2 (auto = delta1^2)"),
    key("dv", "1", "inhibitor diffusivity D_v"),
    key("theta", "0", "inhibitor time constant theta"),
    key("tau", "0", "substrate time constant tau"),
    key("l", "4", "domain half-length l"),
    key("domain", "half", "spatial domain: full [-l,l] or half [0,l]"),
    key("n", "auto", "grid nodes (auto resolves the spike core)"),
    key("dt", "1e-3", "base time step"),
    key("t_end", "100", "final time"),
    key("output_stride", "10", "time steps between track samples"),
    key("snapshot_every", "0", "track samples between field snapshots (0 = final only)"),
    key("ramp", "none", "D_v schedule: none, linear or exponential"),
    key("ramp_d0", "2", "D_v at t = 0 for a ramp"),
    key("ramp_rate", "1.5e-4", "ramp rate (linear slope or exponential rho)"),
    key("initial", "spike", "initial data: spike, homogeneous or file"),
    key("spike_level", "upper", "spike amplitude: upper, lower, coupled or a V0 value"),
    key("center", "0", "initial spike centre"),
    key("seed", "0", "seed for the homogeneous perturbation"),
    key("perturbation", "1e-3", "relative amplitude of the homogeneous perturbation"),
    key("initial_file", "none", "snapshot CSV for initial = file"),
    key("nlep_n", "4001", "nodes of the NLEP line operator"),
    key("ly", "20", "truncation half-width of the NLEP line operator"),
    key("dv_values", "none", "comma-separated D_v list for nlep-theta curves"),
    key("c_values", "1", "comma-separated c list for nlep-tau"),
    key("dv_start", "2", "continuation start D_v"),
    key("dv_target", "0.5", "continuation target D_v"),
    key("ds", "0.02", "initial arclength step"),
    key("max_points", "400", "maximum branch points"),
    key("sweep_command", "simulate", "command run by sweep"),
    key("sweep_key", "tau", "key varied by sweep"),
    key("sweep_values", "none", "comma-separated values for sweep_key"),
    key("workers", "0", "sweep worker threads (0 = all cores)"),
    key("output_dir", "out", "directory for artifacts"),
];

/// Optional `command` plus the `key = value` pairs of a config file.
pub type ParsedConfig = (Option<String>, Vec<(String, String)>);

pub const COMMANDS: &[&str] = &[
    "equilibrium",
    "nucleation",
    "nlep-theta",
    "nlep-tau",
    "smalleig",
    "simulate",
    "continue",
    "sweep",
];

/// A configuration problem: reported with exit code 1, nothing written.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn is_key(name: &str) -> bool {
    KEYS.iter().any(|k| k.name == name)
}

/// Raw string settings after layering defaults, file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn defaults(command: &str) -> Self {
        RawConfig {
            command: command.to_string(),
            values: KEYS
                .iter()
                .map(|k| (k.name.to_string(), k.default.to_string()))
                .collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !is_key(key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Fully-resolved config in config-file syntax.
    pub fn manifest(&self) -> String {
        let mut out = String::from("# spikelab run manifest\n");
        out.push_str(&format!("command = {}\n", self.command));
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Parse `key = value` lines with `#` comments. `command` is returned
/// separately.
pub fn parse_config_text(
    text: &str,
    origin: &str,
) -> Result<ParsedConfig, ConfigError> {
    let mut command = None;
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{origin}:{}: expected `key = value`", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError(format!(
                "{origin}:{}: empty key or value",
                no + 1
            )));
        }
        if k == "command" {
            if !COMMANDS.contains(&v) {
                return Err(ConfigError(format!("{origin}:{}: unknown command `{v}`", no + 1)));
            }
            command = Some(v.to_string());
        } else if is_key(k) {
            pairs.push((k.to_string(), v.to_string()));
        } else {
            return Err(ConfigError(format!("{origin}:{}: unknown key `{k}`", no + 1)));
        }
    }
    Ok((command, pairs))
}

pub fn read_config_file(path: &Path) -> Result<ParsedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text, &path.display().to_string())
}

fn parse<T: FromStr>(raw: &RawConfig, key: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.get(key)
        .parse::<T>()
        .map_err(|e| ConfigError(format!("`{key}`: cannot parse `{}`: {e}", raw.get(key))))
}

fn parse_list(raw: &RawConfig, key: &str) -> Result<Vec<f64>, ConfigError> {
    let s = raw.get(key);
    if s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError(format!("`{key}`: bad entry `{t}`: {e}")))
        })
        .collect()
}

/// Typed, validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub command: String,
    pub params: ModelParams,
    pub domain: DomainMode,
    pub n: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub output_stride: usize,
    pub snapshot_every: Option<usize>,
    pub ramp: Option<Ramp>,
    pub initial: InitialCondition,
    pub nlep_n: usize,
    pub ly: f64,
    pub dv_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub dv_start: f64,
    pub dv_target: f64,
    pub ds: f64,
    pub max_points: usize,
    pub sweep_command: String,
    pub sweep_key: String,
    pub sweep_values: Vec<String>,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Settings {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        if !COMMANDS.contains(&raw.command.as_str()) {
            return Err(ConfigError(format!("unknown command `{}`", raw.command)));
        }
        let mut b = ModelParams::builder()
            .a(parse(raw, "a")?)
            .b(parse(raw, "b")?)
            .c(parse(raw, "c")?)
            .delta1(parse(raw, "delta1")?)
            .dv(parse(raw, "dv")?)
            .theta(parse(raw, "theta")?)
            .tau(parse(raw, "tau")?)
            .l(parse(raw, "l")?);
        if raw.get("delta2") != "auto" {
            b = b.delta2(parse(raw, "delta2")?);
        }
        let params = b.build().map_err(|e| ConfigError(e.to_string()))?;
        let domain = parse::<DomainMode>(raw, "domain")?;
        let n = match raw.get("n") {
            "auto" => None,
            _ => Some(parse::<usize>(raw, "n")?),
        };
        let ramp_d0: f64 = parse(raw, "ramp_d0")?;
        let ramp_rate: f64 = parse(raw, "ramp_rate")?;
        let ramp = match raw.get("ramp") {
            "none" => None,
            "linear" => Some(Ramp::Linear {
                d0: ramp_d0,
                rate: ramp_rate,
            }),
            "exponential" => Some(Ramp::Exponential {
                d0: ramp_d0,
                rho: ramp_rate,
            }),
            other => return Err(ConfigError(format!("`ramp`: unknown schedule `{other}`"))),
        };
        let level = match raw.get("spike_level") {
            "upper" => SpikeLevel::Upper,
            "lower" => SpikeLevel::Lower,
            "coupled" => SpikeLevel::Coupled,
            _ => {
                let v0: f64 = parse(raw, "spike_level")?;
                if !(v0 > 0.0 && v0.is_finite()) {
                    return Err(ConfigError(format!("`spike_level`: V0 must be positive, got {v0}")));
                }
                SpikeLevel::Level(v0)
            }
        };
        let initial = match raw.get("initial") {
            "spike" => InitialCondition::AsymptoticSpike {
                center: parse(raw, "center")?,
                level,
            },
            "homogeneous" => InitialCondition::HomogeneousPerturbed {
                seed: parse(raw, "seed")?,
                amplitude: parse(raw, "perturbation")?,
            },
            "file" => match raw.get("initial_file") {
                "none" => return Err(ConfigError("`initial = file` needs `initial_file`".into())),
                path => InitialCondition::FromFile(PathBuf::from(path)),
            },
            other => return Err(ConfigError(format!("`initial`: unknown kind `{other}`"))),
        };
        let snapshot_every = match parse::<usize>(raw, "snapshot_every")? {
            0 => None,
            k => Some(k),
        };
        let sweep_values: Vec<String> = match raw.get("sweep_values") {
            "none" => Vec::new(),
            s => s.split(',').map(|t| t.trim().to_string()).collect(),
        };
        let sweep_command = raw.get("sweep_command").to_string();
        if !COMMANDS.contains(&sweep_command.as_str()) || sweep_command == "sweep" {
            return Err(ConfigError(format!("`sweep_command`: cannot sweep `{sweep_command}`")));
        }
        let sweep_key = raw.get("sweep_key").to_string();
        if !is_key(&sweep_key) || sweep_key == "output_dir" {
            return Err(ConfigError(format!("`sweep_key`: cannot sweep `{sweep_key}`")));
        }
        let s = Settings {
            command: raw.command.clone(),
            params,
            domain,
            n,
            dt: parse(raw, "dt")?,
            t_end: parse(raw, "t_end")?,
            output_stride: parse(raw, "output_stride")?,
            snapshot_every,
            ramp,
            initial,
            nlep_n: parse(raw, "nlep_n")?,
            ly: parse(raw, "ly")?,
            dv_values: parse_list(raw, "dv_values")?,
            c_values: parse_list(raw, "c_values")?,
            dv_start: parse(raw, "dv_start")?,
            dv_target: parse(raw, "dv_target")?,
            ds: parse(raw, "ds")?,
            max_points: parse(raw, "max_points")?,
            sweep_command,
            sweep_key,
            sweep_values,
            workers: parse(raw, "workers")?,
            output_dir: PathBuf::from(raw.get("output_dir")),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("ds", self.ds)?;
        positive("dv_start", self.dv_start)?;
        positive("dv_target", self.dv_target)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ConfigError(format!("`t_end` must be non-negative, got {}", self.t_end)));
        }
        if self.output_stride == 0 {
            return Err(ConfigError("`output_stride` must be at least 1".into()));
        }
        if let Some(n) = self.n {
            if n < 3 {
                return Err(ConfigError(format!("`n` must be at least 3, got {n}")));
            }
        }
        if self.nlep_n < 11 || self.nlep_n % 2 == 0 {
            return Err(ConfigError(format!("`nlep_n` must be odd and >= 11, got {}", self.nlep_n)));
        }
        if !(self.ly >= 20.0) {
            return Err(ConfigError(format!("`ly` must be >= 20, got {}", self.ly)));
        }
        for &c in &self.c_values {
            positive("c_values", c)?;
        }
        for &d in &self.dv_values {
            positive("dv_values", d)?;
        }
        if let Some(r) = self.ramp {
            let end = r.dv_at(self.t_end);
            if !(r.dv_at(0.0) > 0.0 && end > 0.0) {
                return Err(ConfigError(format!("ramp drives D_v to {end} before t_end")));
            }
        }
        if self.command == "sweep" && self.sweep_values.is_empty() {
            return Err(ConfigError("sweep needs `sweep_values`".into()));
        }
        Ok(())
    }
}
