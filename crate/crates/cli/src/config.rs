//! Flat dotted-key configuration (`noise.gamma_hz = 50.0`), read from a TOML
//! file on top of built-in defaults.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rff::hamiltonians::CONSTANTS;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    List(Vec<f64>),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x:e}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

pub fn defaults() -> BTreeMap<&'static str, Value> {
    use Value::*;
    let a = 883e-9;
    let r = a / 3f64.sqrt();
    let mut sites = Vec::new();
    for k in 0..3 {
        let t = 2.0 * PI * k as f64 / 3.0;
        sites.extend([r * t.cos(), r * t.sin(), 0.0]);
    }
    BTreeMap::from([
        ("run.seed", Num(2024.0)),
        ("trio.side_m", Num(a)),
        ("bias.field_t", Num(2e-7)),
        ("noise.b_t", Num(5e-10)),
        ("noise.g_t_per_m", Num(1e-9)),
        ("noise.gamma_hz", Num(50.0)),
        ("fig4.gamma_tau", Num(100.0)),
        ("fig4.omega_over_gamma", Num(0.1)),
        ("fig4.omega0_over_gamma", Num(50.0)),
        ("fig4.dt_omega0", Num(0.1)),
        ("fig4.trajectories", Num(1000.0)),
        ("fig4.include_no_dd", Bool(true)),
        ("fig5.omega2_over_omega1", Num(1e-4)),
        ("fig5.sigma1_phi0", Num(0.4)),
        ("fig5.s0", List(vec![1.0, 0.8, 0.6])),
        ("fig5.points", Num(4001.0)),
        ("fig7.t_max_periods", Num(0.112)),
        ("fig7.points", Num(1121.0)),
        ("lattice.lambda_long_m", Num(10.6e-6)),
        ("lattice.lambda_short_m", Num(10.6e-6 / 8.0)),
        ("lattice.phases_long", List(vec![0.0; 3])),
        ("lattice.phases_short", List(vec![2.0 * PI / 3.0, 0.0, -2.0 * PI / 3.0])),
        ("lattice.intensity_ratio", Num(4.0)),
        ("lattice.short_rotation_rad", Num(0.0)),
        ("lattice.atom_mass_kg", Num(CONSTANTS.atom_mass)),
        ("fig9.resolution", Num(161.0)),
        ("fig9.half_width_m", Num(10.6e-6 / 3.0)),
        ("fig9.cut_samples", Num(401.0)),
        ("fig9.trap_depth_j", Num(1.1e-27)),
        ("geometry.sites_m", List(sites)),
        ("geometry.bias_direction", List(vec![0.0, 0.0, 1.0])),
        ("validate.noise_steps", Num(1e6)),
        ("validate.noise_dt", Num(0.05)),
        ("validate.oracle_seed", Num(11.0)),
    ])
}

#[derive(Debug, Clone)]
pub struct Config {
    pub source: String,
    values: BTreeMap<&'static str, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn convert(key: &str, v: &toml::Value) -> Result<Value, CliError> {
    let num = |x: &toml::Value| match x {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    };
    match v {
        toml::Value::Boolean(b) => Ok(Value::Bool(*b)),
        toml::Value::Array(items) => items
            .iter()
            .map(|x| num(x).ok_or_else(|| CliError::Config(format!("{key}: list entries must be numbers"))))
            .collect::<Result<Vec<f64>, _>>()
            .map(Value::List),
        other => num(other).map(Value::Num).ok_or_else(|| CliError::Config(format!("{key}: expected a number, boolean or list"))),
    }
}

impl Config {
    pub fn defaults() -> Self {
        Self { source: "(built-in defaults)".into(), values: defaults() }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = Self::defaults();
        cfg.source = source.into();
        for (key, raw) in flat {
            let Some((&k, current)) = cfg.values.get_key_value(key.as_str()) else {
                return Err(CliError::Config(format!("{source}: unknown key '{key}'")));
            };
            let v = convert(&key, &raw)?;
            if std::mem::discriminant(&v) != std::mem::discriminant(current) {
                return Err(CliError::Config(format!("{source}: '{key}' has the wrong type (default is {current})")));
            }
            cfg.values.insert(k, v);
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::defaults()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn set(&mut self, key: &'static str, v: Value) {
        self.values.insert(key, v);
    }

    pub fn num(&self, key: &str) -> f64 {
        match self.values.get(key) {
            Some(Value::Num(x)) => *x,
            other => panic!("config key {key} is not numeric: {other:?}"),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        matches!(self.values.get(key), Some(Value::Bool(true)))
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match self.values.get(key) {
            Some(Value::List(v)) => v,
            other => panic!("config key {key} is not a list: {other:?}"),
        }
    }

    /// Non-negative integer value.
    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        let x = self.num(key);
        if x < 0.0 || x.fract() != 0.0 || !x.is_finite() {
            return Err(CliError::Config(format!("{key} must be a non-negative integer, got {x}")));
        }
        Ok(x as usize)
    }

    pub fn list_of<const N: usize>(&self, key: &str) -> Result<[f64; N], CliError> {
        let v = self.list(key);
        v.try_into().map_err(|_| CliError::Config(format!("{key} needs {N} entries, got {}", v.len())))
    }

    /// `key = value` lines for every key with the given prefixes.
    pub fn echo(&self, prefixes: &[&str]) -> Vec<(String, String)> {
        self.values
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_tables_agree() {
        let a = Config::parse("noise.gamma_hz = 20\n", "a").unwrap();
        let b = Config::parse("[noise]\ngamma_hz = 20.0\n", "b").unwrap();
        assert_eq!(a.num("noise.gamma_hz"), 20.0);
        assert_eq!(b.num("noise.gamma_hz"), 20.0);
        assert_eq!(a.num("noise.b_t"), 5e-10);
    }

    #[test]
    fn bad_input_rejected() {
        assert!(Config::parse("noise.gama_hz = 1", "x").is_err());
        assert!(Config::parse("noise.gamma_hz = true", "x").is_err());
        assert!(Config::parse("noise.gamma_hz = ", "x").is_err());
        assert!(Config::parse("fig5.s0 = [1, \"a\"]", "x").is_err());
    }

    #[test]
    fn shipped_file_matches_defaults() {
        let text = include_str!("../../../configs/default.toml");
        let cfg = Config::parse(text, "default.toml").unwrap();
        let d = Config::defaults();
        for (k, v) in defaults() {
            match v {
                Value::Num(x) => assert!((cfg.num(k) - x).abs() <= 1e-12 * x.abs(), "{k}"),
                Value::Bool(b) => assert_eq!(cfg.flag(k), b, "{k}"),
                Value::List(l) => {
                    for (p, q) in cfg.list(k).iter().zip(&l) {
                        assert!((p - q).abs() <= 1e-12 * q.abs().max(1e-9), "{k}");
                    }
                    assert_eq!(cfg.list(k).len(), d.list(k).len());
                }
            }
        }
    }
}
