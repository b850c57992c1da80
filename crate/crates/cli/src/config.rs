//! Flat `key = value` run configuration. Later sources override earlier ones:
//! config file, then named flags, then `--set` pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use delayswitch::model::{GKind, Params, Rule};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "command", "rule", "g", "a", "b", "tau", "s", "sigma", "theta0", "phi0", "tmax", "dt", "out", "stride", "starts",
    "plot", "kind", "curve", "a_min", "a_max", "a_n", "b_min", "b_max", "b_n", "tau_min", "tau_max", "tau_n",
    "sample_a", "every",
];

impl RunConfig {
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("{origin}:{}: expected `key = value`, got `{line}`", n + 1));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return err(format!("unknown key `{key}`; known keys: {}", KNOWN_KEYS.join(", ")));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v.trim()),
            None => err(format!("--set expects KEY=VALUE, got `{pair}`")),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => err(format!("missing required value `{key}` (pass --{key} or set it in the config file)")),
            Some(v) => parse_f64(key, v),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("`{key}` must be a non-negative integer, got `{v}`"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => err(format!("`{key}` must be true or false, got `{v}`")),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or("out"))
    }

    pub fn rule(&self) -> Result<Rule, ConfigError> {
        match self.get("rule").unwrap_or("1") {
            "1" => Ok(Rule::Rule1),
            "2" => Ok(Rule::Rule2),
            v => err(format!("`rule` must be 1 or 2, got `{v}`")),
        }
    }

    pub fn g(&self) -> Result<GKind, ConfigError> {
        match self.get("g").unwrap_or("cos") {
            "cos" | "cosine" => Ok(GKind::Cosine),
            "one" | "1" => Ok(GKind::One),
            v => err(format!("`g` must be `one` or `cos`, got `{v}`")),
        }
    }

    /// Model parameters. Gains are required; `tau` defaults to 0 and the
    /// manifold parameter not used by the rule may be omitted.
    pub fn params(&self) -> Result<Params, ConfigError> {
        let rule = self.rule()?;
        let g = self.g()?;
        let a = self.f64_req("a")?;
        let b = self.f64_req("b")?;
        let tau = self.f64_or("tau", 0.0)?;
        let p = match rule {
            Rule::Rule1 => Params::rule1(a, b, tau, self.f64_req("s")?, g),
            Rule::Rule2 => Params::rule2(a, b, tau, self.f64_req("sigma")?, g),
        };
        p.validate().map_err(|e| ConfigError(format!("invalid parameters: {e}")))?;
        Ok(p)
    }

    pub fn dt_for(&self, p: &Params) -> Result<f64, ConfigError> {
        let default = if p.tau > 0.0 { (p.tau / 20.0).min(1e-3) } else { 1e-3 };
        let dt = self.f64_or("dt", default)?;
        if !(dt > 0.0) {
            return err(format!("`dt` must be positive, got {dt}"));
        }
        Ok(dt)
    }

    /// Uniform grid `key_min..=key_max` with `key_n` points.
    pub fn grid(&self, key: &str, default_n: usize) -> Result<Vec<f64>, ConfigError> {
        let lo = self.f64_req(&format!("{key}_min"))?;
        let hi = self.f64_req(&format!("{key}_max"))?;
        let n = self.usize_or(&format!("{key}_n"), default_n)?;
        if n == 0 {
            return err(format!("empty grid: `{key}_n` is 0"));
        }
        if !(hi >= lo) {
            return err(format!("empty grid: `{key}_max` ({hi}) is below `{key}_min` ({lo})"));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    /// Start points as `theta,phi;theta,phi`, falling back to `theta0`/`phi0`.
    pub fn starts(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        if let Some(list) = self.get("starts") {
            let mut out = Vec::new();
            for item in list.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let Some((t, p)) = item.split_once(',') else {
                    return err(format!("`starts` entries must be `theta,phi`, got `{item}`"));
                };
                out.push((parse_f64("starts", t.trim())?, parse_f64("starts", p.trim())?));
            }
            if out.is_empty() {
                return err("`starts` is empty");
            }
            return Ok(out);
        }
        Ok(vec![(self.f64_or("theta0", 0.1)?, self.f64_or("phi0", 0.0)?)])
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("`{key}` must be a finite number, got `{v}`")),
    }
}
