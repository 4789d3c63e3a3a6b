//! Run configuration: flat `key = value` files, `#` comments, overridden by
//! command-line pairs, validated against the admissible ranges.
//!
//! | key | default | range |
//! |---|---|---|
//! | `delta` | 0.02 | `[0, 0.1]` |
//! | `family` | canonical | `canonical`, `gaussian` |
//! | `speed_profile` | none | CSV `x,c` (replaces `family`/`delta`) |
//! | `L` | 40 | `(5, 200]` |
//! | `h` | 0.005 | `(0, 0.1]` |
//! | `epsilon` | 0.01 | `[0, 0.05]` |
//! | `init` | internal-mode | `internal-mode`, `radiation`, `mixed` |
//! | `T` | 400 | `[0, 1e5]` |
//! | `dt` | `0.4 h` | `(0, 0.9 h]` |
//! | `boundary` | sponge | `dirichlet`, `sponge` |
//! | `sponge_width` | 10 | `(0, L)` |
//! | `sample_every` | 25 | `≥ 1` |
//! | `state_every` | 0 | samples between state dumps, 0 = none |
//! | `out` | out | directory |
//! | `seed` | 0x5EED | 64-bit |
//! | `tol` | 1e-10 | `(0, 1e-4]` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::{Boundary, CFL_LIMIT, DEFAULT_DT_FACTOR, DEFAULT_SPONGE_WIDTH, INITIAL_KINDS};
use crate::error::{Error, Result};
use crate::profiles::DRIFT_FAMILIES;

pub const KEYS: [&str; 16] = [
    "delta",
    "family",
    "speed_profile",
    "L",
    "h",
    "epsilon",
    "init",
    "T",
    "dt",
    "boundary",
    "sponge_width",
    "sample_every",
    "state_every",
    "out",
    "seed",
    "tol",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub delta: f64,
    pub family: String,
    pub speed_profile: Option<PathBuf>,
    #[serde(rename = "L")]
    pub half_length: f64,
    pub h: f64,
    pub epsilon: f64,
    pub init: String,
    #[serde(rename = "T")]
    pub t_final: f64,
    /// `None` means `0.4 h`.
    pub dt: Option<f64>,
    pub boundary: Boundary,
    pub sponge_width: f64,
    pub sample_every: usize,
    pub state_every: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            delta: 0.02,
            family: "canonical".into(),
            speed_profile: None,
            half_length: 40.0,
            h: 0.005,
            epsilon: 0.01,
            init: "internal-mode".into(),
            t_final: 400.0,
            dt: None,
            boundary: Boundary::Sponge,
            sponge_width: DEFAULT_SPONGE_WIDTH,
            sample_every: 25,
            state_every: 0,
            out: PathBuf::from("out"),
            seed: crate::diagnostics::DEFAULT_SEED,
            tol: 1e-10,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key} = {v:?} is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{key} = {v:?} is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    let v = v.trim();
    let r = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse::<u64>(),
    };
    r.map_err(|_| Error::Config(format!("{key} = {v:?} is not a 64-bit integer")))
}

fn range_err(key: &str, v: impl std::fmt::Display, range: &str) -> Error {
    Error::Config(format!("{key} = {v} outside admissible range {range}"))
}

impl RunConfig {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT_FACTOR * self.h)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "delta" => self.delta = parse_f64(key, v)?,
            "family" => self.family = v.to_string(),
            "speed_profile" => self.speed_profile = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "L" => self.half_length = parse_f64(key, v)?,
            "h" => self.h = parse_f64(key, v)?,
            "epsilon" => self.epsilon = parse_f64(key, v)?,
            "init" => self.init = v.to_string(),
            "T" => self.t_final = parse_f64(key, v)?,
            "dt" => self.dt = if v.is_empty() { None } else { Some(parse_f64(key, v)?) },
            "boundary" => self.boundary = v.parse()?,
            "sponge_width" => self.sponge_width = parse_f64(key, v)?,
            "sample_every" => self.sample_every = parse_usize(key, v)?,
            "state_every" => self.state_every = parse_usize(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse_u64(key, v)?,
            "tol" => self.tol = parse_f64(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}; known keys: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; a repeated key is an error.
    pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", no + 1)))?;
            let k = k.trim();
            if out.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: key {k:?} repeated", no + 1)));
            }
        }
        Ok(out)
    }

    /// Defaults, then `file`, then `overrides` (in order), then validation.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in Self::parse_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.1).contains(&self.delta) {
            return Err(range_err("delta", self.delta, "[0, 0.1]"));
        }
        if self.speed_profile.is_none() && !DRIFT_FAMILIES.contains(&self.family.as_str()) {
            return Err(Error::UnknownName(format!("family {:?}; known: {}", self.family, DRIFT_FAMILIES.join(", "))));
        }
        if !(self.half_length > 5.0 && self.half_length <= 200.0) {
            return Err(range_err("L", self.half_length, "(5, 200]"));
        }
        if !(self.h > 0.0 && self.h <= 0.1) {
            return Err(range_err("h", self.h, "(0, 0.1]"));
        }
        if !(0.0..=0.05).contains(&self.epsilon) {
            return Err(range_err("epsilon", self.epsilon, "[0, 0.05]"));
        }
        if !INITIAL_KINDS.contains(&self.init.as_str()) {
            return Err(Error::UnknownName(format!("init {:?}; known: {}", self.init, INITIAL_KINDS.join(", "))));
        }
        if !(0.0..=1e5).contains(&self.t_final) {
            return Err(range_err("T", self.t_final, "[0, 1e5]"));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt <= CFL_LIMIT * self.h * (1.0 + 1e-12)) {
            return Err(range_err("dt", dt, &format!("(0, {}] (0.9 h)", (CFL_LIMIT * self.h * 1e12).round() / 1e12)));
        }
        if !(self.sponge_width > 0.0 && self.sponge_width < self.half_length) {
            return Err(range_err("sponge_width", self.sponge_width, &format!("(0, {})", self.half_length)));
        }
        if self.sample_every == 0 {
            return Err(range_err("sample_every", 0, ">= 1"));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(range_err("tol", self.tol, "(0, 1e-4]"));
        }
        Ok(())
    }

    /// `key = value` text that [`RunConfig::load`] reads back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("delta", format!("{}", self.delta));
        put("family", self.family.clone());
        if let Some(p) = &self.speed_profile {
            put("speed_profile", p.display().to_string());
        }
        put("L", format!("{}", self.half_length));
        put("h", format!("{}", self.h));
        put("epsilon", format!("{}", self.epsilon));
        put("init", self.init.clone());
        put("T", format!("{}", self.t_final));
        if let Some(dt) = self.dt {
            put("dt", format!("{dt}"));
        }
        put("boundary", self.boundary.to_string());
        put("sponge_width", format!("{}", self.sponge_width));
        put("sample_every", format!("{}", self.sample_every));
        put("state_every", format!("{}", self.state_every));
        put("out", self.out.display().to_string());
        put("seed", format!("{:#x}", self.seed));
        put("tol", format!("{}", self.tol));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.cfg");
        std::fs::write(&p, "# nothing\n\n").unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cfg");
        std::fs::write(&p, "delta = 0.02  # drift\nepsilon=0.005\n").unwrap();
        let c = RunConfig::load(Some(&p), &pairs(&[("delta", "0.01")])).unwrap();
        assert_eq!(c.delta, 0.01);
        assert_eq!(c.epsilon, 0.005);
    }

    #[test]
    fn rejections() {
        let bad = |v: &[(&str, &str)]| RunConfig::load(None, &pairs(v)).unwrap_err();
        let e = bad(&[("h", "0.01"), ("dt", "0.01")]);
        assert!(matches!(e, Error::Config(ref m) if m.contains("dt")), "{e}");
        assert!(matches!(bad(&[("delta", "0.2")]), Error::Config(ref m) if m.contains("delta") && m.contains("0.1")));
        assert!(matches!(bad(&[("epsilon", "0.06")]), Error::Config(_)));
        assert!(matches!(bad(&[("colour", "red")]), Error::Config(ref m) if m.contains("colour")));
        assert!(matches!(bad(&[("init", "wave")]), Error::UnknownName(_)));
        assert!(matches!(bad(&[("boundary", "open")]), Error::Config(_)));
        assert!(RunConfig::parse_text("delta = 1\ndelta = 2").is_err());
        assert!(RunConfig::parse_text("just words").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.delta = 0.013;
        c.seed = 77;
        c.dt = Some(0.001);
        c.boundary = Boundary::Dirichlet;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, c.to_text()).unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[]).unwrap(), c);
    }
}
