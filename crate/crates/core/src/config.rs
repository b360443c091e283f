//! Run configuration: a plain `key = value` file, one entry per line, `#`
//! starts a comment.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `dim` | 1 | 1 or 2 |
//! | `n` | 127 | interior nodes per axis |
//! | `length` | 1.0 | side length along x |
//! | `length_y` | `length` | side length along y (2D) |
//! | `k` | 1 | genus of the minimax family |
//! | `beta` | 10 | coupling for `relax` and `minimax` (`inf` for the limit problem) |
//! | `betas` | 1,10,100,1000,10000 | sweep schedule |
//! | `dt_init`, `dt_min`, `residual_tol`, `max_steps`, `backtrack_factor` | flow defaults | flow parameters |
//! | `record_every` | 0 | keep every n-th traced state |
//! | `m` | by `k` | sphere sample size |
//! | `level_tol` | 1e-9 | minimax stopping tolerance |
//! | `max_rounds` | 200 | deformation rounds per level |
//! | `limit_tol` | 0.05 | final state-gap tolerance of the limit-point check |
//! | `warm_start` | true | warm-start the sweep families |
//! | `seed` | 0 | RNG seed |
//! | `out` | `out` | output directory |
//! | `initial` | two-bump | `two-bump`, `random-equivariant` or `snapshot` |
//! | `snapshot`, `snapshot_v` | none | snapshot files for `initial = snapshot` |
//! | `samples` | 100 | random inputs per check |
//! | `emit_traces`, `emit_snapshots`, `emit_plots` | true, true, false | artifact switches |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flows::FlowConfig;
use crate::grid::Grid;
use crate::minimax::{default_sample_size, Beta, MinimaxConfig};
use crate::sweep::{SweepConfig, DEFAULT_SCHEDULE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    TwoBump,
    RandomEquivariant,
    Snapshot,
}

impl FromStr for Initial {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "two-bump" => Ok(Initial::TwoBump),
            "random-equivariant" => Ok(Initial::RandomEquivariant),
            "snapshot" => Ok(Initial::Snapshot),
            _ => Err(format!("unknown initial condition `{s}`")),
        }
    }
}

/// Flow parameters left unset fall back to the β or limit defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowOverrides {
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub residual_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub backtrack_factor: Option<f64>,
    pub record_every: Option<usize>,
}

impl FlowOverrides {
    pub fn apply(&self, mut cfg: FlowConfig) -> FlowConfig {
        if let Some(v) = self.dt_init {
            cfg.dt_init = v;
        }
        if let Some(v) = self.dt_min {
            cfg.dt_min = v;
        }
        if let Some(v) = self.residual_tol {
            cfg.residual_tol = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.backtrack_factor {
            cfg.backtrack_factor = v;
        }
        if let Some(v) = self.record_every {
            cfg.record_every = v;
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub length_y: Option<f64>,
    pub k: usize,
    pub beta: Beta,
    pub betas: Vec<f64>,
    pub flow: FlowOverrides,
    pub m: Option<usize>,
    pub level_tol: f64,
    pub max_rounds: usize,
    pub limit_tol: f64,
    pub warm_start: bool,
    pub seed: u64,
    pub initial: Initial,
    pub snapshot: Option<PathBuf>,
    pub snapshot_v: Option<PathBuf>,
    pub samples: usize,
    pub emit_traces: bool,
    pub emit_snapshots: bool,
    pub emit_plots: bool,
    /// Not part of the config hash.
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 1,
            n: 127,
            length: 1.0,
            length_y: None,
            k: 1,
            beta: Beta::Finite(10.0),
            betas: DEFAULT_SCHEDULE.to_vec(),
            flow: FlowOverrides::default(),
            m: None,
            level_tol: 1e-9,
            max_rounds: 200,
            limit_tol: 0.05,
            warm_start: true,
            seed: 0,
            initial: Initial::TwoBump,
            snapshot: None,
            snapshot_v: None,
            samples: 100,
            emit_traces: true,
            emit_snapshots: true,
            emit_plots: false,
            out: PathBuf::from("out"),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::Config {
        key: key.into(),
        msg: format!("bad value `{raw}`: {e}"),
    })
}

fn boolean(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config {
            key: key.into(),
            msg: format!("bad boolean `{raw}`"),
        }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config {
                    key: key.into(),
                    msg: "duplicate key".into(),
                });
            }
            seen.push(key.to_string());
            cfg.set(key, raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "dim" => self.dim = value(key, raw)?,
            "n" => self.n = value(key, raw)?,
            "length" => self.length = value(key, raw)?,
            "length_y" => self.length_y = Some(value(key, raw)?),
            "k" => self.k = value(key, raw)?,
            "beta" => {
                self.beta = Beta::parse(raw).ok_or_else(|| Error::Config {
                    key: key.into(),
                    msg: format!("bad coupling `{raw}`"),
                })?
            }
            "betas" => {
                self.betas = raw
                    .split(',')
                    .map(|b| value::<f64>(key, b.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "dt_init" => self.flow.dt_init = Some(value(key, raw)?),
            "dt_min" => self.flow.dt_min = Some(value(key, raw)?),
            "residual_tol" => self.flow.residual_tol = Some(value(key, raw)?),
            "max_steps" => self.flow.max_steps = Some(value(key, raw)?),
            "backtrack_factor" => self.flow.backtrack_factor = Some(value(key, raw)?),
            "record_every" => self.flow.record_every = Some(value(key, raw)?),
            "m" => self.m = Some(value(key, raw)?),
            "level_tol" => self.level_tol = value(key, raw)?,
            "max_rounds" => self.max_rounds = value(key, raw)?,
            "limit_tol" => self.limit_tol = value(key, raw)?,
            "warm_start" => self.warm_start = boolean(key, raw)?,
            "seed" => self.seed = value(key, raw)?,
            "out" => self.out = PathBuf::from(raw),
            "initial" => self.initial = value(key, raw)?,
            "snapshot" => self.snapshot = Some(PathBuf::from(raw)),
            "snapshot_v" => self.snapshot_v = Some(PathBuf::from(raw)),
            "samples" => self.samples = value(key, raw)?,
            "emit_traces" => self.emit_traces = boolean(key, raw)?,
            "emit_snapshots" => self.emit_snapshots = boolean(key, raw)?,
            "emit_plots" => self.emit_plots = boolean(key, raw)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !matches!(self.dim, 1 | 2) {
            return bad("dim", "must be 1 or 2");
        }
        if self.n < 3 {
            return bad("n", "must be at least 3");
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("length", "must be positive");
        }
        if let Some(ly) = self.length_y {
            if !(ly > 0.0 && ly.is_finite()) {
                return bad("length_y", "must be positive");
            }
        }
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.betas.is_empty()
            || self.betas.windows(2).any(|w| !(w[1] > w[0]))
            || self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0))
        {
            return bad(
                "betas",
                "must be finite, nonnegative and strictly increasing",
            );
        }
        if let Some(m) = self.m {
            if m < 2 || m % 2 != 0 {
                return bad("m", "must be even and at least 2");
            }
        }
        if !(self.level_tol > 0.0) {
            return bad("level_tol", "must be positive");
        }
        if !(self.limit_tol > 0.0) {
            return bad("limit_tol", "must be positive");
        }
        if self.initial == Initial::Snapshot && self.snapshot.is_none() {
            return bad("snapshot", "required when initial = snapshot");
        }
        if self.samples == 0 {
            return bad("samples", "must be positive");
        }
        self.flow_for(Beta::Finite(1.0)).validate()?;
        self.flow_for(Beta::Infinite).validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        match self.dim {
            1 => Grid::interval(self.n, self.length),
            _ => Grid::new(
                2,
                self.n,
                &[self.length, self.length_y.unwrap_or(self.length)],
            ),
        }
    }

    pub fn flow_for(&self, beta: Beta) -> FlowConfig {
        let base = if beta.is_infinite() {
            FlowConfig::infty_default()
        } else {
            FlowConfig::beta_default()
        };
        self.flow.apply(base)
    }

    pub fn minimax_for(&self, beta: Beta) -> MinimaxConfig {
        MinimaxConfig {
            flow: self.flow_for(beta),
            level_tol: self.level_tol,
            max_rounds: self.max_rounds,
            seed: self.seed,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.m.unwrap_or_else(|| default_sample_size(self.k))
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            beta_cfg: self.minimax_for(Beta::Finite(1.0)),
            infty_cfg: self.minimax_for(Beta::Infinite),
            m: self.m,
            limit_tol: self.limit_tol,
            warm_start: self.warm_start,
        }
    }

    /// Canonical `key = value` listing of every setting that affects results.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "default".into());
        let path = |p: &Option<PathBuf>| opt(p.as_ref().map(|p| p.display().to_string()));
        let betas: Vec<String> = self.betas.iter().map(|b| format!("{b:e}")).collect();
        let f = &self.flow;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("dim", self.dim.to_string());
        put("n", self.n.to_string());
        put("length", format!("{:e}", self.length));
        put("length_y", opt(self.length_y.map(|v| format!("{v:e}"))));
        put("k", self.k.to_string());
        put("beta", self.beta.to_string());
        put("betas", betas.join(","));
        put("dt_init", opt(f.dt_init.map(|v| format!("{v:e}"))));
        put("dt_min", opt(f.dt_min.map(|v| format!("{v:e}"))));
        put(
            "residual_tol",
            opt(f.residual_tol.map(|v| format!("{v:e}"))),
        );
        put("max_steps", opt(f.max_steps.map(|v| v.to_string())));
        put(
            "backtrack_factor",
            opt(f.backtrack_factor.map(|v| format!("{v:e}"))),
        );
        put("record_every", opt(f.record_every.map(|v| v.to_string())));
        put("m", self.sample_size().to_string());
        put("level_tol", format!("{:e}", self.level_tol));
        put("max_rounds", self.max_rounds.to_string());
        put("limit_tol", format!("{:e}", self.limit_tol));
        put("warm_start", self.warm_start.to_string());
        put("seed", self.seed.to_string());
        put("initial", format!("{:?}", self.initial));
        put("snapshot", path(&self.snapshot));
        put("snapshot_v", path(&self.snapshot_v));
        put("samples", self.samples.to_string());
        s
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let cfg = RunConfig::parse(
            "# run\nn = 63 # coarse\nbeta = inf\nbetas = 1, 10, 100\nemit_plots = yes\n\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 63);
        assert_eq!(cfg.beta, Beta::Infinite);
        assert_eq!(cfg.betas, vec![1.0, 10.0, 100.0]);
        assert!(cfg.emit_plots);
    }

    #[test]
    fn unknown_and_bad_keys_name_the_key() {
        let e = RunConfig::parse("n = 63\nbogus_key = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "bogus_key"));
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::parse("n = many\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "n"));
        let e = RunConfig::parse("betas = 10, 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "betas"));
        let e = RunConfig::parse("n = 3\nn = 5\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "n"));
        let e = RunConfig::parse("dt_min = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "dt_min"));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::parse("n = 63\n").unwrap();
        let b = RunConfig::parse("n = 63\nout = elsewhere\n").unwrap();
        let c = RunConfig::parse("n = 63\nseed = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn flow_overrides_apply_to_both_defaults() {
        let cfg = RunConfig::parse("residual_tol = 1e-8\n").unwrap();
        assert_eq!(cfg.flow_for(Beta::Finite(1.0)).residual_tol, 1e-8);
        assert_eq!(cfg.flow_for(Beta::Infinite).residual_tol, 1e-8);
        assert_eq!(
            cfg.flow_for(Beta::Infinite).dt_init,
            FlowConfig::infty_default().dt_init
        );
    }
}
