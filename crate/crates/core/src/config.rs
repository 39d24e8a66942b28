//! Run configuration and its flat `key = value` text format.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional and falls back to the default listed in
//! [`TrainRunConfig::default`]; unknown keys are rejected so typos surface
//! immediately.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::network::{Activation, Interval, NetworkConfig, NetworkError};
use crate::sampling::{Cylinder, DomainSpec, Refinement, SamplingError, SamplingPlan};
use crate::training::{LossWeights, Mode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    NotFound(PathBuf),
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("key `{0}` given twice")]
    DuplicateKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered `key = value` pairs. Keys are consumed with [`KeyValues::take`];
/// [`KeyValues::finish`] reports whatever is left over.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax(i + 1));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(ConfigError::DuplicateKey(key.to_string()));
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(value) => value.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value,
            }),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.take_parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            Some((key, _)) => Err(ConfigError::UnknownKey(key)),
            None => Ok(()),
        }
    }
}

/// Where labeled data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Analytic Taylor-Green labels generated on the domain box.
    TaylorGreen,
    /// A snapshot CSV file.
    Snapshots(Option<PathBuf>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 4096,
        }
    }
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunConfig {
    pub network: NetworkConfig,
    pub domain: DomainSpec,
    pub sampling: SamplingPlan,
    /// Share of the labeled budget drawn from boundary and initial conditions.
    pub bc_fraction: f64,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub data: DataSource,
    pub train_nus: Vec<f64>,
    pub test_nus: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Write an intermediate checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            domain: DomainSpec::default(),
            sampling: SamplingPlan::default(),
            bc_fraction: 0.2,
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            data: DataSource::Snapshots(None),
            train_nus: crate::data::CYLINDER_TRAIN_NUS.to_vec(),
            test_nus: crate::data::CYLINDER_TEST_NUS.to_vec(),
            epochs: 30_000,
            seed: 0,
            output_dir: None,
            checkpoint_every: 0,
        }
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
            })
        })
        .collect()
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

fn invalid(key: &str, value: String) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value,
    }
}

impl TrainRunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_key_values(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::parse(&text)
    }

    /// Consumes every run key present in `kv`, leaving the rest untouched.
    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self, ConfigError> {
        let mut c = Self::default();

        let n = &mut c.network;
        kv.set("network.fourier_bins", &mut n.fourier_bins)?;
        kv.set("network.fourier_sigma", &mut n.fourier_sigma)?;
        kv.set("network.hidden_layers", &mut n.hidden_layers)?;
        kv.set("network.hidden_width", &mut n.hidden_width)?;
        if let Some(a) = kv.take("network.activation") {
            n.activation = Activation::parse(&a).ok_or_else(|| invalid("network.activation", a))?;
        }

        let d = &mut c.domain;
        kv.set("domain.x_min", &mut d.x.lo)?;
        kv.set("domain.x_max", &mut d.x.hi)?;
        kv.set("domain.y_min", &mut d.y.lo)?;
        kv.set("domain.y_max", &mut d.y.hi)?;
        kv.set("domain.t_min", &mut d.t.lo)?;
        kv.set("domain.t_max", &mut d.t.hi)?;
        kv.set("domain.nu_min", &mut d.nu.lo)?;
        kv.set("domain.nu_max", &mut d.nu.hi)?;
        let mut cyl = d.cylinder.unwrap_or(Cylinder {
            center: [0.0, 0.0],
            diameter: 0.0,
        });
        kv.set("domain.cylinder_x", &mut cyl.center[0])?;
        kv.set("domain.cylinder_y", &mut cyl.center[1])?;
        kv.set("domain.cylinder_diameter", &mut cyl.diameter)?;
        d.cylinder = (cyl.diameter > 0.0).then_some(cyl);

        let s = &mut c.sampling;
        kv.set("sampling.n_labeled", &mut s.n_labeled)?;
        kv.set("sampling.n_residual", &mut s.n_residual)?;
        if let Some(r) = kv.take("sampling.refinement") {
            s.refinement = Refinement::parse(&r).ok_or_else(|| invalid("sampling.refinement", r))?;
        }
        kv.set("sampling.refinement_fraction", &mut s.refinement_fraction)?;
        kv.set("sampling.refinement_radius", &mut s.refinement_radius)?;
        kv.set("sampling.bc_fraction", &mut c.bc_fraction)?;

        let w = &mut c.weights;
        kv.set("weights.data", &mut w.w_data)?;
        kv.set("weights.pde", &mut w.w_pde)?;
        kv.set("weights.bc", &mut w.w_bc)?;
        if let Some(m) = kv.take("weights.mode") {
            w.mode = Mode::parse(&m).ok_or_else(|| invalid("weights.mode", m))?;
        }

        let o = &mut c.optimizer;
        kv.set("optimizer.lr", &mut o.lr)?;
        kv.set("optimizer.beta1", &mut o.beta1)?;
        kv.set("optimizer.beta2", &mut o.beta2)?;
        kv.set("optimizer.eps", &mut o.eps)?;
        kv.set("optimizer.batch_size", &mut o.batch_size)?;

        let path = kv.take("data.path").filter(|p| !p.is_empty()).map(PathBuf::from);
        c.data = match kv.take("data.source").as_deref() {
            None | Some("snapshots") => DataSource::Snapshots(path),
            Some("taylor-green") => DataSource::TaylorGreen,
            Some(other) => return Err(invalid("data.source", other.to_string())),
        };

        if let Some(v) = kv.take("train_nus") {
            c.train_nus = parse_list("train_nus", &v)?;
        }
        if let Some(v) = kv.take("test_nus") {
            c.test_nus = parse_list("test_nus", &v)?;
        }
        kv.set("epochs", &mut c.epochs)?;
        kv.set("seed", &mut c.seed)?;
        c.output_dir = kv.take("output_dir").filter(|p| !p.is_empty()).map(PathBuf::from);
        kv.set("checkpoint_every", &mut c.checkpoint_every)?;
        c.sampling.seed = c.seed;
        Ok(c)
    }

    /// Serializes every key except the output settings, which do not affect
    /// the trained model.
    pub fn model_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let n = &self.network;
        put("network.fourier_bins", n.fourier_bins.to_string());
        put("network.fourier_sigma", format!("{:?}", n.fourier_sigma));
        put("network.hidden_layers", n.hidden_layers.to_string());
        put("network.hidden_width", n.hidden_width.to_string());
        put("network.activation", n.activation.name().to_string());
        let d = &self.domain;
        for (k, v) in [
            ("domain.x_min", d.x.lo),
            ("domain.x_max", d.x.hi),
            ("domain.y_min", d.y.lo),
            ("domain.y_max", d.y.hi),
            ("domain.t_min", d.t.lo),
            ("domain.t_max", d.t.hi),
            ("domain.nu_min", d.nu.lo),
            ("domain.nu_max", d.nu.hi),
        ] {
            put(k, format!("{v:?}"));
        }
        let cyl = d.cylinder.unwrap_or(Cylinder {
            center: [0.0, 0.0],
            diameter: 0.0,
        });
        put("domain.cylinder_x", format!("{:?}", cyl.center[0]));
        put("domain.cylinder_y", format!("{:?}", cyl.center[1]));
        put("domain.cylinder_diameter", format!("{:?}", cyl.diameter));
        let s = &self.sampling;
        put("sampling.n_labeled", s.n_labeled.to_string());
        put("sampling.n_residual", s.n_residual.to_string());
        put("sampling.refinement", s.refinement.name().to_string());
        put("sampling.refinement_fraction", format!("{:?}", s.refinement_fraction));
        put("sampling.refinement_radius", format!("{:?}", s.refinement_radius));
        put("sampling.bc_fraction", format!("{:?}", self.bc_fraction));
        let w = &self.weights;
        put("weights.data", format!("{:?}", w.w_data));
        put("weights.pde", format!("{:?}", w.w_pde));
        put("weights.bc", format!("{:?}", w.w_bc));
        put("weights.mode", w.mode.name().to_string());
        let o = &self.optimizer;
        put("optimizer.lr", format!("{:?}", o.lr));
        put("optimizer.beta1", format!("{:?}", o.beta1));
        put("optimizer.beta2", format!("{:?}", o.beta2));
        put("optimizer.eps", format!("{:?}", o.eps));
        put("optimizer.batch_size", o.batch_size.to_string());
        match &self.data {
            DataSource::TaylorGreen => put("data.source", "taylor-green".to_string()),
            DataSource::Snapshots(path) => {
                put("data.source", "snapshots".to_string());
                if let Some(p) = path {
                    put("data.path", p.display().to_string());
                }
            }
        }
        put("train_nus", format_list(&self.train_nus));
        put("test_nus", format_list(&self.test_nus));
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        out
    }

    /// Full text form, including output settings.
    pub fn to_text(&self) -> String {
        let mut out = self.model_text();
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(out, "output_dir = {}", dir.display());
        }
        let _ = writeln!(out, "checkpoint_every = {}", self.checkpoint_every);
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate()?;
        self.domain.validate()?;
        self.sampling.validate(&self.domain)?;
        self.weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.bc_fraction) {
            return Err(ConfigError::Invalid(format!(
                "bc_fraction {} outside [0, 1]",
                self.bc_fraction
            )));
        }
        let o = &self.optimizer;
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(o.lr > 0.0 && o.eps > 0.0 && unit(o.beta1) && unit(o.beta2) && o.batch_size > 0) {
            return Err(ConfigError::Invalid("optimizer settings out of range".into()));
        }
        if self.train_nus.is_empty() {
            return Err(ConfigError::Invalid("train_nus is empty".into()));
        }
        for &nu in &self.train_nus {
            self.domain.check_nu(nu)?;
        }
        // Held-out values may extrapolate beyond the training range.
        if let Some(&nu) = self.test_nus.iter().find(|&&nu| !(nu > 0.0 && nu.is_finite())) {
            return Err(ConfigError::Invalid(format!("test ν {nu} must be positive")));
        }
        match &self.data {
            DataSource::TaylorGreen => {
                let tau = std::f64::consts::TAU;
                let d = &self.domain;
                let inside = |i: Interval| i.lo >= 0.0 && i.hi <= tau;
                if d.cylinder.is_some() || !inside(d.x) || !inside(d.y) {
                    return Err(ConfigError::Invalid(
                        "taylor-green data needs a domain inside [0, 2π]² without a cylinder".into(),
                    ));
                }
            }
            DataSource::Snapshots(None) => return Err(ConfigError::Invalid("data.path is required".into())),
            DataSource::Snapshots(Some(_)) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = TrainRunConfig::default();
        assert_eq!(TrainRunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "
            # desk-scale run
            network.hidden_layers = 3
            network.hidden_width = 32   # narrow
            domain.cylinder_diameter = 0
            weights.mode = nn
            train_nus = 0.005, 0.01
            test_nus =
            data.source = taylor-green
            seed = 7
        ";
        let c = TrainRunConfig::parse(text).unwrap();
        assert_eq!(c.network.hidden_layers, 3);
        assert_eq!(c.network.hidden_width, 32);
        assert!(c.domain.cylinder.is_none());
        assert_eq!(c.weights.mode, Mode::Nn);
        assert_eq!(c.train_nus, vec![0.005, 0.01]);
        assert!(c.test_nus.is_empty());
        assert_eq!(c.data, DataSource::TaylorGreen);
        assert_eq!((c.seed, c.sampling.seed), (7, 7));
        assert_eq!(TrainRunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_text() {
        assert!(matches!(TrainRunConfig::parse("epochs 3"), Err(ConfigError::Syntax(1))));
        assert!(matches!(TrainRunConfig::parse("epoch = 3"), Err(ConfigError::UnknownKey(k)) if k == "epoch"));
        assert!(matches!(
            TrainRunConfig::parse("epochs = many"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            TrainRunConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::DuplicateKey(_))
        ));
        assert!(matches!(
            TrainRunConfig::load(Path::new("/nonexistent/run.cfg")),
            Err(ConfigError::NotFound(_))
        ));
    }

    #[test]
    fn validation() {
        let mut c = TrainRunConfig::default();
        assert!(c.validate().is_err(), "snapshot source needs a path");
        c.data = DataSource::Snapshots(Some("data.csv".into()));
        c.validate().unwrap();
        c.train_nus.push(0.05);
        assert!(c.validate().is_err());
        c.train_nus.pop();
        c.data = DataSource::TaylorGreen;
        assert!(c.validate().is_err(), "cylinder domain is not a periodic cell");
    }
}
