//! `key = value` run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mesc::affinity::{RegularizerKind, DEFAULT_FLOOR};
use mesc::network::{Mode, NetworkSpec};
use mesc::spectral::DEFAULT_RESTARTS;

/// Every recognised key with its help text, in report order.
pub const KEYS: &[(&str, &str)] = &[
    ("reg", "regularizer on C: me, l1, fro or nuc"),
    ("regs", "comma-separated regularizers for compare"),
    ("lambda1", "weight of the regularizer"),
    ("lambda2", "weight of the self-expressive residual"),
    ("learning_rate", "ADAM step size"),
    (
        "final_learning_rate",
        "decay the solver step geometrically to this value, or none",
    ),
    ("epsilon", "floor applied to max-entropy coefficients"),
    ("steps", "maximum solver iterations"),
    ("tol", "relative objective change that stops the solver"),
    ("zero_diagonal", "force diag(C) = 0: true, false or auto"),
    ("mode", "network training mode: decoupled or coupled"),
    ("pretrain", "pre-train the autoencoder before fine-tuning"),
    ("pretrain_steps", "pre-training steps"),
    ("finetune_steps", "joint fine-tuning steps"),
    ("network", "network preset"),
    ("k", "number of clusters, or auto to count the truth labels"),
    ("restarts", "k-means restarts"),
    ("seed", "random seed"),
    ("subspaces", "number of synthetic subspaces"),
    ("subspace_dim", "dimension of each synthetic subspace"),
    ("samples", "samples per synthetic subspace"),
    ("ambient_dim", "ambient dimension of synthetic features"),
    ("noise", "standard deviation of additive Gaussian noise"),
    ("image_side", "also render side x side images (0 disables)"),
    ("in", "input file or directory"),
    ("out", "output file or directory"),
    ("truth", "ground-truth labels"),
    ("pred", "predicted labels"),
    ("affinity", "affinity matrix for diagnostics"),
    ("checkpoint", "network checkpoint to write"),
    ("report", "report file"),
];

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{} line {line}", path.display()),
            Origin::Flag => f.write_str("command line"),
            Origin::Default => f.write_str("default"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}", path = path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}: expected `key = value`, found {text:?}")]
    Syntax { origin: Origin, text: String },

    #[error("{origin}: unknown key '{key}'")]
    UnknownKey { origin: Origin, key: String },

    #[error("{origin}: duplicate key '{key}' (first set on line {first})")]
    Duplicate {
        origin: Origin,
        key: String,
        first: usize,
    },

    #[error("{origin}: {key}: {reason}")]
    Invalid {
        origin: Origin,
        key: String,
        reason: String,
    },
}

/// Raw settings before typing: file entries overlaid by flags.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

fn is_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RawConfig {
    /// Parses a config file body. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    origin,
                    text: content.to_string(),
                });
            };
            let key = key.trim();
            if !is_key(key) {
                return Err(ConfigError::UnknownKey {
                    origin,
                    key: key.to_string(),
                });
            }
            if let Some((_, Origin::File { line: first, .. })) = raw.entries.get(key) {
                return Err(ConfigError::Duplicate {
                    origin,
                    key: key.to_string(),
                    first: *first,
                });
            }
            raw.entries
                .insert(key.to_string(), (value.trim().to_string(), origin));
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Command-line values replace whatever the file said.
    pub fn set_flag(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !is_key(key) {
            return Err(ConfigError::UnknownKey {
                origin: Origin::Flag,
                key: key.to_string(),
            });
        }
        self.entries
            .insert(key.to_string(), (value.trim().to_string(), Origin::Flag));
        Ok(())
    }

    fn get(&self, key: &'static str) -> Option<(&str, &Origin)> {
        debug_assert!(is_key(key), "{key}");
        self.entries.get(key).map(|(v, o)| (v.as_str(), o))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Solve,
    Train,
    Cluster,
    Eval,
    Compare,
    Heatmap,
}

impl Command {
    pub const ALL: [(Command, &'static str, &'static str); 7] = [
        (
            Command::Generate,
            "generate",
            "write a synthetic union-of-subspaces dataset",
        ),
        (
            Command::Solve,
            "solve",
            "solve for the affinity matrix of a feature matrix",
        ),
        (
            Command::Train,
            "train",
            "train the autoencoder and affinity on images",
        ),
        (
            Command::Cluster,
            "cluster",
            "spectral clustering of an affinity matrix",
        ),
        (
            Command::Eval,
            "eval",
            "score predicted labels against the truth",
        ),
        (
            Command::Compare,
            "compare",
            "solve and score several regularizers on one dataset",
        ),
        (
            Command::Heatmap,
            "heatmap",
            "export an affinity matrix as a graymap",
        ),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|c| c.0 == self).expect("listed").1
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().find(|c| c.1 == name).map(|c| c.0)
    }
}

/// Fully resolved settings. Paths that a subcommand does not use stay at
/// their defaults and are still echoed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub reg: RegularizerKind,
    pub regs: Vec<RegularizerKind>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub epsilon: f64,
    pub steps: usize,
    pub tol: f64,
    pub zero_diagonal: Option<bool>,
    pub mode: Mode,
    pub pretrain: bool,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub network: String,
    pub k: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub subspaces: usize,
    pub subspace_dim: usize,
    pub samples: usize,
    pub ambient_dim: usize,
    pub noise: f64,
    pub image_side: usize,
    pub input: PathBuf,
    pub output: PathBuf,
    pub truth: Option<PathBuf>,
    pub pred: PathBuf,
    pub affinity: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: PathBuf,
}

struct Resolver<'a> {
    raw: &'a RawConfig,
}

impl Resolver<'_> {
    fn invalid(&self, key: &'static str, reason: String) -> ConfigError {
        let origin = self
            .raw
            .get(key)
            .map_or(Origin::Default, |(_, o)| o.clone());
        ConfigError::Invalid {
            origin,
            key: key.to_string(),
            reason,
        }
    }

    fn value<T>(
        &self,
        key: &'static str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        match self.raw.get(key) {
            None => Ok(default),
            Some((text, _)) => parse(text).map_err(|reason| self.invalid(key, reason)),
        }
    }

    fn real(&self, key: &'static str, default: f64, positive: bool) -> Result<f64, ConfigError> {
        let v = self.value(key, default, parse_real)?;
        check_real(key, v, positive).map_err(|r| self.invalid(key, r))?;
        Ok(v)
    }

    fn count(&self, key: &'static str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.value(key, default, |s| {
            s.parse::<usize>()
                .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
        })?;
        if v < min {
            return Err(self.invalid(key, format!("{key} must be at least {min}, got {v}")));
        }
        Ok(v)
    }

    fn path(&self, key: &'static str) -> Option<PathBuf> {
        self.raw
            .get(key)
            .map(|(v, _)| PathBuf::from(v))
            .filter(|p| !p.as_os_str().is_empty())
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("expected a real number, got '{s}'"))
}

fn check_real(key: &str, v: f64, positive: bool) -> Result<(), String> {
    if positive && !(v > 0.0 && v.is_finite()) {
        Err(format!("{key} must be a positive real, got {v}"))
    } else if !(v >= 0.0 && v.is_finite()) {
        Err(format!("{key} must be a non-negative real, got {v}"))
    } else {
        Ok(())
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn is_auto(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "auto" | "none" | "")
}

fn parse_with<T: FromStr<Err = mesc::Error>>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|e| match e {
        mesc::Error::InvalidArgument(m) => m,
        other => other.to_string(),
    })
}

impl RunConfig {
    pub fn resolve(command: Command, raw: &RawConfig) -> Result<Self, ConfigError> {
        let r = Resolver { raw };
        let reg = r.value("reg", RegularizerKind::MaxEntropy, parse_with)?;
        let regs = r.value("regs", RegularizerKind::ALL.to_vec(), |s| {
            let list = s
                .split(',')
                .map(|p| parse_with::<RegularizerKind>(p.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            if list.is_empty() {
                return Err("expected at least one regularizer".into());
            }
            Ok(list)
        })?;
        let lambda1 = r.real("lambda1", 1.0, true)?;
        let lambda2 = r.real("lambda2", 10.0, true)?;
        let learning_rate = r.real("learning_rate", 1e-4, true)?;
        let final_learning_rate = r.value("final_learning_rate", None, |s| {
            if is_auto(s) {
                return Ok(None);
            }
            let v = parse_real(s)?;
            check_real("final_learning_rate", v, true)?;
            Ok(Some(v))
        })?;
        let epsilon = r.real("epsilon", DEFAULT_FLOOR, true)?;
        let steps = r.count("steps", 20_000, 1)?;
        let tol = r.real("tol", 1e-10, false)?;
        let zero_diagonal = r.value("zero_diagonal", None, |s| {
            if is_auto(s) {
                Ok(None)
            } else {
                parse_bool(s).map(Some)
            }
        })?;
        let mode = r.value("mode", Mode::Decoupled, parse_with)?;
        let pretrain = r.value("pretrain", true, parse_bool)?;
        let pretrain_steps = r.count("pretrain_steps", 500, 0)?;
        let finetune_steps = r.count("finetune_steps", 500, 1)?;
        let network = r.value("network", "toy".to_string(), |s| {
            NetworkSpec::preset(s)
                .map(|_| s.to_ascii_lowercase())
                .map_err(|e| e.to_string())
        })?;
        let k = r.value("k", None, |s| {
            if is_auto(s) {
                return Ok(None);
            }
            match s.parse::<usize>() {
                Ok(k) if k >= 2 => Ok(Some(k)),
                _ => Err(format!("k must be an integer of at least 2, got '{s}'")),
            }
        })?;
        let restarts = r.count("restarts", DEFAULT_RESTARTS, 1)?;
        let seed = r.value("seed", 0, |s| {
            s.parse::<u64>()
                .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
        })?;
        let subspaces = r.count("subspaces", 3, 1)?;
        let subspace_dim = r.count("subspace_dim", 3, 1)?;
        let samples = r.count("samples", 40, 1)?;
        let ambient_dim = r.count("ambient_dim", 30, 1)?;
        let noise = r.real("noise", 0.0, false)?;
        let image_side = r.count("image_side", 0, 0)?;

        let (input, output, report) = default_paths(command, &r);
        let input_dir_labels = Some(input.join("labels.txt"));
        let truth = r.path("truth").or(match command {
            Command::Solve | Command::Train | Command::Compare | Command::Heatmap => {
                input_dir_labels
            }
            Command::Eval => Some(PathBuf::from("data/labels.txt")),
            Command::Generate | Command::Cluster => None,
        });
        let pred = r
            .path("pred")
            .unwrap_or_else(|| PathBuf::from("predicted.txt"));
        let affinity = r.path("affinity");
        let checkpoint = r.path("checkpoint");

        Ok(Self {
            command,
            reg,
            regs,
            lambda1,
            lambda2,
            learning_rate,
            final_learning_rate,
            epsilon,
            steps,
            tol,
            zero_diagonal,
            mode,
            pretrain,
            pretrain_steps,
            finetune_steps,
            network,
            k,
            restarts,
            seed,
            subspaces,
            subspace_dim,
            samples,
            ambient_dim,
            noise,
            image_side,
            input,
            output,
            truth,
            pred,
            affinity,
            checkpoint,
            report,
        })
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let path = |p: &Path| p.display().to_string();
        let opt_path = |p: &Option<PathBuf>| p.as_deref().map_or_else(|| "none".into(), path);
        let regs: Vec<&str> = self.regs.iter().map(|r| r.short_name()).collect();
        vec![
            ("reg", self.reg.to_string()),
            ("regs", regs.join(",")),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            (
                "final_learning_rate",
                self.final_learning_rate
                    .map_or_else(|| "none".into(), |v| v.to_string()),
            ),
            ("epsilon", self.epsilon.to_string()),
            ("steps", self.steps.to_string()),
            ("tol", self.tol.to_string()),
            (
                "zero_diagonal",
                opt(self.zero_diagonal.map(|b| b.to_string())),
            ),
            ("mode", self.mode.to_string()),
            ("pretrain", self.pretrain.to_string()),
            ("pretrain_steps", self.pretrain_steps.to_string()),
            ("finetune_steps", self.finetune_steps.to_string()),
            ("network", self.network.clone()),
            ("k", opt(self.k.map(|k| k.to_string()))),
            ("restarts", self.restarts.to_string()),
            ("seed", self.seed.to_string()),
            ("subspaces", self.subspaces.to_string()),
            ("subspace_dim", self.subspace_dim.to_string()),
            ("samples", self.samples.to_string()),
            ("ambient_dim", self.ambient_dim.to_string()),
            ("noise", self.noise.to_string()),
            ("image_side", self.image_side.to_string()),
            ("in", path(&self.input)),
            ("out", path(&self.output)),
            ("truth", opt_path(&self.truth)),
            ("pred", path(&self.pred)),
            ("affinity", opt_path(&self.affinity)),
            ("checkpoint", opt_path(&self.checkpoint)),
            ("report", path(&self.report)),
        ]
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// `(in, out, report)` for a subcommand, with explicit settings winning.
fn default_paths(command: Command, r: &Resolver<'_>) -> (PathBuf, PathBuf, PathBuf) {
    let (input, output) = match command {
        Command::Generate => ("data", "data"),
        Command::Solve | Command::Train => ("data", "affinity.mescmat"),
        Command::Cluster => ("affinity.mescmat", "predicted.txt"),
        Command::Eval => ("data", "eval.report"),
        Command::Compare => ("data", "compare.report"),
        Command::Heatmap => ("affinity.mescmat", ""),
    };
    let input = r.path("in").unwrap_or_else(|| PathBuf::from(input));
    let output = r.path("out").unwrap_or_else(|| match command {
        Command::Heatmap => with_suffix(&input, ".pgm"),
        _ => PathBuf::from(output),
    });
    let report = r.path("report").unwrap_or_else(|| match command {
        Command::Generate => output.join("report.txt"),
        Command::Eval | Command::Compare => output.clone(),
        _ => with_suffix(&output, ".report"),
    });
    (input, output, report)
}
