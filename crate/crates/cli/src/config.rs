//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known and may appear once; `seed` and `method` are mandatory. Relative
//! paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lsp_core::baselines::{DpParams, Mechanism};
use lsp_core::data::{ColumnRef, DelimitedSchema};
use lsp_core::training::TrainConfig;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Lsp,
    Raw,
    KAnonymity,
    Dp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lsp => "lsp",
            Method::Raw => "raw",
            Method::KAnonymity => "k_anonymity",
            Method::Dp => "dp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        n_per_class: usize,
        n_features: usize,
    },
    Delimited {
        path: PathBuf,
        schema: DelimitedSchema,
    },
    /// Image/label IDX pair; odd rows are re-rendered as a synthetic second
    /// domain that becomes the sensitive label.
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelShape {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KAnonParams {
    pub k: usize,
    /// `None` uses every feature column.
    pub quasi_ids: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalToggles {
    pub fidelity: bool,
    pub fairness: bool,
    pub latency: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchParams {
    pub batch_sizes: Vec<usize>,
    pub repetitions: usize,
    pub hardware: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub method: Method,
    pub data: DataSource,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub model: ModelShape,
    pub kanon: KAnonParams,
    pub dp: DpParams,
    pub eval: EvalToggles,
    pub bench: BenchParams,
    pub output_dir: PathBuf,
    pub compare_reports: Vec<PathBuf>,
}

const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "method",
    "output_dir",
    "data.source",
    "data.n_per_class",
    "data.n_features",
    "data.path",
    "data.delimiter",
    "data.header",
    "data.utility_column",
    "data.sensitive_column",
    "data.feature_columns",
    "data.images",
    "data.labels",
    "data.train_fraction",
    "lsp.z_s_dim",
    "lsp.z_ns_dim",
    "lsp.lambda_priv",
    "lsp.alpha_sens",
    "lsp.epochs",
    "lsp.batch_size",
    "lsp.learning_rate",
    "lsp.disc_lr_scale",
    "lsp.checkpoint_every",
    "lsp.encoder_hidden",
    "lsp.decoder_hidden",
    "lsp.disc_hidden",
    "k_anonymity.k",
    "k_anonymity.quasi_ids",
    "dp.epsilon",
    "dp.delta",
    "dp.clip_bound",
    "dp.mechanism",
    "eval.fidelity",
    "eval.fairness",
    "eval.latency",
    "bench.batch_sizes",
    "bench.repetitions",
    "bench.hardware",
    "compare.reports",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parsed<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| CliError::Config(format!("line {line}: cannot parse `{key}` value `{v}`"))),
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        match self.take(key) {
            None => Err(CliError::Config(format!("missing required key `{key}`"))),
            Some((line, v)) => v
                .parse()
                .map_err(|_| CliError::Config(format!("line {line}: cannot parse `{key}` value `{v}`"))),
        }
    }

    fn list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some((line, v)) => parse_list(&v).map_err(|_| {
                CliError::Config(format!(
                    "line {line}: `{key}` must be a comma-separated list of integers"
                ))
            }),
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> Result<PathBuf, CliError> {
        let (_, v) = self
            .take(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))?;
        Ok(base.join(v))
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>, std::num::ParseIntError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| p.trim().parse()).collect()
}

fn column_ref(v: &str) -> ColumnRef {
    match v.parse() {
        Ok(i) => ColumnRef::Index(i),
        Err(_) => ColumnRef::Name(v.to_string()),
    }
}

fn delimiter(v: &str) -> Result<char, CliError> {
    match v {
        "tab" | "\\t" => Ok('\t'),
        "comma" => Ok(','),
        "semicolon" => Ok(';'),
        _ => {
            let mut chars = v.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::Config(format!(
                    "data.delimiter must be a single character, got `{v}`"
                ))),
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line_no}: expected `key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {line_no}: unknown key `{k}`")));
            }
            if map.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(CliError::Config(format!("line {line_no}: duplicate key `{k}`")));
            }
        }
        let mut e = Entries { map };

        let experiment = e
            .take("experiment")
            .map_or_else(|| "experiment".to_string(), |(_, v)| v);
        if experiment.is_empty() || experiment.contains(char::is_whitespace) {
            return Err(CliError::Config(format!(
                "experiment name must be non-empty without whitespace, got `{experiment}`"
            )));
        }
        let seed: u64 = e.required("seed")?;
        let method = match e.take("method") {
            None => return Err(CliError::Config("missing required key `method`".into())),
            Some((line, v)) => match v.as_str() {
                "lsp" => Method::Lsp,
                "raw" => Method::Raw,
                "k_anonymity" => Method::KAnonymity,
                "dp" => Method::Dp,
                other => {
                    return Err(CliError::Config(format!(
                        "line {line}: method must be one of lsp, raw, k_anonymity, dp; got `{other}`"
                    )))
                }
            },
        };
        let output_dir = e
            .take("output_dir")
            .map_or_else(|| base.join("out"), |(_, v)| base.join(v));

        let source = e
            .take("data.source")
            .map_or_else(|| "synthetic".to_string(), |(_, v)| v);
        let data = match source.as_str() {
            "synthetic" => DataSource::Synthetic {
                n_per_class: e.parsed("data.n_per_class", 500)?,
                n_features: e.parsed("data.n_features", lsp_core::data::BASE_FEATURES)?,
            },
            "delimited" => {
                let path = e.path("data.path", base)?;
                let delim = match e.take("data.delimiter") {
                    None => ',',
                    Some((_, v)) => delimiter(&v)?,
                };
                let header = e.parsed("data.header", true)?;
                let (_, util) = e
                    .take("data.utility_column")
                    .ok_or_else(|| CliError::Config("missing required key `data.utility_column`".into()))?;
                let (_, sens) = e
                    .take("data.sensitive_column")
                    .ok_or_else(|| CliError::Config("missing required key `data.sensitive_column`".into()))?;
                let features = e
                    .take("data.feature_columns")
                    .map(|(_, v)| v.split(',').map(|c| column_ref(c.trim())).collect());
                DataSource::Delimited {
                    path,
                    schema: DelimitedSchema {
                        delimiter: delim,
                        header,
                        utility_column: column_ref(&util),
                        sensitive_column: column_ref(&sens),
                        feature_columns: features,
                    },
                }
            }
            "idx" => DataSource::Idx {
                images: e.path("data.images", base)?,
                labels: e.path("data.labels", base)?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "data.source must be synthetic, delimited or idx; got `{other}`"
                )))
            }
        };
        let train_fraction = e.parsed("data.train_fraction", 0.8)?;

        let d = TrainConfig::default();
        let train = TrainConfig {
            z_s_dim: e.parsed("lsp.z_s_dim", d.z_s_dim)?,
            z_ns_dim: e.parsed("lsp.z_ns_dim", d.z_ns_dim)?,
            lambda_priv: e.parsed("lsp.lambda_priv", d.lambda_priv)?,
            alpha_sens: e.parsed("lsp.alpha_sens", d.alpha_sens)?,
            epochs: e.parsed("lsp.epochs", d.epochs)?,
            batch_size: e.parsed("lsp.batch_size", d.batch_size)?,
            learning_rate: e.parsed("lsp.learning_rate", d.learning_rate)?,
            disc_lr_scale: e.parsed("lsp.disc_lr_scale", d.disc_lr_scale)?,
            seed,
            checkpoint_every: e.parsed("lsp.checkpoint_every", d.checkpoint_every)?,
        };
        train.validate().map_err(|err| CliError::Config(err.to_string()))?;
        let shape = lsp_core::model::ModelSpec::new(1, 1, 1, 2);
        let model = ModelShape {
            encoder_hidden: e.list("lsp.encoder_hidden", &shape.encoder_hidden)?,
            decoder_hidden: e.list("lsp.decoder_hidden", &shape.decoder_hidden)?,
            disc_hidden: e.list("lsp.disc_hidden", &shape.disc_hidden)?,
        };

        let kanon = KAnonParams {
            k: e.parsed("k_anonymity.k", 5)?,
            quasi_ids: match e.take("k_anonymity.quasi_ids") {
                None => None,
                Some((_, v)) if v == "all" => None,
                Some((line, v)) => Some(parse_list(&v).map_err(|_| {
                    CliError::Config(format!(
                        "line {line}: k_anonymity.quasi_ids must be `all` or column indices"
                    ))
                })?),
            },
        };
        if kanon.k < 2 {
            return Err(CliError::Config(format!(
                "k_anonymity.k must be at least 2, got {}",
                kanon.k
            )));
        }

        let mechanism = match e.take("dp.mechanism") {
            None => Mechanism::Laplace,
            Some((_, v)) if v == "laplace" => Mechanism::Laplace,
            Some((_, v)) if v == "gaussian" => Mechanism::Gaussian,
            Some((line, v)) => {
                return Err(CliError::Config(format!(
                    "line {line}: dp.mechanism must be laplace or gaussian, got `{v}`"
                )))
            }
        };
        let dp = DpParams {
            epsilon: e.parsed("dp.epsilon", 1.0)?,
            delta: e.parsed("dp.delta", if mechanism == Mechanism::Gaussian { 1e-5 } else { 0.0 })?,
            clip_bound: e.parsed("dp.clip_bound", 1.0)?,
            mechanism,
        };
        dp.validate().map_err(|err| CliError::Config(err.to_string()))?;

        let eval = EvalToggles {
            fidelity: e.parsed("eval.fidelity", false)?,
            fairness: e.parsed("eval.fairness", false)?,
            latency: e.parsed("eval.latency", false)?,
        };
        let bench = BenchParams {
            batch_sizes: e.list("bench.batch_sizes", &[1, 8, 64, 512])?,
            repetitions: e.parsed("bench.repetitions", 10)?,
            hardware: e.take("bench.hardware").map(|(_, v)| v).filter(|v| !v.is_empty()),
        };
        let compare_reports = match e.take("compare.reports") {
            None => Vec::new(),
            Some((_, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| base.join(p))
                .collect(),
        };
        debug_assert!(e.map.is_empty(), "unconsumed keys: {:?}", e.map.keys());

        Ok(RunConfig {
            experiment,
            seed,
            method,
            data,
            train_fraction,
            train,
            model,
            kanon,
            dp,
            eval,
            bench,
            output_dir,
            compare_reports,
        })
    }

    /// Canonical rendering of every effective setting, one `key=value` per
    /// line in a fixed order. Output paths are excluded so relocating a run
    /// keeps its fingerprint.
    pub fn canonical(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = vec![
            format!("experiment={}", self.experiment),
            format!("seed={}", self.seed),
            format!("method={}", self.method),
        ];
        match &self.data {
            DataSource::Synthetic {
                n_per_class,
                n_features,
            } => {
                out.push("data.source=synthetic".into());
                out.push(format!("data.n_per_class={n_per_class}"));
                out.push(format!("data.n_features={n_features}"));
            }
            DataSource::Delimited { path, schema } => {
                out.push("data.source=delimited".into());
                out.push(format!("data.path={}", path.display()));
                out.push(format!("data.schema={schema:?}"));
            }
            DataSource::Idx { images, labels } => {
                out.push("data.source=idx".into());
                out.push(format!("data.images={}", images.display()));
                out.push(format!("data.labels={}", labels.display()));
            }
        }
        let t = &self.train;
        out.extend([
            format!("data.train_fraction={}", self.train_fraction),
            format!("lsp.z_s_dim={}", t.z_s_dim),
            format!("lsp.z_ns_dim={}", t.z_ns_dim),
            format!("lsp.lambda_priv={}", t.lambda_priv),
            format!("lsp.alpha_sens={}", t.alpha_sens),
            format!("lsp.epochs={}", t.epochs),
            format!("lsp.batch_size={}", t.batch_size),
            format!("lsp.learning_rate={}", t.learning_rate),
            format!("lsp.disc_lr_scale={}", t.disc_lr_scale),
            format!("lsp.checkpoint_every={}", t.checkpoint_every),
            format!("lsp.encoder_hidden={}", list(&self.model.encoder_hidden)),
            format!("lsp.decoder_hidden={}", list(&self.model.decoder_hidden)),
            format!("lsp.disc_hidden={}", list(&self.model.disc_hidden)),
            format!("k_anonymity.k={}", self.kanon.k),
            format!(
                "k_anonymity.quasi_ids={}",
                self.kanon.quasi_ids.as_deref().map_or("all".to_string(), list)
            ),
            format!("dp.epsilon={}", self.dp.epsilon),
            format!("dp.delta={}", self.dp.delta),
            format!("dp.clip_bound={}", self.dp.clip_bound),
            format!("dp.mechanism={:?}", self.dp.mechanism),
            format!("eval.fidelity={}", self.eval.fidelity),
            format!("eval.fairness={}", self.eval.fairness),
            format!("eval.latency={}", self.eval.latency),
            format!("bench.batch_sizes={}", list(&self.bench.batch_sizes)),
            format!("bench.repetitions={}", self.bench.repetitions),
            format!("bench.hardware={}", self.bench.hardware.as_deref().unwrap_or("")),
        ]);
        out.join("\n")
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
