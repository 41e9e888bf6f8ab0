//! Experiment drivers, configuration grammar, and metric reports.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Lists are
//! comma separated, seed lists also accept an inclusive range `a..b`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, SampledField, SyntheticWind, WindSeries};
use crate::error::{Result, TbnnError};
use crate::filtering::{matrix_exponential, scalar_shift, ExpMethod, ShiftOperator};
use crate::geometry::{build_geometric_graph, local_pca, DimAggregate, PcaKernel, PointCloud};
use crate::neural::{
    masked_sse, train, Activation, GraphClassifier, GraphSample, Mlp, RtnnModel, TnnModel,
    TrainConfig,
};
use crate::sheaf::{assemble_sheaf_laplacian, embed_signal, sample_signal, SheafLaplacian, SheafStructure};
use crate::spectral::eigendecompose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DenoiseTorus,
    ReconstructWind,
    ForecastWind,
    Classify,
    Converge,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        Self::DenoiseTorus,
        Self::ReconstructWind,
        Self::ForecastWind,
        Self::Classify,
        Self::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DenoiseTorus => "denoise-torus",
            Self::ReconstructWind => "reconstruct-wind",
            Self::ForecastWind => "forecast-wind",
            Self::Classify => "classify",
            Self::Converge => "converge",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TbnnError::UnknownKind(s.to_string()))
    }
}

/// Manifold used by the eigen-convergence sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergenceManifold {
    /// `S¹ × S¹ ⊂ ℝ⁴`, intrinsically flat.
    FlatTorus,
    /// The ring torus of the denoising task.
    Torus,
}

impl FromStr for ConvergenceManifold {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-torus" => Ok(Self::FlatTorus),
            "torus" => Ok(Self::Torus),
            other => Err(TbnnError::Config(format!("unknown manifold `{other}` (flat-torus, torus)"))),
        }
    }
}

impl fmt::Display for ConvergenceManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FlatTorus => "flat-torus",
            Self::Torus => "torus",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub expected_n: f64,
    pub eps_n: f64,
    pub eps_pca: f64,
    pub pca_kernel: PcaKernel,
    /// Fixed intrinsic dimension; `None` estimates it with `gamma`.
    pub d_hat: Option<usize>,
    pub gamma: f64,
    pub dim_aggregate: DimAggregate,
    pub exp_method: ExpMethod,

    pub hidden: Vec<usize>,
    pub k: usize,
    pub activation: Activation,
    pub output_activation: Activation,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub discard: bool,
    pub discard_factor: f64,

    pub torus_a: f64,
    pub torus_b: f64,
    pub tau: f64,

    pub mask_prob: f64,
    pub wind_csv: Option<PathBuf>,
    pub synthetic_wind: bool,
    pub synthetic_grid_step: f64,
    pub synthetic_weather: f64,
    pub synthetic_seed: u64,
    pub wind_day: usize,

    pub t_f: usize,
    pub rtnn_layers: usize,
    pub train_days: usize,
    pub test_start: String,

    pub dataset_size: usize,
    pub train_fraction: f64,
    pub readout_hidden: usize,
    pub feature_width: usize,
    pub classify_activations: Vec<Activation>,

    pub converge_manifold: ConvergenceManifold,
    pub converge_ns: Vec<usize>,
    pub converge_eps: Vec<f64>,
    pub converge_eigs: usize,
    pub flat_radius: f64,

    pub dump_fields: bool,
}

impl ExperimentConfig {
    /// Defaults for the given kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            kind,
            seeds: (0..8).collect(),
            expected_n: 100.0,
            eps_n: 0.5,
            eps_pca: 0.8,
            pca_kernel: PcaKernel::Epanechnikov,
            d_hat: Some(2),
            gamma: 0.9,
            dim_aggregate: DimAggregate::Median,
            exp_method: ExpMethod::Pade,
            hidden: vec![8, 4],
            k: 2,
            activation: Activation::Tanh,
            output_activation: Activation::Identity,
            epochs: 10_000,
            lr: 1e-3,
            patience: 5,
            min_delta: 0.0,
            discard: true,
            discard_factor: 5.0,
            torus_a: 0.1,
            torus_b: 0.3,
            tau: 0.1,
            mask_prob: 0.3,
            wind_csv: None,
            synthetic_wind: false,
            synthetic_grid_step: 10.0,
            synthetic_weather: SyntheticWind::default().weather,
            synthetic_seed: SyntheticWind::default().seed,
            wind_day: 0,
            t_f: 20,
            rtnn_layers: 3,
            train_days: 250,
            test_start: "2017-01-01".into(),
            dataset_size: 400,
            train_fraction: 0.8,
            readout_hidden: 8,
            feature_width: 4,
            classify_activations: vec![Activation::Tanh, Activation::Identity],
            converge_manifold: ConvergenceManifold::Torus,
            converge_ns: vec![100, 200, 400],
            converge_eps: vec![0.5, 0.35, 0.25],
            converge_eigs: 6,
            flat_radius: 0.5,
            dump_fields: false,
        };
        match kind {
            ExperimentKind::ReconstructWind => cfg.lr = 1e-2,
            ExperimentKind::ForecastWind => {
                cfg.output_activation = Activation::Tanh;
                cfg.lr = 1e-2;
                cfg.epochs = 200;
                cfg.patience = 20;
            }
            _ => {}
        }
        if kind == ExperimentKind::Converge {
            cfg.seeds = (0..5).collect();
        }
        cfg
    }

    /// Parses the `key = value` grammar. `kind` must be given either in the text or as `fallback`.
    pub fn parse(text: &str, fallback: Option<ExperimentKind>) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut kind = fallback;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TbnnError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "kind" {
                let k: ExperimentKind = value.parse()?;
                if let Some(f) = fallback {
                    if f != k {
                        return Err(TbnnError::Config(format!(
                            "config declares kind `{k}` but `{f}` was requested"
                        )));
                    }
                }
                kind = Some(k);
            } else {
                pairs.push((lineno + 1, key.to_string(), value.to_string()));
            }
        }
        let kind = kind.ok_or_else(|| TbnnError::Config("missing `kind`".into()))?;
        let mut cfg = Self::defaults(kind);
        for (line, key, value) in pairs {
            cfg.set(&key, &value)
                .map_err(|e| TbnnError::Config(format!("line {line}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, fallback: Option<ExperimentKind>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, fallback)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| TbnnError::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(TbnnError::Config(format!("`{key}`: expected true/false, got `{v}`"))),
            }
        }
        match key {
            "seeds" => self.seeds = parse_seeds(value)?,
            "expected_n" => self.expected_n = num(key, value)?,
            "eps_n" => self.eps_n = num(key, value)?,
            "eps_pca" => self.eps_pca = num(key, value)?,
            "pca_kernel" => self.pca_kernel = value.parse()?,
            "d_hat" => {
                self.d_hat = if value == "auto" { None } else { Some(num(key, value)?) };
            }
            "gamma" => self.gamma = num(key, value)?,
            "dim_aggregate" => self.dim_aggregate = value.parse()?,
            "exp_method" => self.exp_method = value.parse()?,
            "hidden" => {
                self.hidden = if value.is_empty() { Vec::new() } else { list(key, value)? };
            }
            "k" => self.k = num(key, value)?,
            "activation" => self.activation = value.parse()?,
            "output_activation" => self.output_activation = value.parse()?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "min_delta" => self.min_delta = num(key, value)?,
            "discard" => self.discard = flag(key, value)?,
            "discard_factor" => self.discard_factor = num(key, value)?,
            "torus_a" => self.torus_a = num(key, value)?,
            "torus_b" => self.torus_b = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "mask_prob" => self.mask_prob = num(key, value)?,
            "wind_csv" => self.wind_csv = Some(PathBuf::from(value)),
            "synthetic_wind" => self.synthetic_wind = flag(key, value)?,
            "synthetic_grid_step" => self.synthetic_grid_step = num(key, value)?,
            "synthetic_weather" => self.synthetic_weather = num(key, value)?,
            "synthetic_seed" => self.synthetic_seed = num(key, value)?,
            "wind_day" => self.wind_day = num(key, value)?,
            "t_f" => self.t_f = num(key, value)?,
            "rtnn_layers" => self.rtnn_layers = num(key, value)?,
            "train_days" => self.train_days = num(key, value)?,
            "test_start" => self.test_start = value.to_string(),
            "dataset_size" => self.dataset_size = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "readout_hidden" => self.readout_hidden = num(key, value)?,
            "feature_width" => self.feature_width = num(key, value)?,
            "classify_activations" => {
                self.classify_activations = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "converge_manifold" => self.converge_manifold = value.parse()?,
            "converge_ns" => self.converge_ns = list(key, value)?,
            "converge_eps" => self.converge_eps = list(key, value)?,
            "converge_eigs" => self.converge_eigs = num(key, value)?,
            "flat_radius" => self.flat_radius = num(key, value)?,
            "dump_fields" => self.dump_fields = flag(key, value)?,
            other => return Err(TbnnError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TbnnError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if !(self.expected_n > 0.0) || !(self.eps_n > 0.0) || !(self.eps_pca > 0.0) {
            return bad("expected_n, eps_n and eps_pca must be positive");
        }
        if self.d_hat == Some(0) {
            return bad("d_hat must be at least 1");
        }
        if self.k == 0 || self.epochs == 0 {
            return bad("k and epochs must be at least 1");
        }
        if !(self.lr >= 0.0) {
            return bad("lr must be nonnegative");
        }
        if self.discard_factor <= 0.0 {
            return bad("discard_factor must be positive");
        }
        match self.kind {
            ExperimentKind::DenoiseTorus if !(self.tau >= 0.0) => bad("tau must be nonnegative"),
            ExperimentKind::ReconstructWind if !(0.0..1.0).contains(&self.mask_prob) => {
                bad("mask_prob must lie in [0, 1)")
            }
            ExperimentKind::ReconstructWind | ExperimentKind::ForecastWind
                if self.wind_csv.is_none() && !self.synthetic_wind =>
            {
                bad("wind experiments need `wind_csv` or the synthetic wind flag")
            }
            ExperimentKind::ForecastWind if self.t_f == 0 || 2 * self.t_f >= self.train_days => {
                bad("forecasting needs 0 < 2 t_f < train_days")
            }
            ExperimentKind::ForecastWind if self.rtnn_layers == 0 => bad("rtnn_layers must be at least 1"),
            ExperimentKind::Classify if self.dataset_size < 10 || !(0.0 < self.train_fraction && self.train_fraction < 1.0) => {
                bad("classification needs at least 10 datapoints and 0 < train_fraction < 1")
            }
            ExperimentKind::Classify if self.classify_activations.is_empty() => bad("classify_activations is empty"),
            ExperimentKind::Converge
                if self.converge_ns.is_empty() || self.converge_ns.len() != self.converge_eps.len() =>
            {
                bad("converge_ns and converge_eps must be nonempty and equally long")
            }
            ExperimentKind::Converge
                if self.converge_ns.windows(2).any(|w| w[1] <= w[0])
                    || self.converge_eps.windows(2).any(|w| w[1] >= w[0]) =>
            {
                bad("converge_ns must increase and converge_eps must decrease")
            }
            _ => Ok(()),
        }
    }

    /// Canonical text form; parsing it back yields the same config.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Ordered key/value echo of every setting.
    pub fn echo(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(",");
        let act = |a: Activation| match a {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        };
        let mut out = vec![
            ("kind", self.kind.to_string()),
            ("seeds", join(self.seeds.iter().map(u64::to_string).collect())),
            ("expected_n", self.expected_n.to_string()),
            ("eps_n", self.eps_n.to_string()),
            ("eps_pca", self.eps_pca.to_string()),
            (
                "pca_kernel",
                match self.pca_kernel {
                    PcaKernel::Epanechnikov => "epanechnikov",
                    PcaKernel::Biweight => "biweight",
                }
                .into(),
            ),
            ("d_hat", self.d_hat.map_or("auto".into(), |d| d.to_string())),
            ("gamma", self.gamma.to_string()),
            (
                "dim_aggregate",
                match self.dim_aggregate {
                    DimAggregate::Median => "median",
                    DimAggregate::Mean => "mean",
                }
                .into(),
            ),
            (
                "exp_method",
                match self.exp_method {
                    ExpMethod::Pade => "pade",
                    ExpMethod::Eigen => "eigen",
                }
                .into(),
            ),
            ("hidden", join(self.hidden.iter().map(usize::to_string).collect())),
            ("k", self.k.to_string()),
            ("activation", act(self.activation).into()),
            ("output_activation", act(self.output_activation).into()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("patience", self.patience.to_string()),
            ("min_delta", self.min_delta.to_string()),
            ("discard", self.discard.to_string()),
            ("discard_factor", self.discard_factor.to_string()),
        ];
        match self.kind {
            ExperimentKind::DenoiseTorus => out.extend([
                ("torus_a", self.torus_a.to_string()),
                ("torus_b", self.torus_b.to_string()),
                ("tau", self.tau.to_string()),
            ]),
            ExperimentKind::ReconstructWind | ExperimentKind::ForecastWind => {
                if let Some(p) = &self.wind_csv {
                    out.push(("wind_csv", p.display().to_string()));
                }
                out.extend([
                    ("synthetic_wind", self.synthetic_wind.to_string()),
                    ("synthetic_grid_step", self.synthetic_grid_step.to_string()),
                    ("synthetic_weather", self.synthetic_weather.to_string()),
                    ("synthetic_seed", self.synthetic_seed.to_string()),
                ]);
                if self.kind == ExperimentKind::ReconstructWind {
                    out.extend([
                        ("mask_prob", self.mask_prob.to_string()),
                        ("wind_day", self.wind_day.to_string()),
                    ]);
                } else {
                    out.extend([
                        ("t_f", self.t_f.to_string()),
                        ("rtnn_layers", self.rtnn_layers.to_string()),
                        ("train_days", self.train_days.to_string()),
                        ("test_start", self.test_start.clone()),
                    ]);
                }
            }
            ExperimentKind::Classify => out.extend([
                ("torus_a", self.torus_a.to_string()),
                ("torus_b", self.torus_b.to_string()),
                ("dataset_size", self.dataset_size.to_string()),
                ("train_fraction", self.train_fraction.to_string()),
                ("readout_hidden", self.readout_hidden.to_string()),
                ("feature_width", self.feature_width.to_string()),
                (
                    "classify_activations",
                    join(self.classify_activations.iter().map(|a| act(*a).to_string()).collect()),
                ),
            ]),
            ExperimentKind::Converge => out.extend([
                ("converge_manifold", self.converge_manifold.to_string()),
                ("converge_ns", join(self.converge_ns.iter().map(usize::to_string).collect())),
                ("converge_eps", join(self.converge_eps.iter().map(f64::to_string).collect())),
                ("converge_eigs", self.converge_eigs.to_string()),
                ("flat_radius", self.flat_radius.to_string()),
                ("torus_a", self.torus_a.to_string()),
                ("torus_b", self.torus_b.to_string()),
            ]),
        }
        out.push(("dump_fields", self.dump_fields.to_string()));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            patience: self.patience,
            min_delta: self.min_delta,
            ..TrainConfig::default()
        }
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(output);
        w
    }
}

/// Accepts `0..7` (inclusive) or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let bad = || TbnnError::Config(format!("cannot parse seeds `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Deterministic per-purpose seed derivation.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sheaf, Laplacian and shift operator built from one point cloud.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub sheaf: SheafStructure,
    pub laplacian: SheafLaplacian,
    pub shift: ShiftOperator,
}

/// Runs the discretization pipeline on a point cloud.
pub fn build_bundle(cloud: &PointCloud, cfg: &ExperimentConfig) -> Result<Bundle> {
    let graph = build_geometric_graph(cloud, cfg.eps_n)?;
    let pca = local_pca(cloud, cfg.eps_pca, cfg.pca_kernel)?;
    let basis = match cfg.d_hat {
        Some(d) => pca.basis(d)?,
        None => pca.estimated_basis(cfg.gamma, cfg.dim_aggregate)?,
    };
    let (sheaf, laplacian) = assemble_sheaf_laplacian(graph, basis)?;
    let shift = matrix_exponential(&laplacian, cfg.exp_method)?;
    Ok(Bundle {
        sheaf,
        laplacian,
        shift,
    })
}

/// Metrics of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Final (best) training loss of the primary model; drives the discard rule.
    pub final_loss: f64,
    pub retained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation over the retained runs.
    pub std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub runs: Vec<RunRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub discarded: usize,
    /// Kind-specific derived quantities (e.g. per-n medians of the convergence sweep).
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    pub wall_clock_s: f64,
    pub config: Vec<(String, String)>,
    /// SHA-256 over the canonical config and any input files.
    pub input_hash: String,
}

impl MetricsReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).map(|a| a.mean)
    }

    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.runs.iter().flat_map(|r| r.metrics.keys().cloned()).collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Marks runs whose final loss exceeds `factor × median` (or is non-finite) as discarded.
pub fn apply_discard_rule(runs: &mut [RunRecord], factor: f64) {
    let finite: Vec<f64> = runs.iter().map(|r| r.final_loss).filter(|l| l.is_finite()).collect();
    if finite.is_empty() {
        runs.iter_mut().for_each(|r| r.retained = false);
        return;
    }
    let med = median(&finite);
    for r in runs.iter_mut() {
        r.retained = r.final_loss.is_finite() && r.final_loss <= factor * med;
    }
}

/// Mean and population std of every metric over the retained runs.
pub fn aggregate_runs(runs: &[RunRecord]) -> Result<BTreeMap<String, Aggregate>> {
    let kept: Vec<&RunRecord> = runs.iter().filter(|r| r.retained).collect();
    if kept.is_empty() {
        return Err(TbnnError::EmptyAggregate);
    }
    let mut names: Vec<&String> = kept.iter().flat_map(|r| r.metrics.keys()).collect();
    names.sort();
    names.dedup();
    let mut out = BTreeMap::new();
    for name in names {
        let vals: Vec<f64> = kept.iter().filter_map(|r| r.metrics.get(name).copied()).collect();
        let count = vals.len();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        out.insert(
            name.clone(),
            Aggregate {
                mean,
                std: var.sqrt(),
                count,
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(TbnnError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// Writes the CSV form: one row per seed, then `mean` and `std` rows over retained runs.
pub fn write_report_csv<W: Write>(report: &MetricsReport, writer: W) -> Result<()> {
    if !report.runs.iter().any(|r| r.retained) {
        return Err(TbnnError::EmptyAggregate);
    }
    let names = report.metric_names();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["seed".to_string(), "retained".into(), "final_loss".into()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let fmt = |v: f64| format!("{v:.16e}");
    for r in &report.runs {
        let mut row = vec![r.seed.to_string(), r.retained.to_string(), fmt(r.final_loss)];
        row.extend(names.iter().map(|n| r.metrics.get(n).map_or(String::new(), |v| fmt(*v))));
        w.write_record(&row)?;
    }
    for (label, pick) in [("mean", 0), ("std", 1)] {
        let mut row = vec![label.to_string(), String::new(), String::new()];
        row.extend(names.iter().map(|n| {
            report.aggregate.get(n).map_or(String::new(), |a| fmt(if pick == 0 { a.mean } else { a.std }))
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    if !report.runs.iter().any(|r| r.retained) {
        return Err(TbnnError::EmptyAggregate);
    }
    match format {
        ReportFormat::Json => std::fs::write(path, report.to_json()?)?,
        ReportFormat::Csv => write_report_csv(report, std::fs::File::create(path)?)?,
    }
    Ok(())
}

/// Per-node CSV dump: node index, position, field components.
pub fn write_field_dump(path: &Path, positions: &DMatrix<f64>, fields: &[(&str, &DMatrix<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((1..=positions.ncols()).map(|c| format!("x{c}")));
    for (name, f) in fields {
        header.extend((1..=f.ncols()).map(|c| format!("{name}{c}")));
    }
    w.write_record(&header)?;
    for i in 0..positions.nrows() {
        let mut row = vec![i.to_string()];
        row.extend(positions.row(i).iter().map(|v| format!("{v:.16e}")));
        for (_, f) in fields {
            row.extend(f.row(i).iter().map(|v| format!("{v:.16e}")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    run_experiment_in(cfg, None)
}

/// Like [`run_experiment`]; per-node field dumps go to `dump_dir` when `dump_fields` is set.
pub fn run_experiment_in(cfg: &ExperimentConfig, dump_dir: Option<&Path>) -> Result<MetricsReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut hasher = Sha256::new();
    hasher.update(cfg.to_text().as_bytes());
    let dump = if cfg.dump_fields { dump_dir } else { None };

    let mut summary = BTreeMap::new();
    let mut runs = match cfg.kind {
        ExperimentKind::DenoiseTorus => cfg
            .seeds
            .iter()
            .map(|&s| denoise_run(cfg, s, dump))
            .collect::<Result<Vec<_>>>()?,
        ExperimentKind::ReconstructWind => {
            let series = wind_series(cfg, &mut hasher)?;
            cfg.seeds
                .iter()
                .map(|&s| reconstruct_run(cfg, &series, s, dump))
                .collect::<Result<Vec<_>>>()?
        }
        ExperimentKind::ForecastWind => {
            let series = wind_series(cfg, &mut hasher)?;
            cfg.seeds
                .iter()
                .map(|&s| forecast_run(cfg, &series, s))
                .collect::<Result<Vec<_>>>()?
        }
        ExperimentKind::Classify => cfg
            .seeds
            .iter()
            .map(|&s| classify_run(cfg, s))
            .collect::<Result<Vec<_>>>()?,
        ExperimentKind::Converge => {
            let study = eigen_convergence_study(
                cfg.converge_manifold,
                &cfg.converge_ns,
                &cfg.converge_eps,
                cfg,
            )?;
            for (n, med) in cfg.converge_ns.iter().zip(&study.median_lambda1) {
                summary.insert(format!("median_lambda1_n{n}"), *med);
            }
            summary.insert("nonincreasing".into(), if study.is_nonincreasing() { 1.0 } else { 0.0 });
            study.runs
        }
    };
    let discarded = if cfg.discard && cfg.kind != ExperimentKind::Converge {
        apply_discard_rule(&mut runs, cfg.discard_factor);
        runs.iter().filter(|r| !r.retained).count()
    } else {
        0
    };
    let aggregate = aggregate_runs(&runs)?;
    Ok(MetricsReport {
        schema_version: MetricsReport::SCHEMA_VERSION,
        kind: cfg.kind,
        runs,
        aggregate,
        discarded,
        summary,
        wall_clock_s: start.elapsed().as_secs_f64(),
        config: cfg.echo(),
        input_hash: hex::encode(hasher.finalize()),
    })
}

fn run_record(seed: u64, final_loss: f64, metrics: impl IntoIterator<Item = (&'static str, f64)>) -> RunRecord {
    RunRecord {
        seed,
        metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        final_loss,
        retained: true,
    }
}

/// Trains a feedforward TNN to map `input` to `target` on `shift`, restricted to `mask` nodes.
fn fit_tnn(
    cfg: &ExperimentConfig,
    shift: &ShiftOperator,
    input: &DMatrix<f64>,
    target: &DMatrix<f64>,
    n: usize,
    mask: Option<&[usize]>,
    init_seed: u64,
) -> Result<(TnnModel, f64)> {
    let mut rng = data::rng_for(init_seed);
    let widths = cfg.widths(input.ncols(), target.ncols());
    let mut model = TnnModel::random(&mut rng, &widths, cfg.k, cfg.activation, cfg.output_activation)?;
    let out = train(
        &mut model,
        &cfg.train_config(),
        |m: &TnnModel| {
            let cache = m.forward(shift, input)?;
            let (loss, g) = masked_sse(cache.output(), target, n, mask)?;
            Ok((loss, m.backward(shift, &cache, &g).0))
        },
        None,
    )?;
    Ok((model, out.best_loss))
}

fn fit_mlp(
    cfg: &ExperimentConfig,
    input: &DMatrix<f64>,
    target: &DMatrix<f64>,
    mask: Option<&[usize]>,
    init_seed: u64,
) -> Result<(Mlp, f64)> {
    let mut rng = data::rng_for(init_seed);
    let widths = cfg.widths(input.ncols(), target.ncols());
    let mut model = Mlp::random(&mut rng, &widths, cfg.activation, cfg.output_activation)?;
    let n = input.nrows();
    let out = train(
        &mut model,
        &cfg.train_config(),
        |m: &Mlp| {
            let cache = m.forward(input)?;
            let (loss, g) = masked_sse(cache.output(), target, n, mask)?;
            Ok((loss, m.backward(&cache, &g).0))
        },
        None,
    )?;
    Ok((model, out.best_loss))
}

fn sse_rows(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize, nodes: Option<&[usize]>) -> Result<f64> {
    Ok(masked_sse(a, b, n, nodes)?.0)
}

fn denoise_run(cfg: &ExperimentConfig, seed: u64, dump: Option<&Path>) -> Result<RunRecord> {
    let sample = data::sample_torus_field(cfg.expected_n, cfg.torus_a, cfg.torus_b, seed)?;
    let n = sample.cloud.len();
    let bundle = build_bundle(&sample.cloud, cfg)?;
    let basis = bundle.sheaf.basis();
    let noisy = data::add_awgn(&sample.field, cfg.tau, derive_seed(seed, 1))?;
    let clean_f = sample_signal(&sample.field, basis)?.into_values();
    let noisy_f = sample_signal(&noisy, basis)?.into_values();

    let (tnn, tnn_loss) = fit_tnn(cfg, &bundle.shift, &noisy_f, &noisy_f, n, None, derive_seed(seed, 2))?;
    let tnn_out = tnn.predict(&bundle.shift, &noisy_f)?;

    let mnn_shift = scalar_shift(bundle.sheaf.graph())?;
    let (mnn, mnn_loss) = fit_tnn(cfg, &mnn_shift, &noisy, &noisy, n, None, derive_seed(seed, 3))?;
    let mnn_out = mnn.predict(&mnn_shift, &noisy)?;

    let (mlp, mlp_loss) = fit_mlp(cfg, &noisy, &noisy, None, derive_seed(seed, 4))?;
    let mlp_out = mlp.predict(&noisy)?;

    let nf = n as f64;
    if let Some(dir) = dump {
        let sig = crate::sheaf::BundleSignal::new(tnn_out.clone(), n, basis.d_hat())?;
        let tnn_embedded = embed_signal(&sig, basis)?;
        write_field_dump(
            &dir.join(format!("denoise_seed{seed}.csv")),
            sample.cloud.points(),
            &[("clean", &sample.field), ("noisy", &noisy), ("ddtnn", &tnn_embedded), ("mnn", &mnn_out)],
        )?;
    }
    log::info!("denoise seed {seed}: n={n}, losses tnn={tnn_loss:.4e} mnn={mnn_loss:.4e} mlp={mlp_loss:.4e}");
    Ok(run_record(
        seed,
        tnn_loss,
        [
            ("ddtnn_mse", sse_rows(&tnn_out, &clean_f, n, None)? / nf),
            ("mnn_mse", sse_rows(&mnn_out, &sample.field, n, None)? / nf),
            ("mlp_mse", sse_rows(&mlp_out, &sample.field, n, None)? / nf),
            ("noisy_tangent_mse", sse_rows(&noisy_f, &clean_f, n, None)? / nf),
            ("noisy_ambient_mse", sse_rows(&noisy, &sample.field, n, None)? / nf),
            ("n", nf),
        ],
    ))
}

fn wind_series(cfg: &ExperimentConfig, hasher: &mut Sha256) -> Result<WindSeries> {
    match &cfg.wind_csv {
        Some(path) if path.exists() || !cfg.synthetic_wind => {
            let bytes = std::fs::read(path)?;
            hasher.update(&bytes);
            data::load_wind_csv(bytes.as_slice())
        }
        _ => {
            let days = match cfg.kind {
                ExperimentKind::ForecastWind => 616,
                _ => cfg.wind_day + 1,
            };
            data::synthetic_wind(&SyntheticWind {
                grid_step: cfg.synthetic_grid_step,
                days,
                weather: cfg.synthetic_weather,
                seed: cfg.synthetic_seed,
                ..SyntheticWind::default()
            })
        }
    }
}

/// Draws `Poisson(expected_n)` distinct stations (at most all of them), skipping the poles.
fn choose_stations(lat: &[f64], expected_n: f64, seed: u64) -> Result<Vec<usize>> {
    let mut eligible: Vec<usize> = (0..lat.len()).filter(|&i| (90.0 - lat[i].abs()) > 1e-9).collect();
    if eligible.len() < lat.len() {
        log::warn!("dropping {} polar stations", lat.len() - eligible.len());
    }
    if eligible.len() < 3 {
        return Err(TbnnError::invalid("fewer than three usable wind stations"));
    }
    let mut rng = data::rng_for(seed);
    let target = rand_distr::Poisson::new(expected_n)
        .map(|p| rand_distr::Distribution::<f64>::sample(&p, &mut rng) as usize)
        .map_err(|e| TbnnError::invalid(e.to_string()))?
        .clamp(3, eligible.len());
    eligible.shuffle(&mut rng);
    eligible.truncate(target);
    eligible.sort_unstable();
    Ok(eligible)
}

/// Unit-sphere positions and tangent wind of the chosen stations on one day.
fn station_field(day: &data::WindDay, stations: &[usize]) -> Result<SampledField> {
    let sub = data::WindDay {
        date: day.date.clone(),
        lat: stations.iter().map(|&i| day.lat[i]).collect(),
        lon: stations.iter().map(|&i| day.lon[i]).collect(),
        u: stations.iter().map(|&i| day.u[i]).collect(),
        v: stations.iter().map(|&i| day.v[i]).collect(),
    };
    sub.to_field(1.0)
}

fn reconstruct_run(cfg: &ExperimentConfig, series: &WindSeries, seed: u64, dump: Option<&Path>) -> Result<RunRecord> {
    let day = series
        .days
        .get(cfg.wind_day)
        .ok_or_else(|| TbnnError::Config(format!("wind_day {} beyond the {} loaded days", cfg.wind_day, series.days.len())))?;
    let stations = choose_stations(&day.lat, cfg.expected_n, derive_seed(seed, 10))?;
    let sample = station_field(day, &stations)?;
    let n = sample.cloud.len();
    let bundle = build_bundle(&sample.cloud, cfg)?;
    let basis = bundle.sheaf.basis();

    let masked = data::mask_nodes(n, cfg.mask_prob, derive_seed(seed, 11))?;
    if masked.is_empty() {
        return Err(TbnnError::EmptyMask);
    }
    let mut is_masked = vec![false; n];
    masked.iter().for_each(|&i| is_masked[i] = true);
    let available: Vec<usize> = (0..n).filter(|&i| !is_masked[i]).collect();
    let imputed = data::impute_mean(&sample.field, &available)?;
    let input = sample_signal(&imputed, basis)?.into_values();
    let target = sample_signal(&sample.field, basis)?.into_values();

    let (tnn, tnn_loss) = fit_tnn(cfg, &bundle.shift, &input, &target, n, Some(&available), derive_seed(seed, 12))?;
    let tnn_out = tnn.predict(&bundle.shift, &input)?;
    let mnn_shift = scalar_shift(bundle.sheaf.graph())?;
    let (mnn, _) = fit_tnn(cfg, &mnn_shift, &imputed, &sample.field, n, Some(&available), derive_seed(seed, 13))?;
    let mnn_out = mnn.predict(&mnn_shift, &imputed)?;

    let m = masked.len() as f64;
    let baseline = sse_rows(&input, &target, n, Some(&masked))? / m;
    let ddtnn = sse_rows(&tnn_out, &target, n, Some(&masked))? / m;
    if let Some(dir) = dump {
        let sig = crate::sheaf::BundleSignal::new(tnn_out.clone(), n, basis.d_hat())?;
        write_field_dump(
            &dir.join(format!("reconstruct_seed{seed}.csv")),
            sample.cloud.points(),
            &[("true", &sample.field), ("input", &imputed), ("ddtnn", &embed_signal(&sig, basis)?)],
        )?;
    }
    log::info!("reconstruct seed {seed}: n={n}, masked={masked:?}, ddtnn={ddtnn:.4e} baseline={baseline:.4e}", masked = masked.len());
    Ok(run_record(
        seed,
        tnn_loss,
        [
            ("ddtnn_masked_mse", ddtnn),
            ("mnn_masked_mse", sse_rows(&mnn_out, &sample.field, n, Some(&masked))? / m),
            ("mean_impute_masked_mse", baseline),
            ("relative_gain", 1.0 - ddtnn / baseline),
            ("masked_nodes", m),
            ("n", n as f64),
        ],
    ))
}

/// Window-major batches: element `t` of the returned sequence has one column per window.
fn windows(days: &[DMatrix<f64>], t_f: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let m = days.len() - 2 * t_f;
    let rows = days[0].nrows();
    let cols = days[0].ncols();
    let gather = |offset: usize| -> Vec<DMatrix<f64>> {
        (0..t_f)
            .map(|t| {
                let mut x = DMatrix::zeros(rows, m * cols);
                for s in 0..m {
                    x.columns_mut(s * cols, cols).copy_from(&days[s + offset + t]);
                }
                x
            })
            .collect()
    };
    let inputs = gather(0);
    let targets = gather(t_f);
    let last = &inputs[t_f - 1];
    let persistence = vec![last.clone(); t_f];
    (inputs, targets, persistence)
}

fn sequence_sse(pred: &[DMatrix<f64>], target: &[DMatrix<f64>]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).norm_squared()).sum()
}

fn fit_rtnn(
    cfg: &ExperimentConfig,
    shift: &ShiftOperator,
    inputs: &[DMatrix<f64>],
    targets: &[DMatrix<f64>],
    init_seed: u64,
) -> Result<(RtnnModel, f64)> {
    let mut rng = data::rng_for(init_seed);
    let mut model = RtnnModel::random(&mut rng, cfg.rtnn_layers, cfg.k, cfg.activation, cfg.output_activation)?;
    let out = train(
        &mut model,
        &cfg.train_config(),
        |m: &RtnnModel| {
            let cache = m.forward(shift, inputs)?;
            let outs = cache.outputs();
            let grads: Vec<DMatrix<f64>> = outs.iter().zip(targets).map(|(o, t)| (o - t) * 2.0).collect();
            Ok((sequence_sse(outs, targets), m.backward(shift, &cache, &grads)))
        },
        None,
    )?;
    Ok((model, out.best_loss))
}

fn forecast_run(cfg: &ExperimentConfig, series: &WindSeries, seed: u64) -> Result<RunRecord> {
    series.check_fixed_stations()?;
    let test_start = data::day_index(series, &cfg.test_start)
        .ok_or_else(|| TbnnError::Config(format!("no data on or after {}", cfg.test_start)))?;
    if test_start < cfg.train_days {
        return Err(TbnnError::Config("training and test periods overlap".into()));
    }
    let test_days = (series.days.len() - test_start).min(cfg.train_days);
    if test_days <= 2 * cfg.t_f {
        return Err(TbnnError::Config(format!("only {test_days} test days for t_f = {}", cfg.t_f)));
    }
    let stations = choose_stations(&series.days[0].lat, cfg.expected_n, derive_seed(seed, 20))?;
    let first = station_field(&series.days[0], &stations)?;
    let n = first.cloud.len();
    let bundle = build_bundle(&first.cloud, cfg)?;
    let basis = bundle.sheaf.basis();
    let mut tangent = Vec::with_capacity(series.days.len());
    let mut ambient = Vec::with_capacity(series.days.len());
    for day in series.days[..cfg.train_days].iter().chain(&series.days[test_start..test_start + test_days]) {
        let f = station_field(day, &stations)?.field;
        tangent.push(sample_signal(&f, basis)?.into_values());
        ambient.push(f);
    }
    let (train_t, test_t) = tangent.split_at(cfg.train_days);
    let (train_a, test_a) = ambient.split_at(cfg.train_days);

    let (xin, yin, _) = windows(train_t, cfg.t_f);
    let (rtnn, loss) = fit_rtnn(cfg, &bundle.shift, &xin, &yin, derive_seed(seed, 21))?;
    let (xt, yt, persist) = windows(test_t, cfg.t_f);
    let denom = (yt.len() * (yt[0].ncols()) * n) as f64;
    let rtnn_mse = sequence_sse(&rtnn.predict(&bundle.shift, &xt)?, &yt) / denom;
    let persistence_mse = sequence_sse(&persist, &yt) / denom;

    let mnn_shift = scalar_shift(bundle.sheaf.graph())?;
    let (xa, ya, _) = windows(train_a, cfg.t_f);
    let (rmnn, _) = fit_rtnn(cfg, &mnn_shift, &xa, &ya, derive_seed(seed, 22))?;
    let (xta, yta, _) = windows(test_a, cfg.t_f);
    let rmnn_mse = sequence_sse(&rmnn.predict(&mnn_shift, &xta)?, &yta) / denom;
    log::info!("forecast seed {seed}: n={n}, rtnn={rtnn_mse:.4e} persistence={persistence_mse:.4e} rmnn={rmnn_mse:.4e}");
    Ok(run_record(
        seed,
        loss,
        [
            ("rtnn_mse", rtnn_mse),
            ("rmnn_mse", rmnn_mse),
            ("persistence_mse", persistence_mse),
            ("n", n as f64),
        ],
    ))
}

struct ClassifyData {
    sheaf: Vec<GraphSample>,
    scalar: Vec<GraphSample>,
}

fn classify_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<ClassifyData> {
    let mut rng = data::rng_for(derive_seed(seed, 30));
    let mut sheaf = Vec::with_capacity(cfg.dataset_size);
    let mut scalar = Vec::with_capacity(cfg.dataset_size);
    for j in 0..cfg.dataset_size {
        let label = usize::from(rng.random::<bool>());
        let point_seed = derive_seed(seed, 1000 + j as u64);
        let cloud = if label == 0 {
            data::sample_unit_torus(cfg.expected_n, cfg.torus_a, cfg.torus_b, point_seed)?
        } else {
            data::sample_klein(cfg.expected_n, point_seed)?
        };
        let bundle = build_bundle(&cloud, cfg)?;
        let ones = DMatrix::from_element(cloud.len(), cloud.ambient_dim(), 1.0);
        sheaf.push(GraphSample {
            input: sample_signal(&ones, bundle.sheaf.basis())?.into_values(),
            shift: bundle.shift,
            label,
        });
        scalar.push(GraphSample {
            shift: scalar_shift(bundle.sheaf.graph())?,
            input: ones,
            label,
        });
    }
    Ok(ClassifyData { sheaf, scalar })
}

fn fit_classifier(
    cfg: &ExperimentConfig,
    train_set: &[GraphSample],
    activation: Activation,
    init_seed: u64,
) -> Result<(GraphClassifier, f64)> {
    let mut rng = data::rng_for(init_seed);
    let widths = cfg.widths(train_set[0].input.ncols(), cfg.feature_width);
    let mut model = GraphClassifier::random(&mut rng, &widths, cfg.k, activation, cfg.readout_hidden, 2)?;
    let out = train(&mut model, &cfg.train_config(), |m: &GraphClassifier| m.loss_and_gradients(train_set), None)?;
    Ok((model, out.best_loss))
}

fn classify_run(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let data = classify_dataset(cfg, seed)?;
    let mut order: Vec<usize> = (0..cfg.dataset_size).collect();
    order.shuffle(&mut data::rng_for(derive_seed(seed, 31)));
    let n_train = ((cfg.train_fraction * cfg.dataset_size as f64).round() as usize).clamp(1, cfg.dataset_size - 1);
    let split = |set: &[GraphSample]| -> (Vec<GraphSample>, Vec<GraphSample>) {
        let pick = |idx: &[usize]| idx.iter().map(|&i| set[i].clone()).collect::<Vec<_>>();
        (pick(&order[..n_train]), pick(&order[n_train..]))
    };
    let (sheaf_train, sheaf_test) = split(&data.sheaf);
    let (scalar_train, scalar_test) = split(&data.scalar);
    let mut metrics: Vec<(&'static str, f64)> = Vec::new();
    let mut primary_loss = f64::NAN;
    for (idx, &act) in cfg.classify_activations.iter().enumerate() {
        let (tnn, loss) = fit_classifier(cfg, &sheaf_train, act, derive_seed(seed, 40 + idx as u64))?;
        let (mnn, _) = fit_classifier(cfg, &scalar_train, act, derive_seed(seed, 50 + idx as u64))?;
        if idx == 0 {
            primary_loss = loss;
        }
        let (tk, mk) = match act {
            Activation::Tanh => ("ddtnn_acc_tanh", "mnn_acc_tanh"),
            Activation::Identity => ("ddtnn_acc_identity", "mnn_acc_identity"),
            Activation::Relu => ("ddtnn_acc_relu", "mnn_acc_relu"),
        };
        metrics.push((tk, tnn.accuracy(&sheaf_test)?));
        metrics.push((mk, mnn.accuracy(&scalar_test)?));
    }
    log::info!("classify seed {seed}: {metrics:?}");
    Ok(run_record(seed, primary_loss, metrics))
}

/// Smallest eigenvalues per `(n, seed)` of the convergence sweep.
#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub ns: Vec<usize>,
    pub eps: Vec<f64>,
    /// `eigenvalues[i][s]`: smallest eigenvalues at `ns[i]` for seed `s`.
    pub eigenvalues: Vec<Vec<Vec<f64>>>,
    /// Median over seeds of `λ_1` (its distance from 0) per `n`.
    pub median_lambda1: Vec<f64>,
    pub runs: Vec<RunRecord>,
}

impl ConvergenceStudy {
    pub fn is_nonincreasing(&self) -> bool {
        self.median_lambda1.windows(2).all(|w| w[1] <= w[0])
    }
}

/// For each `(n, ε_n)`: sample, build the sheaf, and record the smallest eigenvalues over `cfg.seeds`.
pub fn eigen_convergence_study(
    manifold: ConvergenceManifold,
    ns: &[usize],
    eps: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ConvergenceStudy> {
    if ns.is_empty() || ns.len() != eps.len() {
        return Err(TbnnError::invalid("need one scale per sample size"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(TbnnError::invalid("sample sizes must increase and scales decrease"));
    }
    let mut eigenvalues = Vec::with_capacity(ns.len());
    let mut per_seed: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); cfg.seeds.len()];
    let mut median_lambda1 = Vec::with_capacity(ns.len());
    for (&n, &eps_n) in ns.iter().zip(eps) {
        let mut at_n = Vec::with_capacity(cfg.seeds.len());
        for (s_idx, &seed) in cfg.seeds.iter().enumerate() {
            let sample_seed = derive_seed(seed, n as u64);
            let cloud = match manifold {
                ConvergenceManifold::FlatTorus => data::sample_flat_torus(n as f64, cfg.flat_radius, sample_seed)?,
                ConvergenceManifold::Torus => data::sample_torus(n as f64, cfg.torus_a, cfg.torus_b, sample_seed)?,
            };
            let graph = build_geometric_graph(&cloud, eps_n)?;
            let pca = local_pca(&cloud, cfg.eps_pca, cfg.pca_kernel)?;
            let basis = match cfg.d_hat {
                Some(d) => pca.basis(d)?,
                None => pca.estimated_basis(cfg.gamma, cfg.dim_aggregate)?,
            };
            let (_, lap) = assemble_sheaf_laplacian(graph, basis)?;
            let dec = eigendecompose(&lap, Some(cfg.converge_eigs.max(1)))?;
            let vals = dec.eigenvalues().to_vec();
            per_seed[s_idx].insert(format!("lambda1_n{n}"), vals[0]);
            log::info!("converge n={n} eps={eps_n} seed={seed}: λ = {:?}", &vals);
            at_n.push(vals);
        }
        let l1: Vec<f64> = at_n.iter().map(|v| v[0].abs()).collect();
        median_lambda1.push(median(&l1));
        eigenvalues.push(at_n);
    }
    let runs = cfg
        .seeds
        .iter()
        .zip(per_seed)
        .map(|(&seed, metrics)| RunRecord {
            seed,
            final_loss: 0.0,
            metrics,
            retained: true,
        })
        .collect();
    Ok(ConvergenceStudy {
        ns: ns.to_vec(),
        eps: eps.to_vec(),
        eigenvalues,
        median_lambda1,
        runs,
    })
}
