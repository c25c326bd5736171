//! Command-line front end: data loading, configuration, run orchestration
//! and artifact output (embedding CSV, trace JSON, scatter SVG).

pub mod io;
pub mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::affinity::{Bandwidth, BandwidthSpec};
use crate::error::{Result, SneError};
use crate::landmark::{landmark_embed, LandmarkParams};
use crate::optimizer::run;
use crate::oracle::{check_dof_gradient, check_gradient, random_instance};
use crate::out_of_sample::{KernelMap, DEFAULT_GAMMA};
use crate::synthetic::two_clusters;
use crate::types::{DataMatrix, EmbeddingMatrix, Method, OptimizerConfig, VariantSpec};

use self::io::{load_csv, load_table, write_json, write_matrix, write_text, write_trace};
use self::svg::{color_indices, scatter, Marker};

/// Size, dimension, separation and seed of the bundled demo sample.
pub const DEMO_PER_CLUSTER: usize = 25;
pub const DEMO_DIMS: usize = 10;
pub const DEMO_SEPARATION: f64 = 6.0;
pub const DEMO_SEED: u64 = 2;

/// Largest instance `gradcheck` accepts; the oracle is cubic in `n`.
pub const GRADCHECK_MAX_N: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "sne", version, about = "Stochastic neighbor embedding (SNE, symmetric SNE, t-SNE)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a dataset and write embedding.csv, trace.json and scatter.svg.
    Embed(EmbedArgs),
    /// Place new points with a kernel map fitted to an existing embedding.
    Oos(OosArgs),
    /// Embed random landmarks from random-walk affinities, then map the rest.
    LandmarkEmbed(LandmarkArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Sne,
    Ssne,
    Tsne,
    TsneGdof,
}

impl From<VariantArg> for Method {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sne => Method::Sne,
            VariantArg::Ssne => Method::SymmetricSne,
            VariantArg::Tsne => Method::Tsne,
            VariantArg::TsneGdof => Method::TsneGeneralDof,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV with a header row.
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    pub input: Option<PathBuf>,
    /// Use the bundled two-cluster sample (also written to demo.csv).
    #[arg(long)]
    pub demo: bool,
    /// Column holding point labels (used for plot colors).
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, value_enum, default_value = "tsne")]
    pub variant: VariantArg,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Per-point bandwidths chosen to hit this perplexity (30 if no value given).
    #[arg(long, conflicts_with = "sigma2", num_args = 0..=1, default_missing_value = "30")]
    pub perplexity: Option<f64>,
    /// Shared Gaussian variance (default 1).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Learning rate (default 0.1 for sne, 100 otherwise).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub exaggeration_factor: Option<f64>,
    #[arg(long)]
    pub exaggeration_iters: Option<usize>,
    #[arg(long)]
    pub jitter_std: Option<f64>,
    #[arg(long)]
    pub jitter_iters: Option<usize>,
    /// Disable the momentum term.
    #[arg(long, conflicts_with = "momentum")]
    pub no_momentum: bool,
    /// Enable the momentum term even where it is off by default.
    #[arg(long)]
    pub momentum: bool,
    /// Initial degrees of freedom for tsne-gdof (default max(1, dims - 1)).
    #[arg(long)]
    pub dof: Option<u32>,
    /// Keep the degrees of freedom fixed instead of adapting them.
    #[arg(long)]
    pub fixed_dof: bool,
    /// Stop once the gradient's max-abs entry falls below this.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OosArgs {
    #[arg(long)]
    pub train_data: PathBuf,
    /// Embedding of the training rows (e.g. an embedding.csv).
    #[arg(long)]
    pub train_embedding: PathBuf,
    #[arg(long)]
    pub test_data: PathBuf,
    /// Label column present in both data files.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Kernel width factor relative to each point's nearest-neighbor distance.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LandmarkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Number of landmarks (default max(2, n / 5)).
    #[arg(long)]
    pub landmarks: Option<usize>,
    /// Neighbors per point in the kNN graph (clamped to n - 1).
    #[arg(long, default_value_t = 20)]
    pub knn: usize,
    /// Random walks per landmark.
    #[arg(long, default_value_t = 10_000)]
    pub walks: usize,
    /// Walks longer than this are discarded (default 10 n).
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Variant to check (all four when omitted).
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Degrees of freedom for tsne-gdof (default max(1, dims - 1)).
    #[arg(long)]
    pub dof: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    /// Multiplies the analytic gradient (negative-control hook).
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub corrupt_gradient: f64,
}

/// Fully resolved settings of a run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input: String,
    pub label_column: Option<String>,
    pub variant: Method,
    pub dof: u32,
    pub dims: usize,
    pub bandwidth: BandwidthManifest,
    pub optimizer: OptimizerConfig,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthManifest {
    Sigma2(f64),
    Perplexity(f64),
}

impl From<&BandwidthSpec> for BandwidthManifest {
    fn from(spec: &BandwidthSpec) -> Self {
        match spec.mode {
            Bandwidth::Fixed(s) => BandwidthManifest::Sigma2(s),
            Bandwidth::Perplexity(p) => BandwidthManifest::Perplexity(p),
        }
    }
}

impl OptimArgs {
    pub fn method(&self) -> Method {
        self.variant.into()
    }

    pub fn variant_spec(&self) -> Result<VariantSpec> {
        if self.dims == 0 {
            return Err(SneError::Config("--dims must be at least 1".into()));
        }
        match self.dof {
            Some(d) => VariantSpec::new(self.method(), d),
            None => Ok(VariantSpec::for_dims(self.method(), self.dims)),
        }
    }

    pub fn bandwidth(&self) -> BandwidthSpec {
        match (self.perplexity, self.sigma2) {
            (Some(p), _) => BandwidthSpec::perplexity(p),
            (None, Some(s)) => BandwidthSpec::fixed(s),
            (None, None) => BandwidthSpec::default(),
        }
    }

    /// Method defaults with every explicitly given flag applied on top.
    pub fn config(&self) -> Result<OptimizerConfig> {
        let mut c = OptimizerConfig::for_method(self.method());
        c.seed = self.seed;
        if let Some(v) = self.lr {
            c.learning_rate = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.exaggeration_factor {
            c.exaggeration_factor = v;
        }
        if let Some(v) = self.exaggeration_iters {
            c.exaggeration_iters = v;
        }
        if let Some(v) = self.jitter_std {
            c.jitter_std = v;
        }
        if let Some(v) = self.jitter_iters {
            c.jitter_iters = v;
        }
        if self.no_momentum {
            c.use_momentum = false;
        }
        if self.momentum {
            c.use_momentum = true;
        }
        if self.fixed_dof {
            c.adapt_dof = false;
        }
        if let Some(v) = self.tol {
            c.convergence_tol = v;
        }
        c.validate()?;
        Ok(c)
    }
}

type Loaded = (DataMatrix, Option<Vec<String>>, String);

fn load_input(input: &InputArgs, out_dir: &Path) -> Result<Loaded> {
    if input.demo {
        let (data, labels) = two_clusters(DEMO_PER_CLUSTER, DEMO_DIMS, DEMO_SEPARATION, DEMO_SEED);
        write_matrix(&out_dir.join("demo.csv"), "x", data.points(), Some(&labels))?;
        return Ok((data, Some(labels), "demo".into()));
    }
    let path = input.input.as_deref().expect("clap requires --input without --demo");
    let (data, labels) = load_csv(path, input.label_column.as_deref())?;
    Ok((data, labels, path.display().to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| SneError::Io { path: dir.to_path_buf(), source })
}

fn manifest(command: &str, input: String, label_column: Option<String>, optim: &OptimArgs, out_dir: &Path) -> Result<RunManifest> {
    let variant = optim.variant_spec()?;
    Ok(RunManifest {
        command: command.into(),
        input,
        label_column,
        variant: variant.method(),
        dof: variant.dof(),
        dims: optim.dims,
        bandwidth: (&optim.bandwidth()).into(),
        optimizer: optim.config()?,
        out_dir: out_dir.to_path_buf(),
        gamma: None,
        landmarks: None,
        knn: None,
        walks: None,
        max_steps: None,
    })
}

pub fn embed(args: &EmbedArgs) -> Result<()> {
    let (variant, config, bandwidth) = (args.optim.variant_spec()?, args.optim.config()?, args.optim.bandwidth());
    create_dir(&args.out_dir)?;
    let (data, labels, source) = load_input(&args.input, &args.out_dir)?;
    let m = manifest("embed", source, args.input.label_column.clone(), &args.optim, &args.out_dir)?;

    let (embedding, trace) = run(&data, &variant, &bandwidth, args.optim.dims, &config)?;
    let dir = &args.out_dir;
    write_matrix(&dir.join("embedding.csv"), "y", embedding.points(), None)?;
    write_trace(&dir.join("trace.json"), &trace)?;
    let colors = color_indices(labels.as_deref(), data.n());
    write_text(&dir.join("scatter.svg"), &scatter(embedding.points(), &colors, &vec![Marker::Solid; data.n()]))?;
    write_json(&dir.join("manifest.json"), &m)
}

pub fn oos(args: &OosArgs) -> Result<()> {
    let label = args.label_column.as_deref();
    let (train, train_labels) = load_csv(&args.train_data, label)?;
    let (train_emb, _) = load_table(&args.train_embedding, None)?;
    let (test, test_labels) = load_table(&args.test_data, label)?;
    if train_emb.nrows() != train.n() {
        return Err(SneError::Shape(format!(
            "training embedding has {} rows but training data has {}",
            train_emb.nrows(),
            train.n()
        )));
    }
    if test.nrows() == 0 {
        return Err(SneError::Data(format!("{}: no test rows", args.test_data.display())));
    }
    let train_emb = EmbeddingMatrix::new(train_emb)?;
    let map = KernelMap::fit(&train, &train_emb, args.gamma)?;
    let placed = map.transform(&test)?;

    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    write_matrix(&dir.join("test_embedding.csv"), "y", placed.points(), None)?;

    let (n_train, n_test) = (train.n(), test.nrows());
    let all_points = ndarray::concatenate(ndarray::Axis(0), &[train_emb.points().view(), placed.points().view()])
        .map_err(|e| SneError::Shape(e.to_string()))?;
    let all_labels: Option<Vec<String>> = train_labels.zip(test_labels).map(|(a, b)| a.into_iter().chain(b).collect());
    let colors = color_indices(all_labels.as_deref(), n_train + n_test);
    let markers: Vec<Marker> = (0..n_train + n_test)
        .map(|i| if i < n_train { Marker::Solid } else { Marker::Hollow })
        .collect();
    write_text(&dir.join("scatter.svg"), &scatter(&all_points, &colors, &markers))?;

    #[derive(Serialize)]
    struct OosManifest<'a> {
        command: &'a str,
        train_data: &'a Path,
        train_embedding: &'a Path,
        test_data: &'a Path,
        label_column: Option<&'a str>,
        gamma: f64,
        rank: usize,
        full_rank: bool,
        out_dir: &'a Path,
    }
    write_json(
        &dir.join("manifest.json"),
        &OosManifest {
            command: "oos",
            train_data: &args.train_data,
            train_embedding: &args.train_embedding,
            test_data: &args.test_data,
            label_column: label,
            gamma: args.gamma,
            rank: map.rank(),
            full_rank: map.is_full_rank(),
            out_dir: &args.out_dir,
        },
    )
}

pub fn landmark(args: &LandmarkArgs) -> Result<()> {
    let (variant, config) = (args.optim.variant_spec()?, args.optim.config()?);
    create_dir(&args.out_dir)?;
    let (data, labels, source) = load_input(&args.input, &args.out_dir)?;
    let n = data.n();
    let params = LandmarkParams {
        landmarks: args.landmarks.unwrap_or((n / 5).max(2)),
        k: args.knn,
        walks_per_landmark: args.walks,
        max_steps: args.max_steps,
        gamma: args.gamma,
    };
    let mut m = manifest("landmark-embed", source, args.input.label_column.clone(), &args.optim, &args.out_dir)?;
    m.gamma = Some(params.gamma);
    m.landmarks = Some(params.landmarks);
    m.knn = Some(params.k.min(n - 1));
    m.walks = Some(params.walks_per_landmark);
    m.max_steps = Some(params.max_steps.unwrap_or(10 * n));

    let result = landmark_embed(&data, &params, &variant, args.optim.dims, &config)?;
    let dir = &args.out_dir;
    write_matrix(&dir.join("embedding.csv"), "y", result.full_embedding.points(), None)?;
    write_matrix(&dir.join("landmark_embedding.csv"), "y", result.landmark_embedding.points(), None)?;
    let text: String = std::iter::once("index".to_string())
        .chain(result.landmarks.iter().map(|l| l.to_string()))
        .map(|line| line + "\n")
        .collect();
    write_text(&dir.join("landmarks.csv"), &text)?;
    write_trace(&dir.join("trace.json"), &result.trace)?;
    let mut markers = vec![Marker::Solid; n];
    result.landmarks.iter().for_each(|&l| markers[l] = Marker::Landmark);
    let colors = color_indices(labels.as_deref(), n);
    write_text(&dir.join("scatter.svg"), &scatter(result.full_embedding.points(), &colors, &markers))?;
    write_json(&dir.join("manifest.json"), &m)
}

/// Runs the checks and writes one line per result; returns whether all passed.
pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<bool> {
    if !(2..=GRADCHECK_MAX_N).contains(&args.n) {
        return Err(SneError::Config(format!("gradcheck needs 2 <= n <= {GRADCHECK_MAX_N}, got {}", args.n)));
    }
    if args.dims == 0 {
        return Err(SneError::Config("--dims must be at least 1".into()));
    }
    if !(args.threshold > 0.0) {
        return Err(SneError::Config("--threshold must be positive".into()));
    }
    let methods: Vec<Method> = match args.variant {
        Some(v) => vec![v.into()],
        None => Method::ALL.to_vec(),
    };
    let write_err = |source| SneError::Io { path: PathBuf::from("<stdout>"), source };
    let mut all_passed = true;
    for method in methods {
        let variant = match args.dof {
            Some(d) => VariantSpec::new(method, d)?,
            None => VariantSpec::for_dims(method, args.dims),
        };
        let (p, y) = random_instance(method, args.n, args.dims, args.seed)?;
        let report = check_gradient(&variant, &p, &y, args.threshold, args.corrupt_gradient)?;
        all_passed &= report.passed;
        writeln!(
            out,
            "{:<10} y-gradient   max_rel_err {:.3e}  threshold {:.1e}  {}",
            method.name(),
            report.max_rel_error,
            report.threshold,
            if report.passed { "PASS" } else { "FAIL" }
        )
        .map_err(write_err)?;
        if method == Method::TsneGeneralDof {
            let c = check_dof_gradient(&p, &y, variant.dof())?;
            all_passed &= c.sign_agrees;
            let verdict = match (c.sign_checked, c.sign_agrees) {
                (false, _) => "sign unchecked",
                (true, true) => "sign PASS",
                (true, false) => "sign FAIL",
            };
            writeln!(
                out,
                "{:<10} dof-gradient analytic {:.6e}  numeric {:.6e}  residual {:.3e}  dof {}  {}",
                method.name(),
                c.analytic,
                c.numeric,
                c.residual,
                variant.dof(),
                verdict
            )
            .map_err(write_err)?;
        }
    }
    Ok(all_passed)
}

/// Exit code for a parsed command line: 0 success, 1 usage, 2 data,
/// 3 numeric failure (including a failed gradient check).
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Embed(a) => embed(a).map(|_| 0),
        Command::Oos(a) => oos(a).map(|_| 0),
        Command::LandmarkEmbed(a) => landmark(a).map(|_| 0),
        Command::Gradcheck(a) => gradcheck(a, out).map(|ok| if ok { 0 } else { 3 }),
    }
}
