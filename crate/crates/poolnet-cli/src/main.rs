//! `poolnet` — run pooling-placement experiments from the command line.
//!
//! Subcommands: `train`, `sptp`, `tree`, `routes`, `gradcheck`. Every run
//! writes a JSON report (and a CSV curve where applicable) embedding the
//! fully resolved configuration and seed. Exit codes: 0 success, 1
//! experiment-level failure (divergence, failed gradient check), 2
//! usage/configuration error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use poolnet::arch::{build_spec, ArchName};
use poolnet::data::{default_data_dir, load_cifar10, synthetic_dataset, Split};
use poolnet::experiments::{
    alphabet_disagreement, disagreement_probability, sp_tp_sweep, sp_tp_vgg8, train_spec,
    SpTpConfig, TrainConfig,
};
use poolnet::gradcheck;
use poolnet::optim::hyper_table;
use poolnet::pooling::{route_report, PoolingStack};
use poolnet::report::{curve_rows, epoch_rows, write_csv, write_json, Report};
use poolnet::tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "poolnet", version, about = "Pooling-placement experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an architecture on CIFAR-10 and write report + curve + checkpoint.
    Train(TrainArgs),
    /// Estimate the sequence-pooling vs top-pooling probability curve.
    Sptp(SptpArgs),
    /// Greedy-vs-global disagreement probability on random value trees.
    Tree(TreeArgs),
    /// Trace backpropagation routes through a pooling stack.
    Routes(RoutesArgs),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

/// Usage errors exit 2; experiment failures exit 1.
enum CliError {
    Usage(String),
    Experiment(String),
}

type CliResult = Result<(), CliError>;

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Classify library errors: anything that means "the run itself went wrong"
/// is an experiment failure; the rest are configuration mistakes.
fn lib_err(e: poolnet::Error) -> CliError {
    match e {
        poolnet::Error::Divergence { .. } => CliError::Experiment(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn load_json_config<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))
}

// ---------------------------------------------------------------- train ---

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainArgs {
    /// Architecture name, e.g. a-lenet5-a, a-vgg8, a-vgg16.
    #[arg(long)]
    arch: Option<String>,
    /// JSON config file mirroring these flags; explicit flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CIFAR-10 binary directory (default: $POOLNET_DATA or ./data/cifar10).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train on N synthetic noise images instead of a real dataset (smoke runs).
    #[arg(long)]
    synthetic: Option<usize>,
    /// Disable flip/translate augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Cap minibatches per epoch.
    #[arg(long)]
    max_batches: Option<usize>,
    /// Use the published table verbatim (epochs included).
    #[arg(long)]
    paper_scale: bool,
    /// Desk-scale preset: 20 epochs.
    #[arg(long)]
    desk_scale: bool,
    /// Single-threaded seeded execution (always on; accepted for parity).
    #[arg(long, default_value_t = true)]
    deterministic: bool,
    /// Output directory for report.json / curve.csv / checkpoint.bin.
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
}

impl TrainArgs {
    fn merged(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.take() {
            let base: TrainArgs = load_json_config(&path)?;
            self.arch = self.arch.or(base.arch);
            self.epochs = self.epochs.or(base.epochs);
            self.batch_size = self.batch_size.or(base.batch_size);
            self.seed = self.seed.or(base.seed);
            self.data = self.data.or(base.data);
            self.synthetic = self.synthetic.or(base.synthetic);
            self.no_augment |= base.no_augment;
            self.max_batches = self.max_batches.or(base.max_batches);
            self.paper_scale |= base.paper_scale;
            self.desk_scale |= base.desk_scale;
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct TrainPayload {
    arch: String,
    seed: u64,
    deterministic: bool,
    data_source: String,
    #[serde(flatten)]
    report: poolnet::experiments::TrainReport,
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let args = args.merged()?;
    if args.paper_scale && args.desk_scale {
        return Err(usage("--paper-scale and --desk-scale are mutually exclusive"));
    }
    let arch_name = args.arch.as_deref().ok_or_else(|| usage("missing --arch"))?;
    let arch: ArchName = arch_name
        .parse()
        .map_err(|e: poolnet::Error| usage(e))?;
    let mut hyper = hyper_table(arch).map_err(usage)?;
    if args.desk_scale {
        hyper.epochs = 20;
    }
    if let Some(e) = args.epochs {
        hyper.epochs = e;
    }
    if let Some(b) = args.batch_size {
        hyper.batch_size = b;
    }
    let seed = seed_or_random(args.seed);

    let (train_set, test_set, data_source) = if let Some(n) = args.synthetic {
        let n = n.max(2 * hyper.batch_size);
        (
            synthetic_dataset(n, seed ^ 1, Split::Train),
            synthetic_dataset((n / 5).max(hyper.batch_size), seed ^ 2, Split::Test),
            "synthetic noise images".to_string(),
        )
    } else {
        let dir = args.data.clone().unwrap_or_else(default_data_dir);
        let (tr, te) = load_cifar10(&dir).map_err(|e| {
            usage(format!(
                "dataset not usable at {} ({e}); pass --data, set POOLNET_DATA, or use --synthetic N",
                dir.display()
            ))
        })?;
        (tr, te, format!("CIFAR-10 at {}", dir.display()))
    };

    let mut cfg = TrainConfig::new(hyper, seed);
    if args.no_augment {
        cfg.augment = None;
    }
    cfg.max_batches_per_epoch = args.max_batches;

    eprintln!(
        "training {arch} for {} epochs (batch {}, seed {seed}) on {data_source}",
        cfg.hyper.epochs, cfg.hyper.batch_size
    );
    let (mut net, report) =
        train_spec(&build_spec(arch), &train_set, &test_set, &cfg).map_err(lib_err)?;

    for e in &report.epochs {
        println!(
            "epoch {:>3}: loss {:.4}  train acc {:.4}  test acc {:.4}",
            e.epoch, e.train_loss, e.train_accuracy, e.test_accuracy
        );
    }
    println!("final test accuracy: {:.4}", report.final_test_accuracy);

    write_csv(
        &args.out.join("curve.csv"),
        &["epoch", "loss", "train_acc", "test_acc"],
        &epoch_rows(&report.epochs),
    )
    .map_err(usage)?;
    // Checkpoint: every parameter tensor concatenated in canonical order.
    let flat: Vec<f64> = net
        .params_mut()
        .iter()
        .flat_map(|(p, _, _)| p.iter().copied())
        .collect();
    let n = flat.len();
    poolnet::data::save_tensor(
        &args.out.join("checkpoint.bin"),
        &Tensor::from_vec(Shape::new(1, 1, 1, n), flat).map_err(usage)?,
    )
    .map_err(usage)?;
    let payload = TrainPayload {
        arch: arch.to_string(),
        seed,
        deterministic: args.deterministic,
        data_source,
        report,
    };
    write_json(&args.out.join("report.json"), &Report::new("train", payload)).map_err(usage)?;
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

// ----------------------------------------------------------------- sptp ---

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize, Default)]
#[serde(rename_all = "lowercase")]
enum SptpMode {
    /// Scalar conv chain on Gaussian inputs (Fig 2C setting).
    #[default]
    Chain,
    /// Five-stage deep chain on 32x32 images, 512 channel comparisons.
    Vgg8,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SptpArgs {
    #[arg(long, value_enum)]
    mode: Option<SptpMode>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    extent: Option<usize>,
    /// Conv layers in the chain.
    #[arg(long)]
    layers: Option<usize>,
    /// Comma-separated pooling counts, e.g. 2,4,6.
    #[arg(long)]
    n_values: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    identity_filters: bool,
    /// 1024-square inputs, n in {2,4,6,8,10}, 20000 samples.
    #[arg(long)]
    paper_scale: bool,
    /// 256-square inputs, n in {2,4,6}, 2000 samples (default).
    #[arg(long)]
    desk_scale: bool,
    /// vgg8 mode: CIFAR-10 directory for input images.
    #[arg(long)]
    data: Option<PathBuf>,
    /// vgg8 mode: use N synthetic images instead of a dataset.
    #[arg(long)]
    synthetic: Option<usize>,
    /// vgg8 mode: number of fresh filter chains.
    #[arg(long)]
    filter_sets: Option<usize>,
    /// vgg8 mode: number of input images from the dataset.
    #[arg(long)]
    inputs: Option<usize>,
    /// vgg8 mode: skip the per-stage channel standardization.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value = "runs/sptp")]
    out: PathBuf,
}

impl SptpArgs {
    fn merged(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.take() {
            let base: SptpArgs = load_json_config(&path)?;
            self.mode = self.mode.or(base.mode);
            self.extent = self.extent.or(base.extent);
            self.layers = self.layers.or(base.layers);
            self.n_values = self.n_values.or(base.n_values);
            self.samples = self.samples.or(base.samples);
            self.seed = self.seed.or(base.seed);
            self.identity_filters |= base.identity_filters;
            self.paper_scale |= base.paper_scale;
            self.desk_scale |= base.desk_scale;
            self.data = self.data.or(base.data);
            self.synthetic = self.synthetic.or(base.synthetic);
            self.filter_sets = self.filter_sets.or(base.filter_sets);
            self.inputs = self.inputs.or(base.inputs);
            self.no_normalize |= base.no_normalize;
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct SptpPayload {
    mode: SptpMode,
    seed: u64,
    identity_filters: bool,
    config: serde_json::Value,
    curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CurvePoint {
    n: usize,
    p: f64,
    stderr: f64,
    trials: usize,
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("bad {what}: `{t}`"))))
        .collect()
}

fn cmd_sptp(args: SptpArgs) -> CliResult {
    let mut args = args.merged()?;
    let mode = args.mode.unwrap_or_default();
    if args.paper_scale && args.desk_scale {
        return Err(usage("--paper-scale and --desk-scale are mutually exclusive"));
    }
    let seed = seed_or_random(args.seed);
    args.seed = Some(seed);

    let (curve, echo) = match mode {
        SptpMode::Chain => {
            let extent = args.extent.unwrap_or(if args.paper_scale { 1024 } else { 256 });
            let layers = args.layers.unwrap_or(10);
            let samples = args.samples.unwrap_or(if args.paper_scale { 20_000 } else { 2000 });
            let ns = match &args.n_values {
                Some(s) => parse_usize_list(s, "n value")?,
                None if args.paper_scale => vec![2, 4, 6, 8, 10],
                None => vec![2, 4, 6],
            };
            let base = SpTpConfig {
                extent,
                in_channels: 1,
                depths: vec![1; layers],
                n: ns[0],
                samples,
                seed,
                identity_filters: args.identity_filters,
            };
            base.validate().map_err(usage)?;
            let curve = sp_tp_sweep(&base, &ns).map_err(lib_err)?;
            (curve, serde_json::to_value(&base).map_err(usage)?)
        }
        SptpMode::Vgg8 => {
            let inputs = args.inputs.unwrap_or(100);
            let filter_sets = args.filter_sets.unwrap_or(5);
            let images: Vec<Tensor> = if let Some(n) = args.synthetic {
                let set = synthetic_dataset(n, seed ^ 3, Split::Test);
                (0..set.len()).map(|i| set.image(i)).collect()
            } else {
                let dir = args.data.clone().unwrap_or_else(default_data_dir);
                let (_, test) = load_cifar10(&dir).map_err(|e| {
                    usage(format!(
                        "dataset not usable at {} ({e}); pass --data or --synthetic N",
                        dir.display()
                    ))
                })?;
                let subset = test.subset(inputs, seed ^ 4);
                (0..subset.len()).map(|i| subset.image(i)).collect()
            };
            let est = sp_tp_vgg8(
                &images,
                filter_sets,
                seed,
                args.identity_filters,
                !args.no_normalize,
            )
            .map_err(lib_err)?;
            let echo = serde_json::json!({
                "inputs": images.len(),
                "filter_sets": filter_sets,
                "depths": poolnet::experiments::VGG8_DEPTHS,
                "normalize": !args.no_normalize,
            });
            (vec![(5usize, est)], echo)
        }
    };

    for (n, est) in &curve {
        println!("n = {n}: p = {:.6} ± {:.6} ({} trials)", est.p, est.stderr, est.trials);
    }
    write_csv(&args.out.join("curve.csv"), &["x", "p", "stderr"], &curve_rows(&curve))
        .map_err(usage)?;
    let payload = SptpPayload {
        mode,
        seed,
        identity_filters: args.identity_filters,
        config: echo,
        curve: curve
            .iter()
            .map(|(n, e)| CurvePoint {
                n: *n,
                p: e.p,
                stderr: e.stderr,
                trials: e.trials,
            })
            .collect(),
    };
    write_json(&args.out.join("report.json"), &Report::new("sptp", payload)).map_err(usage)?;
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

// ----------------------------------------------------------------- tree ---

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TreeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated node-value alphabet (e.g. 1,10,1000); omit for
    /// uniform(0,1) values.
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(long, default_value = "runs/tree")]
    out: PathBuf,
}

#[derive(Serialize)]
struct TreePayload {
    depth: usize,
    trials: usize,
    seed: u64,
    alphabet: Option<Vec<f64>>,
    p: f64,
    stderr: f64,
}

fn cmd_tree(args: TreeArgs) -> CliResult {
    let mut args = args;
    if let Some(path) = args.config.take() {
        let base: TreeArgs = load_json_config(&path)?;
        args.depth = args.depth.or(base.depth);
        args.trials = args.trials.or(base.trials);
        args.seed = args.seed.or(base.seed);
        args.alphabet = args.alphabet.or(base.alphabet);
    }
    let depth = args.depth.unwrap_or(3);
    let trials = args.trials.unwrap_or(100_000);
    let seed = seed_or_random(args.seed);
    if depth == 0 || trials == 0 {
        return Err(usage("depth and trials must be positive"));
    }
    let alphabet = match &args.alphabet {
        Some(s) => Some(
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("bad alphabet value `{t}`")))
                })
                .collect::<Result<Vec<f64>, CliError>>()?,
        ),
        None => None,
    };
    if let Some(a) = &alphabet {
        if a.iter().any(|v| *v <= 0.0) {
            return Err(usage("alphabet values must be positive"));
        }
    }
    let est = match &alphabet {
        Some(a) => alphabet_disagreement(depth, a, trials, seed),
        None => disagreement_probability(depth, trials, seed),
    };
    println!(
        "depth {depth}: disagreement p = {:.6} ± {:.6} ({trials} trials)",
        est.p, est.stderr
    );
    let payload = TreePayload {
        depth,
        trials,
        seed,
        alphabet,
        p: est.p,
        stderr: est.stderr,
    };
    write_json(&args.out.join("report.json"), &Report::new("tree", payload)).map_err(usage)?;
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

// --------------------------------------------------------------- routes ---

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RoutesArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Pooling stack, leftmost applied first, e.g. "AP3,MP2".
    #[arg(long)]
    stack: Option<String>,
    /// Input window side; must be a multiple of the stack's reduction factor.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/routes")]
    out: PathBuf,
}

#[derive(Serialize)]
struct RoutesPayload {
    stack: String,
    window: usize,
    seed: u64,
    report: poolnet::pooling::RouteReport,
}

fn cmd_routes(args: RoutesArgs) -> CliResult {
    let mut args = args;
    if let Some(path) = args.config.take() {
        let base: RoutesArgs = load_json_config(&path)?;
        args.stack = args.stack.or(base.stack);
        args.window = args.window.or(base.window);
        args.seed = args.seed.or(base.seed);
    }
    let stack_str = args.stack.as_deref().ok_or_else(|| usage("missing --stack"))?;
    let stack: PoolingStack = stack_str.parse().map_err(usage)?;
    let total = stack.total_window();
    let window = args.window.unwrap_or(total);
    if window == 0 || window % total != 0 {
        return Err(usage(format!(
            "window {window} is not a multiple of the stack's reduction factor {total}"
        )));
    }
    let seed = seed_or_random(args.seed);

    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = window * window;
    let x = Tensor::from_vec(
        Shape::new(1, 1, window, window),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .map_err(usage)?;
    let mask = stack.route_mask(&x).map_err(usage)?;
    let report = route_report(&mask, total).map_err(usage)?;
    for w in &report.windows {
        println!(
            "window ({}, {}): {} routes, bounding box {}x{}, {}",
            w.row,
            w.col,
            w.count,
            w.bounding_box,
            w.bounding_box,
            if w.localized { "localized" } else { "delocalized" }
        );
    }
    let payload = RoutesPayload {
        stack: stack.to_string(),
        window,
        seed,
        report,
    };
    write_json(&args.out.join("report.json"), &Report::new("routes", payload)).map_err(usage)?;
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

// ------------------------------------------------------------ gradcheck ---

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GradcheckArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Run the complete suite (the default; kept as an explicit switch).
    #[arg(long)]
    all: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/gradcheck")]
    out: PathBuf,
}

#[derive(Serialize)]
struct GradcheckPayload {
    trials: usize,
    seed: u64,
    rows: Vec<gradcheck::CheckRow>,
}

fn cmd_gradcheck(args: GradcheckArgs) -> CliResult {
    let mut args = args;
    if let Some(path) = args.config.take() {
        let base: GradcheckArgs = load_json_config(&path)?;
        args.trials = args.trials.or(base.trials);
        args.seed = args.seed.or(base.seed);
    }
    let trials = args.trials.unwrap_or(20);
    let seed = seed_or_random(args.seed);
    if trials == 0 {
        return Err(usage("trials must be positive"));
    }
    let rows = gradcheck::run_all(trials, seed);
    let mut failed = false;
    for row in &rows {
        println!(
            "{:<14} max rel err {:>10.3e}  tol {:>7.0e}  {}",
            row.name,
            row.max_rel_err,
            row.tolerance,
            if row.pass { "pass" } else { "FAIL" }
        );
        failed |= !row.pass;
    }
    let payload = GradcheckPayload { trials, seed, rows };
    write_json(&args.out.join("report.json"), &Report::new("gradcheck", payload))
        .map_err(usage)?;
    println!("wrote {}", args.out.join("report.json").display());
    if failed {
        return Err(CliError::Experiment("one or more gradient checks failed".into()));
    }
    Ok(())
}

// ----------------------------------------------------------------- main ---

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Sptp(args) => cmd_sptp(args),
        Cmd::Tree(args) => cmd_tree(args),
        Cmd::Routes(args) => cmd_routes(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Experiment(msg)) => {
            eprintln!("experiment failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
