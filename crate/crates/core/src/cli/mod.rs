//! Command-line surface. The binary is a thin wrapper around [`run`].

pub mod assets;
pub mod bench;
pub mod io;
pub mod manifest;
pub mod reproduce;

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand};

use crate::adjust::{adjust, marginal_mean_check, MarginalOracle};
use crate::error::Error;
use crate::inference::{density_curve, mean_sd, savage_dickey_report, tail_area};
use crate::law::{NormalMixtureLaw, ScalarLaw};
use crate::links::LinkFunction;
use crate::model::{ModelConfig, NormalPrior, Table};
use crate::sampler::{run_chain, BetaProposal, McmcConfig};

use assets::{Case, Scale, Variant};
use bench::{default_sigma_grid, parse_grid, run_bench, BenchMethod};
use io::{table_csv, write_json, ChainDiagnostics, DrawTable};
use manifest::{sha256_hex, versioned_dir, write_atomic, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "miglmm", version, about = "Marginally interpretable generalized linear mixed models")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory, or output file for `adjust` and `integrate-bench`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model by block Metropolis-Hastings.
    Fit(FitArgs),
    /// Compute adjustments and the residual of the marginal-mean equation.
    Adjust(AdjustArgs),
    /// Accuracy and timing of logistic-normal evaluators.
    IntegrateBench(BenchArgs),
    /// Posterior summaries and density curves from draw files.
    Summarize(SummarizeArgs),
    /// Savage-Dickey Bayes factor for a point null.
    Bf(BfArgs),
    /// Refit a bundled case study and compare with reference values.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Model configuration (TOML, or JSON by extension).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 110_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    /// Chains run in parallel with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Move random effects with each fixed-effect proposal so linear predictors stay put.
    #[arg(long)]
    pub consistent: bool,
    /// Couple the fixed-effect proposal through an approximate marginal covariance.
    #[arg(long)]
    pub correlated: bool,
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    #[arg(long)]
    pub link: LinkFunction,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "kappa_grid", required_unless_present = "kappa_grid")]
    pub kappa: Option<f64>,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub kappa_grid: Option<String>,
    /// Variance of the normal random effect.
    #[arg(long, conflicts_with_all = ["sigma", "mixture"])]
    pub tau2: Option<f64>,
    /// Standard deviation of one independent normal component; repeat for several.
    #[arg(long, conflicts_with = "mixture")]
    pub sigma: Vec<f64>,
    /// Normal mixture as `weight:mean:variance` triples separated by commas.
    #[arg(long)]
    pub mixture: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Standard deviations, `lo:hi:step` or a list; defaults to 0.05:4.00:0.05.
    #[arg(long)]
    pub sigma_grid: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub intervals: usize,
    /// Points per interval.
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Comma-separated: hybrid, ms, gh<order>, gold.
    #[arg(long, default_value = "hybrid,ms,gh30")]
    pub methods: String,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Draw CSV files; chains are pooled.
    #[arg(long = "draws", required = true)]
    pub draws: Vec<PathBuf>,
    /// Thresholds for upper tail areas.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',', default_value = "0")]
    pub thresholds: Vec<f64>,
    /// Points per density curve.
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct BfArgs {
    #[arg(long = "draws", required = true)]
    pub draws: Vec<PathBuf>,
    #[arg(long)]
    pub param: String,
    /// Null value.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub at: f64,
    /// Take the prior of `param` from this model configuration.
    #[arg(long, conflicts_with_all = ["prior_mean", "prior_var"])]
    pub model: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true, requires = "prior_var")]
    pub prior_mean: Option<f64>,
    #[arg(long, requires = "prior_mean")]
    pub prior_var: Option<f64>,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub case: Case,
    #[arg(long, default_value = "mi")]
    pub variant: Variant,
    #[arg(long, default_value = "desk")]
    pub scale: Scale,
}

/// Failure of a command with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

/// 2 configuration, 3 data, 4 numeric or convergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
        Error::Data { .. } | Error::Io(_) | Error::Degenerate(_) => 3,
        Error::Numeric(_) | Error::Convergence(_) | Error::ModelUndefined { .. } | Error::LinkDomain { .. } => 4,
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs a parsed command line. `argv` is recorded in manifests.
pub fn run(cli: Cli, argv: Vec<String>) -> CliResult {
    match &cli.command {
        Command::Fit(a) => fit(&cli, a, argv),
        Command::Adjust(a) => adjust_cmd(&cli, a, argv),
        Command::IntegrateBench(a) => bench_cmd(&cli, a, argv),
        Command::Summarize(a) => summarize(&cli, a, argv),
        Command::Bf(a) => bf(&cli, a, argv),
        Command::Reproduce(a) => reproduce_cmd(&cli, a, argv),
    }
}

/// Parses `argv`, runs, and returns the exit code.
pub fn main_with(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match run(cli, argv) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Sidecar manifest path for a single-file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn fit(cli: &Cli, a: &FitArgs, argv: Vec<String>) -> CliResult {
    if a.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()).into());
    }
    let config_bytes = fs::read(&a.model).map_err(|e| Error::Config(format!("{}: {e}", a.model.display())))?;
    let data_bytes = fs::read(&a.data)?;
    let model = ModelConfig::from_path(&a.model)?;
    let (spec, data) = model.build(&Table::from_reader(data_bytes.as_slice())?)?;
    let seeds: Vec<u64> = (0..a.chains as u64).map(|k| cli.seed.wrapping_add(k)).collect();
    let configs: Vec<McmcConfig> = seeds
        .iter()
        .map(|&seed| {
            let mut c = McmcConfig::new(a.steps, a.burn_in, a.thin, seed);
            c.consistent_proposals = a.consistent;
            if a.correlated {
                c.beta_proposal = BetaProposal::Correlated;
            }
            c
        })
        .collect();
    configs[0].validate()?;

    let dir = out_dir(cli);
    if dir.join("manifest.json").exists() {
        return Err(Error::Config(format!("{} already holds a run; choose another --out", dir.display())).into());
    }
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut manifest = RunManifest::begin(argv, seeds.clone());
    manifest.config_sha256 = Some(sha256_hex(&config_bytes));
    manifest.data_sha256 = Some(sha256_hex(&data_bytes));

    log::info!("fitting {} chain(s) of {} steps", a.chains, a.steps);
    let chains = thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let (spec, data) = (&spec, &data);
                s.spawn(move || run_chain(spec, data, c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numeric("chain worker panicked".into()))))
            .collect::<crate::error::Result<Vec<_>>>()
    })?;

    let mut diagnostics = Vec::new();
    for (k, chain) in chains.iter().enumerate() {
        let name = format!("draws-chain{}.csv", k + 1);
        DrawTable::from_chain(chain).write(&dir.join(&name))?;
        manifest.outputs.push(name);
        diagnostics.push(ChainDiagnostics::new(k + 1, chain));
        for w in &chain.warnings {
            log::warn!("chain {}: {w}", k + 1);
        }
    }
    write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    manifest.outputs.push("diagnostics.json".into());
    manifest.finish(&dir.join("manifest.json"))?;
    for d in &diagnostics {
        println!(
            "chain {}: {} draws, acceptance beta {:.3} alpha {:.3} u {:.3}, {:.1} s",
            d.chain, d.draws, d.acceptance["beta"], d.acceptance["alpha"], d.acceptance["u"], d.wall_time_secs
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn parse_mixture(s: &str) -> crate::error::Result<NormalMixtureLaw> {
    let (mut w, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for part in s.split(',') {
        let x: Vec<f64> = part
            .split(':')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("mixture component '{part}' is not weight:mean:variance")))?;
        if x.len() != 3 {
            return Err(Error::Config(format!("mixture component '{part}' is not weight:mean:variance")));
        }
        w.push(x[0]);
        m.push(x[1]);
        v.push(x[2]);
    }
    NormalMixtureLaw::new(w, m, v).map_err(|e| Error::Config(e.to_string()))
}

fn adjust_cmd(cli: &Cli, a: &AdjustArgs, argv: Vec<String>) -> CliResult {
    let law = if let Some(mix) = &a.mixture {
        ScalarLaw::Mixture(parse_mixture(mix)?)
    } else if let Some(t) = a.tau2 {
        ScalarLaw::normal(t)
    } else if !a.sigma.is_empty() {
        ScalarLaw::normal(a.sigma.iter().map(|s| s * s).sum())
    } else {
        return Err(Error::Config("give --tau2, --sigma or --mixture".into()).into());
    };
    let kappas = match (&a.kappa_grid, a.kappa) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(k)) => vec![k],
        (None, None) => unreachable!("clap requires one of them"),
    };
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in &kappas {
        let adj = adjust(a.link, kappa, &law)?;
        let mean = marginal_mean_check(a.link, kappa, &law, &adj, MarginalOracle::Quadrature { order: 1000 })?;
        let residual = mean - a.link.inverse(kappa)?;
        rows.push(vec![kappa, law.variance(), adj.value, residual]);
    }
    let header: Vec<String> = ["kappa", "tau2", "adjustment", "residual"].map(String::from).to_vec();
    let bytes = table_csv(&header, rows.iter().map(|r| r.iter().copied()))?;
    emit_file(cli, argv, &bytes, vec![])
}

/// Writes a single-file result to `--out` with a sidecar manifest, or to stdout.
fn emit_file(cli: &Cli, argv: Vec<String>, bytes: &[u8], seeds: Vec<u64>) -> CliResult {
    match &cli.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(Error::from)?;
            }
            write_atomic(path, bytes)?;
            let mut m = RunManifest::begin(argv, seeds);
            m.outputs.push(file_name(path));
            m.finish(&sidecar(path))?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{}", String::from_utf8_lossy(bytes)),
    }
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs, argv: Vec<String>) -> CliResult {
    let sigmas = match &a.sigma_grid {
        Some(g) => parse_grid(g)?,
        None => default_sigma_grid(),
    };
    let methods: Vec<BenchMethod> = a.methods.split(',').map(str::parse).collect::<crate::error::Result<_>>()?;
    let rows = run_bench(&sigmas, a.intervals, a.points, &methods)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Numeric(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    emit_file(cli, argv, &bytes, vec![])
}

fn summarize(cli: &Cli, a: &SummarizeArgs, argv: Vec<String>) -> CliResult {
    let table = DrawTable::read_all(&a.draws)?;
    let dir = versioned_dir(&out_dir(cli), "summary")?;
    let mut manifest = RunManifest::begin(argv, vec![]);
    manifest.data_sha256 = Some(hash_files(&a.draws)?);
    let mut header = vec!["parameter".to_string(), "mean".into(), "sd".into()];
    header.extend(a.thresholds.iter().map(|t| format!("tail_above_{t}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Numeric(e.to_string()))?;
    for (name, col) in table.names.iter().zip(&table.columns) {
        let (mean, sd) = mean_sd(col);
        let mut record = vec![name.clone(), format!("{mean:?}"), format!("{sd:?}")];
        record.extend(a.thresholds.iter().map(|&t| format!("{:?}", tail_area(col, t))));
        w.write_record(&record).map_err(|e| Error::Numeric(e.to_string()))?;
        println!("{name:>10} mean {mean:>10.4} sd {sd:>8.4}");
        let curve = density_curve(col, a.grid)?;
        let file = format!("density-{name}.csv");
        let bytes = table_csv(&["x".into(), "density".into()], curve.iter().map(|&(x, d)| [x, d]))?;
        write_atomic(&dir.join(&file), &bytes)?;
        manifest.outputs.push(file);
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    write_atomic(&dir.join("summary.csv"), &bytes)?;
    manifest.outputs.insert(0, "summary.csv".into());
    manifest.finish(&dir.join("manifest.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn hash_files(paths: &[PathBuf]) -> crate::error::Result<String> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(fs::read(p)?);
    }
    Ok(sha256_hex(&all))
}

fn bf(cli: &Cli, a: &BfArgs, argv: Vec<String>) -> CliResult {
    let table = DrawTable::read_all(&a.draws)?;
    let samples = table
        .column(&a.param)
        .ok_or_else(|| Error::Config(format!("draw files have no column {}", a.param)))?;
    let prior = match (&a.model, a.prior_mean, a.prior_var) {
        (Some(path), _, _) => {
            let model = ModelConfig::from_path(path)?;
            let term = model
                .fixed
                .iter()
                .find(|t| t.name == a.param)
                .ok_or_else(|| Error::Config(format!("{} is not a fixed effect of the model", a.param)))?;
            NormalPrior::from(term.prior)
        }
        (None, Some(m), Some(v)) => NormalPrior::new(m, v).map_err(|e| Error::Config(e.to_string()))?,
        _ => return Err(Error::Config("give --model or --prior-mean with --prior-var".into()).into()),
    };
    let report = savage_dickey_report(samples, &prior, a.at)?;
    let dir = versioned_dir(&out_dir(cli), "bf")?;
    let mut manifest = RunManifest::begin(argv, vec![]);
    manifest.data_sha256 = Some(hash_files(&a.draws)?);
    let header: Vec<String> = ["at", "bayes_factor", "bandwidth", "bf_bandwidth_x0.75", "bf_bandwidth_x1.25"]
        .map(String::from)
        .to_vec();
    let bytes = table_csv(&header, [[a.at, report.value, report.bandwidth, report.narrow, report.wide]])?;
    write_atomic(&dir.join("bf.csv"), &bytes)?;
    let curve = density_curve(samples, a.grid)?;
    let bytes = table_csv(
        &["x".into(), "posterior".into(), "prior".into()],
        curve.iter().map(|&(x, d)| [x, d, prior.pdf(x)]),
    )?;
    write_atomic(&dir.join(format!("density-{}.csv", a.param)), &bytes)?;
    manifest.outputs = vec!["bf.csv".into(), format!("density-{}.csv", a.param)];
    manifest.finish(&dir.join("manifest.json"))?;
    println!(
        "Bayes factor for {} = {}: {:.4} (bandwidth x0.75: {:.4}, x1.25: {:.4})",
        a.param, a.at, report.value, report.narrow, report.wide
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn reproduce_cmd(cli: &Cli, a: &ReproduceArgs, argv: Vec<String>) -> CliResult {
    let dir = versioned_dir(&out_dir(cli), &format!("reproduce-{}-{}-{}-seed{}", a.case, a.variant, a.scale, cli.seed))?;
    let mut manifest = RunManifest::begin(argv, vec![cli.seed]);
    manifest.config_sha256 = Some(sha256_hex(a.case.config_toml().as_bytes()));
    manifest.data_sha256 = Some(sha256_hex(a.case.data_csv().as_bytes()));
    log::info!("fitting {} ({}, {} scale)", a.case, a.variant, a.scale);
    let fit = reproduce::fit_case(a.case, a.variant, a.scale, cli.seed)?;
    let report = reproduce::report(&fit, a.scale, cli.seed)?;
    DrawTable::from_chain(&fit.chain).write(&dir.join("draws.csv"))?;
    write_json(&dir.join("diagnostics.json"), &[ChainDiagnostics::new(1, &fit.chain)])?;
    write_json(&dir.join("report.json"), &report)?;
    write_atomic(&dir.join("report.txt"), report.to_string().as_bytes())?;
    manifest.outputs = ["draws.csv", "diagnostics.json", "report.json", "report.txt"].map(String::from).to_vec();
    manifest.finish(&dir.join("manifest.json"))?;
    print!("{report}");
    println!("wrote {}", dir.display());
    if report.passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed()).count();
        Err(Failure { code: 5, message: format!("{failed} comparison(s) outside tolerance") })
    }
}
