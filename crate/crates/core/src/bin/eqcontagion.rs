use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use eqcontagion::cascade_det::{self, InfluenceThreshold};
use eqcontagion::cascade_mc::{
    compare_synthetic, monte_carlo, monte_carlo_with_threads, CascadeSystem, LiabilityMode, McConfig, ShockMagnitude,
    ShockScenario,
};
use eqcontagion::marketdata::{compute_log_returns, descriptive_stats, load_prices, load_region_map, normalize_prices};
use eqcontagion::netbuild::{
    clustering_coefficients, correlation_matrix, group_degree_stats, volatilities, Adjacency, ExposureNetwork,
    FilterMode,
};
use eqcontagion::report::{self, GraphKind, OutputDir, RunManifest};
use eqcontagion::risk::risk_report;
use eqcontagion::{Error, PricePanel};

#[derive(Parser)]
#[command(name = "eqcontagion", version, about = "Correlation networks, tail risk and default cascades for equity panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-return descriptive statistics and normalized prices.
    Stats(CommonArgs),
    /// Empirical VaR / CVaR per asset.
    Risk {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Correlation / exposure matrices, clustering, degree by region and DOT export.
    Network {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Deterministic threshold cascade from one or more seeded defaults.
    CascadeDet {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        theta: Option<f64>,
        /// Ticker to default at iteration 0 (repeatable).
        #[arg(long = "seed-asset")]
        seed_assets: Vec<String>,
        #[arg(long)]
        influence_threshold: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Monte Carlo default cascades over the exposure network.
    CascadeMc {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Monte Carlo on the real network and on an Erdős-Rényi benchmark.
    SynthCompare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Edge probability; defaults to the real network's density.
        #[arg(long)]
        er_p: Option<f64>,
        #[arg(long)]
        er_seed: Option<u64>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Price CSV (`date,TICKER1,...`).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// JSON object mapping tickers to regions.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    theta: Option<f64>,
    /// `exposure` or `correlation`.
    #[arg(long)]
    filter_mode: Option<FilterMode>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    n: Option<usize>,
    /// `general`, `single:TICKER` or `simultaneous:T1+T2`.
    #[arg(long)]
    scenario: Option<String>,
    /// `uniform:LO:HI` or `fixed:S`.
    #[arg(long)]
    shock: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    systemic_cutoff: Option<usize>,
    /// `fixed` or `surviving`.
    #[arg(long)]
    liabilities: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    prices: Option<PathBuf>,
    regions: Option<PathBuf>,
    out: Option<PathBuf>,
    alpha: Option<f64>,
    theta: Option<f64>,
    filter_mode: Option<FilterMode>,
    seed_assets: Option<Vec<String>>,
    influence_threshold: Option<f64>,
    max_iter: Option<usize>,
    n: Option<usize>,
    scenario: Option<String>,
    shock: Option<String>,
    master_seed: Option<u64>,
    systemic_cutoff: Option<usize>,
    liabilities: Option<LiabilityMode>,
    threads: Option<usize>,
    er_p: Option<f64>,
    er_seed: Option<u64>,
}

enum CliError {
    Input(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file).ok_or_else(|| input_err(format!("missing required option --{name}")))
}

struct Context {
    file: FileConfig,
    out: PathBuf,
    panel: PricePanel,
    manifest: RunManifest,
}

impl Context {
    fn load(command: &str, common: CommonArgs) -> CliResult<Self> {
        let file: FileConfig = match &common.config {
            Some(p) => serde_json::from_slice(&read_input(p)?)
                .map_err(|e| input_err(format!("invalid config {}: {e}", p.display())))?,
            None => FileConfig::default(),
        };
        let prices_path = required(common.prices, file.prices.clone(), "prices")?;
        let regions_path = required(common.regions, file.regions.clone(), "regions")?;
        let out = required(common.out, file.out.clone(), "out")?;

        let mut manifest = RunManifest::new(command, json!({}));
        let prices_bytes = read_input(&prices_path)?;
        let region_bytes = read_input(&regions_path)?;
        manifest.add_input(&prices_path, &prices_bytes);
        manifest.add_input(&regions_path, &region_bytes);
        if let Some(cfg) = &common.config {
            manifest.add_input(cfg, &read_input(cfg)?);
        }
        let regions = load_region_map(region_bytes.as_slice())?;
        let panel = load_prices(prices_bytes.as_slice(), &regions)?;
        Ok(Self {
            file,
            out,
            panel,
            manifest,
        })
    }

    fn tickers(&self) -> Vec<String> {
        self.panel.assets().iter().map(|a| a.ticker.clone()).collect()
    }

    fn open(&mut self, config: serde_json::Value) -> CliResult<OutputDir<'_>> {
        let mut manifest = self.manifest.clone();
        manifest.config = config;
        OutputDir::create(&self.out, manifest).map_err(|e| CliError::Internal(e.to_string()))
    }
}

fn internal(e: Error) -> CliError {
    CliError::Internal(e.to_string())
}

fn filter_params(filter: FilterArgs, file: &FileConfig) -> CliResult<(f64, FilterMode)> {
    let theta = required(filter.theta, file.theta, "theta")?;
    let mode = required(filter.filter_mode, file.filter_mode, "filter-mode")?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(input_err(format!("--theta must be >= 0, got {theta}")));
    }
    Ok((theta, mode))
}

struct McParams {
    config: McConfig,
    scenario: ShockScenario,
    threads: Option<usize>,
}

fn mc_params(theta: f64, mode: FilterMode, mc: McArgs, file: &FileConfig) -> CliResult<McParams> {
    let mut config = McConfig::new(theta, mode, mc.master_seed.or(file.master_seed).unwrap_or(0));
    if let Some(n) = mc.n.or(file.n) {
        config.n_simulations = n;
    }
    if let Some(c) = mc.systemic_cutoff.or(file.systemic_cutoff) {
        config.systemic_cutoff = c;
    }
    config.liabilities = match mc.liabilities.as_deref() {
        Some("fixed") => LiabilityMode::Fixed,
        Some("surviving") => LiabilityMode::Surviving,
        Some(other) => return Err(input_err(format!("unknown liabilities mode `{other}`"))),
        None => file.liabilities.unwrap_or_default(),
    };
    let label = mc.scenario.or(file.scenario.clone()).unwrap_or_else(|| "general".into());
    let magnitude: ShockMagnitude = match mc.shock.or(file.shock.clone()) {
        Some(s) => s.parse()?,
        None => ShockMagnitude::default(),
    };
    let scenario = ShockScenario::parse_label(&label)?.with_magnitude(magnitude);
    let threads = mc.threads.or(file.threads);
    if threads == Some(0) {
        return Err(input_err("--threads must be >= 1"));
    }
    config.validate()?;
    Ok(McParams {
        config,
        scenario,
        threads,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Stats(common) => {
            let mut ctx = Context::load("stats", common)?;
            let returns = compute_log_returns(&ctx.panel);
            let stats = descriptive_stats(&returns)?;
            let normalized = normalize_prices(&ctx.panel);
            let tickers = ctx.tickers();
            let dates = ctx.panel.dates().to_vec();
            let mut out = ctx.open(json!({"observations": returns.n_obs()}))?;
            out.write_csv("stats.csv", &report::stats_table(&stats)).map_err(internal)?;
            out.write_csv("normalized_prices.csv", &report::dated_matrix_table(&dates, &tickers, &normalized))
                .map_err(internal)?;
            out.write_csv(
                "log_returns.csv",
                &report::dated_matrix_table(returns.dates(), &tickers, returns.returns()),
            )
            .map_err(internal)?;
            out.finish().map_err(internal)?;
        }
        Command::Risk { common, alpha } => {
            let mut ctx = Context::load("risk", common)?;
            let alpha = alpha.or(ctx.file.alpha).unwrap_or(0.95);
            let returns = compute_log_returns(&ctx.panel);
            let rr = risk_report(&returns, alpha)?;
            let mut out = ctx.open(json!({"alpha": alpha}))?;
            out.write_csv("risk.csv", &report::risk_table(&rr)).map_err(internal)?;
            out.write("risk.json", &report::to_json(&rr).map_err(internal)?).map_err(internal)?;
            out.finish().map_err(internal)?;
        }
        Command::Network { common, filter } => {
            let mut ctx = Context::load("network", common)?;
            let (theta, mode) = filter_params(filter, &ctx.file)?;
            let returns = compute_log_returns(&ctx.panel);
            let rho = correlation_matrix(&returns)?;
            let sigma = volatilities(&returns)?;
            let network = ExposureNetwork::build(&rho, &sigma, &ctx.panel.final_prices(), theta, mode)?;
            let filtered_rho = rho.filtered(theta);
            let (graph_matrix, kind) = match mode {
                FilterMode::Correlation => (filtered_rho.clone(), GraphKind::Undirected),
                FilterMode::Exposure => (network.exposures().clone(), GraphKind::Directed),
            };
            let adjacency = Adjacency::from_matrix(&graph_matrix);
            let metrics = clustering_coefficients(&adjacency, true);
            let assets = ctx.panel.assets().to_vec();
            let degrees = group_degree_stats(&adjacency, &assets)?;
            let tickers = ctx.tickers();
            let mut out = ctx.open(json!({"theta": theta, "filter_mode": mode}))?;
            out.write_csv("correlation.csv", &report::matrix_table(&tickers, rho.matrix()))
                .map_err(internal)?;
            out.write_csv("filtered_correlation.csv", &report::matrix_table(&tickers, &filtered_rho))
                .map_err(internal)?;
            out.write_csv("exposures.csv", &report::matrix_table(&tickers, network.exposures()))
                .map_err(internal)?;
            out.write_csv("clustering.csv", &report::node_metrics_table(&assets, &metrics))
                .map_err(internal)?;
            out.write_csv("degree_by_region.csv", &report::region_table("avg_degree", &degrees))
                .map_err(internal)?;
            let dot = report::emit_dot(&graph_matrix, &metrics, &assets, kind)?;
            out.write("network.dot", dot.as_bytes()).map_err(internal)?;
            out.finish().map_err(internal)?;
        }
        Command::CascadeDet {
            common,
            theta,
            seed_assets,
            influence_threshold,
            max_iter,
        } => {
            let mut ctx = Context::load("cascade-det", common)?;
            let theta = required(theta, ctx.file.theta, "theta")?;
            let seeds = if seed_assets.is_empty() {
                ctx.file.seed_assets.clone().unwrap_or_default()
            } else {
                seed_assets
            };
            if seeds.is_empty() {
                return Err(input_err("missing required option --seed-asset"));
            }
            let t = influence_threshold
                .or(ctx.file.influence_threshold)
                .unwrap_or(cascade_det::DEFAULT_INFLUENCE_THRESHOLD);
            let max_iter = max_iter.or(ctx.file.max_iter).unwrap_or(cascade_det::DEFAULT_MAX_ITERATIONS);
            let returns = compute_log_returns(&ctx.panel);
            let rho = correlation_matrix(&returns)?;
            let trace = cascade_det::run(
                ctx.panel.assets(),
                &rho.filtered(theta),
                theta,
                &seeds,
                InfluenceThreshold::Uniform(t),
                max_iter,
            )?;
            let mut out = ctx.open(json!({
                "theta": theta,
                "seed_assets": seeds,
                "influence_threshold": t,
                "max_iter": max_iter,
            }))?;
            out.write_csv("trace.csv", &report::trace_table(&trace)).map_err(internal)?;
            out.write("trace.json", &report::trace_json(&trace).map_err(internal)?)
                .map_err(internal)?;
            out.finish().map_err(internal)?;
        }
        Command::CascadeMc { common, filter, mc } => {
            let mut ctx = Context::load("cascade-mc", common)?;
            let (theta, mode) = filter_params(filter, &ctx.file)?;
            let p = mc_params(theta, mode, mc, &ctx.file)?;
            let returns = compute_log_returns(&ctx.panel);
            let system = CascadeSystem::from_returns(&returns, theta, mode)?;
            let rep = match p.threads {
                Some(t) => monte_carlo_with_threads(&system, &p.config, &p.scenario, t)?,
                None => monte_carlo(&system, &p.config, &p.scenario)?,
            };
            let mut out = ctx.open(json!({"config": p.config, "scenario": p.scenario}))?;
            out.write("mc_report.json", &report::to_json(&rep).map_err(internal)?)
                .map_err(internal)?;
            out.write_csv("mc_summary.csv", &report::mc_summary_table(&[&rep]))
                .map_err(internal)?;
            out.write_csv("mc_regions.csv", &report::region_table("avg_failed", &rep.per_region))
                .map_err(internal)?;
            out.finish().map_err(internal)?;
        }
        Command::SynthCompare {
            common,
            filter,
            mc,
            er_p,
            er_seed,
        } => {
            let mut ctx = Context::load("synth-compare", common)?;
            let (theta, mode) = filter_params(filter, &ctx.file)?;
            let p = mc_params(theta, mode, mc, &ctx.file)?;
            let er_p = er_p.or(ctx.file.er_p);
            let er_seed = er_seed.or(ctx.file.er_seed).unwrap_or(p.config.master_seed);
            let returns = compute_log_returns(&ctx.panel);
            let system = CascadeSystem::from_returns(&returns, theta, mode)?;
            let run_cmp = || compare_synthetic(&system, &p.config, &p.scenario, er_p, er_seed);
            let cmp = match p.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CliError::Internal(e.to_string()))?
                    .install(run_cmp)?,
                None => run_cmp()?,
            };
            let mut out = ctx.open(json!({
                "config": p.config,
                "scenario": p.scenario,
                "er_p": cmp.er_p,
                "er_seed": er_seed,
            }))?;
            out.write("comparison.json", &report::to_json(&cmp).map_err(internal)?)
                .map_err(internal)?;
            out.write_csv("comparison.csv", &report::comparison_table(&cmp))
                .map_err(internal)?;
            out.finish().map_err(internal)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
