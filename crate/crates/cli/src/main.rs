use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use socp_phase::experiment::{
    break_row, export_csv, feasibility_scan, parse_config, parse_grid, prediction_table, run_campaign, write_csv,
    CampaignSpec, CsvTable, CurveRow, Mode, RadiusMode, SurrogateTrialRow, TrialRecord, TrialStatus, DEFAULT_N_SOCP,
    DEFAULT_N_SURROGATE, DEFAULT_TRIALS,
};
use socp_phase::phase_curves::{design_from_rho, tabulate};
use socp_phase::predictor_general::ModelConfig;

#[derive(Parser)]
#[command(name = "socp-phase", version, about = "Predicted and simulated error of l1 recovery from noisy measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the l1 recovery curve beta_w(alpha_w)
    Fundamental(FundamentalArgs),
    /// Predicted limits for the unrestricted program along an x_mag grid
    Predict(Common),
    /// Predicted limits for the nonnegative program along an x_mag grid
    PredictSigned(Common),
    /// Feasibility breaking point of the nonnegative program, or an empirical scan with --scan
    Feasibility(FeasibilityArgs),
    /// Per-trial solutions of the random surrogate program
    Surrogate(Common),
    /// SOCP Monte-Carlo means against the predictions
    Simulate(Common),
    /// SOCP and surrogate Monte-Carlo side by side against the predictions
    Compare(Common),
}

#[derive(Args)]
struct FundamentalArgs {
    /// Use the nonnegative characterization
    #[arg(long)]
    signed: bool,
    /// Number of interior alpha_w points
    #[arg(long, default_value_t = 99)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeasibilityArgs {
    #[command(flatten)]
    common: Common,
    /// Estimate feasibility fractions across the x_mag grid
    #[arg(long)]
    scan: bool,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Overrides the sparsity implied by --rho
    #[arg(long)]
    beta_w: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// LO:HI:STEP or a comma-separated list
    #[arg(long)]
    xmag_grid: Option<String>,
    /// `opt` or `fixed:V` with V the radius per sqrt(n)
    #[arg(long)]
    r_mode: Option<String>,
    /// Problem size for every engine
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_socp: Option<usize>,
    #[arg(long)]
    n_surrogate: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write the main table here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-trial records here
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    signed: bool,
}

impl Common {
    /// Fills unset options from the config file.
    fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let num = |key: &str, v: &str| -> Result<f64> { v.parse().with_context(|| format!("config key {key}: `{v}`")) };
        let int = |key: &str, v: &str| -> Result<u64> { v.parse().with_context(|| format!("config key {key}: `{v}`")) };
        for (key, value) in parse_config(&text)? {
            let v = value.as_str();
            match key.as_str() {
                "alpha" => self.alpha = self.alpha.or(Some(num(&key, v)?)),
                "rho" => self.rho = self.rho.or(Some(num(&key, v)?)),
                "beta-w" => self.beta_w = self.beta_w.or(Some(num(&key, v)?)),
                "sigma" => self.sigma = self.sigma.or(Some(num(&key, v)?)),
                "xmag-grid" => self.xmag_grid = self.xmag_grid.or(Some(value.clone())),
                "r-mode" => self.r_mode = self.r_mode.or(Some(value.clone())),
                "n" => self.n = self.n.or(Some(int(&key, v)? as usize)),
                "n-socp" => self.n_socp = self.n_socp.or(Some(int(&key, v)? as usize)),
                "n-surrogate" => self.n_surrogate = self.n_surrogate.or(Some(int(&key, v)? as usize)),
                "trials" => self.trials = self.trials.or(Some(int(&key, v)? as usize)),
                "seed" => self.seed = self.seed.or(Some(int(&key, v)?)),
                "threads" => self.threads = self.threads.or(Some(int(&key, v)? as usize)),
                "out" => self.out = self.out.or(Some(PathBuf::from(v))),
                "records" => self.records = self.records.or(Some(PathBuf::from(v))),
                "signed" => {
                    self.signed |= v.parse::<bool>().with_context(|| format!("config key signed: `{v}`"))?;
                }
                other => bail!("unknown config key `{other}`"),
            }
        }
        Ok(self)
    }

    fn rho(&self) -> f64 {
        self.rho.unwrap_or(2.0)
    }

    fn model(&self, signed: bool) -> Result<ModelConfig> {
        let alpha = self.alpha.unwrap_or(0.5);
        let sigma = self.sigma.unwrap_or(1.0);
        let design = design_from_rho(alpha, self.rho(), sigma, signed)?;
        let radius: RadiusMode = self.r_mode.as_deref().unwrap_or("opt").parse()?;
        let r_sc = match radius {
            RadiusMode::Optimal => design.r_opt_sc,
            RadiusMode::Fixed(v) => v,
        };
        let cfg = ModelConfig { beta_w: self.beta_w.unwrap_or(design.beta_w), r_sc, ..ModelConfig::from_design(&design, sigma, 1.0) };
        cfg.validate(signed)?;
        Ok(cfg)
    }

    fn grid(&self) -> Result<Vec<f64>> {
        Ok(parse_grid(self.xmag_grid.as_deref().unwrap_or("0.5:3:0.5"))?)
    }

    fn campaign(&self, mode: Mode, signed: bool) -> Result<CampaignSpec> {
        let mut spec = CampaignSpec::new(mode, self.model(signed)?, self.grid()?, signed);
        spec.n_socp = self.n_socp.or(self.n).unwrap_or(DEFAULT_N_SOCP);
        spec.n_surrogate = self.n_surrogate.or(self.n).unwrap_or(DEFAULT_N_SURROGATE);
        spec.trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        spec.base_seed = self.seed.unwrap_or(0);
        spec.threads = self.threads.unwrap_or(0);
        spec.output = self.out.clone();
        Ok(spec)
    }
}

fn emit<T: CsvTable>(rows: &[T], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => export_csv(rows, path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(rows, &mut lock).context("writing to stdout")?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn convergence_failures(records: &[TrialRecord]) -> usize {
    records.iter().filter(|r| r.status == TrialStatus::ConvergenceFailure).count()
}

/// Number of convergence failures recorded.
fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Fundamental(args) => {
            let rows: Vec<CurveRow> =
                tabulate(args.signed, args.points)?.into_iter().map(|p| CurveRow { alpha_w: p.alpha_w, beta_w: p.beta_w }).collect();
            emit(&rows, args.out.as_deref())?;
            Ok(0)
        }
        Command::Predict(c) => predict_cmd(c, false),
        Command::PredictSigned(c) => predict_cmd(c, true),
        Command::Feasibility(args) => {
            let c = args.common.merged()?;
            if args.scan {
                let rows = feasibility_scan(&c.campaign(Mode::FeasibilityScan, true)?)?;
                emit(&rows, c.out.as_deref())?;
            } else {
                emit(&[break_row(&c.model(true)?, c.rho())?], c.out.as_deref())?;
            }
            Ok(0)
        }
        Command::Surrogate(c) => {
            let c = c.merged()?;
            let (records, _) = run_campaign(&c.campaign(Mode::Surrogate, c.signed)?)?;
            if let Some(path) = &c.records {
                export_csv(&records, path)?;
            }
            let failures = convergence_failures(&records);
            let rows: Vec<SurrogateTrialRow> = records.into_iter().map(SurrogateTrialRow).collect();
            emit(&rows, c.out.as_deref())?;
            Ok(failures)
        }
        Command::Simulate(c) => campaign_cmd(c, Mode::Socp),
        Command::Compare(c) => campaign_cmd(c, Mode::Both),
    }
}

fn predict_cmd(c: Common, signed: bool) -> Result<usize> {
    let c = c.merged()?;
    let (rows, failures) = prediction_table(&c.model(signed)?, &c.grid()?, signed)?;
    emit(&rows, c.out.as_deref())?;
    Ok(failures)
}

fn campaign_cmd(c: Common, mode: Mode) -> Result<usize> {
    let c = c.merged()?;
    let (records, rows) = run_campaign(&c.campaign(mode, c.signed)?)?;
    if let Some(path) = &c.records {
        export_csv(&records, path)?;
    }
    emit(&rows, c.out.as_deref())?;
    Ok(convergence_failures(&records))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} convergence failure(s) recorded");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
