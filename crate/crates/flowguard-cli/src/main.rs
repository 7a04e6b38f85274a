//! Command-line front end: every subcommand is a pure function of a
//! config file and the artifacts already in the output directory, so
//! reruns reproduce outputs byte for byte. Progress goes to standard
//! error; the artifacts are the only products.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowguard::analysis::{
    select_detectors, tradeoff_curve, write_metrics_report, write_tradeoff_report, SelectionMode,
    SelectionOutcome,
};
use flowguard::config::Config;
use flowguard::fault::{
    assemble_monitors, campaign, golden_run, parse_matrix, plan_campaign, DetectionMatrix,
    TOOL_VERSION,
};
use flowguard::seqcheck::write_seq_file;
use flowguard::{Error, Result};

#[derive(Parser)]
#[command(
    name = "flowguard",
    version,
    about = "Fault-injection campaigns for in-situ control-flow error detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the fault-free simulation; write the trace and learned tables.
    Golden(Common),
    /// Run the fault-injection campaign; write the detection matrix.
    Campaign {
        #[command(flatten)]
        common: Common,
        /// Worker threads (overrides the config; results are identical
        /// for any value).
        #[arg(long, value_name = "N")]
        workers: Option<usize>,
    },
    /// Compute detection metrics, and a cost/detection trade-off curve
    /// when budgets are given.
    Report {
        #[command(flatten)]
        common: Common,
        /// Ascending cost budgets for the trade-off curve.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 1..)]
        budgets: Option<Vec<f64>>,
    },
    /// Choose detector subsets: best rate under each budget, or least
    /// cost reaching a rate target.
    Select {
        #[command(flatten)]
        common: Common,
        /// Cost budgets, one selection per value.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 1..)]
        budgets: Option<Vec<f64>>,
        /// Detection-rate floor for cost-minimizing selection.
        #[arg(long, value_name = "X")]
        dr_target: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides the config's `out` key).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration errors; --help and
            // --version are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Golden(common) => {
            let (cfg, out) = setup(&common)?;
            cmd_golden(&cfg, &out)
        }
        Cmd::Campaign { common, workers } => {
            let (cfg, out) = setup(&common)?;
            cmd_campaign(&cfg, &out, workers)
        }
        Cmd::Report { common, budgets } => {
            let (cfg, out) = setup(&common)?;
            cmd_report(&cfg, &out, budgets)
        }
        Cmd::Select {
            common,
            budgets,
            dr_target,
        } => {
            let (cfg, out) = setup(&common)?;
            cmd_select(&cfg, &out, budgets, dr_target)
        }
    }
}

/// Loads the config and resolves the output directory.
fn setup(common: &Common) -> Result<(Config, PathBuf)> {
    let cfg = Config::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| {
            Error::Config("no output directory: set `out` in the config or pass --out".into())
        })?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok((cfg, out))
}

/// Comment header stamped on every emitted CSV.
fn meta(cfg: &Config) -> String {
    format!(
        "# tool_version={TOOL_VERSION}\n# config_sha256={}\n# seed={}\n",
        cfg.sha256, cfg.seed
    )
}

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn cmd_golden(cfg: &Config, out: &Path) -> Result<()> {
    let golden = golden_run(cfg.design, &cfg.stimulus)?;
    let opts = cfg.campaign_options();
    let bundle = assemble_monitors(cfg.design, &golden.trace.watched, &golden.trace, &opts)?;

    let trace_path = out.join("trace.csv");
    let mut buf = meta(cfg).into_bytes();
    golden
        .trace
        .write_csv(&mut buf)
        .map_err(|e| Error::io(&trace_path, e))?;
    write_file(&trace_path, &buf)?;

    let tables_path = out.join("tables.st");
    let text = format!("{}{}", meta(cfg), write_seq_file(&bundle.tables));
    write_file(&tables_path, text.as_bytes())?;

    eprintln!(
        "golden: {} completed in {} cycles; {} nets bound, {} tables learned",
        cfg.design.name(),
        golden.cycles,
        bundle.nets.len(),
        bundle.tables.len()
    );
    eprintln!(
        "golden: wrote {} and {}",
        trace_path.display(),
        tables_path.display()
    );
    Ok(())
}

fn cmd_campaign(cfg: &Config, out: &Path, workers: Option<usize>) -> Result<()> {
    let mut opts = cfg.campaign_options();
    if let Some(w) = workers {
        opts.workers = w;
    }
    let (specs, golden_cycles) = plan_campaign(
        cfg.design,
        &cfg.stimulus,
        cfg.case,
        cfg.upsets_per_bit,
        cfg.bursts,
        cfg.seed,
    )?;
    eprintln!(
        "campaign: {} injections on {} ({} golden cycles, {} workers)",
        specs.len(),
        cfg.design.name(),
        golden_cycles,
        opts.workers
    );
    let matrix = campaign(cfg.design, &cfg.stimulus, &specs, &opts)?;
    let path = out.join("matrix.csv");
    write_file(&path, matrix.to_csv_string().as_bytes())?;
    eprintln!("campaign: wrote {}", path.display());
    Ok(())
}

fn load_matrix(out: &Path) -> Result<DetectionMatrix> {
    let path = out.join("matrix.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_matrix(&path.display().to_string(), &text)
}

fn cmd_report(cfg: &Config, out: &Path, budgets: Option<Vec<f64>>) -> Result<()> {
    let matrix = load_matrix(out)?;
    let metrics_path = out.join("metrics.csv");
    let mut buf = meta(cfg).into_bytes();
    write_metrics_report(&matrix, &mut buf)?;
    write_file(&metrics_path, &buf)?;
    eprintln!("report: wrote {}", metrics_path.display());

    let budgets = budgets.unwrap_or_else(|| cfg.budgets.clone());
    if budgets.is_empty() {
        return Ok(());
    }
    let points = tradeoff_curve(&matrix, &budgets)?;
    let curve_path = out.join("tradeoff.csv");
    let mut buf = meta(cfg).into_bytes();
    write_tradeoff_report(&points, &mut buf)?;
    write_file(&curve_path, &buf)?;
    eprintln!("report: wrote {}", curve_path.display());
    Ok(())
}

fn join_ids(ids: &[String]) -> String {
    if ids.is_empty() {
        "-".to_string()
    } else {
        ids.join("+")
    }
}

fn cmd_select(
    cfg: &Config,
    out: &Path,
    budgets: Option<Vec<f64>>,
    dr_target: Option<f64>,
) -> Result<()> {
    let matrix = load_matrix(out)?;
    let budgets = budgets.unwrap_or_else(|| cfg.budgets.clone());
    let dr_target = dr_target.or(cfg.dr_target);
    if budgets.is_empty() && dr_target.is_none() {
        return Err(Error::Config(
            "selection needs --budgets and/or --dr-target (or their config keys)".into(),
        ));
    }

    let mut buf = meta(cfg);
    buf.push_str("mode,constraint,outcome,cost,dr,dr_to,subset\n");
    for &budget in &budgets {
        match select_detectors(&matrix, SelectionMode::MaxDr { budget })? {
            SelectionOutcome::Selected(sel) => {
                buf.push_str(&format!(
                    "max_dr,{budget},selected,{},{},{},{}\n",
                    sel.cost,
                    sel.metrics.dr,
                    sel.metrics.dr_to,
                    join_ids(&sel.ids)
                ));
            }
            SelectionOutcome::Infeasible { .. } => {
                unreachable!("budget-constrained selection always yields a subset")
            }
        }
    }
    if let Some(target) = dr_target {
        match select_detectors(&matrix, SelectionMode::MinArea { dr_target: target })? {
            SelectionOutcome::Selected(sel) => {
                buf.push_str(&format!(
                    "min_area,{target},selected,{},{},{},{}\n",
                    sel.cost,
                    sel.metrics.dr,
                    sel.metrics.dr_to,
                    join_ids(&sel.ids)
                ));
            }
            SelectionOutcome::Infeasible { max_dr } => {
                // No subset reaches the target; report the ceiling.
                buf.push_str(&format!("min_area,{target},infeasible,,{max_dr},,-\n"));
            }
        }
    }
    let path = out.join("selection.csv");
    write_file(&path, buf.as_bytes())?;
    eprintln!("select: wrote {}", path.display());
    Ok(())
}
