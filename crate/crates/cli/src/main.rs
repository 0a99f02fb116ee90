use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use congestion_core::report::run_to_dir;
use congestion_core::scenario::{network_ptdf, Scenario, ScenarioError, ScenarioFile};

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "congestion", version, about = "Delay-aware battery and curtailment congestion controller")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found.
    Validate { path: PathBuf },
    /// Simulate a scenario and write run.csv, summary.txt and plotdata/.
    Run {
        path: PathBuf,
        /// Output directory.
        #[arg(long, env = "CONGESTION_OUT_DIR", default_value = "congestion-out")]
        out: PathBuf,
        /// Run the plant without the controller.
        #[arg(long)]
        no_controller: bool,
        /// Override the random-walk seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the PTDF table computed from the network reactances.
    Ptdf {
        path: PathBuf,
        /// Slack node; defaults to the one in the file.
        #[arg(long)]
        slack: Option<String>,
    },
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let text = read(path)?;
    let file = ScenarioFile::from_json(&text).map_err(|e| Failure::invalid(describe(path, &e)))?;
    file.build(seed).map_err(|e| Failure::invalid(describe(path, &e)))
}

fn describe(path: &Path, e: &ScenarioError) -> String {
    match e {
        ScenarioError::Parse(p) => format!("{}:{}:{}: {p}", path.display(), p.line(), p.column()),
        ScenarioError::Invalid(list) => list
            .iter()
            .map(|v| format!("{}: {}: {}", path.display(), v.field, v.message))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let sc = load(path, None)?;
    println!(
        "{}: ok ({} nodes, {} lines, {} batteries, {} curtailable nodes, {} steps, d_curt = {}, d_batt = {})",
        path.display(),
        sc.zone.n_nodes(),
        sc.zone.n_lines(),
        sc.zone.n_batteries(),
        sc.zone.n_curtailable(),
        sc.duration_steps,
        sc.delays.d_curt,
        sc.delays.d_batt
    );
    Ok(())
}

fn run(path: &Path, out: &Path, no_controller: bool, seed: Option<u64>) -> Result<(), Failure> {
    let sc = load(path, seed)?;
    let controller = sc.controller_enabled && !no_controller;
    let (log, reference) = run_to_dir(&sc, controller, out).map_err(|e| Failure::runtime(e.to_string()))?;
    let s = &log.summary;
    println!(
        "{}: max violation {:.3} MW over {} steps, curtailed {:.4} MWh, solver failures {}",
        sc.name, s.max_violation_mw, s.violation_steps, s.curtailed_energy_mwh, s.solver_failures
    );
    if let Some(r) = reference {
        println!(
            "without controller: max violation {:.3} MW over {} steps",
            r.summary.max_violation_mw, r.summary.violation_steps
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn ptdf(path: &Path, slack: Option<&str>) -> Result<(), Failure> {
    let text = read(path)?;
    let (net, table) = network_ptdf(&text, slack).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let ids: Vec<String> = net.lines.iter().map(|l| format!("{}-{}", l.from, l.to)).collect();
    let first = ids.iter().map(|s| s.len()).max().unwrap_or(0).max(4);
    let widths: Vec<usize> = net.nodes.iter().map(|n| n.len().max(9)).collect();
    let mut header = format!("{:<first$}", "line");
    for (n, w) in net.nodes.iter().zip(&widths) {
        header.push_str(&format!("  {n:>w$}"));
    }
    println!("{header}");
    for (l, id) in ids.iter().enumerate() {
        let mut row = format!("{id:<first$}");
        for (c, w) in widths.iter().enumerate() {
            let v = table[(l, c)];
            let v = if v == 0.0 { 0.0 } else { v };
            row.push_str(&format!("  {v:>w$.6}"));
        }
        println!("{row}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Validate { path } => validate(path),
        Command::Run {
            path,
            out,
            no_controller,
            seed,
        } => run(path, out, *no_controller, *seed),
        Command::Ptdf { path, slack } => ptdf(path, slack.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
