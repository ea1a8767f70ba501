use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use qcd_core::monitor::{ingest_csv, monitor, write_report_trajectory, MonitorConfig};
use qcd_core::simulation::{operating_curve, write_curve_csv, CurveSpec};
use qcd_core::thresholds::{mct_design_ratio, mct_threshold_exact};

#[derive(Parser)]
#[command(name = "qcd", version, about = "Quickest detection of a mean increase")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Mean-Change Test over a recorded series.
    Monitor {
        /// CSV with columns index,value[,population].
        #[arg(long)]
        input: PathBuf,
        /// TOML monitor configuration.
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write an index,statistic,threshold CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Print the MCT threshold design as JSON.
    Threshold {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        mu0: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        eta: f64,
        /// Solve the crossing-bound equation instead of using the ratio form.
        #[arg(long)]
        exact: bool,
    },
    /// Estimate delay and false-alarm time; prints operating points as JSON.
    Simulate {
        /// Curve specification (TOML, or JSON by extension).
        #[arg(long)]
        config: PathBuf,
        /// Evaluate this threshold only, ignoring the list in the file.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Trace an operating curve and write it as CSV.
    Curve {
        /// Curve specification (TOML, or JSON by extension).
        #[arg(long)]
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_curve_spec(path: &Path) -> Result<CurveSpec> {
    let text = read_text(path)?;
    let spec: CurveSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(spec)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Monitor {
            input,
            config,
            output,
            trajectory,
        } => {
            let cfg = MonitorConfig::from_toml(&read_text(&config)?)
                .with_context(|| format!("in {}", config.display()))?;
            let data =
                ingest_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            if data.dropped > 0 {
                eprintln!("warning: dropped {} rows with missing values", data.dropped);
            }
            let report = monitor(&data.records, &cfg)?;
            match report.alarm_index {
                Some(i) => eprintln!("alarm at index {i} (threshold {:.6})", report.threshold),
                None => eprintln!("no alarm (threshold {:.6})", report.threshold),
            }
            write_json(&report, output.as_deref())?;
            if let Some(path) = trajectory {
                let file =
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_report_trajectory(&report, BufWriter::new(file))?;
            }
        }
        Command::Threshold {
            alpha,
            mu0,
            sigma2,
            eta,
            exact,
        } => {
            let design = if exact {
                mct_threshold_exact(alpha, mu0, sigma2, eta)?
            } else {
                mct_design_ratio(alpha, mu0, sigma2, eta)?
            };
            write_json(&design, None)?;
        }
        Command::Simulate { config, threshold } => {
            let mut spec = load_curve_spec(&config)?;
            if let Some(b) = threshold {
                spec.thresholds = vec![b];
            }
            let curve = operating_curve(&spec)?;
            for p in curve
                .iter()
                .filter(|p| p.reliability_warning || p.mtfa_lower_bound)
            {
                eprintln!(
                    "warning: threshold {}: censored runs (delay censored fraction above 1%: {}, MTFA is a lower bound: {})",
                    p.threshold, p.reliability_warning, p.mtfa_lower_bound
                );
            }
            write_json(&curve, None)?;
        }
        Command::Curve { config, output } => {
            let spec = load_curve_spec(&config)?;
            let curve = operating_curve(&spec)?;
            if curve
                .iter()
                .any(|p| p.reliability_warning || p.mtfa_lower_bound)
            {
                eprintln!("warning: some points have censored runs; see censored_fraction");
            }
            let mut out = sink(output.as_deref())?;
            write_curve_csv(&curve, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
