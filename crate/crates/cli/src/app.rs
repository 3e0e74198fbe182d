//! Argument parsing, configuration and exit codes.

use std::path::{Path, PathBuf};
use std::panic::{catch_unwind, AssertUnwindSafe};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use qmap_core::ToleranceConfig;

use crate::commands::{parse_unitary, run_verb, CornerSpec, Verb};
use crate::corpus::{self, Source};
use crate::description::parse_map;
use crate::report::{emit_report, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qmap", version, about = "Analyze completely positive and q-positive maps on matrix algebras")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Eigenvalue floor for positivity checks.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tol: Option<f64>,
    /// Relative tolerance for numerical rank.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub rank_tol: Option<f64>,
    /// Number of base grid points in the t-scan.
    #[arg(long, global = true, value_name = "INT")]
    pub grid: Option<usize>,
    /// Refinement depth around sign changes.
    #[arg(long, global = true, value_name = "INT")]
    pub refine: Option<usize>,
    #[arg(long = "t-cap", global = true, value_name = "FLOAT")]
    pub t_cap: Option<f64>,
    #[arg(long, global = true, value_name = "FLOAT")]
    pub bisect_tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Seed for corpus generation; falls back to QMAP_SEED.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// JSON file with tolerance settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete positivity, eigenvalue check, q-positivity and threshold.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Canonical form of an E₂/E₃ element or a unital q-positive map on M₂.
    Classify {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Limit map and its property residuals.
    Limit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Whether PHI ≥_q PSI.
    Dominates { phi: PathBuf, psi: PathBuf },
    /// Corner analysis from PHI GAMMA PSI, PHI --flip U, or UPSILON --split N.
    Corner {
        #[arg(required = true, num_args = 1..=3)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_name = "FILE", conflicts_with = "split")]
        flip: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        split: Option<usize>,
    },
    /// Certificates that a map is not q-pure.
    Witness {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// The regression corpus.
    Corpus {
        #[command(subcommand)]
        action: CorpusCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Run every corpus case; exits nonzero on any mismatch.
    Verify {
        /// Read the corpus from a directory instead of the built-in copy.
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    eig_floor: Option<f64>,
    rank_tol: Option<f64>,
    grid_points: Option<usize>,
    refine_depth: Option<usize>,
    bisect_tol: Option<f64>,
    t_cap: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl RunOutput {
    fn usage(msg: impl Into<String>) -> Self {
        RunOutput { code: EXIT_USAGE, stdout: String::new(), stderr: format!("error: {}\n", msg.into()) }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn config_from(opts: &GlobalOpts) -> Result<ToleranceConfig, String> {
    let mut cfg = ToleranceConfig::default();
    if let Some(path) = &opts.config {
        let text = read(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("{}: invalid JSON: {e}", path.display()))?;
        let file: ConfigFile = serde_path_to_error::deserialize(&value)
            .map_err(|e| format!("{}: {}: {}", path.display(), e.path(), e.inner()))?;
        cfg.eig_floor = file.eig_floor.unwrap_or(cfg.eig_floor);
        cfg.rank_tol = file.rank_tol.unwrap_or(cfg.rank_tol);
        cfg.grid_points = file.grid_points.unwrap_or(cfg.grid_points);
        cfg.refine_depth = file.refine_depth.unwrap_or(cfg.refine_depth);
        cfg.bisect_tol = file.bisect_tol.unwrap_or(cfg.bisect_tol);
        cfg.t_cap = file.t_cap.unwrap_or(cfg.t_cap);
    }
    cfg.eig_floor = opts.tol.unwrap_or(cfg.eig_floor);
    cfg.rank_tol = opts.rank_tol.unwrap_or(cfg.rank_tol);
    cfg.grid_points = opts.grid.unwrap_or(cfg.grid_points);
    cfg.refine_depth = opts.refine.unwrap_or(cfg.refine_depth);
    cfg.bisect_tol = opts.bisect_tol.unwrap_or(cfg.bisect_tol);
    cfg.t_cap = opts.t_cap.unwrap_or(cfg.t_cap);
    cfg.validate().map_err(|e| format!("invalid configuration: {e}"))?;
    Ok(cfg)
}

fn seed_from(opts: &GlobalOpts) -> Result<u64, String> {
    if let Some(s) = opts.seed {
        return Ok(s);
    }
    match std::env::var("QMAP_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| format!("QMAP_SEED must be an unsigned integer, got '{v}'")),
        Err(_) => Ok(0),
    }
}

/// Runs `qmap` on an argument vector (including the program name).
pub fn run<I, T>(args: I) -> RunOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    RunOutput { code: EXIT_OK, stdout: text, stderr: String::new() }
                }
                _ => RunOutput { code: EXIT_USAGE, stdout: String::new(), stderr: text },
            };
        }
    };
    match catch_unwind(AssertUnwindSafe(|| dispatch(&cli))) {
        Ok(out) => out,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            RunOutput { code: EXIT_NUMERIC, stdout: String::new(), stderr: format!("internal failure: {msg}\n") }
        }
    }
}

fn dispatch(cli: &Cli) -> RunOutput {
    let cfg = match config_from(&cli.opts) {
        Ok(c) => c,
        Err(e) => return RunOutput::usage(e),
    };
    let format = match cli.opts.format {
        FormatArg::Json => Format::Json,
        FormatArg::Text => Format::Text,
    };
    let (verb, groups): (Verb, Vec<Vec<PathBuf>>) = match &cli.command {
        Command::Analyze { inputs } => (Verb::Analyze, inputs.iter().map(|p| vec![p.clone()]).collect()),
        Command::Classify { inputs } => (Verb::Classify, inputs.iter().map(|p| vec![p.clone()]).collect()),
        Command::Limit { inputs } => (Verb::Limit, inputs.iter().map(|p| vec![p.clone()]).collect()),
        Command::Witness { inputs } => (Verb::Witness, inputs.iter().map(|p| vec![p.clone()]).collect()),
        Command::Dominates { phi, psi } => (Verb::Dominates, vec![vec![phi.clone(), psi.clone()]]),
        Command::Corner { inputs, flip, split } => {
            let spec = match (flip, split) {
                (Some(path), None) => match read(path).and_then(|t| {
                    parse_unitary(&t).map_err(|e| format!("{}: {e}", path.display()))
                }) {
                    Ok(u) => CornerSpec::Flip(u),
                    Err(e) => return RunOutput::usage(e),
                },
                (None, Some(n)) => CornerSpec::Split(*n),
                _ => CornerSpec::Blocks,
            };
            let want = if spec == CornerSpec::Blocks { 3 } else { 1 };
            if inputs.len() != want {
                return RunOutput::usage(format!(
                    "corner takes PHI GAMMA PSI, PHI --flip U, or UPSILON --split N; got {} input file(s)",
                    inputs.len()
                ));
            }
            (Verb::Corner(spec), vec![inputs.clone()])
        }
        Command::Corpus { action: CorpusCommand::Verify { dir } } => {
            let seed = match seed_from(&cli.opts) {
                Ok(s) => s,
                Err(e) => return RunOutput::usage(e),
            };
            let src = dir.clone().map(Source::Dir).unwrap_or(Source::Embedded);
            return match corpus::verify(&src, &cfg, seed) {
                Err(e) => RunOutput::usage(e),
                Ok(report) => RunOutput {
                    code: if report.failed == 0 { EXIT_OK } else { EXIT_NUMERIC },
                    stdout: match format {
                        Format::Json => serde_json::to_string_pretty(&report).expect("serializes") + "\n",
                        Format::Text => report.render_text(),
                    },
                    stderr: String::new(),
                },
            };
        }
    };

    let mut docs = Vec::new();
    for group in &groups {
        let mut loaded = Vec::new();
        for path in group {
            match read(path).and_then(|t| parse_map(&t).map_err(|e| format!("{}: {e}", path.display()))) {
                Ok(d) => loaded.push(d),
                Err(e) => return RunOutput::usage(e),
            }
        }
        docs.push(loaded);
    }

    // independent inputs run concurrently; output keeps input order
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = docs
            .iter()
            .map(|inputs| s.spawn(|| run_verb(&verb, inputs, &cfg, cli.opts.seed)))
            .collect();
        handles.into_iter().map(|h| h.join()).collect()
    });
    let mut reports = Vec::new();
    for (group, r) in groups.iter().zip(results) {
        match r {
            Ok(Ok(report)) => reports.push(report),
            Ok(Err(e)) => {
                let names: Vec<String> = group.iter().map(|p| p.display().to_string()).collect();
                return RunOutput::usage(format!("{}: {e}", names.join(", ")));
            }
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
    let code = if reports.iter().any(|r| r.has_numeric_failure()) { EXIT_NUMERIC } else { EXIT_OK };
    let stdout = match (format, reports.len()) {
        (Format::Json, n) if n > 1 => serde_json::to_string_pretty(&reports).expect("serializes") + "\n",
        (Format::Text, _) => reports.iter().map(|r| emit_report(r, format)).collect::<Vec<_>>().join("\n"),
        _ => emit_report(&reports[0], format),
    };
    let stderr = reports
        .iter()
        .flat_map(|r| r.verdicts.failures().into_iter().filter(|(_, f)| f.numeric).map(|(n, f)| format!("{n}: {}\n", f.error)))
        .collect();
    RunOutput { code, stdout, stderr }
}
