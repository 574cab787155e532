//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code; failures are reported on
//! the error stream as a single JSON object.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::aopp::{apply_aopp, pair_bits, AoppResult};
use crate::error::{exit_code, Error, Result};
use crate::io::config::{AoppMode, SimulationMethod, StatsMode, WINDOW_LIMIT};
use crate::io::report::{report_to_csv, report_to_json, scan_to_csv, Format};
use crate::io::{parse_tally, tally_to_json, write_atomic, RunConfig, TallyFile, TallyMetadata};
use crate::keyrate::{analyze_with, secure_key_rate, AnalysisOptions, KeyRateInput, KeyRateReport};
use crate::model::Side;
use crate::optimize::{optimize, scan_distances};
use crate::sim::phase::ResidualReport;
use crate::sim::{simulate_session, simulate_tally, TallyTruth};

#[derive(Debug, Parser)]
#[command(
    name = "sns-qkd",
    version,
    about = "Finite-key SNS twin-field QKD analysis and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the configured statistics mode.
    #[arg(long, value_enum)]
    mode: Option<StatsMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate formula on after-AOPP values from the config, with tally counts.
    Keyrate {
        #[arg(long)]
        tally: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decoy estimation, AOPP and rate from a tally alone.
    Analyze {
        #[arg(long)]
        tally: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a session; writes the tally and a `.truth.json` companion.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Search source parameters for the highest expected rate.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Expected rate over a distance grid, as CSV.
    Scan {
        /// Inclusive grid `start:stop:step` in km.
        #[arg(long)]
        distances: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

fn report_error(err: &mut dyn Write, kind: &str, code: i32, message: String) {
    let body = serde_json::json!({ "error": ErrorBody { kind, exit_code: code, message } });
    let _ = writeln!(err, "{body}");
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return exit_code::OK;
        }
        Err(e) => {
            report_error(
                err,
                "usage",
                exit_code::USAGE,
                e.kind().to_string() + ": " + e.to_string().trim(),
            );
            return exit_code::USAGE;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            report_error(err, e.kind(), e.exit_code(), e.to_string());
            e.exit_code()
        }
    }
}

struct Output<'a> {
    path: Option<PathBuf>,
    stdout: &'a mut dyn Write,
}

impl Output<'_> {
    fn emit(&mut self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => write_atomic(p, text.as_bytes()),
            None => self.stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
        }
    }
}

fn load_config(common: &Common, required: bool) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None if required => return Err(Error::Usage("this subcommand needs --config".into())),
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    Ok(cfg)
}

fn render_report(report: &KeyRateReport, format: Option<Format>) -> String {
    match format.unwrap_or_default() {
        Format::Json => report_to_json(report),
        Format::Csv => report_to_csv(report),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn execute(cmd: Command, stdout: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Keyrate { tally, common } => {
            let cfg = load_config(&common, true)?;
            let file = parse_tally(&tally)?;
            let report = keyrate(&cfg, &file)?;
            let mut out = Output {
                path: common.out,
                stdout,
            };
            out.emit(&render_report(&report, common.format))?;
            Ok(exit_code::OK)
        }
        Command::Analyze { tally, common } => {
            let cfg = load_config(&common, false)?;
            let file = parse_tally(&tally)?;
            let report = analyze(&cfg, &file)?;
            let mut out = Output {
                path: common.out,
                stdout,
            };
            out.emit(&render_report(&report, common.format))?;
            Ok(if report.vacuous {
                exit_code::VACUOUS
            } else {
                exit_code::OK
            })
        }
        Command::Simulate { common } => {
            let cfg = load_config(&common, true)?;
            let path = common.out.ok_or_else(|| Error::Usage("simulate needs --out".into()))?;
            let (tally, truth) = simulate(&cfg)?;
            write_atomic(&path, tally_to_json(&tally).as_bytes())?;
            write_atomic(&truth_path(&path), to_json(&truth).as_bytes())?;
            Ok(exit_code::OK)
        }
        Command::Optimize { common } => {
            let cfg = load_config(&common, true)?;
            let optimum = run_optimizer(&cfg)?;
            let mut out = Output {
                path: common.out,
                stdout,
            };
            out.emit(&to_json(&optimum))?;
            Ok(exit_code::OK)
        }
        Command::Scan { distances, common } => {
            let cfg = load_config(&common, true)?;
            let grid = parse_grid(&distances)?;
            let rows = scan_distances(
                &grid,
                &cfg.source(None)?,
                &cfg.channel(None)?,
                cfg.n_total()?,
                &cfg.security,
            )?;
            let text = match common.format {
                Some(Format::Json) => to_json(&rows),
                _ => scan_to_csv(&rows),
            };
            let mut out = Output {
                path: common.out,
                stdout,
            };
            out.emit(&text)?;
            Ok(exit_code::OK)
        }
    }
}

/// `F.json` becomes `F.truth.json`.
pub fn truth_path(path: &Path) -> PathBuf {
    path.with_extension("truth.json")
}

/// Rate formula on configured after-AOPP values; the tally supplies the
/// pulse count and the vacuum-signal detections of the tail term.
pub fn keyrate(cfg: &RunConfig, file: &TallyFile) -> Result<KeyRateReport> {
    let post = cfg
        .post_aopp
        .ok_or_else(|| Error::Validation(vec!["keyrate needs `post_aopp` in the config".into()]))?;
    let ch = cfg.channel(Some(&file.metadata))?;
    let t = &file.tally;
    secure_key_rate(&KeyRateInput {
        n_total: t.n_total,
        n1: post.n1,
        e1ph: post.e1ph,
        n_t: post.n_t,
        e_t: post.e_t,
        n_vy: t.n_vy(),
        n_yv: t.n_yv(),
        sec: cfg.security,
        clock_hz: ch.clock_hz,
        eta: Some(ch.transmittance(Side::Total)),
    })
}

pub fn analyze(cfg: &RunConfig, file: &TallyFile) -> Result<KeyRateReport> {
    let meta = Some(&file.metadata);
    let opts = AnalysisOptions {
        finite: cfg.mode == StatsMode::Finite,
        slice: cfg.slice(meta),
    };
    analyze_with(
        &file.tally,
        &cfg.source(meta)?,
        &cfg.security,
        &cfg.channel(meta)?,
        &opts,
    )
}

/// Summary written next to a simulated tally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub method: &'static str,
    pub n_pairs: u64,
    pub truth: TallyTruth,
    pub untagged_phase_error_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_residual: Option<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aopp: Option<AoppResult>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(TallyFile, SimulationSummary)> {
    let session = cfg.session()?;
    let windows = match cfg.simulation {
        SimulationMethod::Auto => session.n_pairs <= WINDOW_LIMIT,
        SimulationMethod::Windows => true,
        SimulationMethod::Counts => false,
    };
    if cfg.aopp == AoppMode::Truth && !windows {
        return Err(Error::Validation(vec![
            "AOPP truth mode needs a window-level simulation".into(),
        ]));
    }
    let (tally, truth, phase_residual, aopp) = if windows {
        let s = simulate_session(&session)?;
        let aopp = if cfg.aopp == AoppMode::Truth {
            let pairs = pair_bits(&s.raw_keys.bob_bits, session.seed);
            Some(apply_aopp(&s.raw_keys, &pairs)?.0)
        } else {
            None
        };
        (s.tally, s.truth, Some(s.phase.report), aopp)
    } else {
        let (t, truth) = simulate_tally(&session)?;
        (t, truth, None, None)
    };
    let ch = &session.channel;
    let metadata = TallyMetadata {
        distance_km: Some(ch.total_length_km()),
        attenuation_db: Some(ch.fibre_loss_db(Side::Total)),
        clock_hz: Some(ch.clock_hz),
        parameter_set: cfg.parameter_set.clone(),
        n_total: Some(tally.n_total),
        ds_width_rad: Some(session.delta_slice),
        note: Some(format!("simulated, seed {}", session.seed)),
    };
    let summary = SimulationSummary {
        seed: session.seed,
        method: if windows { "windows" } else { "counts" },
        n_pairs: session.n_pairs,
        untagged_phase_error_rate: truth.phase_error_rate(),
        truth,
        phase_residual,
        aopp,
    };
    Ok((TallyFile { metadata, tally }, summary))
}

pub fn run_optimizer(cfg: &RunConfig) -> Result<crate::optimize::Optimum> {
    let mut opt = cfg.optimizer.clone().unwrap_or_default();
    opt.seed = cfg.seed;
    if let Some(p) = cfg.source.or_else(|| {
        cfg.parameter_set
            .as_deref()
            .and_then(crate::model::SourceParams::preset)
    }) {
        if opt.bounds.contains(&p) && !opt.warm_starts.contains(&p) {
            opt.warm_starts.insert(0, p);
        }
    }
    optimize(&opt, &cfg.channel(None)?, cfg.n_total()?, &cfg.security)
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("--distances expects start:stop:step, got `{spec}`"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        assert_eq!(parse_grid("202:1002:100").unwrap().len(), 9);
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_grid("5:1:1").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["sns-qkd", "analyze", "--bogus"], &mut o, &mut e), 2);
        let v: serde_json::Value = serde_json::from_slice(&e).unwrap();
        assert_eq!(v["error"]["kind"], "usage");
    }

    #[test]
    fn help_exits_zero() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["sns-qkd", "--help"], &mut o, &mut e), 0);
        assert!(String::from_utf8(o).unwrap().contains("simulate"));
    }

    #[test]
    fn truth_companion_name() {
        assert_eq!(truth_path(Path::new("out/t.json")), PathBuf::from("out/t.truth.json"));
    }
}
