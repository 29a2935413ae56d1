//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 semantic error (missing class labels or keys, unusable trace sets).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::aes_model::Block;
use crate::cpa::{ge_curve, run_cpa, CpaError, CpaReport, GeCurve, LeakModel};
use crate::leakage_sim::{
    apply_mitigation, preset, simulate_class_groups, throttle_transform, ChannelProfile,
    MitigationSpec, SimError, ThrottleDriver, ThrottleSpec, PRESET_NAMES, PRESET_TABLE_VERSION,
    THROTTLE_LAW,
};
use crate::trace_store::{
    export_csv, load_traceset, save_traceset, PlaintextClass, TraceSet, TraceStoreError,
};
use crate::tvla::{run_tvla, TvlaError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SEMANTIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Semantic(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io(_) => EXIT_IO,
            Self::Semantic(_) => EXIT_SEMANTIC,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<TvlaError> for CliError {
    fn from(e: TvlaError) -> Self {
        Self::Semantic(e.to_string())
    }
}

impl From<CpaError> for CliError {
    fn from(e: CpaError) -> Self {
        Self::Semantic(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<TraceSet, CliError> {
    load_traceset(path).map_err(|e| io_err(path, e))
}

fn save(ts: &TraceSet, path: &Path) -> Result<u64, CliError> {
    save_traceset(ts, path).map_err(|e| match e {
        TraceStoreError::NameTooLong(_) => CliError::Usage(e.to_string()),
        e => io_err(path, e),
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "telescp",
    version,
    about = "Simulate, assess and attack power telemetry side channels"
)]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "TELESCP_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trace campaigns for one or more plaintext classes.
    Simulate(SimulateArgs),
    /// Leakage assessment across class-labelled trace files.
    Tvla(TvlaArgs),
    /// Correlation power analysis on one trace file.
    Cpa(CpaArgs),
    /// Guessing entropy against trace count (same as `cpa --ge-step`).
    GeCurve(GeCurveArgs),
    /// Blend noise into a trace file and lengthen its update interval.
    Mitigate(MitigateArgs),
    /// Frequency and run time under a reactive power limit.
    Throttle(ThrottleArgs),
    /// Write a trace file as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in channel preset.
    #[arg(long, conflicts_with = "profile")]
    pub preset: Option<String>,
    /// Channel profile JSON file.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Comma-separated classes: all0, all1, random.
    #[arg(long, value_delimiter = ',', default_value = "random")]
    pub classes: Vec<String>,
    /// Traces per class.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// AES-128 key as 32 hex characters.
    #[arg(long)]
    pub key: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the profile's samples per trace.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: Option<u32>,
    /// Store the key in the trace files.
    #[arg(long)]
    pub embed_key: bool,
    /// Output directory; files are named `<class>.sct`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TvlaArgs {
    /// Trace files, one per plaintext class.
    pub files: Vec<PathBuf>,
    /// Test a single sample instead of taking the max |t| over samples.
    #[arg(long)]
    pub sample_index: Option<usize>,
    /// Also write raw t-scores as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    #[value(name = "rd0-hw")]
    Rd0Hw,
    #[value(name = "rd10-hw")]
    Rd10Hw,
    #[value(name = "rd10-hd")]
    Rd10Hd,
}

impl From<ModelArg> for LeakModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Rd0Hw => LeakModel::Rd0HW,
            ModelArg::Rd10Hw => LeakModel::Rd10HW,
            ModelArg::Rd10Hd => LeakModel::Rd10HD,
        }
    }
}

#[derive(Debug, Args)]
pub struct CpaArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value = "rd0-hw")]
    pub model: ModelArg,
    /// Evaluate GE every this many traces.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub ge_step: Option<u64>,
    /// Where to write the GE curve CSV (default: printed after the report).
    #[arg(long)]
    pub ge_out: Option<PathBuf>,
    /// Skip ranking; only report the best guesses. Needed when the file has no key.
    #[arg(long)]
    pub recover_only: bool,
    /// Analyse differences between consecutive readings instead of raw values.
    #[arg(long)]
    pub delta: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GeCurveArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value = "rd0-hw")]
    pub model: ModelArg,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub delta: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    pub file: PathBuf,
    /// Standard deviation of the added noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Samples averaged into one reported value.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub interval: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DriverArg {
    Actual,
    Sensor,
}

#[derive(Debug, Args)]
pub struct ThrottleArgs {
    /// Actual power draw in watts.
    #[arg(long)]
    pub demand: f64,
    #[arg(long, default_value_t = 4.0)]
    pub limit: f64,
    /// Unthrottled frequency in GHz.
    #[arg(long, default_value_t = 3.5)]
    pub fmax: f64,
    /// Work units (elapsed = work / frequency).
    #[arg(long, default_value_t = 1.0)]
    pub work: f64,
    #[arg(long, value_enum, default_value = "actual")]
    pub driver: DriverArg,
    /// Sensor reading in watts, used with `--driver sensor`.
    #[arg(long)]
    pub sensor: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub file: PathBuf,
    /// CSV destination (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    // Output is buffered so the command can run inside a worker pool.
    let mut buf = Vec::new();
    let result = match cli.workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &mut buf)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli.command, &mut buf),
    };
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_IO;
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut Vec<u8>) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Tvla(a) => cmd_tvla(a, out),
        Command::Cpa(a) => cmd_cpa(a, out),
        Command::GeCurve(a) => cmd_cpa(
            CpaArgs {
                file: a.file,
                model: a.model,
                ge_step: Some(a.step),
                ge_out: a.out,
                recover_only: false,
                delta: a.delta,
                json: a.json,
            },
            out,
        ),
        Command::Mitigate(a) => cmd_mitigate(a, out),
        Command::Throttle(a) => cmd_throttle(a, out),
        Command::Export(a) => cmd_export(a, out),
    }
}

fn emit_json(out: &mut dyn Write, v: &serde_json::Value) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// The built-in profile a channel name refers to, if any.
fn known_profile(channel: &str) -> Option<ChannelProfile> {
    PRESET_NAMES
        .iter()
        .filter_map(|n| preset(n))
        .find(|p| p.name.eq_ignore_ascii_case(channel))
}

fn resolve_profile(a: &SimulateArgs) -> Result<ChannelProfile, CliError> {
    let mut profile = match (&a.preset, &a.profile) {
        (Some(name), None) => preset(name).ok_or_else(|| {
            CliError::Usage(format!(
                "--preset: unknown preset '{name}' (known: {})",
                PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            ChannelProfile::from_json(&text)
                .map_err(|e| CliError::Usage(format!("--profile {}: {e}", path.display())))?
        }
        (None, None) => preset("phpc-like").expect("built-in preset"),
        (Some(_), Some(_)) => unreachable!("clap rejects --preset with --profile"),
    };
    if let Some(s) = a.samples {
        profile.samples_per_trace = s;
    }
    profile.validate()?;
    Ok(profile)
}

fn parse_classes(names: &[String]) -> Result<Vec<PlaintextClass>, CliError> {
    let mut classes = Vec::new();
    for n in names {
        let c: PlaintextClass = n
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("--classes: {e}")))?;
        if classes.contains(&c) {
            return Err(CliError::Usage(format!("--classes: '{n}' given twice")));
        }
        classes.push(c);
    }
    if classes.is_empty() {
        return Err(CliError::Usage("--classes: no classes given".into()));
    }
    Ok(classes)
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let key = Block::from_hex(&a.key).map_err(|e| CliError::Usage(format!("--key: {e}")))?;
    let profile = resolve_profile(&a)?;
    let classes = parse_classes(&a.classes)?;
    let n = usize::try_from(a.n).map_err(|_| CliError::Usage("--n: too large".into()))?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;

    let groups = simulate_class_groups(&classes, &key, n, &profile, a.seed)?;
    let mut files = Vec::new();
    for class in classes {
        let mut ts = groups[&class].clone();
        if !a.embed_key {
            ts.true_key = None;
        }
        let path = a.out.join(format!("{}.sct", class.short_name()));
        let bytes = save(&ts, &path)?;
        if !a.json {
            writeln!(
                out,
                "wrote {}: {} traces, channel {}, class {}, seed {}",
                path.display(),
                ts.len(),
                profile.name,
                class,
                a.seed
            )?;
        }
        files.push(json!({
            "path": path.display().to_string(),
            "class": class,
            "n_traces": ts.len(),
            "bytes": bytes,
        }));
    }
    if a.json {
        emit_json(
            out,
            &json!({
                "command": "simulate",
                "preset_table_version": PRESET_TABLE_VERSION,
                "profile": profile,
                "seed": a.seed,
                "key_embedded": a.embed_key,
                "files": files,
            }),
        )?;
    }
    Ok(())
}

fn cmd_tvla(a: TvlaArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.files.len() < 2 {
        return Err(CliError::Semantic(format!(
            "tvla needs at least two class-labelled trace files, got {}",
            a.files.len()
        )));
    }
    let mut groups = BTreeMap::new();
    for path in &a.files {
        let ts = load(path)?;
        let class = ts.class_label.ok_or_else(|| {
            CliError::Semantic(format!("{}: trace file has no class label", path.display()))
        })?;
        if groups.insert(class, ts).is_some() {
            return Err(CliError::Semantic(format!(
                "{}: class {class} appears in more than one file",
                path.display()
            )));
        }
    }
    let report = run_tvla(&groups, a.sample_index)?;
    if let Some(p) = &a.csv {
        let f = fs::File::create(p).map_err(|e| io_err(p, e))?;
        report.write_csv(f).map_err(|e| io_err(p, e))?;
    }
    if a.json {
        emit_json(
            out,
            &json!({
                "command": "tvla",
                "profile": known_profile(&report.channel),
                "report": report,
            }),
        )
    } else {
        write!(out, "{}", report.to_table())?;
        Ok(())
    }
}

fn cmd_cpa(a: CpaArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut ts = load(&a.file)?;
    if a.delta {
        ts = ts.consecutive_deltas();
    }
    let model = LeakModel::from(a.model);
    let key = match (ts.true_key, a.recover_only) {
        (_, true) => None,
        (Some(k), false) => Some(k),
        (None, false) => {
            return Err(CliError::Semantic(format!(
                "{}: no embedded key; rerun with --recover-only or simulate with --embed-key",
                a.file.display()
            )))
        }
    };
    let report: CpaReport = run_cpa(&ts, model, key.as_ref())?;
    let curve: Option<GeCurve> = match a.ge_step {
        None => None,
        Some(step) => {
            let key =
                key.ok_or_else(|| CliError::Semantic("--ge-step needs the true key".into()))?;
            let step = usize::try_from(step).unwrap_or(usize::MAX).min(ts.len());
            Some(ge_curve(&ts, model, &key, step)?)
        }
    };
    if let (Some(c), Some(p)) = (&curve, &a.ge_out) {
        let f = fs::File::create(p).map_err(|e| io_err(p, e))?;
        c.write_csv(f).map_err(|e| io_err(p, e))?;
    }
    if a.json {
        return emit_json(
            out,
            &json!({
                "command": "cpa",
                "profile": known_profile(&report.channel),
                "delta": a.delta,
                "report": report,
                "ge_curve": curve,
            }),
        );
    }
    write!(out, "{}", report.to_text())?;
    if let (Some(c), None) = (&curve, &a.ge_out) {
        writeln!(out)?;
        c.write_csv(&mut *out)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn cmd_mitigate(a: MitigateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ts = load(&a.file)?;
    let spec = MitigationSpec {
        extra_noise_sigma: a.noise,
        interval_multiplier: a.interval,
    };
    let mitigated = apply_mitigation(&ts, &spec, a.seed)?;
    save(&mitigated, &a.out)?;
    if a.json {
        emit_json(
            out,
            &json!({
                "command": "mitigate",
                "input": a.file.display().to_string(),
                "output": a.out.display().to_string(),
                "spec": spec,
                "seed": a.seed,
                "n_traces": mitigated.len(),
                "samples_per_trace": mitigated.samples_per_trace(),
            }),
        )
    } else {
        writeln!(
            out,
            "wrote {}: {} traces, {} samples each (noise {}, interval x{}, seed {})",
            a.out.display(),
            mitigated.len(),
            mitigated.samples_per_trace(),
            a.noise,
            a.interval,
            a.seed
        )?;
        Ok(())
    }
}

fn cmd_throttle(a: ThrottleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let driver = match a.driver {
        DriverArg::Actual => ThrottleDriver::ActualPower,
        DriverArg::Sensor => ThrottleDriver::IndependentSensor,
    };
    let sensor = match (driver, a.sensor) {
        (ThrottleDriver::IndependentSensor, None) => {
            return Err(CliError::Usage("--driver sensor requires --sensor".into()))
        }
        (_, s) => s,
    };
    let spec = ThrottleSpec {
        power_limit: a.limit,
        f_max: a.fmax,
        work_units: a.work,
        driver,
    };
    let r = throttle_transform(a.demand, &spec, sensor.unwrap_or(a.demand))?;
    let throttled = r.frequency < spec.f_max;
    if a.json {
        emit_json(
            out,
            &json!({
                "command": "throttle",
                "demand_power": a.demand,
                "sensor_reading": sensor,
                "spec": spec,
                "frequency": r.frequency,
                "elapsed_time": r.elapsed_time,
                "throttled": throttled,
                "law": THROTTLE_LAW,
            }),
        )
    } else {
        writeln!(
            out,
            "frequency={:.4} elapsed={:.6} throttled={} law=cubic",
            r.frequency,
            r.elapsed_time,
            if throttled { "yes" } else { "no" }
        )?;
        Ok(())
    }
}

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ts = load(&a.file)?;
    let rows = match &a.out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| io_err(p, e))?;
            export_csv(&ts, io::BufWriter::new(f)).map_err(|e| io_err(p, e))?
        }
        None if a.json => {
            return Err(CliError::Usage(
                "--json needs --out for the CSV itself".into(),
            ))
        }
        None => export_csv(&ts, &mut *out).map_err(|e| CliError::Io(e.to_string()))?,
    };
    if a.json {
        emit_json(
            out,
            &json!({
                "command": "export",
                "input": a.file.display().to_string(),
                "output": a.out.as_ref().map(|p| p.display().to_string()),
                "rows": rows,
            }),
        )?;
    }
    Ok(())
}
