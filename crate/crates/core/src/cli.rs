//! The `microcell` command line.
//!
//! Exit status: 0 success, 2 parameter error, 3 validation error, 4 I/O error.
//! Config files are JSON with the same field names as the library types;
//! flags override values read from a file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composition::{compose, CompositionError};
use crate::domain::{
    validate_composition, validate_instance, CompositionResult, EnergyService, Instance, Mah,
    MicrocellDemand, Strategy, ValidationReport,
};
use crate::harness::{run_sweep, write_plot_data, HarnessError, RunError, SweepSpec};
use crate::metrics::{pooled_blend, qoe, DEFAULT_ALPHA};
use crate::workload::{generate_instance, ingest_transactions_files, GeneratorConfig, MappingConfig, RatioMode, WorkloadError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parameter(String),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parameter(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_owned(), source }
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Parameter(_) => CliError::Parameter(e.to_string()),
            WorkloadError::Io(source) => CliError::Io { path: PathBuf::from("<input>"), source },
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CompositionError> for CliError {
    fn from(e: CompositionError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Spec(_) => CliError::Parameter(e.to_string()),
            HarnessError::Run { source: RunError::Workload(WorkloadError::Parameter(_)), .. } => {
                CliError::Parameter(e.to_string())
            }
            HarnessError::Io { path, source } => CliError::Io { path, source },
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "microcell", version, about = "Energy service composition experiments for IoT microcells")]
pub struct Cli {
    /// Seed for all randomness; overrides any seed in a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or output directory for `sweep`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic instance.
    Generate(GenerateArgs),
    /// Build an instance from transaction and energy CSV files.
    Ingest(IngestArgs),
    /// Run one strategy on an instance and report its QoE.
    Compose(ComposeArgs),
    /// Run a repeated ratio and threshold sweep.
    Sweep(SweepArgs),
    /// Check an instance and, optionally, a composition of it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// GeneratorConfig JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long, value_parser = ["count", "energy"])]
    pub ratio_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub transactions: PathBuf,
    #[arg(long)]
    pub energy: PathBuf,
    /// MappingConfig JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub provider_share: Option<f64>,
    #[arg(long)]
    pub shop: Option<String>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// pb, db, greedy or maxmin.
    #[arg(long)]
    pub strategy: String,
    #[arg(long, default_value_t = 0)]
    pub threshold: Mah,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// SweepSpec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<Mah>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Write the per-figure CSV files.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub plot_data: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub composition: Option<PathBuf>,
}

/// Record of a run: inputs, resolved parameters and emitted files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub parameters: serde_json::Value,
    pub output_dir: PathBuf,
    pub files: Vec<FileChecksum>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files written so far; removed again unless the run commits.
struct Outputs {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), created_dir: None, committed: false }
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.files.push(path.to_owned());
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            self.created_dir = Some(dir.to_owned());
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(dir) = &self.created_dir {
            let _ = fs::remove_dir_all(dir);
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parameter(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

fn load_instance(path: &Path) -> Result<(MicrocellDemand, Vec<EnergyService>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let inst: Instance =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    inst.to_parts().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn report_violations(what: &str, report: &ValidationReport) -> Result<(), CliError> {
    if report.is_valid() {
        return Ok(());
    }
    let lines: Vec<String> = report.violations.iter().map(|v| format!("  {v}")).collect();
    Err(CliError::Validation(format!("{what} has {} violation(s):\n{}", report.len(), lines.join("\n"))))
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CliError::Parameter(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// Parses arguments and runs the command. Printing goes to `stdout`.
pub fn run(cli: Cli, stdout: &mut impl Write) -> Result<(), CliError> {
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    let print = |stdout: &mut dyn Write, text: &str| {
        writeln!(stdout, "{text}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
    };
    let mut outputs = Outputs::new();

    match &cli.command {
        Command::Generate(args) => {
            let mut config: GeneratorConfig = match &args.config {
                Some(p) => read_json(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(n) = args.requests {
                config.num_requests = n;
            }
            if let Some(r) = args.ratio {
                config.service_to_request_ratio = r;
            }
            if let Some(n) = args.slots {
                config.num_slots = n;
            }
            if let Some(m) = &args.ratio_mode {
                config.ratio_mode = if m == "energy" { RatioMode::Energy } else { RatioMode::Count };
            }
            let inst = generate_instance(&config)?;
            let path = out("instance.json");
            outputs.write(&path, &to_json(&inst))?;
            print(
                stdout,
                &format!("slots: {}, requests: {}, services: {}", inst.slots.len(), inst.requests.len(), inst.services.len()),
            )?;
        }
        Command::Ingest(args) => {
            let mut config: MappingConfig = match &args.config {
                Some(p) => read_json(p)?,
                None => MappingConfig::default(),
            };
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(p) = args.provider_share {
                config.provider_share = p;
            }
            if let Some(shop) = &args.shop {
                config.shop_id = Some(shop.clone());
            }
            for p in [&args.transactions, &args.energy] {
                if !p.is_file() {
                    return Err(CliError::io(p, std::io::ErrorKind::NotFound.into()));
                }
            }
            let (demand, services, report) = ingest_transactions_files(&args.transactions, &args.energy, &config)?;
            let inst = Instance::from_parts(&demand, &services);
            let path = out("instance.json");
            outputs.write(&path, &to_json(&inst))?;
            print(
                stdout,
                &format!(
                    "slots: {}, requests: {}, services: {}, dropped outside interval: {}",
                    inst.slots.len(),
                    inst.requests.len(),
                    inst.services.len(),
                    report.dropped_outside_interval
                ),
            )?;
        }
        Command::Compose(args) => {
            let strategy: Strategy = args.strategy.parse().map_err(CliError::Parameter)?;
            check_alpha(args.alpha)?;
            let (demand, services) = load_instance(&args.instance)?;
            let result = compose(strategy, &demand, &services, args.threshold)?;
            report_violations("composition", &validate_composition(&result, &demand, &services))?;
            let report = qoe(&demand, &services, &result, args.alpha)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let pooled = pooled_blend(&demand, &result, args.alpha).map_err(|e| CliError::Validation(e.to_string()))?;
            let path = out("composition.json");
            outputs.write(&path, &to_json(&result))?;
            let text = match cli.format {
                Format::Json => String::from_utf8(to_json(&serde_json::json!({
                    "strategy": strategy,
                    "threshold_mah": result.threshold_mah,
                    "sr": report.weighted_sr(),
                    "fr": report.weighted_fr(),
                    "qoe": report.qoe,
                    "pooled_qoe": pooled,
                    "energy_utilization": report.energy_utilization,
                    "report": report,
                })))
                .unwrap(),
                Format::Csv => format!(
                    "strategy,threshold,sr,fr,qoe,pooled_qoe,eu\n{},{},{},{},{},{},{}",
                    strategy.label(),
                    result.threshold_mah,
                    report.weighted_sr(),
                    report.weighted_fr(),
                    report.qoe,
                    pooled,
                    report.energy_utilization
                ),
            };
            print(stdout, text.trim_end())?;
        }
        Command::Sweep(args) => {
            let mut spec: SweepSpec = match &args.spec {
                Some(p) => read_json(p)?,
                None => SweepSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.master_seed = s;
            }
            if let Some(n) = args.repetitions {
                spec.repetitions = n;
            }
            if let Some(r) = &args.ratios {
                spec.ratios = r.clone();
            }
            if let Some(t) = &args.thresholds {
                spec.thresholds = t.clone();
            }
            if let Some(a) = args.alpha {
                spec.alpha = a;
            }
            if let Some(names) = &args.strategies {
                spec.strategies = names
                    .iter()
                    .map(|n| n.parse::<Strategy>())
                    .collect::<Result<_, _>>()
                    .map_err(CliError::Parameter)?;
            }
            spec.validate()?;

            let dir = out("sweep_out");
            outputs.ensure_dir(&dir)?;
            let result = run_sweep(&spec)?;
            let data = match cli.format {
                Format::Json => ("sweep.json", to_json(&result)),
                Format::Csv => {
                    let mut buf = Vec::new();
                    result.write_csv(&mut buf)?;
                    ("sweep.csv", buf)
                }
            };
            let mut written = vec![dir.join(data.0)];
            outputs.write(&written[0], &data.1)?;
            if args.plot_data {
                outputs.files.extend(crate::harness::PLOT_FILES.iter().map(|f| dir.join(f)));
                written.extend(write_plot_data(&dir, &spec, &result)?);
            }
            let files = written
                .iter()
                .map(|p| Ok(FileChecksum { path: p.clone(), sha256: sha256_file(p)? }))
                .collect::<Result<_, CliError>>()?;
            let manifest = RunManifest {
                command: "sweep".into(),
                config_path: args.spec.clone(),
                parameters: serde_json::to_value(&spec).expect("spec serializes"),
                output_dir: dir.clone(),
                files,
            };
            outputs.write(&dir.join("manifest.json"), &to_json(&manifest))?;
            print(stdout, &format!("{} rows written to {}", result.rows.len(), dir.display()))?;
        }
        Command::Validate(args) => {
            let (demand, services) = load_instance(&args.instance)?;
            let instance_report = validate_instance(&demand, &services);
            let composition_report = match &args.composition {
                Some(p) => {
                    let result: CompositionResult = read_json(p)?;
                    Some(validate_composition(&result, &demand, &services))
                }
                None => None,
            };
            let text = match cli.format {
                Format::Json => String::from_utf8(to_json(&serde_json::json!({
                    "instance": instance_report,
                    "composition": composition_report,
                })))
                .unwrap(),
                Format::Csv => {
                    let mut s = String::from("target,violation");
                    for (target, rep) in [("instance", Some(&instance_report)), ("composition", composition_report.as_ref())] {
                        for v in rep.into_iter().flat_map(|r| &r.violations) {
                            s.push_str(&format!("\n{target},\"{}\"", v.to_string().replace('"', "'")));
                        }
                    }
                    s
                }
            };
            print(stdout, text.trim_end())?;
            report_violations("instance", &instance_report)?;
            if let Some(rep) = &composition_report {
                report_violations("composition", rep)?;
            }
        }
    }
    outputs.committed = true;
    Ok(())
}

/// Entry point of the `microcell` binary.
pub fn main() -> ExitCode {
    main_from(std::env::args_os())
}

pub fn main_from(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
