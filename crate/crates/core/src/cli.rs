//! `tractsynth` command-line front end.
//!
//! Every subcommand writes a `<subcommand>.manifest.json` into the report
//! directory (`--report-dir`, or `TRACTSYNTH_REPORT_DIR`, or the directory
//! of the primary output). Exit codes: 0 success, 1 validation error,
//! 2 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::eval::{
    compare_dcr, compare_marginals, dcr_table, emit_histograms, joint_pair_metrics, DcrLevel, DcrReport,
    METRIC_EPSILON,
};
use crate::generate::{builtin_rules, generate_inventory, load_rules, sanity_check, GenerateOptions};
use crate::ingest::{
    empirical_marginals, encode_onehot, load_microdata, load_schema, load_target_marginals, restructure,
    DecodeMode, RestructuredTable, Schema,
};
use crate::nn::ReparamMode;
use crate::oracle::{make_oracle, write_oracle};
use crate::par::Exec;
use crate::train::{
    finetune, init_latent, posterior_latent, pretrain, FinetuneConfig, LatentMatrix, LionConfig, Schedule,
    TrainConfig,
};
use crate::vae::{load_model, model_fingerprint, save_model, VaeConfig, VaeModel};

pub const REPORT_DIR_ENV: &str = "TRACTSYNTH_REPORT_DIR";

/// Offset between the model-init seed and the pretraining noise seed.
const NOISE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Parser, Serialize)]
#[command(name = "tractsynth", version, about = "Census-tract synthetic population generation")]
pub struct Cli {
    /// Directory for reports and the run manifest.
    #[arg(long, global = true, env = REPORT_DIR_ENV)]
    pub report_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Restructure microdata into fixed-width household rows.
    Restructure(RestructureArgs),
    /// Train the VAE on microdata.
    Pretrain(PretrainArgs),
    /// Fit a latent matrix to tract marginals through the frozen decoder.
    Finetune(FinetuneArgs),
    /// Decode a latent matrix into household and person tables.
    Generate(GenerateArgs),
    /// Marginal, joint-pair and histogram reports for an inventory.
    Evaluate(EvaluateArgs),
    /// DCR distributions of two inventories and their K-S comparison.
    Privacy(PrivacyArgs),
    /// Write a desk-scale ground-truth dataset.
    OracleMake(OracleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MicrodataArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub microdata_hh: PathBuf,
    #[arg(long)]
    pub microdata_p: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RestructureArgs {
    #[command(flatten)]
    pub input: MicrodataArgs,
    /// Restructured CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the one-hot matrix.
    #[arg(long)]
    pub encoded_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReparamArg {
    PaperLiteral,
    Standard,
}

impl From<ReparamArg> for ReparamMode {
    fn from(r: ReparamArg) -> Self {
        match r {
            ReparamArg::PaperLiteral => ReparamMode::PaperLiteral,
            ReparamArg::Standard => ReparamMode::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeArg {
    Argmax,
    Sample,
}

impl From<DecodeArg> for DecodeMode {
    fn from(d: DecodeArg) -> Self {
        match d {
            DecodeArg::Argmax => DecodeMode::Argmax,
            DecodeArg::Sample => DecodeMode::Sample,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 4000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub min_lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub decay_start: usize,
    #[arg(long, default_value_t = 0.9)]
    pub lion_beta1: f64,
    #[arg(long, default_value_t = 0.99)]
    pub lion_beta2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
}

impl ScheduleArgs {
    fn schedule(&self) -> Schedule {
        Schedule {
            initial_lr: self.lr,
            min_lr: self.min_lr,
            epochs: self.epochs,
            decay_start_epoch: self.decay_start,
        }
    }

    fn lion(&self) -> LionConfig {
        LionConfig {
            beta1: self.lion_beta1,
            beta2: self.lion_beta2,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub input: MicrodataArgs,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Encoder block widths; the decoder mirrors them.
    #[arg(long, value_delimiter = ',', default_value = "512,384,256,192,128,96")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub latent_dim: usize,
    #[arg(long, value_enum, default_value_t = ReparamArg::PaperLiteral)]
    pub reparam: ReparamArg,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Defaults to the fraction of zeros in the encoded microdata.
    #[arg(long)]
    pub focal_alpha: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub focal_gamma: f64,
    /// Pin the person window instead of using the largest household.
    #[arg(long)]
    pub n_window: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub input: MicrodataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tract_marginals: PathBuf,
    /// Latent matrix file.
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds the latent initialization and the reference subsample.
    #[arg(long)]
    pub seed: u64,
    /// Latent rows; defaults to the tract's household total.
    #[arg(long)]
    pub rows: Option<usize>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1.0)]
    pub w_marginal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_dbce: f64,
    #[arg(long, default_value_t = 0.1)]
    pub w_norm_kl: f64,
    /// Softmin temperature; defaults to 1/D.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Use a seeded subsample of this many microdata rows as the D-BCE reference.
    #[arg(long)]
    pub reference_rows: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false, id = "source")]
pub struct LatentSource {
    /// Latent matrix written by `finetune`.
    #[arg(long)]
    pub latent: Option<PathBuf>,
    /// Draw this many rows from the unit normal.
    #[arg(long)]
    pub prior_rows: Option<usize>,
    /// Encode the microdata and draw one posterior sample per household.
    #[arg(long)]
    pub posterior: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: LatentSource,
    /// Seed for `--prior-rows` and `--posterior`.
    #[arg(long)]
    pub latent_seed: Option<u64>,
    #[arg(long)]
    pub microdata_hh: Option<PathBuf>,
    #[arg(long)]
    pub microdata_p: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DecodeArg::Argmax)]
    pub decode: DecodeArg,
    /// Seeds sample-mode decoding.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub tract_id: Option<String>,
    #[arg(long)]
    pub repair_na: bool,
    /// Sanity rule file; the built-in R65/R18 rules are used otherwise.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Output directory for households.csv, persons.csv, provenance.json and sanity.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: MicrodataArgs,
    #[arg(long)]
    pub synthetic_hh: PathBuf,
    #[arg(long)]
    pub synthetic_p: PathBuf,
    /// Compare against these marginals with the microdata as baseline.
    #[arg(long)]
    pub tract_marginals: Option<PathBuf>,
    #[arg(long, default_value_t = METRIC_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PrivacyArgs {
    #[command(flatten)]
    pub input: MicrodataArgs,
    #[arg(long)]
    pub a_hh: PathBuf,
    #[arg(long)]
    pub a_p: PathBuf,
    #[arg(long)]
    pub b_hh: PathBuf,
    #[arg(long)]
    pub b_p: PathBuf,
    #[arg(long, default_value = "pretrain")]
    pub label_a: String,
    #[arg(long, default_value = "finetune")]
    pub label_b: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Run the K-S test on histogram bin indices.
    #[arg(long)]
    pub binned: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub households: usize,
    #[arg(long, default_value_t = 1436)]
    pub tract_households: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub schema_fingerprint: Option<String>,
    pub model_fingerprint: Option<String>,
    pub timings_secs: BTreeMap<String, f64>,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (including the program name) and runs one subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", single_line(&e.render().to_string()));
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", single_line(f.message()));
            f.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut run = Run::new(cli)?;
    match &cli.command {
        Command::Restructure(a) => restructure_cmd(a, &mut run),
        Command::Pretrain(a) => pretrain_cmd(a, &mut run),
        Command::Finetune(a) => finetune_cmd(a, &mut run),
        Command::Generate(a) => generate_cmd(a, &mut run),
        Command::Evaluate(a) => evaluate_cmd(a, &mut run),
        Command::Privacy(a) => privacy_cmd(a, &mut run),
        Command::OracleMake(a) => oracle_cmd(a, &mut run),
    }?;
    run.finish()
}

/// Collects outputs and timings for the manifest.
struct Run {
    manifest: RunManifest,
    report_dir: PathBuf,
    started: Instant,
}

impl Run {
    fn new(cli: &Cli) -> CliResult<Self> {
        let (name, primary) = match &cli.command {
            Command::Restructure(a) => ("restructure", parent_of(&a.out)),
            Command::Pretrain(a) => ("pretrain", parent_of(&a.out)),
            Command::Finetune(a) => ("finetune", parent_of(&a.out)),
            Command::Generate(a) => ("generate", a.out.clone()),
            Command::Evaluate(a) => ("evaluate", a.out.clone()),
            Command::Privacy(a) => ("privacy", a.out.clone()),
            Command::OracleMake(a) => ("oracle-make", a.out.clone()),
        };
        let report_dir = cli.report_dir.clone().unwrap_or(primary);
        std::fs::create_dir_all(&report_dir)
            .map_err(|e| Failure::from(Error::io(&report_dir, e)))?;
        let config = serde_json::to_value(cli).map_err(|e| Failure::Runtime(e.to_string()))?;
        Ok(Run {
            manifest: RunManifest {
                subcommand: name.to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                schema_fingerprint: None,
                model_fingerprint: None,
                timings_secs: BTreeMap::new(),
                outputs: Vec::new(),
            },
            report_dir,
            started: Instant::now(),
        })
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f()?;
        self.manifest.timings_secs.insert(phase.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }

    fn output(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.outputs.push(OutputFile {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes a file through `f` and records it.
    fn write(&mut self, path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        drop(w);
        self.output(path)
    }

    fn report_path(&self, name: &str) -> PathBuf {
        self.report_dir.join(name)
    }

    fn finish(mut self) -> CliResult<()> {
        self.manifest
            .timings_secs
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let path = self.report_path(&format!("{}.manifest.json", self.manifest.subcommand));
        let json = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_atomic(&path, &json)
    }
}

fn parent_of(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("input file not found: {}", p.display())))
    }
}

fn load_table(schema: &Schema, hh: &Path, p: &Path) -> CliResult<RestructuredTable> {
    require_file(hh)?;
    require_file(p)?;
    let md = load_microdata(hh, p, schema)?;
    Ok(restructure(&md, schema)?)
}

fn load_inputs(input: &MicrodataArgs) -> CliResult<(Schema, RestructuredTable)> {
    require_file(&input.schema)?;
    let schema = load_schema(&input.schema)?;
    let table = load_table(&schema, &input.microdata_hh, &input.microdata_p)?;
    Ok((schema, table))
}

fn restructure_cmd(a: &RestructureArgs, run: &mut Run) -> CliResult<()> {
    let (_, table) = run.time("load", || load_inputs(&a.input))?;
    run.manifest.schema_fingerprint = Some(table.schema.fingerprint());
    run.write(&a.out, |w| table.write_csv(w))?;
    if let Some(path) = &a.encoded_out {
        let x = encode_onehot(&table)?;
        run.write(path, |w| x.write_csv(w))?;
    }
    Ok(())
}

fn pretrain_cmd(a: &PretrainArgs, run: &mut Run) -> CliResult<()> {
    let mut schema = load_schema_checked(&a.input.schema)?;
    if let Some(w) = a.n_window {
        schema = schema.with_window(w)?;
    }
    let table = run.time("load", || load_table(&schema, &a.input.microdata_hh, &a.input.microdata_p))?;
    let x = encode_onehot(&table)?;
    run.manifest.schema_fingerprint = Some(table.schema.fingerprint());
    let config = VaeConfig::mirrored(a.widths.clone(), a.latent_dim, a.reparam.into());
    let mut model = VaeModel::init(&table.schema, config, a.seed)?;
    let tc = TrainConfig {
        schedule: a.schedule.schedule(),
        seed: a.seed.wrapping_add(NOISE_SEED_OFFSET),
        beta: a.beta,
        focal_alpha: a.focal_alpha,
        focal_gamma: a.focal_gamma,
        lion: a.schedule.lion(),
    };
    let history = run.time("pretrain", || Ok(pretrain(&mut model, &x, &tc)?))?;
    save_model(&model, &a.out)?;
    run.output(&a.out)?;
    run.manifest.model_fingerprint = Some(model_fingerprint(&model));
    let path = run.report_path("pretrain_history.csv");
    run.write(&path, |w| history.write_csv(w))?;
    if let Some(last) = history.records.last() {
        println!(
            "pretrained {} epochs: focal {:.6} latent kl {:.6}",
            history.records.len(),
            last.focal,
            last.latent_kl
        );
    }
    Ok(())
}

fn load_schema_checked(path: &Path) -> CliResult<Schema> {
    require_file(path)?;
    Ok(load_schema(path)?)
}

/// Loads a model, restructuring the microdata at the model's window.
fn load_model_and_data(
    schema_path: &Path,
    model_path: &Path,
    hh: &Path,
    p: &Path,
) -> CliResult<(Schema, VaeModel, RestructuredTable)> {
    let schema = load_schema_checked(schema_path)?;
    require_file(model_path)?;
    let model = load_model(model_path, &schema)?;
    let schema = schema.with_window(model.n_window)?;
    let table = load_table(&schema, hh, p)?;
    Ok((schema, model, table))
}

fn finetune_cmd(a: &FinetuneArgs, run: &mut Run) -> CliResult<()> {
    require_file(&a.tract_marginals)?;
    let (schema, model, table) = run.time("load", || {
        load_model_and_data(&a.input.schema, &a.model, &a.input.microdata_hh, &a.input.microdata_p)
    })?;
    let targets = load_target_marginals(&a.tract_marginals, &schema)?;
    let x = encode_onehot(&table)?;
    run.manifest.schema_fingerprint = Some(schema.fingerprint());
    run.manifest.model_fingerprint = Some(model_fingerprint(&model));
    let rows = a.rows.unwrap_or(targets.n_households);
    let mut latent = init_latent(rows, model.latent_dim(), a.seed)?;
    let fc = FinetuneConfig {
        schedule: a.schedule.schedule(),
        seed: a.seed,
        w_marginal: a.w_marginal,
        w_dbce: a.w_dbce,
        w_norm_kl: a.w_norm_kl,
        temperature: a.temperature,
        reference_rows: a.reference_rows,
        lion: a.schedule.lion(),
    };
    let before = model.decoder_checksum();
    let history = run.time("finetune", || Ok(finetune(&model, &mut latent, &targets, &x, &fc)?))?;
    if model.decoder_checksum() != before {
        return Err(Failure::Runtime("decoder changed during fine-tuning".into()));
    }
    latent.save(&a.out)?;
    run.output(&a.out)?;
    let path = run.report_path("finetune_history.csv");
    run.write(&path, |w| history.write_csv(w))?;
    let path = run.report_path("finetune_soft_marginals.csv");
    run.write(&path, |w| history.final_soft_marginals.write_csv(&schema, w))?;
    if let Some(last) = history.records.last() {
        println!(
            "fine-tuned {} steps: marginal rmse {:.6} dbce {:.6} norm kl {:.6}",
            history.records.len(),
            last.marginal_rmse,
            last.dbce,
            last.norm_kl
        );
    }
    Ok(())
}

fn generate_cmd(a: &GenerateArgs, run: &mut Run) -> CliResult<()> {
    let schema = load_schema_checked(&a.schema)?;
    require_file(&a.model)?;
    let model = load_model(&a.model, &schema)?;
    let schema = schema.with_window(model.n_window)?;
    run.manifest.schema_fingerprint = Some(schema.fingerprint());
    run.manifest.model_fingerprint = Some(model_fingerprint(&model));
    let need_seed = || {
        a.latent_seed
            .ok_or_else(|| Failure::Validation("--latent-seed is required with --prior-rows or --posterior".into()))
    };
    let latent = if let Some(path) = &a.source.latent {
        require_file(path)?;
        LatentMatrix::load(path)?
    } else if let Some(n) = a.source.prior_rows {
        init_latent(n, model.latent_dim(), need_seed()?)?
    } else {
        let seed = need_seed()?;
        let (hh, p) = match (&a.microdata_hh, &a.microdata_p) {
            (Some(h), Some(p)) => (h, p),
            _ => {
                return Err(Failure::Validation(
                    "--posterior needs --microdata-hh and --microdata-p".into(),
                ))
            }
        };
        let table = load_table(&schema, hh, p)?;
        posterior_latent(&model, &encode_onehot(&table)?, seed)?
    };
    let opts = GenerateOptions {
        mode: a.decode.into(),
        seed: a.seed,
        tract_id: a.tract_id.clone(),
        repair_present_na: a.repair_na,
    };
    let inv = run.time("generate", || Ok(generate_inventory(&model, &latent, &schema, &opts)?))?;
    run.write(&a.out.join("households.csv"), |w| inv.write_households_csv(w))?;
    run.write(&a.out.join("persons.csv"), |w| inv.write_persons_csv(w))?;
    run.write(&a.out.join("provenance.json"), |w| inv.write_provenance_json(w))?;
    let rules = match &a.rules {
        Some(path) => {
            require_file(path)?;
            load_rules(path)?
        }
        None => builtin_rules(&schema),
    };
    let report = sanity_check(&inv.table, &rules)?;
    run.write(&a.out.join("sanity.csv"), |w| report.write_csv(w))?;
    println!(
        "generated {} households, {} persons; {}",
        inv.provenance.households,
        inv.provenance.persons,
        report.summary_line()
    );
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs, run: &mut Run) -> CliResult<()> {
    let (schema, micro) = run.time("load", || load_inputs(&a.input))?;
    let schema_w = schema.with_window(micro.n_window())?;
    run.manifest.schema_fingerprint = Some(schema_w.fingerprint());
    let syn = load_table(&schema, &a.synthetic_hh, &a.synthetic_p)?;
    let target = match &a.tract_marginals {
        Some(p) => {
            require_file(p)?;
            Some(load_target_marginals(p, &schema)?)
        }
        None => None,
    };
    let micro_m = empirical_marginals(&micro)?;
    let syn_m = empirical_marginals(&syn)?;
    let report = match &target {
        Some(t) => compare_marginals(&schema, &syn_m, t, Some(&micro_m), a.epsilon)?,
        None => compare_marginals(&schema, &syn_m, &micro_m, None, a.epsilon)?,
    };
    run.write(&a.out.join("metrics.csv"), |w| report.write_csv(w))?;
    run.write(&a.out.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(|e| Error::parse("<metrics>", e))
    })?;
    let joint = run.time("joint", || Ok(joint_pair_metrics(&syn, &micro, a.epsilon)?))?;
    run.write(&a.out.join("joint_rmse.csv"), |w| joint.write_matrix_csv(w, |p| p.rmse))?;
    run.write(&a.out.join("joint_kl.csv"), |w| joint.write_matrix_csv(w, |p| p.kl))?;
    run.write(&a.out.join("joint_p_value.csv"), |w| joint.write_matrix_csv(w, |p| p.p_value))?;
    for path in emit_histograms(&a.out, &schema, Some(&micro_m), Some(&syn_m), target.as_ref())? {
        run.output(&path)?;
    }
    let reference = if target.is_some() { "target" } else { "microdata" };
    println!(
        "mean rmse vs {reference} {:.6}, mean kl {:.6}",
        report.mean_rmse, report.mean_kl
    );
    Ok(())
}

fn privacy_cmd(a: &PrivacyArgs, run: &mut Run) -> CliResult<()> {
    let (schema, micro) = run.time("load", || load_inputs(&a.input))?;
    let schema = schema.with_window(micro.n_window())?;
    run.manifest.schema_fingerprint = Some(schema.fingerprint());
    let inv_a = load_table(&schema, &a.a_hh, &a.a_p)?;
    let inv_b = load_table(&schema, &a.b_hh, &a.b_p)?;
    let exec = Exec::default();
    let compare = |level| -> CliResult<_> {
        let da = dcr_table(&inv_a, &micro, level, exec)?;
        let db = dcr_table(&inv_b, &micro, level, exec)?;
        Ok(compare_dcr(level, da, db, a.bins, a.binned)?)
    };
    let household = run.time("household", || compare(DcrLevel::Household))?;
    let person = run.time("person", || compare(DcrLevel::Person))?;
    let report = DcrReport {
        label_a: a.label_a.clone(),
        label_b: a.label_b.clone(),
        alpha: a.alpha,
        household,
        person,
    };
    run.write(&a.out.join("dcr_distances.csv"), |w| report.write_distances_csv(w))?;
    for (name, lc) in [("household", &report.household), ("person", &report.person)] {
        let path = a.out.join(format!("dcr_hist_{name}.csv"));
        run.write(&path, |w| lc.histogram.write_csv(w, &report.label_a, &report.label_b))?;
    }
    run.write(&a.out.join("privacy.json"), |w| {
        let summary = serde_json::json!({
            "label_a": report.label_a,
            "label_b": report.label_b,
            "alpha": report.alpha,
            "household": report.household.ks,
            "person": report.person.ks,
            "no_significant_difference": report.no_significant_difference(),
        });
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| Error::parse("<privacy>", e))
    })?;
    println!("{}", report.summary_line());
    Ok(())
}

fn oracle_cmd(a: &OracleArgs, run: &mut Run) -> CliResult<()> {
    let dataset = run.time("sample", || Ok(make_oracle(a.households, a.tract_households, a.seed)?))?;
    run.manifest.schema_fingerprint = Some(dataset.schema.fingerprint());
    for path in write_oracle(&dataset, &a.out)? {
        run.output(&path)?;
    }
    Ok(())
}
