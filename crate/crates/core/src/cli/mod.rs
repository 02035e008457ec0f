//! The `ccgnn` command line: argument parsing, config precedence
//! (flag > file > default) and dispatch.

mod compare;

pub use compare::{
    fold_splits, run_compare, run_compare_on, write_reports, CellFailure, CompareOutcome, ExperimentManifest,
    SPLIT_RATIOS,
};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::encoders::{assign_named, to_named, EncoderParams, HeadParams};
use crate::error::{Error, Result};
use crate::features::{load_dataset, save_dataset, synth_av_generate, AVDataset, Fold, SynthConfig};
use crate::oracle::selftest;
use crate::trainer::reports::write_csv;
use crate::trainer::{
    fit_head, head_inputs, load_checkpoint, model_gradcheck, prepare_fold, pretrain_ssl, save_checkpoint, score_test,
    seeded_encoder, GradCheckSetup, ModelKind, RunConfig, GRADCHECK_TOLERANCE,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CCGN_OUT";
/// Output root when neither `--out` nor the environment variable is set.
pub const DEFAULT_OUT: &str = "ccgn-out";

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ccgnn",
    version,
    about = "Cortical and CCA graph encoders for audio-visual speech features"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an audio-visual dataset directory.
    Generate(GenerateArgs),
    /// Self-supervised pretraining of one encoder on one fold's training split.
    Pretrain(TrainArgs),
    /// Fit the reconstruction head on a frozen encoder checkpoint.
    TrainHead(HeadArgs),
    /// Score saved encoder and head checkpoints on a fold's test split.
    Evaluate(EvalArgs),
    /// Run the model × k × fold grid and write the summary tables.
    Compare(CompareArgs),
    /// Finite-difference check of the full self-supervised loss.
    Gradcheck(GradcheckArgs),
    /// Compare production code paths against reference implementations.
    Selftest(SelftestArgs),
}

/// Flags shared by the training commands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// RunConfig file (TOML) with the same key names as the flags' fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Epochs of the command's own stage (pretraining or head training).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate of the command's own stage.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Head weight decay.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Dataset directory (default: <out>/data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (default: $CCGN_OUT, else ./ccgn-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 50)]
    pub sequences: usize,
    #[arg(long, default_value_t = 48)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset directory (default: <out root>/data).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FoldArgs {
    /// Fold whose splits are used.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Number of folds the sequences are divided into.
    #[arg(long)]
    pub fold_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub fold: FoldArgs,
}

#[derive(Debug, Args)]
pub struct HeadArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub fold: FoldArgs,
    /// Encoder checkpoint (default: <out>/encoder.ccgn).
    #[arg(long)]
    pub encoder: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub fold: FoldArgs,
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Head checkpoint (default: <out>/head.ccgn).
    #[arg(long)]
    pub head: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Prior-frame counts, comma separated (default: the config's k).
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub fold_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model to check (default: both).
    #[arg(long)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Which stage `--epochs` and `--lr` refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Head,
}

/// Output root: `--out`, else `$CCGN_OUT`, else `./ccgn-out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, stage: Stage) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_run_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.head_weight_decay = v;
        }
        if let Some(v) = &self.widths {
            cfg.widths = v.clone();
        }
        match stage {
            Stage::Pretrain => {
                if let Some(v) = self.epochs {
                    cfg.ssl_epochs = v;
                }
                if let Some(v) = self.lr {
                    cfg.ssl_lr = v;
                }
            }
            Stage::Head => {
                if let Some(v) = self.epochs {
                    cfg.head_epochs = v;
                }
                if let Some(v) = self.lr {
                    cfg.head_lr = v;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn out(&self) -> PathBuf {
        output_root(self.out.as_deref())
    }

    pub fn data(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out().join("data"))
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), CliError>;

fn resolve_fold(args: &FoldArgs, cfg: &mut RunConfig, ds: &AVDataset) -> Result<Fold> {
    if let Some(c) = args.fold_count {
        cfg.fold_count = c;
    }
    if let Some(f) = args.fold {
        cfg.folds = vec![f];
    }
    cfg.validate()?;
    let fold = *cfg
        .folds
        .first()
        .ok_or_else(|| Error::Config("no fold selected".into()))?;
    Ok(fold_splits(ds.sequences.len(), cfg.fold_count, cfg.seed)?.swap_remove(fold))
}

fn load_encoder(path: &Path, cfg: &RunConfig, ds: &AVDataset) -> Result<EncoderParams> {
    let named = load_checkpoint(path)?;
    let mut p = seeded_encoder(cfg, ds.audio_dim(), ds.visual_dim());
    assign_named(|f| p.visit_mut(&mut |n, m| f(n, m)), &named)?;
    Ok(p)
}

fn load_head(path: &Path, input: usize, output: usize) -> Result<HeadParams> {
    let named = load_checkpoint(path)?;
    let mut p = HeadParams::zeros(input, output);
    assign_named(|f| p.visit_mut("head", &mut |n, m| f(n, m)), &named)?;
    Ok(p)
}

fn encoder_named(p: &EncoderParams) -> Vec<(String, crate::diffmath::Matrix)> {
    to_named(|f| p.visit(&mut |n, m| f(n, m)))
}

fn generate(a: &GenerateArgs) -> CliResult {
    let dir = a.out.clone().unwrap_or_else(|| output_root(None).join("data"));
    let cfg = SynthConfig {
        sequences: a.sequences,
        frames: a.frames,
        ..SynthConfig::default()
    };
    let ds = synth_av_generate(&cfg, a.seed)?;
    let m = save_dataset(&dir, &ds)?;
    println!(
        "wrote {}: {} sequences x {} frames = {} samples (audio {}, visual {})",
        dir.display(),
        m.sequences,
        m.frames,
        m.total_samples,
        m.audio_dim,
        m.visual_dim
    );
    Ok(())
}

fn pretrain(a: &TrainArgs) -> CliResult {
    let mut cfg = a.run.resolve(Stage::Pretrain)?;
    let ds = load_dataset(&a.run.data())?;
    let fold = resolve_fold(&a.fold, &mut cfg, &ds)?;
    let data = prepare_fold(&ds, &fold, cfg.k)?;
    let init = seeded_encoder(&cfg, ds.audio_dim(), ds.visual_dim());
    let out = pretrain_ssl(&data.train, init, &cfg)?;
    let dir = a.run.out();
    fs::create_dir_all(&dir).map_err(Error::from)?;
    save_checkpoint(&dir.join("encoder.ccgn"), &encoder_named(&out.params))?;
    write_csv(&dir.join("ssl_history.csv"), &out.history)?;
    if let (Some(first), Some(last)) = (out.history.first(), out.history.last()) {
        println!(
            "{} k={} fold={}: loss {:.6} -> {:.6} over {} epochs",
            cfg.model,
            cfg.k,
            fold.id,
            first.loss_total,
            last.loss_total,
            out.history.len()
        );
    }
    Ok(())
}

fn train_head_cmd(a: &HeadArgs) -> CliResult {
    let mut cfg = a.run.resolve(Stage::Head)?;
    let ds = load_dataset(&a.run.data())?;
    let fold = resolve_fold(&a.fold, &mut cfg, &ds)?;
    let dir = a.run.out();
    let encoder = load_encoder(
        &a.encoder.clone().unwrap_or_else(|| dir.join("encoder.ccgn")),
        &cfg,
        &ds,
    )?;
    let data = prepare_fold(&ds, &fold, cfg.k)?;
    let inputs = head_inputs(&encoder, &data)?;
    let head = fit_head(&inputs, &data, &cfg)?;
    fs::create_dir_all(&dir).map_err(Error::from)?;
    save_checkpoint(
        &dir.join("head.ccgn"),
        &to_named(|f| head.params.visit("head", &mut |n, m| f(n, m))),
    )?;
    write_csv(&dir.join("head_history.csv"), &head.history)?;
    let best = &head.history[head.best_epoch];
    println!(
        "best epoch {}: train mse {:.6}, validation mse {:.6}",
        head.best_epoch, best.train_mse, best.validation_mse
    );
    Ok(())
}

/// One row of `fold_report.csv`.
#[derive(Debug, Serialize)]
struct FoldReportRow {
    fold: usize,
    model: ModelKind,
    k: usize,
    seed: u64,
    test_mse: f64,
    baseline_mse: f64,
    auc_audio: f64,
    auc_visual: f64,
}

fn evaluate(a: &EvalArgs) -> CliResult {
    let mut cfg = a.run.resolve(Stage::Head)?;
    let ds = load_dataset(&a.run.data())?;
    let fold = resolve_fold(&a.fold, &mut cfg, &ds)?;
    let dir = a.run.out();
    let encoder = load_encoder(
        &a.encoder.clone().unwrap_or_else(|| dir.join("encoder.ccgn")),
        &cfg,
        &ds,
    )?;
    let data = prepare_fold(&ds, &fold, cfg.k)?;
    let inputs = head_inputs(&encoder, &data)?;
    let head = load_head(
        &a.head.clone().unwrap_or_else(|| dir.join("head.ccgn")),
        inputs.train.cols(),
        data.train.clean.cols(),
    )?;
    let s = score_test(&inputs, &head, &data)?;
    let row = FoldReportRow {
        fold: fold.id,
        model: cfg.model,
        k: cfg.k,
        seed: cfg.seed,
        test_mse: s.test_mse,
        baseline_mse: s.baseline_mse,
        auc_audio: s.auc_audio,
        auc_visual: s.auc_visual,
    };
    fs::create_dir_all(&dir).map_err(Error::from)?;
    write_csv(&dir.join("fold_report.csv"), &[row])?;
    println!(
        "test mse {:.6} (train-mean baseline {:.6}); hidden AUC audio {:.2}, visual {:.2}",
        s.test_mse, s.baseline_mse, s.auc_audio, s.auc_visual
    );
    Ok(())
}

/// Builds the manifest for `compare` from flags and the config file.
pub fn compare_manifest(a: &CompareArgs) -> Result<ExperimentManifest> {
    let mut run = a.run.resolve(Stage::Pretrain)?;
    if let Some(c) = a.fold_count {
        run.fold_count = c;
        run.folds = (0..c).collect();
    }
    Ok(ExperimentManifest {
        data: a.run.data(),
        models: a.run.model.map_or_else(|| ModelKind::ALL.to_vec(), |m| vec![m]),
        ks: a.ks.clone().unwrap_or_else(|| vec![run.k]),
        folds: run.folds.clone(),
        fold_count: run.fold_count,
        seed: run.seed,
        out: a.run.out(),
        jobs: a.jobs,
        run,
    })
}

fn compare(a: &CompareArgs) -> CliResult {
    let manifest = compare_manifest(a)?;
    let outcome = run_compare(&manifest)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if outcome.failures.is_empty() {
        return Ok(());
    }
    for f in &outcome.failures {
        eprintln!("cell {} k={} fold={} failed: {}", f.model, f.k, f.fold, f.message);
    }
    Err(CliError {
        code: EXIT_PARTIAL,
        message: format!("{} of {} cells failed", outcome.failures.len(), manifest.cells().len()),
    })
}

fn gradcheck(a: &GradcheckArgs) -> CliResult {
    let models = a.model.map_or_else(|| ModelKind::ALL.to_vec(), |m| vec![m]);
    let mut failed = false;
    for m in models {
        let r = model_gradcheck(m, a.seed, &GradCheckSetup::default())?;
        let ok = r.max_rel_error < GRADCHECK_TOLERANCE;
        failed |= !ok;
        println!(
            "{m}: max relative error {:.3e} over {} entries ({})",
            r.max_rel_error,
            r.entries_checked,
            if ok { "ok" } else { "FAILED" }
        );
    }
    if failed {
        return Err(CliError {
            code: EXIT_NUMERICAL,
            message: format!("gradient error above {GRADCHECK_TOLERANCE:e}"),
        });
    }
    Ok(())
}

fn selftest_cmd(a: &SelftestArgs) -> CliResult {
    let cases = selftest(a.seed)?;
    for c in &cases {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError {
            code: EXIT_NUMERICAL,
            message: format!("{failed} of {} suites failed", cases.len()),
        });
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Pretrain(a) => pretrain(a),
        Command::TrainHead(a) => train_head_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Selftest(a) => selftest_cmd(a),
    }
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ccgnn").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "k = 7\nssl_epochs = 30\nhead_lr = 0.01\n").unwrap();
        let cli = parse(&[
            "pretrain",
            "--config",
            path.to_str().unwrap(),
            "--epochs",
            "5",
            "--lambda",
            "0.5",
        ]);
        let Command::Pretrain(a) = &cli.command else { panic!() };
        let cfg = a.run.resolve(Stage::Pretrain).unwrap();
        assert_eq!((cfg.k, cfg.ssl_epochs, cfg.lambda, cfg.head_lr), (7, 5, 0.5, 0.01));
        assert_eq!(cfg.ssl_lr, 1e-3);
        let head = a.run.resolve(Stage::Head).unwrap();
        assert_eq!((head.ssl_epochs, head.head_epochs), (30, 5));
    }

    #[test]
    fn pretrain_defaults_follow_the_protocol() {
        let cli = parse(&["pretrain"]);
        let Command::Pretrain(a) = &cli.command else { panic!() };
        let cfg = a.run.resolve(Stage::Pretrain).unwrap();
        assert_eq!((cfg.ssl_epochs, cfg.ssl_lr, cfg.lambda), (200, 1e-3, 1e-4));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "epochz = 3\n").unwrap();
        assert!(matches!(load_run_config(&path), Err(Error::Config(_))));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["ccgnn", "--nope"]), ExitCode::from(EXIT_USAGE));
        assert_eq!(run(["ccgnn", "pretrain", "--k", "x"]), ExitCode::from(EXIT_USAGE));
        assert_eq!(
            run(["ccgnn", "pretrain", "--data", "/nonexistent/ccgnn"]),
            ExitCode::from(EXIT_USAGE)
        );
    }

    #[test]
    fn compare_manifest_from_flags() {
        let cli = parse(&[
            "compare",
            "--ks",
            "3,5",
            "--fold-count",
            "2",
            "--seed",
            "9",
            "--out",
            "/tmp/x",
        ]);
        let Command::Compare(a) = &cli.command else { panic!() };
        let m = compare_manifest(a).unwrap();
        assert_eq!(m.ks, vec![3, 5]);
        assert_eq!(m.folds, vec![0, 1]);
        assert_eq!(m.models, ModelKind::ALL.to_vec());
        assert_eq!(m.data, PathBuf::from("/tmp/x/data"));
        assert_eq!(m.cells().len(), 8);
    }

    #[test]
    fn explicit_out_wins() {
        assert_eq!(output_root(Some(Path::new("/a/b"))), PathBuf::from("/a/b"));
    }
}
