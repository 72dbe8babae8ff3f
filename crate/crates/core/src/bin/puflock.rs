//! `puflock` command-line interface.
//!
//! Exit codes: 0 success, 2 usage, 3 parse, 4 dimension mismatch,
//! 5 missing machine seed, 6 configuration, 7 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use puflock::binding::{decrypt_model, encrypt_model, load_helper, rebind, save_helper, HelperData};
use puflock::harness::{
    clone_eval, clone_report_csv, clone_report_json, degradation_sweep, report_csv, report_json, CloneConfig,
    SelectionMode, SweepConfig,
};
use puflock::model::{
    gen_synthetic, load_idx, load_model, save_model, train, write_idx_f32, write_idx_labels, Accuracy, Dataset, Model,
    TrainConfig,
};
use puflock::puf::{bit_balance, instability, uniqueness, PufConfig, XorArbiterPuf};
use puflock::rng::mix64;
use puflock::{Error, ErrorKind};

const MACHINE_SEED_ENV: &str = "PUFLOCK_MACHINE_SEED";

#[derive(Parser)]
#[command(
    name = "puflock",
    version,
    about = "Bind neural-network weights to a (simulated) PUF"
)]
struct Cli {
    /// Machine-readable JSON output on stdout (and JSON errors on stderr).
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PufArgs {
    /// Seed identifying the simulated machine.
    #[arg(long, env = MACHINE_SEED_ENV)]
    machine_seed: Option<u64>,
    /// Arbiter chain length.
    #[arg(long, default_value_t = 64)]
    stages: usize,
    /// Number of XORed chains.
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Standard deviation of per-evaluation delay noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

impl PufArgs {
    fn config(&self) -> PufConfig {
        PufConfig {
            n_stages: self.stages,
            k_chains: self.chains,
            noise_sigma: self.noise,
        }
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.machine_seed.ok_or(CliError::MissingMachineSeed)
    }

    fn build(&self) -> Result<XorArbiterPuf, CliError> {
        Ok(XorArbiterPuf::new(self.seed()?, self.config())?)
    }

    fn build_with(&self, seed: u64) -> Result<XorArbiterPuf, CliError> {
        Ok(XorArbiterPuf::new(seed, self.config())?)
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// IDX image/feature file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        Ok(load_idx(&self.images, &self.labels)?)
    }
}

#[derive(Args, Clone)]
struct OptDataArgs {
    /// IDX image/feature file used to report accuracy.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file used to report accuracy.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
}

impl OptDataArgs {
    fn load(&self) -> Result<Option<Dataset>, CliError> {
        match (&self.images, &self.labels) {
            (Some(i), Some(l)) => Ok(Some(load_idx(i, l)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nested,
    Independent,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Gaussian-blob datasets as IDX files.
    GenData {
        /// Output prefix; writes <out>-images.idx and <out>-labels.idx.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        /// Extra held-out samples per class, written to <out>-test-*.idx.
        #[arg(long, default_value_t = 0)]
        test_per_class: usize,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Train a ReLU MLP with mini-batch SGD.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated hidden layer widths.
        #[arg(long, value_delimiter = ',', default_value = "64")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an unprotected model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Encrypt part of one layer for the machine given by --machine-seed.
    Encrypt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        pct: f64,
        /// Seed for weight selection and challenge generation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        helper_out: PathBuf,
        #[command(flatten)]
        puf: PufArgs,
        #[command(flatten)]
        data: OptDataArgs,
    },
    /// Decrypt in memory and report accuracy; writes plaintext only with --emit-plaintext.
    Decrypt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        helper: PathBuf,
        #[command(flatten)]
        puf: PufArgs,
        #[command(flatten)]
        data: OptDataArgs,
        /// Write the decrypted model to this path (stores plaintext weights on disk).
        #[arg(long)]
        emit_plaintext: Option<PathBuf>,
    },
    /// Decrypt in memory on this machine and evaluate.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        helper: PathBuf,
        #[command(flatten)]
        puf: PufArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Re-encrypt a protected model for replacement hardware.
    Rebind {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        helper: PathBuf,
        /// Seed of the replacement machine.
        #[arg(long)]
        new_machine_seed: u64,
        /// Seed for the fresh challenges.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        helper_out: PathBuf,
        #[command(flatten)]
        puf: PufArgs,
    },
    /// Accuracy of the encrypted model, without decryption, across percentages.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30,35,40")]
        pcts: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        #[arg(long, value_enum, default_value = "nested")]
        mode: ModeArg,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        puf: PufArgs,
    },
    /// Encrypt on the target machine, then decrypt on the target and on clones.
    CloneEval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30,35,40")]
        pcts: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "43,44")]
        clone_seeds: Vec<u64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        puf: PufArgs,
    },
    /// Uniqueness, balance and stability of the simulated PUF.
    PufStats {
        #[command(flatten)]
        puf: PufArgs,
        /// Number of other machines to compare against.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 1000)]
        challenges: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
}

#[derive(Debug)]
enum CliError {
    MissingMachineSeed,
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn category(&self) -> (&'static str, u8) {
        match self {
            CliError::MissingMachineSeed => ("missing-machine-seed", 5),
            CliError::Usage(_) => ("usage", 2),
            CliError::Lib(e) => match e.kind() {
                ErrorKind::InvalidArgument => ("usage", 2),
                ErrorKind::Parse => ("parse", 3),
                ErrorKind::Dimension => ("dimension", 4),
                ErrorKind::Config => ("config", 6),
                ErrorKind::Io => ("io", 7),
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::MissingMachineSeed => {
                format!("no machine seed: pass --machine-seed or set {MACHINE_SEED_ENV}")
            }
            CliError::Usage(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, human: impl FnOnce() -> String, value: Value) {
        if self.json {
            println!("{value}");
        } else {
            println!("{}", human());
        }
    }
}

fn acc_json(a: &Accuracy) -> Value {
    json!({ "correct": a.correct, "total": a.total, "accuracy": a.value() })
}

fn evaluate_opt(model: &Model, data: &Option<Dataset>) -> Result<Option<Accuracy>, CliError> {
    data.as_ref().map(|d| model.evaluate(d)).transpose().map_err(Into::into)
}

fn write_dataset(prefix: &Path, suffix: &str, data: &Dataset) -> Result<(PathBuf, PathBuf), CliError> {
    let base = prefix.to_string_lossy();
    let images = PathBuf::from(format!("{base}{suffix}-images.idx"));
    let labels = PathBuf::from(format!("{base}{suffix}-labels.idx"));
    write_idx_f32(&images, data)?;
    write_idx_labels(&labels, data)?;
    Ok((images, labels))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = Out { json: cli.json };
    match cli.command {
        Command::GenData {
            out: prefix,
            seed,
            classes,
            dim,
            per_class,
            test_per_class,
            radius,
            sigma,
        } => {
            let all = gen_synthetic(seed, classes, dim, per_class + test_per_class, radius, sigma)?;
            let (train_set, test_set) = if test_per_class > 0 {
                let (test, train_set) = all.split_at(test_per_class * classes)?;
                (train_set, Some(test))
            } else {
                (all, None)
            };
            let (ti, tl) = write_dataset(&prefix, "", &train_set)?;
            let test_paths = test_set
                .as_ref()
                .map(|t| write_dataset(&prefix, "-test", t))
                .transpose()?;
            out.emit(
                || {
                    let mut s = format!(
                        "wrote {} samples to {} / {}",
                        train_set.len(),
                        ti.display(),
                        tl.display()
                    );
                    if let (Some((i, l)), Some(t)) = (&test_paths, &test_set) {
                        s.push_str(&format!(
                            "\nwrote {} samples to {} / {}",
                            t.len(),
                            i.display(),
                            l.display()
                        ));
                    }
                    s
                },
                json!({
                    "train": { "samples": train_set.len(), "images": ti, "labels": tl },
                    "test": test_paths.as_ref().map(|(i, l)| json!({ "images": i, "labels": l })),
                }),
            );
        }
        Command::Train {
            data,
            hidden,
            epochs,
            batch_size,
            lr,
            seed,
            out: path,
        } => {
            let data = data.load()?;
            let cfg = TrainConfig {
                hidden_dims: hidden,
                epochs,
                batch_size,
                learning_rate: lr,
                rng_seed: seed,
            };
            let model = train(&data, &cfg)?;
            save_model(&model, &path)?;
            let acc = model.evaluate(&data)?;
            out.emit(
                || format!("training accuracy = {acc}\nsaved {}", path.display()),
                json!({ "training": acc_json(&acc), "model": path }),
            );
        }
        Command::Eval { model, data } => {
            let model = load_model(model)?;
            let acc = model.evaluate(&data.load()?)?;
            out.emit(|| format!("Accuracy = {acc}"), json!({ "accuracy": acc_json(&acc) }));
        }
        Command::Encrypt {
            model,
            layer,
            pct,
            seed,
            out: path,
            helper_out,
            puf,
            data,
        } => {
            let puf = puf.build()?;
            let model = load_model(model)?;
            let data = data.load()?;
            let before = evaluate_opt(&model, &data)?;
            let (enc, helper) = encrypt_model(&model, layer, pct, &puf, seed)?;
            let after = evaluate_opt(&enc, &data)?;
            save_model(&enc, &path)?;
            save_helper(&helper, &helper_out)?;
            out.emit(
                || {
                    let mut lines = Vec::new();
                    if let Some(a) = before {
                        lines.push(format!("Accuracy = {a}"));
                    }
                    if let Some(a) = after {
                        lines.push(format!("Accuracy = {a}"));
                    }
                    lines.push(format!(
                        "encrypted {} weights of layer {layer}; helper {} bytes",
                        helper.len(),
                        helper.encoded_len()
                    ));
                    lines.join("\n")
                },
                json!({
                    "before": before.as_ref().map(acc_json),
                    "after": after.as_ref().map(acc_json),
                    "encrypted_weights": helper.len(),
                    "layer": layer,
                    "helper_bytes": helper.encoded_len(),
                }),
            );
        }
        Command::Decrypt {
            model,
            helper,
            puf,
            data,
            emit_plaintext,
        } => {
            let (plain, _) = load_and_decrypt(&model, &helper, &puf)?;
            let acc = evaluate_opt(&plain, &data.load()?)?;
            if let Some(path) = &emit_plaintext {
                eprintln!(
                    "warning: writing decrypted weights to {}; the file is no longer bound to this machine",
                    path.display()
                );
                save_model(&plain, path)?;
            }
            out.emit(
                || match acc {
                    Some(a) => format!("Accuracy = {a}"),
                    None => "decrypted in memory".to_string(),
                },
                json!({ "accuracy": acc.as_ref().map(acc_json), "plaintext_written": emit_plaintext }),
            );
        }
        Command::Run {
            model,
            helper,
            puf,
            data,
        } => {
            let (plain, seed) = load_and_decrypt(&model, &helper, &puf)?;
            let acc = plain.evaluate(&data.load()?)?;
            out.emit(
                || format!("Accuracy = {acc}"),
                json!({ "accuracy": acc_json(&acc), "machine_seed": seed }),
            );
        }
        Command::Rebind {
            model,
            helper,
            new_machine_seed,
            seed,
            out: path,
            helper_out,
            puf,
        } => {
            let old = puf.build()?;
            let new = puf.build_with(new_machine_seed)?;
            let enc = load_model(model)?;
            let helper = load_helper(helper)?;
            let (moved, moved_helper) = rebind(&enc, &helper, &old, &new, seed)?;
            save_model(&moved, &path)?;
            save_helper(&moved_helper, &helper_out)?;
            out.emit(
                || format!("rebound {} weights to machine {new_machine_seed}", moved_helper.len()),
                json!({ "rebound_weights": moved_helper.len(), "new_machine_seed": new_machine_seed }),
            );
        }
        Command::Sweep {
            model,
            data,
            layer,
            pcts,
            trials,
            master_seed,
            mode,
            csv,
            json_out,
            puf,
        } => {
            let p = puf.build()?;
            let model = load_model(model)?;
            let data = data.load()?;
            let cfg = SweepConfig {
                percentages: pcts,
                trials,
                layer_id: layer,
                master_seed,
                machine_seed: puf.seed()?,
                mode: match mode {
                    ModeArg::Nested => SelectionMode::Nested,
                    ModeArg::Independent => SelectionMode::Independent,
                },
            };
            let report = degradation_sweep(&model, &data, &cfg, &p)?;
            if let Some(path) = &csv {
                report_csv(&report, path)?;
            }
            if let Some(path) = &json_out {
                report_json(&report, path)?;
            }
            out.emit(
                || {
                    let mut s = format!(
                        "original accuracy {}; random baseline {:.4}{}\npct    mean     std",
                        report.original,
                        report.random_baseline.value,
                        if report.random_baseline.balanced {
                            ""
                        } else {
                            " (majority class, unbalanced data)"
                        }
                    );
                    for r in &report.summary {
                        s.push_str(&format!("\n{:<6} {:.4}   {:.4}", r.pct, r.mean, r.stddev));
                    }
                    s
                },
                serde_json::to_value(&report).map_err(Error::from)?,
            );
        }
        Command::CloneEval {
            model,
            data,
            layer,
            pcts,
            trials,
            master_seed,
            clone_seeds,
            csv,
            json_out,
            puf,
        } => {
            let cfg = CloneConfig {
                percentages: pcts,
                trials,
                layer_id: layer,
                target_seed: puf.seed()?,
                clone_seeds,
                master_seed,
                puf: puf.config(),
            };
            let model = load_model(model)?;
            let report = clone_eval(&model, &data.load()?, &cfg)?;
            if let Some(path) = &csv {
                clone_report_csv(&report, path)?;
            }
            if let Some(path) = &json_out {
                clone_report_json(&report, path)?;
            }
            out.emit(
                || {
                    let mut s = format!(
                        "original accuracy {}\ncondition              pct    mean",
                        report.original
                    );
                    for r in &report.summary {
                        s.push_str(&format!(
                            "\n{:<22} {:<6} {:.4}",
                            r.condition, r.summary.pct, r.summary.mean
                        ));
                    }
                    s
                },
                serde_json::to_value(&report).map_err(Error::from)?,
            );
        }
        Command::PufStats {
            puf,
            pairs,
            challenges,
            repeats,
            rng_seed,
        } => {
            if pairs == 0 || challenges == 0 {
                return Err(CliError::Usage("--pairs and --challenges must be positive".into()));
            }
            let seed = puf.seed()?;
            let p = puf.build()?;
            let mut total = 0.0;
            let mut compared = 0usize;
            for i in 0..pairs as u64 {
                let other = mix64(rng_seed.wrapping_add(i));
                if other == seed {
                    continue;
                }
                total += uniqueness(seed, other, puf.config(), challenges, rng_seed ^ i)?;
                compared += 1;
            }
            let uniq = total / compared.max(1) as f64;
            let balance = bit_balance(&p, challenges, rng_seed)?;
            let unstable = instability(&p, challenges.min(1000), repeats.max(1), rng_seed)?;
            out.emit(
                || {
                    format!(
                        "machine {seed}: uniqueness {uniq:.4} over {compared} machines, \
                         bit balance {balance:.4}, instability {unstable:.4}"
                    )
                },
                json!({
                    "machine_seed": seed,
                    "uniqueness": uniq,
                    "machines_compared": compared,
                    "bit_balance": balance,
                    "instability": unstable,
                }),
            );
        }
    }
    Ok(())
}

fn load_and_decrypt(model: &Path, helper: &Path, puf: &PufArgs) -> Result<(Model, u64), CliError> {
    let p = puf.build()?;
    let enc = load_model(model)?;
    let helper: HelperData = load_helper(helper)?;
    Ok((decrypt_model(&enc, &helper, &p)?, p.machine_seed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = e.category();
            if json {
                eprintln!(
                    "{}",
                    json!({ "error": { "category": category, "message": e.message() } })
                );
            } else {
                eprintln!("error[{category}]: {}", e.message());
            }
            ExitCode::from(code)
        }
    }
}
