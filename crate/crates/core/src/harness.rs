//! Accuracy-degradation experiments.
//!
//! [`degradation_sweep`] measures how a model performs when it is run with
//! part of one layer still encrypted, across a range of percentages and
//! several random weight sets. [`clone_eval`] compares running the encrypted
//! model as-is against decrypting it on the target machine and on clones.
//!
//! Trials run in parallel; every trial derives its own seeds from the master
//! seed, so reports are identical to a sequential run.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binding::{
    apply_helper, challenge_stream, draw_challenges, encrypt_model, selection_count, selection_order, HelperData,
    HelperEntry,
};
use crate::error::{write_file, Error, Result};
use crate::model::{gen_synthetic, train, Accuracy, Dataset, Model, TrainConfig};
use crate::puf::{PufBackend, PufConfig, XorArbiterPuf};
use crate::rng::{derive, mix64};

/// How the weight sets at different percentages relate within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// One draw at the largest percentage; smaller percentages use a prefix
    /// of the same draw (and the same keys).
    #[default]
    Nested,
    /// A fresh selection for every (percentage, trial) pair.
    Independent,
}

pub fn default_percentages() -> Vec<f64> {
    (0..=8).map(|i| f64::from(i) * 5.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub percentages: Vec<f64>,
    pub trials: usize,
    pub layer_id: usize,
    pub master_seed: u64,
    pub machine_seed: u64,
    pub mode: SelectionMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            percentages: default_percentages(),
            trials: 10,
            layer_id: 0,
            master_seed: 0,
            machine_seed: 0,
            mode: SelectionMode::Nested,
        }
    }
}

/// Seed of trial `t`.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    mix64(master_seed.wrapping_add(trial as u64))
}

fn check_percentages(pcts: &[f64]) -> Result<()> {
    match pcts.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        Some(p) => Err(Error::InvalidArgument(format!("percentage {p} is outside [0, 100]"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pct: f64,
    pub trial: usize,
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pct: f64,
    /// Pooled `sum(correct) / sum(total)`, i.e. the mean over trials.
    pub mean: f64,
    pub mean_exact: String,
    /// Population standard deviation over trials.
    pub stddev: f64,
}

/// Reference accuracy of a chance-level classifier on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub value: f64,
    /// `false` when classes are unbalanced and `value` is the majority-class
    /// frequency instead of `1 / C`.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub original: Accuracy,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<Summary>,
    pub random_baseline: Baseline,
    pub stddev_kind: String,
}

impl SweepReport {
    pub fn mean_at(&self, pct: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.pct == pct).map(|s| s.mean)
    }
}

pub fn random_baseline(num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "a random baseline needs at least 2 classes, got {num_classes}"
        )));
    }
    Ok(1.0 / num_classes as f64)
}

/// `1 / C` for balanced data, otherwise the majority-class frequency.
pub fn dataset_baseline(data: &Dataset) -> Result<Baseline> {
    let counts = data.class_counts();
    let balanced = counts.iter().all(|&c| c == counts[0]);
    if balanced {
        Ok(Baseline {
            value: random_baseline(data.num_classes())?,
            balanced: true,
        })
    } else {
        let max = counts.iter().copied().max().unwrap_or(0);
        Ok(Baseline {
            value: max as f64 / data.len() as f64,
            balanced: false,
        })
    }
}

fn summarize(pct: f64, accs: &[Accuracy]) -> Summary {
    let correct: usize = accs.iter().map(|a| a.correct).sum();
    let total: usize = accs.iter().map(|a| a.total).sum();
    let n = accs.len();
    let var = if accs.iter().all(|a| a.total == accs[0].total) {
        // Shared denominator: n^2 T^2 var = n sum(c^2) - (sum c)^2, exactly.
        let t = accs[0].total as u128;
        let sum: u128 = accs.iter().map(|a| a.correct as u128).sum();
        let sum_sq: u128 = accs.iter().map(|a| (a.correct as u128).pow(2)).sum();
        let num = n as u128 * sum_sq - sum * sum;
        num as f64 / ((n as u128 * t).pow(2)) as f64
    } else {
        let values: Vec<f64> = accs.iter().map(Accuracy::value).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
    };
    Summary {
        pct,
        mean: correct as f64 / total as f64,
        mean_exact: format_ratio(correct as u128, total as u128, 6),
        stddev: var.sqrt(),
    }
}

/// Run the encrypted-but-not-decrypted sweep.
pub fn degradation_sweep<P: PufBackend + ?Sized>(
    model: &Model,
    data: &Dataset,
    cfg: &SweepConfig,
    puf: &P,
) -> Result<SweepReport> {
    check_percentages(&cfg.percentages)?;
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let layer_u16 = u16::try_from(cfg.layer_id)
        .map_err(|_| Error::InvalidArgument(format!("layer id {} exceeds u16", cfg.layer_id)))?;
    let weight_count = model.layer(cfg.layer_id)?.weight_count();
    let original = model.evaluate(data)?;
    let counts = cfg
        .percentages
        .iter()
        .map(|&p| selection_count(weight_count, p))
        .collect::<Result<Vec<_>>>()?;
    let max_count = counts.iter().copied().max().unwrap_or(0);

    let per_trial: Vec<Vec<Accuracy>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<Accuracy>> {
            let seed = trial_seed(cfg.master_seed, t);
            let (order, challenges) = match cfg.mode {
                SelectionMode::Nested => (
                    selection_order(weight_count, max_count, seed),
                    draw_challenges(max_count, challenge_stream(seed)),
                ),
                SelectionMode::Independent => (Vec::new(), Vec::new()),
            };
            counts
                .iter()
                .enumerate()
                .map(|(pi, &k)| {
                    if k == 0 {
                        return Ok(original);
                    }
                    let (order, challenges) = match cfg.mode {
                        SelectionMode::Nested => (order[..k].to_vec(), challenges[..k].to_vec()),
                        SelectionMode::Independent => {
                            let s = derive(seed, pi as u64);
                            (
                                selection_order(weight_count, k, s),
                                draw_challenges(k, challenge_stream(s)),
                            )
                        }
                    };
                    let mut entries: Vec<HelperEntry> = order
                        .into_iter()
                        .zip(challenges)
                        .map(|(flat_index, challenge)| HelperEntry { flat_index, challenge })
                        .collect();
                    entries.sort_unstable_by_key(|e| e.flat_index);
                    let helper = HelperData::new(layer_u16, entries)?;
                    let mut enc = model.clone();
                    apply_helper(&mut enc, &helper, puf)?;
                    enc.evaluate(data)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.percentages.len() * cfg.trials);
    let mut summary = Vec::with_capacity(cfg.percentages.len());
    for (pi, &pct) in cfg.percentages.iter().enumerate() {
        let accs: Vec<Accuracy> = per_trial.iter().map(|t| t[pi]).collect();
        rows.extend(
            accs.iter()
                .enumerate()
                .map(|(trial, &accuracy)| SweepRow { pct, trial, accuracy }),
        );
        summary.push(summarize(pct, &accs));
    }
    Ok(SweepReport {
        config: cfg.clone(),
        original,
        rows,
        summary,
        random_baseline: dataset_baseline(data)?,
        stddev_kind: "population".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneConfig {
    pub percentages: Vec<f64>,
    pub trials: usize,
    pub layer_id: usize,
    pub target_seed: u64,
    pub clone_seeds: Vec<u64>,
    pub master_seed: u64,
    pub puf: PufConfig,
}

impl Default for CloneConfig {
    fn default() -> Self {
        CloneConfig {
            percentages: default_percentages(),
            trials: 10,
            layer_id: 0,
            target_seed: 42,
            clone_seeds: vec![43, 44],
            master_seed: 0,
            puf: PufConfig::default(),
        }
    }
}

pub const NO_DECRYPT: &str = "encrypted-no-decrypt";
pub const TARGET_DECRYPT: &str = "target-decrypt";

/// Condition label of the `i`-th clone (0-based), e.g. `clone-1`.
pub fn clone_label(i: usize) -> String {
    format!("clone-{}", i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneRow {
    pub condition: String,
    pub pct: f64,
    pub trial: usize,
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneSummary {
    pub condition: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub config: CloneConfig,
    pub original: Accuracy,
    pub rows: Vec<CloneRow>,
    pub summary: Vec<CloneSummary>,
    pub random_baseline: Baseline,
    pub stddev_kind: String,
}

impl CloneReport {
    pub fn conditions(&self) -> Vec<String> {
        let mut c = vec![NO_DECRYPT.to_string(), TARGET_DECRYPT.to_string()];
        c.extend((0..self.config.clone_seeds.len()).map(clone_label));
        c
    }

    pub fn mean_at(&self, condition: &str, pct: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.condition == condition && s.summary.pct == pct)
            .map(|s| s.summary.mean)
    }
}

/// Encrypt on the target machine, then measure the model left encrypted,
/// decrypted on the target, and decrypted on each clone.
pub fn clone_eval(model: &Model, data: &Dataset, cfg: &CloneConfig) -> Result<CloneReport> {
    check_percentages(&cfg.percentages)?;
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if cfg.clone_seeds.is_empty() {
        return Err(Error::Config("at least one clone seed is required".into()));
    }
    if cfg.clone_seeds.contains(&cfg.target_seed) {
        return Err(Error::Config(format!(
            "clone seed {} equals the target seed; a clone must be a different machine",
            cfg.target_seed
        )));
    }
    model.layer(cfg.layer_id)?;
    let original = model.evaluate(data)?;
    let target = XorArbiterPuf::new(cfg.target_seed, cfg.puf)?;
    let clones = cfg
        .clone_seeds
        .iter()
        .map(|&s| XorArbiterPuf::new(s, cfg.puf))
        .collect::<Result<Vec<_>>>()?;
    let n_cond = 2 + clones.len();

    // per_trial[t][pi][condition]
    let per_trial: Vec<Vec<Vec<Accuracy>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.master_seed, t);
            cfg.percentages
                .iter()
                .enumerate()
                .map(|(pi, &pct)| {
                    let (enc, helper) = encrypt_model(model, cfg.layer_id, pct, &target, derive(seed, pi as u64))?;
                    let mut accs = Vec::with_capacity(n_cond);
                    accs.push(enc.evaluate(data)?);
                    let mut restored = enc.clone();
                    apply_helper(&mut restored, &helper, &target)?;
                    accs.push(restored.evaluate(data)?);
                    for clone in &clones {
                        let mut attempt = enc.clone();
                        apply_helper(&mut attempt, &helper, clone)?;
                        accs.push(attempt.evaluate(data)?);
                    }
                    Ok(accs)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut labels = vec![NO_DECRYPT.to_string(), TARGET_DECRYPT.to_string()];
    labels.extend((0..clones.len()).map(clone_label));
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (ci, label) in labels.iter().enumerate() {
        for (pi, &pct) in cfg.percentages.iter().enumerate() {
            let accs: Vec<Accuracy> = per_trial.iter().map(|t| t[pi][ci]).collect();
            rows.extend(accs.iter().enumerate().map(|(trial, &accuracy)| CloneRow {
                condition: label.clone(),
                pct,
                trial,
                accuracy,
            }));
            summary.push(CloneSummary {
                condition: label.clone(),
                summary: summarize(pct, &accs),
            });
        }
    }
    Ok(CloneReport {
        config: cfg.clone(),
        original,
        rows,
        summary,
        random_baseline: dataset_baseline(data)?,
        stddev_kind: "population".into(),
    })
}

/// The small reference setup used by the experiments: 10-class Gaussian blobs
/// in 16 dimensions and a 16-64-10 ReLU network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskScale {
    pub data_seed: u64,
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub radius: f64,
    pub sigma: f64,
    pub train: TrainConfig,
}

impl Default for DeskScale {
    fn default() -> Self {
        DeskScale {
            data_seed: 1,
            classes: 10,
            dim: 16,
            train_per_class: 200,
            test_per_class: 100,
            radius: 4.0,
            sigma: 1.0,
            train: TrainConfig {
                hidden_dims: vec![64],
                epochs: 20,
                batch_size: 32,
                learning_rate: 0.05,
                rng_seed: 7,
            },
        }
    }
}

impl DeskScale {
    /// Trained model plus its held-out test set.
    pub fn build(&self) -> Result<(Model, Dataset)> {
        let all = gen_synthetic(
            self.data_seed,
            self.classes,
            self.dim,
            self.train_per_class + self.test_per_class,
            self.radius,
            self.sigma,
        )?;
        let (test, train_set) = all.split_at(self.test_per_class * self.classes)?;
        let model = train(&train_set, &self.train)?;
        Ok((model, test))
    }
}

/// Decimal rendering of `num / den` rounded half-up to `digits` places.
pub fn format_ratio(num: u128, den: u128, digits: u32) -> String {
    assert!(den > 0, "zero denominator");
    let scale = 10u128.pow(digits);
    let scaled = (2 * num * scale + den) / (2 * den);
    let (int, frac) = (scaled / scale, scaled % scale);
    if digits == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0width$}", width = digits as usize)
    }
}

fn acc6(a: &Accuracy) -> String {
    format_ratio(a.correct as u128, a.total as u128, 6)
}

pub const SWEEP_CSV_HEADER: &str = "pct,trial,accuracy,stddev_pop";
pub const CLONE_CSV_HEADER: &str = "condition,pct,trial,accuracy,stddev_pop";

impl SweepReport {
    /// Data rows (`pct,trial,accuracy,`) followed by one `pct,mean,<mean>,<std>`
    /// summary row per percentage.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},\n", r.pct, r.trial, acc6(&r.accuracy)));
        }
        for s in &self.summary {
            out.push_str(&format!("{},mean,{},{:.6}\n", s.pct, s.mean_exact, s.stddev));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl CloneReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CLONE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},\n",
                r.condition,
                r.pct,
                r.trial,
                acc6(&r.accuracy)
            ));
        }
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},mean,{},{:.6}\n",
                s.condition, s.summary.pct, s.summary.mean_exact, s.summary.stddev
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn report_csv(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), report.to_csv())?;
    Ok(())
}

pub fn report_json(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), report.to_json()?)?;
    Ok(())
}

pub fn clone_report_csv(report: &CloneReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), report.to_csv())?;
    Ok(())
}

pub fn clone_report_json(report: &CloneReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), report.to_json()?)?;
    Ok(())
}
