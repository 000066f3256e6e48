//! Class-incremental evaluation: cumulative per-phase test accuracy, its mean
//! over phases, last-phase accuracy and the base/novel split.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsalError, Result};
use crate::learner::{argmax_classes, Learner, LearnerConfig};
use crate::store::{ClassId, PhaseDataset, PhaseManifest};

/// All accuracies are percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `A_0 .. A_K`, each over the union of test phases `0..=k`.
    pub per_phase_accuracy: Vec<f64>,
    pub average_accuracy: f64,
    pub last_accuracy: f64,
    /// Final-phase accuracy restricted to base-phase classes.
    pub base_accuracy: Option<f64>,
    /// Final-phase accuracy restricted to classes of later phases.
    pub novel_accuracy: Option<f64>,
    pub base_samples: usize,
    pub novel_samples: usize,
    pub config: LearnerConfig,
    /// Spread over reseeded buffer projections, present when the run was
    /// repeated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<RepeatStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatStats {
    pub seeds: Vec<u64>,
    pub average_accuracy: Vec<f64>,
    pub last_accuracy: Vec<f64>,
    pub average_accuracy_mean: f64,
    pub average_accuracy_std: f64,
    pub last_accuracy_mean: f64,
    pub last_accuracy_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl RepeatStats {
    pub fn from_reports(seeds: Vec<u64>, reports: &[EvaluationReport]) -> Self {
        let average_accuracy: Vec<f64> = reports.iter().map(|r| r.average_accuracy).collect();
        let last_accuracy: Vec<f64> = reports.iter().map(|r| r.last_accuracy).collect();
        let (am, asd) = mean_std(&average_accuracy);
        let (lm, lsd) = mean_std(&last_accuracy);
        RepeatStats {
            seeds,
            average_accuracy,
            last_accuracy,
            average_accuracy_mean: am,
            average_accuracy_std: asd,
            last_accuracy_mean: lm,
            last_accuracy_std: lsd,
        }
    }
}

/// Correct/total counts over a cumulative test set, split by base membership.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub base_correct: usize,
    pub base_total: usize,
    pub novel_correct: usize,
    pub novel_total: usize,
}

impl Tally {
    fn add(self, o: Tally) -> Tally {
        Tally {
            base_correct: self.base_correct + o.base_correct,
            base_total: self.base_total + o.base_total,
            novel_correct: self.novel_correct + o.novel_correct,
            novel_total: self.novel_total + o.novel_total,
        }
    }

    pub fn total(&self) -> usize {
        self.base_total + self.novel_total
    }

    pub fn accuracy(&self) -> Option<f64> {
        percent(self.base_correct + self.novel_correct, self.total())
    }

    pub fn base_accuracy(&self) -> Option<f64> {
        percent(self.base_correct, self.base_total)
    }

    pub fn novel_accuracy(&self) -> Option<f64> {
        percent(self.novel_correct, self.novel_total)
    }
}

fn percent(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

/// Percentage of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[ClassId], truth: &[ClassId]) -> Option<f64> {
    assert_eq!(predicted.len(), truth.len());
    percent(predicted.iter().zip(truth).filter(|(p, t)| p == t).count(), truth.len())
}

fn tally_phase(
    learner: &Learner,
    phase: &PhaseDataset,
    base: &[ClassId],
    ratio: f64,
) -> Result<Tally> {
    let scores = learner.stream_scores(&phase.embeddings)?.combine(ratio);
    let predicted = argmax_classes(&scores, learner.classes());
    Ok(tally_predictions(&predicted, &phase.labels, base))
}

fn tally_predictions(predicted: &[ClassId], truth: &[ClassId], base: &[ClassId]) -> Tally {
    let mut t = Tally::default();
    for (p, l) in predicted.iter().zip(truth) {
        let hit = usize::from(p == l);
        if base.contains(l) {
            t.base_total += 1;
            t.base_correct += hit;
        } else {
            t.novel_total += 1;
            t.novel_correct += hit;
        }
    }
    t
}

/// Counts over test phases `0..=upto` at compensation ratio `ratio`. Test
/// phases are scored in parallel.
pub fn tally_upto(learner: &Learner, test: &[PhaseDataset], upto: usize, ratio: f64) -> Result<Tally> {
    if upto >= test.len() {
        return Err(DsalError::Manifest(format!(
            "test phase {upto} missing (test set has {} phases)",
            test.len()
        )));
    }
    let base = &test[0].classes;
    test[..=upto]
        .par_iter()
        .map(|p| tally_phase(learner, p, base, ratio))
        .try_reduce(Tally::default, |a, b| Ok(a.add(b)))
}

/// `A_k`: accuracy over the union of test phases `0..=upto`.
pub fn evaluate_phase(learner: &Learner, test: &[PhaseDataset], upto: usize) -> Result<f64> {
    tally_upto(learner, test, upto, learner.config().comp_ratio)?
        .accuracy()
        .ok_or_else(|| DsalError::Manifest(format!("test phases 0..={upto} hold no samples")))
}

fn check_aligned(train_classes: &[Vec<ClassId>], test: &[PhaseDataset]) -> Result<()> {
    if test.len() < train_classes.len() {
        return Err(DsalError::Manifest(format!(
            "test set has {} phases, training has {}",
            test.len(),
            train_classes.len()
        )));
    }
    for (k, (tc, te)) in train_classes.iter().zip(test).enumerate() {
        if *tc != te.classes {
            return Err(DsalError::Manifest(format!(
                "phase {k}: train and test declare different classes"
            )));
        }
    }
    Ok(())
}

/// Full incremental run: base fit, then one phase at a time, recording `A_k`
/// after each. `train` yields phases lazily.
pub fn run_protocol_with<I>(config: LearnerConfig, train: I, test: &[PhaseDataset]) -> Result<(Learner, EvaluationReport)>
where
    I: IntoIterator<Item = Result<PhaseDataset>>,
{
    let mut train = train.into_iter();
    let phase0 = train
        .next()
        .ok_or_else(|| DsalError::Manifest("training set has no phases".into()))??;
    check_aligned(std::slice::from_ref(&phase0.classes), test)?;
    let mut learner = Learner::init_base(config, &phase0)?;
    let mut per_phase = vec![evaluate_phase(&learner, test, 0)?];
    log::info!("phase 0: {} classes, A_0 = {:.2}", learner.classes().len(), per_phase[0]);
    for phase in train {
        let phase = phase?;
        let k = learner.phases_seen();
        if k >= test.len() || test[k].classes != phase.classes {
            return Err(DsalError::Manifest(format!(
                "phase {k}: no matching test phase"
            )));
        }
        learner.learn_phase(&phase)?;
        let acc = evaluate_phase(&learner, test, k)?;
        log::info!("phase {k}: {} classes, A_{k} = {acc:.2}", learner.classes().len());
        per_phase.push(acc);
    }
    let report = build_report(&learner, test, per_phase)?;
    Ok((learner, report))
}

pub fn run_protocol(config: LearnerConfig, train: &[PhaseDataset], test: &[PhaseDataset]) -> Result<(Learner, EvaluationReport)> {
    run_protocol_with(config, train.iter().cloned().map(Ok), test)
}

/// Same as [`run_protocol`] but reads training phases from disk one at a time.
pub fn run_protocol_manifests(
    config: LearnerConfig,
    train: &PhaseManifest,
    test: &PhaseManifest,
) -> Result<(Learner, EvaluationReport)> {
    let test = test.load_all()?;
    let train_classes: Vec<Vec<ClassId>> = train.phases.iter().map(|p| p.classes.clone()).collect();
    check_aligned(&train_classes, &test)?;
    run_protocol_with(config, (0..train.len()).map(|k| train.load_phase(k)), &test)
}

fn build_report(learner: &Learner, test: &[PhaseDataset], per_phase: Vec<f64>) -> Result<EvaluationReport> {
    let last = learner.phases_seen() - 1;
    let tally = tally_upto(learner, test, last, learner.config().comp_ratio)?;
    let average = per_phase.iter().sum::<f64>() / per_phase.len() as f64;
    Ok(EvaluationReport {
        last_accuracy: *per_phase.last().expect("at least the base phase"),
        average_accuracy: average,
        per_phase_accuracy: per_phase,
        base_accuracy: tally.base_accuracy(),
        novel_accuracy: tally.novel_accuracy(),
        base_samples: tally.base_total,
        novel_samples: tally.novel_total,
        config: learner.config().clone(),
        repeats: None,
    })
}

/// Runs the protocol `repeats` times, reseeding only the buffer projection
/// (`seed, seed + 1, ...`). Returns the first run's learner and a report whose
/// `repeats` field carries the spread.
pub fn run_repeated(
    config: LearnerConfig,
    train: &PhaseManifest,
    test: &PhaseManifest,
    repeats: usize,
) -> Result<(Learner, EvaluationReport)> {
    if repeats == 0 {
        return Err(DsalError::Config("repeats must be at least 1".into()));
    }
    let (first, mut report) = run_protocol_manifests(config.clone(), train, test)?;
    if repeats == 1 {
        return Ok((first, report));
    }
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| config.seed.wrapping_add(r)).collect();
    let mut reports = vec![report.clone()];
    for &seed in &seeds[1..] {
        let cfg = LearnerConfig { seed, ..config.clone() };
        reports.push(run_protocol_manifests(cfg, train, test)?.1);
    }
    report.repeats = Some(RepeatStats::from_reports(seeds, &reports));
    Ok((first, report))
}

/// Final-phase evaluation of an already trained learner, e.g. one restored
/// from a checkpoint. Only `A_K` and the split are known here, so the
/// per-phase curve holds a single entry.
pub fn evaluate_final(learner: &Learner, test: &[PhaseDataset]) -> Result<EvaluationReport> {
    let last = learner.phases_seen() - 1;
    let acc = evaluate_phase(learner, test, last)?;
    build_report(learner, test, vec![acc])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub last_accuracy: f64,
}

/// `A_K` for every ratio, reusing one pass of stream scores.
pub fn sweep_comp_ratio(learner: &Learner, test: &[PhaseDataset], ratios: &[f64]) -> Result<Vec<SweepRow>> {
    let last = learner.phases_seen() - 1;
    if last >= test.len() {
        return Err(DsalError::Manifest(format!("test phase {last} missing")));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(DsalError::Config(format!("invalid compensation ratio {r}")));
    }
    let scored: Vec<_> = test[..=last]
        .par_iter()
        .map(|p| learner.stream_scores(&p.embeddings).map(|s| (s, &p.labels)))
        .collect::<Result<_>>()?;
    ratios
        .iter()
        .map(|&ratio| {
            let (mut correct, mut total) = (0, 0);
            for (scores, labels) in &scored {
                let predicted = argmax_classes(&scores.combine(ratio), learner.classes());
                correct += predicted.iter().zip(labels.iter()).filter(|(p, l)| p == l).count();
                total += labels.len();
            }
            percent(correct, total)
                .map(|last_accuracy| SweepRow { ratio, last_accuracy })
                .ok_or_else(|| DsalError::Manifest("test set holds no samples".into()))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("ratio,last_accuracy\n");
    for r in rows {
        writeln!(out, "{},{}", r.ratio, r.last_accuracy).unwrap();
    }
    out
}

pub fn curve_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("phase,accuracy\n");
    for (k, a) in report.per_phase_accuracy.iter().enumerate() {
        writeln!(out, "{k},{a}").unwrap();
    }
    out
}

pub fn write_report(report: &EvaluationReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| DsalError::io(path, e))
}
