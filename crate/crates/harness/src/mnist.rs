//! Class-incremental MNIST: N_C classes seen one after another in each of
//! several cycles, fresh samples every time, accuracy on held-out images
//! after every iteration.

use std::path::Path;

use mnr::{MnrModel, Observed};
use modeller::snapshot;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use vision::{image_to_spn, load_mnist, ImageSet, Split};

use crate::config::ExperimentConfig;
use crate::metrics::{mean_std, retention_drops, Accuracy, Metrics};
use crate::{trial_rng, HarnessError};

pub const MNR_KIND: &str = "mnr-model";

/// Zero-based first cycle counted for retention.
pub const RETENTION_FROM_CYCLE: usize = 3;

fn observe(set: &ImageSet, i: usize) -> Observed {
    Observed::new(image_to_spn(&set.images[i], set.cols, set.rows))
}

pub struct MnistRun {
    pub metrics: Metrics,
    /// final model of each trial
    pub models: Vec<MnrModel>,
}

pub fn run_mnist_continual(cfg: &ExperimentConfig) -> Result<MnistRun, HarnessError> {
    let dir = cfg.mnist.resolve_data_dir();
    let train = load_mnist(&dir, Split::Train)?;
    let test = load_mnist(&dir, Split::Test)?;
    run_on(cfg, &train, &test)
}

pub fn run_on(cfg: &ExperimentConfig, train: &ImageSet, test: &ImageSet) -> Result<MnistRun, HarnessError> {
    let m = &cfg.mnist;
    let (n_sample, test_size) = m.sizes();
    let (train_by, test_by) = (train.by_label(), test.by_label());
    let per_trial: Vec<(Vec<Accuracy>, MnrModel)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut pick = trial_rng(cfg.seed, trial, 0);
            let mut learn_rng = trial_rng(cfg.seed, trial, 1);
            let mut digits: Vec<u8> = (0..10).collect();
            digits.shuffle(&mut pick);
            digits.truncate(m.n_classes);
            let mut pools: Vec<Vec<usize>> = digits
                .iter()
                .map(|&d| {
                    let mut v = train_by[d as usize].clone();
                    v.shuffle(&mut pick);
                    v
                })
                .collect();
            for (&d, p) in digits.iter().zip(&pools) {
                if p.len() < n_sample * m.cycles {
                    return Err(HarnessError::Input(format!(
                        "digit {d} has {} training images, {} needed",
                        p.len(),
                        n_sample * m.cycles
                    )));
                }
            }
            let tests: Vec<Vec<Observed>> = digits
                .iter()
                .map(|&d| {
                    let mut v = test_by[d as usize].clone();
                    v.shuffle(&mut pick);
                    v.truncate(test_size);
                    v.iter().map(|&i| observe(test, i)).collect()
                })
                .collect();
            let mut model = MnrModel::new(m.mnr());
            let mut acc = Vec::new();
            for cycle in 0..m.cycles {
                for (it, &d) in digits.iter().enumerate() {
                    for _ in 0..n_sample {
                        let i = pools[it].pop().expect("pool size checked");
                        model.learn(&observe(train, i), d as u16, &mut learn_rng)?;
                    }
                    for (k, ts) in tests.iter().enumerate() {
                        let mut hit = 0usize;
                        for o in ts {
                            hit += (model.classify(o, &mut learn_rng)? == Some(digits[k] as u16)) as usize;
                        }
                        let accuracy = if ts.is_empty() { 0.0 } else { hit as f64 / ts.len() as f64 };
                        acc.push(Accuracy { trial, cycle, iteration: it, class_index: k, digit: digits[k], accuracy });
                    }
                }
            }
            Ok((acc, model))
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut metrics = Metrics::new("mnist", cfg.seed, cfg.trials);
    let mut models = Vec::new();
    for (a, model) in per_trial {
        metrics.accuracy.extend(a);
        models.push(model);
    }
    summarize(&mut metrics, m.n_classes, m.cycles);
    Ok(MnistRun { metrics, models })
}

fn summarize(metrics: &mut Metrics, n_classes: usize, cycles: usize) {
    if cycles == 0 {
        return;
    }
    let (last_c, last_i) = (cycles - 1, n_classes - 1);
    // per trial: mean over classes after the last iteration
    let finals: Vec<f64> = (0..metrics.trials)
        .map(|t| {
            let xs: Vec<f64> = metrics
                .accuracy
                .iter()
                .filter(|a| a.trial == t && a.cycle == last_c && a.iteration == last_i)
                .map(|a| a.accuracy)
                .collect();
            mean_std(&xs).map_or(0.0, |x| x.0)
        })
        .collect();
    if let Some((mean, sd)) = mean_std(&finals) {
        metrics.summary.insert("final_accuracy.mean".into(), mean);
        metrics.summary.insert("final_accuracy.std".into(), sd);
    }
    let drops = retention_drops(&metrics.accuracy_curve(), n_classes, RETENTION_FROM_CYCLE);
    if let Some(w) = drops.iter().map(|d| d.2).reduce(f64::max) {
        metrics.summary.insert("retention.worst_drop".into(), w);
    }
}

pub fn save_mnr(path: &Path, model: &MnrModel) -> Result<(), HarnessError> {
    Ok(snapshot::save(path, MNR_KIND, model)?)
}

pub fn load_mnr(path: &Path) -> Result<MnrModel, HarnessError> {
    Ok(snapshot::load(path, MNR_KIND)?)
}
