//! Run metrics and their on-disk form.
//!
//! Files hold step indices, never wall-clock times, so a seeded run
//! writes identical bytes every time.

use std::collections::BTreeMap;
use std::path::Path;

use modeller::env::Subtype;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub trial: usize,
    /// index of the phase or window the episode ended in
    pub phase: usize,
    pub label: String,
    pub subtype: Subtype,
    pub learning: bool,
    pub end_step: u64,
    pub duration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub trial: usize,
    pub cycle: usize,
    pub iteration: usize,
    /// position of the class in the trial's class order
    pub class_index: usize,
    pub digit: u8,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSize {
    pub trial: usize,
    pub step: u64,
    pub size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub experiment: String,
    pub seed: u64,
    pub trials: usize,
    pub episodes: Vec<Episode>,
    pub accuracy: Vec<Accuracy>,
    pub model_size: Vec<ModelSize>,
    pub summary: BTreeMap<String, f64>,
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((m, var.sqrt()))
}

impl Metrics {
    pub fn new(experiment: &str, seed: u64, trials: usize) -> Self {
        Metrics { experiment: experiment.into(), seed, trials, ..Default::default() }
    }

    /// Per-trial means of the episodes selected by `keep`, trials without
    /// such episodes skipped.
    pub fn trial_means(&self, keep: impl Fn(&Episode) -> bool) -> Vec<f64> {
        let mut per: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for e in self.episodes.iter().filter(|e| keep(e)) {
            let s = per.entry(e.trial).or_default();
            s.0 += e.duration as f64;
            s.1 += 1;
        }
        per.values().map(|(s, n)| s / *n as f64).collect()
    }

    /// Mean over episodes within each trial, then mean and standard
    /// deviation across trials.
    pub fn label_stats(&self, label: &str) -> Option<(f64, f64)> {
        mean_std(&self.trial_means(|e| e.label == label))
    }

    /// Trial-averaged accuracy by (cycle, iteration, class index).
    pub fn accuracy_curve(&self) -> BTreeMap<(usize, usize, usize), f64> {
        let mut sums: BTreeMap<(usize, usize, usize), (f64, usize)> = BTreeMap::new();
        for a in &self.accuracy {
            let s = sums.entry((a.cycle, a.iteration, a.class_index)).or_default();
            s.0 += a.accuracy;
            s.1 += 1;
        }
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e| HarnessError::Io(dir.to_path_buf(), e);
        std::fs::create_dir_all(dir).map_err(io)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("metrics.json"), json + "\n").map_err(io)?;
        write_csv(&dir.join("episodes.csv"), &self.episodes)?;
        write_csv(&dir.join("accuracy.csv"), &self.accuracy)?;
        write_csv(&dir.join("model_size.csv"), &self.model_size)?;
        let rows: Vec<(&String, &f64)> = self.summary.iter().collect();
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k.as_str(), &v.to_string()])?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    Ok(())
}

/// Largest within-cycle accuracy drop of each already-learned class,
/// measured on trial-averaged curves from cycle `from_cycle` (zero-based)
/// on: accuracy right after the class's own iteration minus accuracy after
/// each later iteration of the same cycle. Entries are (cycle, class, drop).
pub fn retention_drops(
    curve: &BTreeMap<(usize, usize, usize), f64>,
    n_classes: usize,
    from_cycle: usize,
) -> Vec<(usize, usize, f64)> {
    let cycles = curve.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let mut out = Vec::new();
    for c in from_cycle..cycles {
        for i in 0..n_classes {
            let Some(&own) = curve.get(&(c, i, i)) else { continue };
            let worst = (i + 1..n_classes)
                .filter_map(|j| curve.get(&(c, j, i)))
                .map(|&a| own - a)
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                out.push((c, i, worst));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(trial: usize, label: &str, duration: u64) -> Episode {
        Episode { trial, phase: 0, label: label.into(), subtype: Subtype::RS, learning: true, end_step: 0, duration }
    }

    #[test]
    fn averaging_is_per_trial_first() {
        let mut m = Metrics::new("t", 0, 2);
        // trial 0: 2, 4 -> 3; trial 1: 10 -> 10
        m.episodes = vec![ep(0, "a", 2), ep(0, "a", 4), ep(1, "a", 10), ep(1, "b", 99)];
        let (mean, sd) = m.label_stats("a").unwrap();
        assert_eq!(mean, 6.5);
        assert!((sd - (24.5f64).sqrt()).abs() < 1e-12);
        assert_eq!(m.label_stats("zzz"), None);
    }

    #[test]
    fn drops_on_a_small_curve() {
        let mut curve = BTreeMap::new();
        for c in 0..2 {
            for it in 0..2 {
                curve.insert((c, it, 0), if it == 0 { 0.8 } else { 0.6 });
                curve.insert((c, it, 1), 0.5);
            }
        }
        let d = retention_drops(&curve, 2, 1);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].0, d[0].1), (1, 0));
        assert!((d[0].2 - 0.2).abs() < 1e-12);
    }
}
