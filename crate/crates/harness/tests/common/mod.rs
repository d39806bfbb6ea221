#![allow(dead_code)]

use std::path::{Path, PathBuf};

use harness::ExperimentConfig;
use vision::ImageSet;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("MNR_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| workspace_root().join("data/mnist"))
}

pub fn mnist_available() -> bool {
    let d = mnist_dir();
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| d.join(f).exists() || d.join(format!("{f}.gz")).exists())
}

/// Small FSM runs: few steps, two trials.
pub fn small_cfg(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { seed, trials: 2, ..ExperimentConfig::default() };
    c.planning.random_steps = 600;
    c.planning.planned_steps = 400;
    c.continual.window = 300;
    c.continual.readaptation_window = 200;
    c.encapsulation.training_steps = 1500;
    c
}

/// Digit d is a vertical bar of width d + 1, shifted by one pixel on odd
/// samples.
pub fn bars(per: usize) -> ImageSet {
    let (rows, cols) = (14, 14);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..per {
        for d in 0..10u8 {
            let mut px = vec![0u8; rows * cols];
            for y in 2..11 {
                for x in 1 + k % 2..2 + k % 2 + d as usize {
                    px[y * cols + x] = 255;
                }
            }
            images.push(px);
            labels.push(d);
        }
    }
    ImageSet { rows, cols, images, labels }
}

pub fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}
