#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smotified::dataset::{load_manifest, Dataset};
use smotified::numerics::{Gradients, Matrix, MlpModel};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn manifest_path() -> PathBuf {
    repo_root().join("data/manifest.json")
}

pub fn load(name: &str) -> Dataset {
    load_manifest(&manifest_path())
        .unwrap()
        .into_iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("{name} missing from manifest"))
        .load()
        .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Line printed by the acceptance targets. Written to the stderr handle
/// directly so it shows up even when the harness captures test output.
pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id} [{name}]: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Worst relative disagreement between analytic gradients and central
/// differences of `loss` over every parameter of `model`.
///
/// The relative error uses `max(|a|, |n|, 1e-6)` as denominator so entries
/// that are zero up to rounding do not divide by nothing.
pub fn finite_difference_error(
    model: &MlpModel,
    analytic: &Gradients,
    h: f64,
    mut loss: impl FnMut(&MlpModel) -> f64,
) -> f64 {
    let grads: Vec<Vec<f64>> = analytic.as_slices().iter().map(|s| s.to_vec()).collect();
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    assert_eq!(grads.iter().map(Vec::len).collect::<Vec<_>>(), shapes, "gradient layout");
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, g) in grads.iter().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            let orig = probe.params()[t][i];
            probe.params_mut()[t][i] = orig + h;
            let up = loss(&probe);
            probe.params_mut()[t][i] = orig - h;
            let down = loss(&probe);
            probe.params_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = gi.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((gi - numeric).abs() / denom);
        }
    }
    worst
}
