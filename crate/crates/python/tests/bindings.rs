use std::ffi::CString;

use pyo3::prelude::*;
use pysmotified::pysmotified as extension;

/// Registers the extension as a built-in module and runs `code` against it.
fn run_python(code: &str) {
    pyo3::append_to_inittab!(extension);
    Python::initialize();
    Python::attach(|py| {
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn module_round_trip() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ecoli.csv");
    run_python(&format!(
        r#"
import pysmotified as ps

assert ps.knn([[0, 0], [1, 0], [3, 0]], 0, 1) == [1]
rows = ps.smote_oversample([[0.0, 0.0], [1.0, 2.0], [0.5, 0.5]], 7, k=2, seed=3)
assert len(rows) == 7 and all(len(r) == 2 for r in rows)

m = ps.metrics([0.9, 0.8, 0.3], [1, 0, 1])
assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (1, 1, 1, 0) and m["f1"] == 0.5
area, points = ps.precision_recall([1.0, 0.0, 1.0, 0.0], [1, 0, 1, 0])
assert area == 1.0 and len(points) == 2

ds = ps.Dataset.from_csv({data:?}, "Class", "positive", header=True)
assert (len(ds), ds.dim, ds.positives) == (335, 7, 20)
train, val, test = ds.split(seed=1)
synthetic, augmented = ps.oversample(train, "smote", seed=4)
assert augmented.positives == augmented.negatives == train.negatives
fake, losses = ps.train_gan(synthetic[:20], 5, repertoire=synthetic[:30], epochs=2)
assert len(fake) == 5 and len(losses["gen_loss"]) == 2

try:
    ps.oversample(train, "adasyn")
except ValueError as e:
    assert "adasyn" in str(e)
else:
    raise AssertionError("unknown arm accepted")
"#
    ));
}
