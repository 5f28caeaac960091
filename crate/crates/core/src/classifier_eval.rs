//! The fixed evaluation classifier and minority-class metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_rows, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{
    bce_with_logits, mae_loss, sigmoid, AdamConfig, AdamState, LayerSpec, Matrix, MlpModel, Mode,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLoss {
    /// Mean absolute error on the sigmoid output.
    Mae,
    /// Binary cross-entropy on the logit.
    Bce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub hidden: Vec<usize>,
    pub loss: ClassifierLoss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a better validation checkpoint before stopping.
    pub patience: usize,
    /// Checkpoints from earlier epochs are not eligible as the best model.
    pub warmup_epochs: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            hidden: vec![256, 128],
            loss: ClassifierLoss::Mae,
            learning_rate: 1e-5,
            batch_size: 128,
            max_epochs: 2000,
            patience: 1000,
            warmup_epochs: 100,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("classifier hidden widths must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0,1)", self.threshold)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("classifier batch size must be positive".into()));
        }
        Ok(())
    }

    /// `d → hidden… → 1`, ReLU between dense layers; a sigmoid head is part
    /// of the network for MAE and applied outside it for BCE.
    pub fn build(&self, d: usize) -> Result<MlpModel> {
        let mut rng = rng::stream(rng::derive_seed(self.seed, "classifier-init"));
        let head = match self.loss {
            ClassifierLoss::Mae => Some(LayerSpec::Sigmoid),
            ClassifierLoss::Bce => None,
        };
        MlpModel::stack(d, &self.hidden, 1, LayerSpec::Relu, false, head, &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedClassifier {
    pub model: MlpModel,
    pub loss: ClassifierLoss,
    /// 0 when the initial weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_f1: Vec<f64>,
}

impl TrainedClassifier {
    /// Positive-class probabilities, one per row.
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = self.model.predict(x)?;
        Ok(match self.loss {
            ClassifierLoss::Mae => out.into_vec(),
            ClassifierLoss::Bce => out.into_vec().into_iter().map(sigmoid).collect(),
        })
    }
}

fn objective(loss: ClassifierLoss, out: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    match loss {
        ClassifierLoss::Mae => mae_loss(out, targets),
        ClassifierLoss::Bce => bce_with_logits(out, targets),
    }
}

/// Trains on `train` with Adam and keeps the checkpoint with the best
/// validation F1 (ties broken by lower validation loss).
pub fn train_classifier(train: &Dataset, val: &Dataset, spec: &ClassifierSpec) -> Result<TrainedClassifier> {
    spec.validate()?;
    if val.is_empty() {
        return Err(Error::TooFewRows {
            context: "validation set",
            needed: 1,
            found: 0,
        });
    }
    let mut model = spec.build(train.dim())?;
    let mut adam = AdamState::for_model(AdamConfig::with_learning_rate(spec.learning_rate), &model)?;
    let mut rng = rng::stream(rng::derive_seed(spec.seed, "classifier-train"));
    let targets = train.label_column();
    let val_targets = val.label_column();

    let score_val = |m: &MlpModel| -> Result<(f64, f64)> {
        let out = m.predict(val.features())?;
        let (loss, _) = objective(spec.loss, &out, &val_targets)?;
        let scores: Vec<f64> = match spec.loss {
            ClassifierLoss::Mae => out.into_vec(),
            ClassifierLoss::Bce => out.into_vec().into_iter().map(sigmoid).collect(),
        };
        let c = Confusion::at_threshold(&scores, val.labels(), spec.threshold);
        Ok((c.f1(), loss))
    };

    // (f1, val loss, epoch, weights); the initial model only competes
    // without a warmup.
    let mut best: Option<(f64, f64, usize, MlpModel)> = None;
    if spec.warmup_epochs == 0 {
        let (f1, loss) = score_val(&model)?;
        best = Some((f1, loss, 0, model.clone()));
    }
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=spec.max_epochs {
        if train.is_empty() {
            break;
        }
        order.shuffle(&mut rng);
        for idx in order.chunks(spec.batch_size) {
            let x = train.features().select_rows(idx);
            let t = targets.select_rows(idx);
            let (out, cache) = model.forward(&x, Mode::Training)?;
            let (loss, grad) = objective(spec.loss, &out, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    what: "classifier",
                    epoch,
                });
            }
            let (grads, _) = model.backward(&cache, &grad)?;
            adam.step_model(&mut model, &grads)?;
        }
        epochs_run = epoch;
        let (f1, loss) = score_val(&model)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "classifier validation",
                epoch,
            });
        }
        history.push(f1);
        if epoch < spec.warmup_epochs {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bf, bl, _, _)) => f1 > *bf || (f1 == *bf && loss < *bl),
        };
        if better {
            best = Some((f1, loss, epoch, model.clone()));
        }
        let since = best.as_ref().map_or(epoch, |b| b.2);
        if epoch - since >= spec.patience {
            break;
        }
    }

    let (best_epoch, model) = match best {
        Some((_, _, epoch, m)) => (epoch, m),
        // Stopped before the warmup ended: keep the final weights.
        None => (epochs_run, model),
    };
    Ok(TrainedClassifier {
        model,
        loss: spec.loss,
        best_epoch,
        epochs_run,
        val_f1: history,
    })
}

/// Confusion counts with the minority class as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    /// Rows with `score >= threshold` are predicted positive.
    pub fn at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    /// `None` when the test set holds a single class.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub pr_curve: Vec<PrPoint>,
    pub pr_auc: Option<f64>,
}

impl MetricsReport {
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape("MetricsReport::from_scores", labels.len(), scores.len()));
        }
        if scores.is_empty() {
            return Err(Error::TooFewRows {
                context: "test set",
                needed: 1,
                found: 0,
            });
        }
        let c = Confusion::at_threshold(scores, labels, threshold);
        let both = c.tp + c.fn_ > 0 && c.fp + c.tn > 0;
        let pr_curve = if both { pr_curve(scores, labels) } else { Vec::new() };
        Ok(MetricsReport {
            confusion: c,
            accuracy: c.accuracy(),
            precision: both.then(|| c.precision()),
            recall: both.then(|| c.recall()),
            f1: both.then(|| c.f1()),
            pr_auc: both.then(|| pr_auc(&pr_curve)),
            pr_curve,
        })
    }

    /// PR curve as CSV: `threshold,precision,recall`.
    pub fn write_pr_csv(&self, path: &Path) -> Result<()> {
        let header = ["threshold", "precision", "recall"].map(String::from);
        let rows = self.pr_curve.iter().map(|p| {
            vec![
                format!("{:?}", p.threshold),
                format!("{:?}", p.precision),
                format!("{:?}", p.recall),
            ]
        });
        write_rows(path, &header, rows)
    }
}

/// One point per distinct score, thresholds descending (recall ascending).
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Vec<PrPoint> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(PrPoint {
            threshold: s,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, positives),
        });
    }
    points
}

/// Trapezoidal area under precision-vs-recall, starting from
/// `(recall 0, precision of the first point)`.
pub fn pr_auc(curve: &[PrPoint]) -> f64 {
    let Some(first) = curve.first() else {
        return 0.0;
    };
    let (mut r0, mut p0) = (0.0, first.precision);
    let mut area = 0.0;
    for p in curve {
        area += (p.recall - r0) * (p.precision + p0) / 2.0;
        r0 = p.recall;
        p0 = p.precision;
    }
    area
}

pub fn evaluate(model: &TrainedClassifier, test: &Dataset, threshold: f64) -> Result<MetricsReport> {
    let scores = model.scores(test.features())?;
    MetricsReport::from_scores(&scores, test.labels(), threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_scores() {
        let r = MetricsReport::from_scores(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(r.recall, Some(1.0));
        assert_eq!(r.f1, Some(1.0));
        assert_eq!(r.pr_auc, Some(1.0));
    }

    #[test]
    fn hand_enumerated_confusion() {
        let r = MetricsReport::from_scores(&[0.9, 0.8, 0.3], &[1, 0, 1], 0.5).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 1, tn: 0, fn_: 1 });
        assert_eq!((r.precision, r.recall, r.f1), (Some(0.5), Some(0.5), Some(0.5)));
    }

    #[test]
    fn always_negative_predictor_scores_zero_f1() {
        let labels: Vec<u8> = (0..34).map(|i| u8::from(i < 2)).collect();
        let r = MetricsReport::from_scores(&vec![0.0; 34], &labels, 0.5).unwrap();
        assert_eq!(r.f1, Some(0.0));
        assert_eq!(r.precision, Some(0.0));
        assert!((r.accuracy - 32.0 / 34.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_flags_undefined() {
        let r = MetricsReport::from_scores(&[0.2, 0.7], &[0, 0], 0.5).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!(r.precision.is_none() && r.f1.is_none() && r.pr_auc.is_none());
    }

    #[test]
    fn classifier_with_no_epochs_is_the_initial_model() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.1, 0.0], [0.9, 1.0]]).unwrap();
        let ds = Dataset::new("t", x, vec![0, 1, 0, 1]).unwrap();
        let spec = ClassifierSpec {
            max_epochs: 0,
            hidden: vec![4],
            ..Default::default()
        };
        let trained = train_classifier(&ds, &ds, &spec).unwrap();
        assert_eq!(trained.model, spec.build(2).unwrap());
        assert_eq!(trained.best_epoch, 0);
    }

    proptest! {
        #[test]
        fn recall_is_monotone_in_threshold(
            scores in prop::collection::vec(0.0f64..1.0, 4..30),
            seed in 0u64..100,
            t1 in 0.01f64..0.99, t2 in 0.01f64..0.99,
        ) {
            let labels: Vec<u8> = (0..scores.len()).map(|i| u8::from((i as u64 + seed).is_multiple_of(3))).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let r_lo = Confusion::at_threshold(&scores, &labels, lo).recall();
            let r_hi = Confusion::at_threshold(&scores, &labels, hi).recall();
            prop_assert!(r_hi <= r_lo);
        }

        #[test]
        fn metrics_ignore_row_order(
            rows in prop::collection::vec((0.0f64..1.0, 0u8..2), 3..25),
        ) {
            prop_assume!(rows.iter().any(|r| r.1 == 1) && rows.iter().any(|r| r.1 == 0));
            let (s, l): (Vec<f64>, Vec<u8>) = rows.iter().copied().unzip();
            let (rs, rl): (Vec<f64>, Vec<u8>) = rows.iter().rev().copied().unzip();
            let a = MetricsReport::from_scores(&s, &l, 0.5).unwrap();
            let b = MetricsReport::from_scores(&rs, &rl, 0.5).unwrap();
            prop_assert_eq!(a.confusion, b.confusion);
            prop_assert_eq!(a.pr_auc, b.pr_auc);
            let (p, r, f) = (a.precision.unwrap(), a.recall.unwrap(), a.f1.unwrap());
            if p + r > 0.0 {
                prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
            let auc = a.pr_auc.unwrap();
            prop_assert!((0.0..=1.0).contains(&auc));
        }
    }
}
