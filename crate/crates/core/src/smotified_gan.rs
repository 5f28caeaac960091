//! SMOTified-GAN and the baseline oversampling arms.
//!
//! SMOTified-GAN runs SMOTE on the training minority rows to get a
//! repertoire of `majority − minority` samples, trains the GAN with that
//! repertoire as the generator's input, and maps every repertoire row
//! through the trained generator once.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{partition_by_class, write_rows, Dataset};
use crate::error::{Error, Result};
use crate::gan::{accumulate_fake, train_gan, GanConfig, LatentSource, TrainTrace, ValidationHook};
use crate::numerics::Matrix;
use crate::smote::{smote_oversample, SmoteConfig, DEFAULT_K};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Smote,
    Gan,
    SmotifiedGan,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::None, Method::Smote, Method::Gan, Method::SmotifiedGan];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Smote => "smote",
            Method::Gan => "gan",
            Method::SmotifiedGan => "smotified_gan",
        }
    }

    /// Row label used in the summary table.
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::None => "Non-oversampled",
            Method::Smote => "SMOTE",
            Method::Gan => "GAN",
            Method::SmotifiedGan => "SMOTified-GAN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(Method::None),
            "smote" => Ok(Method::Smote),
            "gan" => Ok(Method::Gan),
            "smotified_gan" | "smotifiedgan" => Ok(Method::SmotifiedGan),
            _ => Err(Error::UnknownArm(s.to_owned())),
        }
    }
}

/// SMOTE and GAN settings shared by every arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OversampleSettings {
    pub k: usize,
    pub smote_seed: u64,
    pub gan: GanConfig,
    /// Discriminator-probability filter for the generated rows.
    pub filter: Option<f64>,
}

impl Default for OversampleSettings {
    fn default() -> Self {
        OversampleSettings {
            k: DEFAULT_K,
            smote_seed: 0,
            gan: GanConfig::default(),
            filter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub smote_seed: Option<u64>,
    pub gan_seed: Option<u64>,
    pub k: Option<usize>,
    pub gan: Option<GanConfig>,
    pub latent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OversampleResult {
    pub method: Method,
    /// Generated minority rows (label 1).
    pub synthetic: Matrix,
    /// Original training rows followed by the synthetic rows.
    pub augmented: Dataset,
    /// SMOTE output fed to the generator (SMOTified-GAN only).
    pub repertoire: Option<Matrix>,
    pub trace: Option<TrainTrace>,
    pub provenance: Provenance,
}

impl OversampleResult {
    /// Writes SMOTE rows and their generator refinements side by side.
    pub fn write_side_by_side(&self, path: &Path) -> Result<()> {
        let Some(rep) = &self.repertoire else {
            return Err(Error::Config(format!(
                "{} has no pre-GAN repertoire to compare",
                self.method
            )));
        };
        let names = &self.augmented.feature_names;
        let mut header: Vec<String> = names.iter().map(|n| format!("smote_{n}")).collect();
        header.extend(names.iter().map(|n| format!("gan_{n}")));
        let rows = rep.iter_rows().zip(self.synthetic.iter_rows()).map(|(a, b)| {
            a.iter().chain(b).map(|v| format!("{v:?}")).collect::<Vec<_>>()
        });
        write_rows(path, &header, rows)
    }
}

/// Minority rows and the number of synthetic rows that balances the classes.
fn minority_and_gap(train: &Dataset) -> Result<(Dataset, usize)> {
    let (minority, majority) = partition_by_class(train)?;
    if minority.len() < 2 {
        return Err(Error::TooFewRows {
            context: "training minority class",
            needed: 2,
            found: minority.len(),
        });
    }
    let gap = majority.len() - minority.len();
    Ok((minority, gap))
}

fn finish(
    train: &Dataset,
    method: Method,
    synthetic: Matrix,
    repertoire: Option<Matrix>,
    trace: Option<TrainTrace>,
    provenance: Provenance,
) -> Result<OversampleResult> {
    let augmented = train.append(&synthetic, 1)?;
    Ok(OversampleResult {
        method,
        synthetic,
        augmented,
        repertoire,
        trace,
        provenance,
    })
}

/// SMOTE → GAN with the SMOTE output as latent source → one generator pass
/// over the repertoire.
pub fn smotified_gan_oversample(
    train: &Dataset,
    settings: &OversampleSettings,
    hook: Option<&mut ValidationHook<'_>>,
) -> Result<OversampleResult> {
    let (minority, gap) = minority_and_gap(train)?;
    let smote_cfg = SmoteConfig {
        k: settings.k,
        target_count: gap,
        seed: settings.smote_seed,
    };
    let batch = smote_oversample(minority.features(), &smote_cfg)?;
    let provenance = Provenance {
        method: Method::SmotifiedGan,
        smote_seed: Some(settings.smote_seed),
        gan_seed: Some(settings.gan.seed),
        k: Some(settings.k),
        gan: Some(settings.gan.clone()),
        latent: Some("repertoire".into()),
    };
    if gap == 0 {
        return finish(train, Method::SmotifiedGan, batch.samples.clone(), Some(batch.samples), None, provenance);
    }
    let latent = LatentSource::Repertoire(batch.samples.clone());
    let (model, trace) = train_gan(minority.features(), &latent, &settings.gan, hook)?;
    let synthetic = accumulate_fake(&model, &latent, gap, settings.filter, settings.gan.seed)?;
    finish(train, Method::SmotifiedGan, synthetic, Some(batch.samples), Some(trace), provenance)
}

/// Runs one comparison arm.
pub fn baseline_oversample(
    train: &Dataset,
    method: Method,
    settings: &OversampleSettings,
    hook: Option<&mut ValidationHook<'_>>,
) -> Result<OversampleResult> {
    match method {
        Method::None => finish(
            train,
            Method::None,
            Matrix::zeros(0, train.dim()),
            None,
            None,
            Provenance {
                method,
                smote_seed: None,
                gan_seed: None,
                k: None,
                gan: None,
                latent: None,
            },
        ),
        Method::Smote => {
            let (minority, gap) = minority_and_gap(train)?;
            let cfg = SmoteConfig {
                k: settings.k,
                target_count: gap,
                seed: settings.smote_seed,
            };
            let batch = smote_oversample(minority.features(), &cfg)?;
            finish(
                train,
                Method::Smote,
                batch.samples,
                None,
                None,
                Provenance {
                    method,
                    smote_seed: Some(settings.smote_seed),
                    gan_seed: None,
                    k: Some(settings.k),
                    gan: None,
                    latent: None,
                },
            )
        }
        Method::Gan => {
            let (minority, gap) = minority_and_gap(train)?;
            let latent = LatentSource::Noise { dim: train.dim() };
            let provenance = Provenance {
                method,
                smote_seed: None,
                gan_seed: Some(settings.gan.seed),
                k: None,
                gan: Some(settings.gan.clone()),
                latent: Some("noise".into()),
            };
            if gap == 0 {
                return finish(train, Method::Gan, Matrix::zeros(0, train.dim()), None, None, provenance);
            }
            let (model, trace) = train_gan(minority.features(), &latent, &settings.gan, hook)?;
            let synthetic = accumulate_fake(&model, &latent, gap, settings.filter, settings.gan.seed)?;
            finish(train, Method::Gan, synthetic, None, Some(trace), provenance)
        }
        Method::SmotifiedGan => smotified_gan_oversample(train, settings, hook),
    }
}
