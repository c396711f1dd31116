//! Training-set corruptions: symmetric class noise, Boolean feature flips and
//! the insider twister (Gaussian noise on numeric columns, cyclic symbol
//! increments on categorical ones).
//!
//! Every twister is a pure function of the input dataset and a seed; the test
//! split is never passed through here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{check_unit, Error, Result};

/// A column given by index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Index(usize),
    Name(String),
}

impl FeatureRef {
    pub fn resolve(&self, ds: &Dataset) -> Result<usize> {
        match self {
            FeatureRef::Index(j) if *j < ds.d() => Ok(*j),
            FeatureRef::Index(j) => Err(Error::Config(format!("feature index {j} out of range (d = {})", ds.d()))),
            FeatureRef::Name(n) => ds
                .schema()
                .columns
                .iter()
                .position(|c| &c.name == n)
                .ok_or_else(|| Error::Config(format!("unknown feature '{n}'"))),
        }
    }
}

fn default_increment_prob() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InsiderRule {
    /// Adds i.i.d. `N(0, σ²)` noise; `sigma` is a standard deviation.
    Gaussian { feature: FeatureRef, sigma: f64 },
    /// Moves each entry to the next symbol of the column's alphabet (wrapping)
    /// with probability `prob`.
    CyclicIncrement {
        feature: FeatureRef,
        #[serde(default = "default_increment_prob")]
        prob: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwisterKind {
    None,
    ClassNoise {
        #[serde(default)]
        p: f64,
    },
    FeatureNoise {
        #[serde(default)]
        p1: f64,
        #[serde(default)]
        p2: f64,
        /// Columns eligible for flipping; all columns when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<Vec<FeatureRef>>,
    },
    Insider {
        rules: Vec<InsiderRule>,
    },
}

impl TwisterKind {
    /// Instantiates the twister at a sweep level: `p` for class noise,
    /// `p1 = p2` for feature noise, and a multiplier on every σ and increment
    /// probability for the insider.
    pub fn at_level(&self, level: f64) -> Result<Self> {
        check_unit("twist level", level)?;
        Ok(match self {
            TwisterKind::None => TwisterKind::None,
            TwisterKind::ClassNoise { .. } => TwisterKind::ClassNoise { p: level },
            TwisterKind::FeatureNoise { features, .. } => TwisterKind::FeatureNoise {
                p1: level,
                p2: level,
                features: features.clone(),
            },
            TwisterKind::Insider { rules } => TwisterKind::Insider {
                rules: rules
                    .iter()
                    .map(|r| match r {
                        InsiderRule::Gaussian { feature, sigma } => InsiderRule::Gaussian {
                            feature: feature.clone(),
                            sigma: sigma * level,
                        },
                        InsiderRule::CyclicIncrement { feature, prob } => InsiderRule::CyclicIncrement {
                            feature: feature.clone(),
                            prob: (prob * level).min(1.0),
                        },
                    })
                    .collect(),
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TwisterKind::None => "none",
            TwisterKind::ClassNoise { .. } => "class_noise",
            TwisterKind::FeatureNoise { .. } => "feature_noise",
            TwisterKind::Insider { .. } => "insider",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwisterSpec {
    #[serde(flatten)]
    pub kind: TwisterKind,
    #[serde(default)]
    pub seed: u64,
}

impl TwisterSpec {
    pub fn apply(&self, train: &Dataset) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.kind {
            TwisterKind::None => Ok(train.clone()),
            TwisterKind::ClassNoise { p } => apply_class_noise(train, *p, &mut rng),
            TwisterKind::FeatureNoise { p1, p2, features } => {
                let targets = match features {
                    Some(fs) => fs.iter().map(|f| f.resolve(train)).collect::<Result<Vec<_>>>()?,
                    None => (0..train.d()).collect(),
                };
                apply_feature_noise_on(train, *p1, *p2, &targets, &mut rng)
            }
            TwisterKind::Insider { rules } => apply_insider_twist(train, rules, &mut rng),
        }
    }
}

/// Flips each label independently with probability `p`.
pub fn apply_class_noise(train: &Dataset, p: f64, rng: &mut impl Rng) -> Result<Dataset> {
    check_unit("class noise p", p)?;
    let labels = train
        .labels()
        .iter()
        .map(|&y| if rng.gen_bool(p) { y.flipped() } else { y })
        .collect();
    train.with_labels(labels)
}

/// Two-stage flips on every column: a row is selected with probability `p1`,
/// then each of its Boolean features flips with probability `p2`.
pub fn apply_feature_noise(train: &Dataset, p1: f64, p2: f64, rng: &mut impl Rng) -> Result<Dataset> {
    let all: Vec<usize> = (0..train.d()).collect();
    apply_feature_noise_on(train, p1, p2, &all, rng)
}

pub fn apply_feature_noise_on(
    train: &Dataset,
    p1: f64,
    p2: f64,
    targets: &[usize],
    rng: &mut impl Rng,
) -> Result<Dataset> {
    check_unit("feature noise p1", p1)?;
    check_unit("feature noise p2", p2)?;
    for &j in targets {
        if j >= train.d() || *train.schema().kind(j) != ColumnKind::Boolean {
            return Err(Error::Precondition(format!(
                "feature noise targets column {j}, which is not Boolean"
            )));
        }
    }
    let d = train.d();
    let mut feats = train.features().to_vec();
    for i in 0..train.m() {
        if !rng.gen_bool(p1) {
            continue;
        }
        for &j in targets {
            if rng.gen_bool(p2) {
                let x = &mut feats[i * d + j];
                *x = 1.0 - *x;
            }
        }
    }
    train.with_features(feats)
}

pub fn apply_insider_twist(train: &Dataset, rules: &[InsiderRule], rng: &mut impl Rng) -> Result<Dataset> {
    let d = train.d();
    let mut feats = train.features().to_vec();
    for rule in rules {
        match rule {
            InsiderRule::Gaussian { feature, sigma } => {
                let j = feature.resolve(train)?;
                if *train.schema().kind(j) != ColumnKind::Numeric {
                    return Err(Error::Precondition(format!(
                        "Gaussian insider rule on non-numeric column '{}'",
                        train.schema().columns[j].name
                    )));
                }
                let normal = Normal::new(0.0, *sigma)
                    .map_err(|e| Error::Config(format!("invalid sigma {sigma}: {e}")))?;
                for i in 0..train.m() {
                    feats[i * d + j] += normal.sample(rng);
                }
            }
            InsiderRule::CyclicIncrement { feature, prob } => {
                let j = feature.resolve(train)?;
                let ColumnKind::Categorical { alphabet } = train.schema().kind(j) else {
                    return Err(Error::Precondition(format!(
                        "cyclic increment on non-categorical column '{}'",
                        train.schema().columns[j].name
                    )));
                };
                check_unit("increment probability", *prob)?;
                let k = alphabet.len() as f64;
                for i in 0..train.m() {
                    if rng.gen_bool(*prob) {
                        let x = &mut feats[i * d + j];
                        *x = (*x + 1.0) % k;
                    }
                }
            }
        }
    }
    train.with_features(feats)
}
