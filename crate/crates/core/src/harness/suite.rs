//! Synthetic two-class domains: a four-blob Gaussian mixture in the plane
//! (diagonal blobs share a class) and shifted copies of its test split.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::Batch;

pub const NUM_CLASSES: usize = 2;
const COMPONENTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Train,
    Correlated,
    Anticorrelated,
}

/// `x ↦ R(rotation)·x + translation`, then each label is replaced by another
/// class with probability `flip_rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub rotation: f64,
    pub translation: [f64; 2],
    pub flip_rate: f64,
}

impl Shift {
    pub const IDENTITY: Shift = Shift {
        rotation: 0.0,
        translation: [0.0, 0.0],
        flip_rate: 0.0,
    };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (x, y) = (p[0] - self.translation[0], p[1] - self.translation[1]);
        [c * x + s * y, -s * x + c * y]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteParams {
    /// Distance of each blob centre from the origin.
    pub radius: f64,
    /// Per-coordinate standard deviation of every blob.
    pub noise_std: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Rotation of the last correlated domain; earlier ones are evenly spaced.
    pub max_correlated_rotation: f64,
    /// Translation along the first axis of the last correlated domain.
    pub max_correlated_translation: f64,
    pub anticorrelated_rotation: f64,
    /// Extra rotation of each further anticorrelated domain.
    pub anticorrelated_rotation_step: f64,
    pub flip_rate: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            radius: 2.0,
            noise_std: 0.8,
            n_train: 1000,
            n_val: 500,
            n_test: 1000,
            max_correlated_rotation: FRAC_PI_6,
            max_correlated_translation: 0.25,
            anticorrelated_rotation: PI,
            anticorrelated_rotation_step: FRAC_PI_6,
            flip_rate: 0.6,
        }
    }
}

impl SuiteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::InvalidConfig(format!("noise_std must be > 0, got {}", self.noise_std)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!("radius must be > 0, got {}", self.radius)));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test < 2 {
            return Err(Error::InvalidConfig("splits must be non-empty (test needs two rows)".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(Error::InvalidConfig(format!("flip_rate must lie in [0, 1], got {}", self.flip_rate)));
        }
        let angles = [
            self.max_correlated_rotation,
            self.max_correlated_translation,
            self.anticorrelated_rotation,
            self.anticorrelated_rotation_step,
        ];
        if !angles.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("shift parameters must be finite".into()));
        }
        Ok(())
    }

    fn centre(&self, k: usize) -> [f64; 2] {
        let angle = FRAC_PI_4 + k as f64 * FRAC_PI_2;
        [self.radius * angle.cos(), self.radius * angle.sin()]
    }
}

/// An evaluation distribution and its test rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub tag: DomainTag,
    pub shift: Shift,
    pub test: Batch,
}

/// A training domain with its splits and evaluation domains whose test rows
/// are shifted copies of the training domain's test rows, row for row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSuite {
    pub seed: u64,
    pub params: SuiteParams,
    pub train: Batch,
    pub val: Batch,
    /// The training domain's test split comes first.
    pub domains: Vec<Domain>,
}

fn sample_base(params: &SuiteParams, n: usize, rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..COMPONENTS);
        let c = params.centre(k);
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        points.push([c[0] + params.noise_std * dx, c[1] + params.noise_std * dy]);
        labels.push(k % NUM_CLASSES);
    }
    (points, labels)
}

fn to_batch(points: &[[f64; 2]], labels: Vec<usize>) -> Batch {
    let data = points.iter().flat_map(|p| p.iter().copied()).collect();
    Batch::new(Tensor::new(vec![points.len(), 2], data).expect("point rows"), labels).expect("labelled rows")
}

fn shifted_domain(
    name: String,
    tag: DomainTag,
    shift: Shift,
    points: &[[f64; 2]],
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Domain {
    let moved: Vec<[f64; 2]> = points.iter().map(|&p| shift.apply(p)).collect();
    let labels = labels
        .iter()
        .map(|&y| {
            if shift.flip_rate > 0.0 && rng.random::<f64>() < shift.flip_rate {
                let other = rng.random_range(0..NUM_CLASSES - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            }
        })
        .collect();
    Domain {
        name,
        tag,
        shift,
        test: to_batch(&moved, labels),
    }
}

/// Builds a suite deterministically from `seed`.
pub fn make_domain_suite(seed: u64, k_correlated: usize, k_anticorrelated: usize, params: &SuiteParams) -> Result<DomainSuite> {
    params.validate()?;
    if k_correlated + k_anticorrelated == 0 {
        return Err(Error::InvalidConfig("a suite needs at least one evaluation domain".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_pts, train_y) = sample_base(params, params.n_train, &mut rng);
    let (val_pts, val_y) = sample_base(params, params.n_val, &mut rng);
    let (test_pts, test_y) = sample_base(params, params.n_test, &mut rng);

    let mut domains = vec![Domain {
        name: "train".into(),
        tag: DomainTag::Train,
        shift: Shift::IDENTITY,
        test: to_batch(&test_pts, test_y.clone()),
    }];
    let mut shifts = Vec::new();
    for i in 1..=k_correlated {
        let frac = i as f64 / k_correlated as f64;
        let shift = Shift {
            rotation: params.max_correlated_rotation * frac,
            translation: [params.max_correlated_translation * frac, 0.0],
            flip_rate: 0.0,
        };
        shifts.push((format!("corr_{i}"), DomainTag::Correlated, shift));
    }
    for i in 1..=k_anticorrelated {
        let shift = Shift {
            rotation: params.anticorrelated_rotation + (i - 1) as f64 * params.anticorrelated_rotation_step,
            translation: [0.0, 0.0],
            flip_rate: params.flip_rate,
        };
        shifts.push((format!("anti_{i}"), DomainTag::Anticorrelated, shift));
    }
    for (idx, (name, tag, shift)) in shifts.into_iter().enumerate() {
        let mut flip_rng = ChaCha8Rng::seed_from_u64(seed);
        flip_rng.set_stream(idx as u64 + 1);
        domains.push(shifted_domain(name, tag, shift, &test_pts, &test_y, &mut flip_rng));
    }
    Ok(DomainSuite {
        seed,
        params: params.clone(),
        train: to_batch(&train_pts, train_y),
        val: to_batch(&val_pts, val_y),
        domains,
    })
}

impl DomainSuite {
    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.name == name)
    }

    /// Joint density `p(x, y)` of a domain with shift `shift`.
    pub fn density(&self, shift: &Shift, x: [f64; 2], y: usize) -> f64 {
        let base = shift.invert(x);
        let s2 = self.params.noise_std * self.params.noise_std;
        let class_density = |c: usize| -> f64 {
            (0..COMPONENTS)
                .filter(|k| k % NUM_CLASSES == c)
                .map(|k| {
                    let m = self.params.centre(k);
                    let d2 = (base[0] - m[0]).powi(2) + (base[1] - m[1]).powi(2);
                    (-d2 / (2.0 * s2)).exp() / (2.0 * PI * s2) / COMPONENTS as f64
                })
                .sum()
        };
        let keep = class_density(y) * (1.0 - shift.flip_rate);
        let moved: f64 = (0..NUM_CLASSES)
            .filter(|&c| c != y)
            .map(|c| class_density(c) * shift.flip_rate / (NUM_CLASSES - 1) as f64)
            .sum();
        keep + moved
    }

    /// Class with the largest joint density at `x`; ties go to the lowest.
    pub fn bayes_predict(&self, shift: &Shift, x: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_p = self.density(shift, x, 0);
        for c in 1..NUM_CLASSES {
            let p = self.density(shift, x, c);
            if p > best_p {
                best = c;
                best_p = p;
            }
        }
        best
    }
}
