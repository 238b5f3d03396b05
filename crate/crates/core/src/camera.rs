//! Pixel-resolved photon counting feeding a classical perceptron.
//!
//! Each pixel counts Poisson photons in proportion to the squared image
//! amplitude, plus a uniform share of the background. The perceptron sees
//! `normalize(√counts)`, so with unlimited photons its input is exactly the
//! amplitude-encoded image.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ingest::BinaryDataset;
use crate::measurement::{poisson, MAX_REFERENCE_REDRAWS};
use crate::model::{predict, sigmoid_bg};
use crate::profiles::{self, AmplitudeProfile};
use crate::rng::{self, Purpose};
use crate::training::{self, bce, EpochRecord, Pass, Split, TrainConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CameraFrame {
    pub counts: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Expected signal photons per frame.
    pub budget: f64,
    /// Expected background photons per frame, spread evenly over pixels.
    pub background_rate: f64,
    pub seed: u64,
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "budget must be positive, got {}",
                self.budget
            )));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "background must be non-negative, got {}",
                self.background_rate
            )));
        }
        Ok(())
    }
}

pub fn acquire_frame<R: Rng + ?Sized>(
    x: &AmplitudeProfile,
    budget: f64,
    background_rate: f64,
    rng: &mut R,
) -> Result<CameraFrame> {
    CameraConfig {
        budget,
        background_rate,
        seed: 0,
    }
    .validate()?;
    let (rows, cols) = x.resolution();
    let per_pixel = background_rate / (rows * cols) as f64;
    let counts = x
        .amp()
        .as_slice()
        .iter()
        .map(|a| poisson(budget * a * a + per_pixel, rng))
        .collect();
    Ok(CameraFrame { counts, rows, cols })
}

impl CameraFrame {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `normalize(√counts)`.
    pub fn features(&self) -> Result<AmplitudeProfile> {
        if self.total() == 0 {
            return Err(Error::AcquisitionEmpty);
        }
        let g = Grid::from_vec(
            self.rows,
            self.cols,
            self.counts.iter().map(|&c| (c as f64).sqrt()).collect(),
        )?;
        profiles::normalize(&g)
    }
}

/// Features of the first frame that recorded any photon, giving up with
/// [`Error::AcquisitionEmpty`] after a bounded number of dark frames.
pub fn acquire_features<R: Rng + ?Sized>(
    x: &AmplitudeProfile,
    cam: &CameraConfig,
    rng: &mut R,
) -> Result<AmplitudeProfile> {
    for _ in 0..MAX_REFERENCE_REDRAWS {
        match acquire_frame(x, cam.budget, cam.background_rate, rng)?.features() {
            Err(Error::AcquisitionEmpty) => continue,
            other => return other,
        }
    }
    Err(Error::AcquisitionEmpty)
}

/// Free linear weights and a bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perceptron {
    pub weights: Grid,
    pub b: f64,
}

impl Perceptron {
    /// Same draw as a single-neuron network with the same config.
    pub fn init(resolution: usize, cfg: &TrainConfig) -> Result<Self> {
        let p = training::init_params(resolution, 1, cfg)?;
        Ok(Perceptron {
            weights: p.lambdas.into_iter().next().expect("one neuron"),
            b: p.b,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn activation(&self, f: &AmplitudeProfile) -> Result<f64> {
        f.amp().dot(&self.weights)
    }
}

fn features(
    encoded: &[AmplitudeProfile],
    cam: Option<&CameraConfig>,
    split: Split,
    epoch: usize,
    pass: Pass,
) -> Result<Vec<AmplitudeProfile>> {
    match cam {
        None => Ok(encoded.to_vec()),
        Some(c) => encoded
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut r = rng::stream(c.seed, Purpose::Camera, [epoch as u64, pass.code(split), i as u64, 0]);
                acquire_features(x, c, &mut r)
            })
            .collect(),
    }
}

fn evaluate(
    p: &Perceptron,
    feats: &[AmplitudeProfile],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<(f64, f64, [f64; 2])> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut act = [0.0; 2];
    let mut count = [0usize; 2];
    for (f, &y) in feats.iter().zip(labels) {
        let t = p.activation(f)?;
        let prob = sigmoid_bg(t + p.b, cfg.shape);
        loss += bce(y, prob);
        correct += usize::from(predict(prob) == y);
        act[y as usize] += t;
        count[y as usize] += 1;
    }
    let n = labels.len() as f64;
    let mean = |k: usize| {
        if count[k] > 0 {
            act[k] / count[k] as f64
        } else {
            f64::NAN
        }
    };
    Ok((loss / n, correct as f64 / n, [mean(0), mean(1)]))
}

/// Full-batch logistic regression on camera frames, re-acquired every pass.
/// `cam = None` trains on the noiseless amplitudes. The recorded "visibility"
/// columns hold the mean linear activation per class.
pub fn perceptron_train(
    train: &BinaryDataset,
    test: &BinaryDataset,
    cfg: &TrainConfig,
    cam: Option<CameraConfig>,
) -> Result<(Perceptron, Vec<EpochRecord>)> {
    cfg.validate()?;
    if let Some(c) = &cam {
        c.validate()?;
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig("empty train or test set".into()));
    }
    let enc_train = training::encode_all(train)?;
    let enc_test = training::encode_all(test)?;
    let tl: Vec<u8> = train.labels().collect();
    let el: Vec<u8> = test.labels().collect();
    let mut p = Perceptron::init(train.resolution, cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let beta = cfg.shape.beta;
    for epoch in 0..cfg.epochs {
        let rates = cfg.rates_at(epoch);
        let feats = features(&enc_train, cam.as_ref(), Split::Train, epoch, Pass::Update)?;
        let mut grad = Grid::zeros(p.weights.rows(), p.weights.cols());
        let mut gb = 0.0;
        for (f, &y) in feats.iter().zip(&tl) {
            let prob = sigmoid_bg(p.activation(f)? + p.b, cfg.shape);
            let g = beta * (prob - f64::from(y));
            gb += g;
            for (acc, v) in grad.as_mut_slice().iter_mut().zip(f.amp().as_slice()) {
                *acc += g * v;
            }
        }
        let n = tl.len() as f64;
        for (w, d) in p.weights.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= rates.lambda * d / n;
        }
        p.b -= rates.bias * gb / n;

        let report_train = features(&enc_train, cam.as_ref(), Split::Train, epoch, Pass::Report)?;
        let report_test = features(&enc_test, cam.as_ref(), Split::Test, epoch, Pass::Report)?;
        let (train_loss, train_accuracy, act) = evaluate(&p, &report_train, &tl, cfg)?;
        let (test_loss, test_accuracy, _) = evaluate(&p, &report_test, &el, cfg)?;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
            mean_visibility_class0: act[0],
            mean_visibility_class1: act[1],
        });
    }
    Ok((p, history))
}
