//! Full-batch gradient descent on binary cross-entropy.
//!
//! Visibilities come from a [`Detector`], which hides whether they are exact
//! overlaps, Poisson-noisy estimates or physically propagated fields. Per
//! neuron a detector also reports the cross term needed by the weight
//! gradient, so the optimiser itself is the same in every mode:
//!
//! ```text
//! ∂zᵢ/∂λᵢ = 2/‖λᵢ‖ · (Aᵢ − zᵢ · λᵢ/‖λᵢ‖)
//! ```
//!
//! where for the discrete model `Aᵢ = √zᵢ · x` with `√zᵢ = ⟨x, λᵢ/‖λᵢ‖⟩`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ingest::{BinaryDataset, DatasetKind};
use crate::measurement::{MeasurementConfig, Readout};
use crate::model::{self, sigmoid_bg, ActivationShape, NetworkParams};
use crate::profiles::{self, AmplitudeProfile};
use crate::rng::{self, Purpose};

/// Probability clamp applied before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Learning-rate multipliers in force from `epoch` (0-based) onward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub epoch: usize,
    pub lambda: f64,
    pub bias: f64,
    pub mix: f64,
}

impl LrStep {
    pub fn all(epoch: usize, multiplier: f64) -> Self {
        LrStep {
            epoch,
            lambda: multiplier,
            bias: multiplier,
            mix: multiplier,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_lambda: f64,
    pub lr_b: f64,
    /// Mixture-weight rate; unused with a single neuron.
    pub lr_w: f64,
    pub lr_schedule: Vec<LrStep>,
    pub shape: ActivationShape,
    pub seed: u64,
    pub init_low: f64,
    pub init_high: f64,
}

/// Learning rates for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub lambda: f64,
    pub bias: f64,
    pub mix: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr_lambda > 0.0 && self.lr_b > 0.0 && self.lr_w >= 0.0) {
            return bad(format!(
                "learning rates must be positive (lambda={}, b={}, w={})",
                self.lr_lambda, self.lr_b, self.lr_w
            ));
        }
        if self.init_low.is_nan() || self.init_high.is_nan() || self.init_low >= self.init_high {
            return bad(format!("init range [{}, {}) is empty", self.init_low, self.init_high));
        }
        ActivationShape::new(self.shape.beta, self.shape.gamma)?;
        Ok(())
    }

    pub fn rates_at(&self, epoch: usize) -> Rates {
        let step = self
            .lr_schedule
            .iter()
            .filter(|s| s.epoch <= epoch)
            .max_by_key(|s| s.epoch)
            .copied()
            .unwrap_or(LrStep::all(0, 1.0));
        Rates {
            lambda: self.lr_lambda * step.lambda,
            bias: self.lr_b * step.bias,
            mix: self.lr_w * step.mix,
        }
    }

    /// Reference hyperparameters for `neurons` ∈ {1, 2} on `kind`, with the
    /// rate drop moved to the midpoint of `epochs`.
    pub fn reference(kind: DatasetKind, neurons: usize, epochs: usize) -> Self {
        let mid = epochs / 2;
        let (lr_lambda, lr_b, lr_w, shape, schedule) = match (kind, neurons) {
            (_, 1) => (
                0.075,
                0.015,
                0.0,
                ActivationShape { beta: 11.0, gamma: 5.5 },
                LrStep {
                    epoch: mid,
                    lambda: 1.0,
                    bias: 1.0 / 3.0,
                    mix: 1.0,
                },
            ),
            (DatasetKind::Mnist, _) => (0.3, 0.6, 1.8, ActivationShape::PLAIN, LrStep::all(mid, 0.5)),
            (DatasetKind::Fashion, _) => (2.1, 4.2, 12.6, ActivationShape::PLAIN, LrStep::all(mid, 0.5)),
        };
        TrainConfig {
            epochs,
            lr_lambda,
            lr_b,
            lr_w,
            lr_schedule: vec![schedule],
            shape,
            seed: 0,
            init_low: 0.0,
            init_high: 1.0,
        }
    }
}

/// A named reference configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub dataset: DatasetKind,
    pub neurons: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub config: TrainConfig,
}

pub const PRESET_NAMES: [&str; 4] = [
    "table1-qon-mnist",
    "table1-qosn-mnist",
    "table1-qon-fashion",
    "table1-qosn-fashion",
];

impl Preset {
    pub fn by_name(name: &str) -> Option<Preset> {
        let (dataset, neurons) = match name {
            "table1-qon-mnist" => (DatasetKind::Mnist, 1),
            "table1-qosn-mnist" => (DatasetKind::Mnist, 2),
            "table1-qon-fashion" => (DatasetKind::Fashion, 1),
            "table1-qosn-fashion" => (DatasetKind::Fashion, 2),
            _ => return None,
        };
        let epochs = match dataset {
            DatasetKind::Mnist => 20,
            DatasetKind::Fashion => 30,
        };
        Some(Preset {
            name: name.to_string(),
            dataset,
            neurons,
            n_train: 100,
            n_test: 40,
            config: TrainConfig::reference(dataset, neurons, epochs),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Number of completed epochs (1-based).
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub mean_visibility_class0: f64,
    pub mean_visibility_class1: f64,
}

/// Uniform weights rescaled to unit norm, equal mixture weights, zero bias.
pub fn init_params(resolution: usize, neurons: usize, cfg: &TrainConfig) -> Result<NetworkParams> {
    if resolution == 0 || neurons == 0 {
        return Err(Error::InvalidConfig(format!(
            "need resolution >= 1 and neurons >= 1, got {resolution} and {neurons}"
        )));
    }
    let lambdas = (0..neurons)
        .map(|i| {
            let mut r = rng::stream(cfg.seed, Purpose::Init, [0, i as u64, 0, 0]);
            let g = Grid::from_fn(resolution, resolution, |_, _| {
                r.random_range(cfg.init_low..cfg.init_high)
            });
            Ok(profiles::normalize(&g)?.into_grid())
        })
        .collect::<Result<Vec<_>>>()?;
    let w = vec![1.0 / neurons as f64; neurons];
    Ok(NetworkParams { lambdas, w, b: 0.0 })
}

pub fn bce(y: u8, p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `∂zᵢ/∂λᵢ` for the discrete model.
pub fn grad_lambda(x: &AmplitudeProfile, p: &NetworkParams, i: usize) -> Result<Grid> {
    let lambda = &p.lambdas[i];
    let norm = lambda.norm();
    if norm == 0.0 {
        return Err(Error::ZeroProfile);
    }
    let s = x.amp().dot(lambda)? / norm;
    grad_from_cross(&x.amp().scale(s), s * s, lambda)
}

/// `2/‖λ‖ · (cross − z · λ/‖λ‖)`.
pub fn grad_from_cross(cross: &Grid, z: f64, lambda: &Grid) -> Result<Grid> {
    cross.check_shape(lambda)?;
    let norm = lambda.norm();
    if norm == 0.0 {
        return Err(Error::ZeroProfile);
    }
    let k = 2.0 / norm;
    Ok(Grid::from_vec(
        lambda.rows(),
        lambda.cols(),
        cross
            .as_slice()
            .iter()
            .zip(lambda.as_slice())
            .map(|(a, l)| k * (a - z * l / norm))
            .collect(),
    )
    .expect("same shape"))
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Why a detector is being asked: to drive an update or to report metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pass {
    Update,
    Report,
}

impl Pass {
    pub fn code(self, split: Split) -> u64 {
        match (self, split) {
            (Pass::Update, Split::Train) => 0,
            (Pass::Report, Split::Train) => 1,
            (Pass::Update, Split::Test) => 2,
            (Pass::Report, Split::Test) => 3,
        }
    }
}

/// What one sample looks like through the detector.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Per-neuron visibility estimates.
    pub z: Vec<f64>,
    /// Per-neuron gradient cross terms; empty when not requested.
    pub cross: Vec<Grid>,
}

/// Source of visibilities for the training loop.
pub trait Detector: Sync {
    /// Called once before each pass with the parameters about to be probed.
    fn prepare(&mut self, _params: &NetworkParams, _epoch: usize, _pass: Pass) -> Result<()> {
        Ok(())
    }

    fn observe(
        &self,
        split: Split,
        index: usize,
        params: &NetworkParams,
        epoch: usize,
        pass: Pass,
        with_gradient: bool,
    ) -> Result<Observation>;
}

/// Discrete amplitude arrays read out exactly or by photon counting.
pub struct ArrayDetector {
    pub train: Vec<AmplitudeProfile>,
    pub test: Vec<AmplitudeProfile>,
    pub readout: Readout,
}

impl ArrayDetector {
    pub fn new(train: &BinaryDataset, test: &BinaryDataset, readout: Readout) -> Result<Self> {
        Ok(ArrayDetector {
            train: encode_all(train)?,
            test: encode_all(test)?,
            readout,
        })
    }
}

pub fn encode_all(ds: &BinaryDataset) -> Result<Vec<AmplitudeProfile>> {
    ds.samples.iter().map(|s| profiles::normalize(&s.image)).collect()
}

impl Detector for ArrayDetector {
    fn observe(
        &self,
        split: Split,
        index: usize,
        params: &NetworkParams,
        epoch: usize,
        pass: Pass,
        with_gradient: bool,
    ) -> Result<Observation> {
        let x = match split {
            Split::Train => &self.train[index],
            Split::Test => &self.test[index],
        };
        let amps = model::neuron_amplitudes(x, params)?;
        let exact: Vec<f64> = amps.iter().map(|s| s * s).collect();
        let seed = match self.readout {
            Readout::Counting(c) => c.seed,
            Readout::Exact => 0,
        };
        let z = self.readout.estimate(&exact, |i| {
            rng::stream(
                seed,
                Purpose::Counts,
                [epoch as u64, pass.code(split), index as u64, i as u64],
            )
        })?;
        let cross = if with_gradient {
            amps.iter()
                .zip(&z)
                .map(|(&s, &zi)| {
                    let root = match self.readout {
                        Readout::Exact => s,
                        Readout::Counting(_) => zi.sqrt().copysign(s),
                    };
                    x.amp().scale(root)
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Observation { z, cross })
    }
}

/// One full-batch update from per-sample observations (with gradients).
pub fn grad_step(
    labels: &[u8],
    observations: &[Observation],
    params: &NetworkParams,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<NetworkParams> {
    if labels.len() != observations.len() || labels.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} labels for {} observations",
            labels.len(),
            observations.len()
        )));
    }
    let rates = cfg.rates_at(epoch);
    let n = labels.len() as f64;
    let m = params.neurons();
    let beta = cfg.shape.beta;

    let mut lambda_grads: Vec<Grid> = params.lambdas.iter().map(|l| Grid::zeros(l.rows(), l.cols())).collect();
    let mut bias_grad = 0.0;
    let mut mix_grad = vec![0.0; m];
    for (&y, obs) in labels.iter().zip(observations) {
        let prob = sigmoid_bg(model::mix(&params.w, &obs.z) + params.b, cfg.shape);
        let g = beta * (prob - f64::from(y));
        bias_grad += g;
        for i in 0..m {
            mix_grad[i] += g * obs.z[i];
            let dz = grad_from_cross(&obs.cross[i], obs.z[i], &params.lambdas[i])?;
            let scale = g * params.w[i];
            for (acc, d) in lambda_grads[i].as_mut_slice().iter_mut().zip(dz.as_slice()) {
                *acc += scale * d;
            }
        }
    }
    let lambdas = params
        .lambdas
        .iter()
        .zip(&lambda_grads)
        .map(|(l, g)| {
            Grid::from_vec(
                l.rows(),
                l.cols(),
                l.as_slice()
                    .iter()
                    .zip(g.as_slice())
                    .map(|(v, d)| v - rates.lambda * d / n)
                    .collect(),
            )
            .expect("same shape")
        })
        .collect();
    let w = if m == 1 {
        params.w.clone()
    } else {
        let stepped: Vec<f64> = params
            .w
            .iter()
            .zip(&mix_grad)
            .map(|(w, d)| w - rates.mix * d / n)
            .collect();
        project_simplex(&stepped)
    };
    Ok(NetworkParams {
        lambdas,
        w,
        b: params.b - rates.bias * bias_grad / n,
    })
}

/// Mean loss, accuracy and per-class mean visibility of a set of observations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    pub mean_visibility: [f64; 2],
}

pub fn metrics(labels: &[u8], obs: &[Observation], params: &NetworkParams, shape: ActivationShape) -> Metrics {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut vis = [0.0; 2];
    let mut count = [0usize; 2];
    for (&y, o) in labels.iter().zip(obs) {
        let z = model::mix(&params.w, &o.z);
        let prob = sigmoid_bg(z + params.b, shape);
        loss += bce(y, prob);
        correct += usize::from(model::predict(prob) == y);
        vis[y as usize] += z;
        count[y as usize] += 1;
    }
    let n = labels.len().max(1) as f64;
    let mean = |k: usize| {
        if count[k] > 0 {
            vis[k] / count[k] as f64
        } else {
            f64::NAN
        }
    };
    Metrics {
        loss: loss / n,
        accuracy: correct as f64 / n,
        mean_visibility: [mean(0), mean(1)],
    }
}

fn observe_all<D: Detector + ?Sized>(
    det: &D,
    split: Split,
    len: usize,
    params: &NetworkParams,
    epoch: usize,
    pass: Pass,
    with_gradient: bool,
) -> Result<Vec<Observation>> {
    (0..len)
        .into_par_iter()
        .map(|i| det.observe(split, i, params, epoch, pass, with_gradient))
        .collect()
}

/// Runs `cfg.epochs` epochs starting from `params`.
pub fn train_with<D: Detector + ?Sized>(
    det: &mut D,
    train_labels: &[u8],
    test_labels: &[u8],
    mut params: NetworkParams,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_labels.is_empty() || test_labels.is_empty() {
        return Err(Error::InvalidConfig("empty train or test set".into()));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        det.prepare(&params, epoch, Pass::Update)?;
        let obs = observe_all(
            det,
            Split::Train,
            train_labels.len(),
            &params,
            epoch,
            Pass::Update,
            true,
        )?;
        params = grad_step(train_labels, &obs, &params, cfg, epoch)?;

        det.prepare(&params, epoch, Pass::Report)?;
        let tr = observe_all(
            det,
            Split::Train,
            train_labels.len(),
            &params,
            epoch,
            Pass::Report,
            false,
        )?;
        let te = observe_all(det, Split::Test, test_labels.len(), &params, epoch, Pass::Report, false)?;
        let mtr = metrics(train_labels, &tr, &params, cfg.shape);
        let mte = metrics(test_labels, &te, &params, cfg.shape);
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: mtr.loss,
            train_accuracy: mtr.accuracy,
            test_loss: mte.loss,
            test_accuracy: mte.accuracy,
            mean_visibility_class0: mtr.mean_visibility[0],
            mean_visibility_class1: mtr.mean_visibility[1],
        });
    }
    Ok((params, history))
}

/// Initialises and trains an `neurons`-neuron network on discrete arrays,
/// noiselessly or through photon counting when `meas` is given.
pub fn train(
    train: &BinaryDataset,
    test: &BinaryDataset,
    neurons: usize,
    cfg: &TrainConfig,
    meas: Option<MeasurementConfig>,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig("empty train or test set".into()));
    }
    if train.resolution != test.resolution {
        return Err(Error::ShapeMismatch {
            left: (train.resolution, train.resolution),
            right: (test.resolution, test.resolution),
        });
    }
    if let Some(m) = &meas {
        m.validate()?;
    }
    let params = init_params(train.resolution, neurons, cfg)?;
    let mut det = ArrayDetector::new(train, test, Readout::from_option(meas))?;
    let tl: Vec<u8> = train.labels().collect();
    let el: Vec<u8> = test.labels().collect();
    train_with(&mut det, &tl, &el, params, cfg)
}

/// One row per epoch with a header matching the [`EpochRecord`] fields.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if history.is_empty() {
        w.write_record([
            "epoch",
            "train_loss",
            "train_accuracy",
            "test_loss",
            "test_accuracy",
            "mean_visibility_class0",
            "mean_visibility_class1",
        ])?;
    }
    for r in history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Counts indexed `[true][predicted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.counts[0][0] + self.counts[1][1]) as f64 / self.total().max(1) as f64
    }
}

pub fn confusion_matrix(test: &BinaryDataset, params: &NetworkParams, shape: ActivationShape) -> Result<Confusion> {
    if test.is_empty() {
        return Err(Error::InvalidConfig("empty test set".into()));
    }
    let mut c = Confusion::default();
    for s in &test.samples {
        let x = profiles::normalize(&s.image)?;
        let pred = model::predict(model::forward(&x, params, shape)?);
        c.counts[s.label as usize][pred as usize] += 1;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Sample;
    use rand::Rng;

    fn random_grid(r: &mut impl Rng, n: usize, lo: f64) -> Grid {
        Grid::from_fn(n, n, |_, _| r.random_range(lo..1.0))
    }

    /// Central differences of `zᵢ(λ)` with step `h`, independent of the
    /// analytic gradient.
    fn fd_grad(x: &AmplitudeProfile, lambda: &Grid, h: f64) -> Grid {
        let z = |l: &Grid| {
            let s = x.amp().dot(l).unwrap() / l.norm();
            s * s
        };
        let mut out = Grid::zeros(lambda.rows(), lambda.cols());
        for k in 0..lambda.len() {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up.as_mut_slice()[k] += h;
            dn.as_mut_slice()[k] -= h;
            out.as_mut_slice()[k] = (z(&up) - z(&dn)) / (2.0 * h);
        }
        out
    }

    fn rel_err(a: &Grid, b: &Grid) -> f64 {
        let diff: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        diff / b.norm().max(1e-300)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut r = rng::stream(42, Purpose::Sweep, [0; 4]);
        for n in 1..=8 {
            for _ in 0..4 {
                let x = profiles::normalize(&random_grid(&mut r, n, 0.0)).unwrap();
                let l = random_grid(&mut r, n, -0.5);
                let p = NetworkParams::single(l.clone(), 0.0);
                let g = grad_lambda(&x, &p, 0).unwrap();
                let fd = fd_grad(&x, &l, 1e-6);
                if n > 1 {
                    assert!(rel_err(&g, &fd) < 1e-6, "n={n} err={}", rel_err(&g, &fd));
                }
            }
        }
    }

    #[test]
    fn aligned_probe_is_stationary() {
        let g = Grid::from_fn(3, 3, |r, c| (r + c) as f64 + 1.0);
        let x = profiles::normalize(&g).unwrap();
        let p = NetworkParams::single(g.scale(4.0), 0.0);
        let d = grad_lambda(&x, &p, 0).unwrap();
        assert!(d.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn orthogonal_probe_has_zero_gradient() {
        let x = profiles::normalize(&Grid::from_fn(2, 2, |r, _| (r == 0) as u8 as f64)).unwrap();
        let p = NetworkParams::single(Grid::from_fn(2, 2, |r, _| (r == 1) as u8 as f64), 0.0);
        let d = grad_lambda(&x, &p, 0).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let w = project_simplex(&[0.9, 0.6]);
        assert!((w[0] - 0.65).abs() < 1e-12 && (w[1] - 0.35).abs() < 1e-12);
        let w = project_simplex(&[-3.0, 0.2, 0.4]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn bce_values() {
        assert!((bce(1, 0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0, 0.9) - std::f64::consts::LN_10).abs() < 1e-9);
        assert!(bce(1, 1.0 - 1e-15) < 1e-11);
        assert!(bce(1, 0.0).is_finite());
    }

    #[test]
    fn schedule_applies_from_its_epoch() {
        let mut cfg = TrainConfig::reference(DatasetKind::Mnist, 2, 20);
        cfg.lr_schedule = vec![LrStep::all(10, 0.5)];
        assert_eq!(cfg.rates_at(9).lambda, 0.3);
        assert_eq!(cfg.rates_at(10).lambda, 0.15);
        assert_eq!(cfg.rates_at(19).bias, 0.3);
        assert_eq!(cfg.rates_at(19).mix, 0.9);
        let qon = TrainConfig::reference(DatasetKind::Mnist, 1, 20);
        assert_eq!(qon.rates_at(10).lambda, 0.075);
        assert!((qon.rates_at(10).bias - 0.005).abs() < 1e-15);
        let fash = TrainConfig::reference(DatasetKind::Fashion, 2, 30);
        assert_eq!(fash.rates_at(14).mix, 12.6);
        assert_eq!(fash.rates_at(15).mix, 6.3);
    }

    #[test]
    fn init_is_seeded_uniform_and_unbiased() {
        let cfg = TrainConfig::reference(DatasetKind::Mnist, 1, 20);
        let p = init_params(8, 1, &cfg).unwrap();
        assert_eq!(p.b, 0.0);
        assert_eq!(p.w, vec![1.0]);
        assert!(p.lambdas[0].as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!((p.lambdas[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(p, init_params(8, 1, &cfg).unwrap());
        let q = init_params(8, 2, &cfg).unwrap();
        assert_eq!(q.w, vec![0.5, 0.5]);
        q.validate().unwrap();
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(p, init_params(8, 1, &other).unwrap());
    }

    fn toy(images: Vec<Grid>, labels: Vec<u8>) -> BinaryDataset {
        BinaryDataset {
            resolution: images[0].rows(),
            samples: images
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (image, label))| Sample {
                    image,
                    label,
                    source_index: i,
                })
                .collect(),
            class_names: ["a".into(), "b".into()],
        }
    }

    #[test]
    fn fixed_point_leaves_params_unchanged() {
        // A saturated bias makes p == y exactly, so every update term vanishes.
        let g = Grid::from_fn(2, 2, |r, c| (r + 2 * c) as f64 + 1.0);
        let ds = toy(vec![g.clone()], vec![1]);
        let obs = vec![ArrayDetector::new(&ds, &ds, Readout::Exact)
            .unwrap()
            .observe(
                Split::Train,
                0,
                &NetworkParams::single(g.clone(), 0.0),
                0,
                Pass::Update,
                true,
            )
            .unwrap()];
        let p = NetworkParams::single(g.clone(), 1e3);
        let cfg = TrainConfig::reference(DatasetKind::Mnist, 1, 20);
        let q = grad_step(&[1], &obs, &p, &cfg, 0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn single_sample_step_matches_hand_computation() {
        // 2×2 grid, one sample with label 0.
        let x_raw = Grid::from_vec(2, 2, vec![1.0, 2.0, 0.0, 2.0]).unwrap(); // ‖·‖ = 3
        let lambda = Grid::from_vec(2, 2, vec![0.0, 3.0, 4.0, 0.0]).unwrap(); // ‖·‖ = 5
        let ds = toy(vec![x_raw], vec![0]);
        let p = NetworkParams::single(lambda, 0.1);
        let mut cfg = TrainConfig::reference(DatasetKind::Mnist, 1, 20);
        cfg.lr_lambda = 0.5;
        cfg.lr_b = 0.25;
        cfg.shape = ActivationShape::new(2.0, 1.0).unwrap();
        let det = ArrayDetector::new(&ds, &ds, Readout::Exact).unwrap();
        let obs = vec![det.observe(Split::Train, 0, &p, 0, Pass::Update, true).unwrap()];
        let q = grad_step(&[0], &obs, &p, &cfg, 0).unwrap();

        // x = (1, 2, 0, 2)/3, λ̂ = (0, 3, 4, 0)/5, s = ⟨x, λ̂⟩ = 6/15 = 0.4, z = 0.16
        let s = 0.4;
        let z = s * s;
        let prob = 1.0 / (1.0 + (-2.0 * (z + 0.1) + 1.0f64).exp());
        let g = 2.0 * (prob - 0.0);
        let x = [1.0 / 3.0, 2.0 / 3.0, 0.0, 2.0 / 3.0];
        let lh = [0.0, 0.6, 0.8, 0.0];
        let lam = [0.0, 3.0, 4.0, 0.0];
        for k in 0..4 {
            let dz = 2.0 * s / 5.0 * (x[k] - s * lh[k]);
            let expect = lam[k] - 0.5 * g * dz;
            assert!((q.lambdas[0].as_slice()[k] - expect).abs() < 1e-12);
        }
        assert!((q.b - (0.1 - 0.25 * g)).abs() < 1e-12);
    }

    /// Mean loss of a two-neuron network over a toy batch.
    fn batch_loss(p: &NetworkParams, xs: &[AmplitudeProfile], ys: &[u8], shape: ActivationShape) -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| bce(y, model::forward(x, p, shape).unwrap()))
            .sum::<f64>()
            / xs.len() as f64
    }

    #[test]
    fn update_follows_the_loss_gradient() {
        let mut r = rng::stream(11, Purpose::Sweep, [2, 0, 0, 0]);
        let images: Vec<Grid> = (0..5).map(|_| random_grid(&mut r, 3, 0.0)).collect();
        let ys = vec![0, 1, 1, 0, 1];
        let ds = toy(images, ys.clone());
        let xs = encode_all(&ds).unwrap();
        let shape = ActivationShape::new(1.5, 0.3).unwrap();
        let p = NetworkParams {
            lambdas: vec![random_grid(&mut r, 3, -0.2), random_grid(&mut r, 3, 0.0)],
            w: vec![0.4, 0.6],
            b: 0.1,
        };
        let eta = 1e-7;
        let mut cfg = TrainConfig::reference(DatasetKind::Fashion, 2, 30);
        cfg.shape = shape;
        cfg.lr_lambda = eta;
        cfg.lr_b = eta;
        cfg.lr_w = eta;
        let det = ArrayDetector::new(&ds, &ds, Readout::Exact).unwrap();
        let obs: Vec<_> = (0..5)
            .map(|i| det.observe(Split::Train, i, &p, 0, Pass::Update, true).unwrap())
            .collect();
        let q = grad_step(&ys, &obs, &p, &cfg, 0).unwrap();

        let h = 1e-6;
        let fd = |f: &dyn Fn(&mut NetworkParams, f64)| {
            let mut up = p.clone();
            let mut dn = p.clone();
            f(&mut up, h);
            f(&mut dn, -h);
            (batch_loss(&up, &xs, &ys, shape) - batch_loss(&dn, &xs, &ys, shape)) / (2.0 * h)
        };
        for i in 0..2 {
            for k in 0..9 {
                let g = fd(&|p: &mut NetworkParams, d| p.lambdas[i].as_mut_slice()[k] += d);
                let step = (p.lambdas[i].as_slice()[k] - q.lambdas[i].as_slice()[k]) / eta;
                assert!((g - step).abs() < 1e-6 * g.abs().max(1e-3), "λ{i}[{k}]: {g} vs {step}");
            }
        }
        let gb = fd(&|p: &mut NetworkParams, d| p.b += d);
        assert!((gb - (p.b - q.b) / eta).abs() < 1e-6);
        // Projection of a small step removes the gradient's mean component.
        let gw: Vec<f64> = (0..2).map(|i| fd(&|p: &mut NetworkParams, d| p.w[i] += d)).collect();
        let mean = (gw[0] + gw[1]) / 2.0;
        for (i, g) in gw.iter().enumerate() {
            let step = (p.w[i] - q.w[i]) / eta;
            assert!((g - mean - step).abs() < 1e-4, "w{i}: {} vs {step}", g - mean);
        }
    }

    #[test]
    fn mixture_weights_stay_on_simplex() {
        let mut r = rng::stream(9, Purpose::Sweep, [1, 0, 0, 0]);
        let images: Vec<Grid> = (0..6).map(|_| random_grid(&mut r, 4, 0.0)).collect();
        let labels = vec![0, 1, 0, 1, 1, 0];
        let ds = toy(images, labels.clone());
        let cfg = TrainConfig::reference(DatasetKind::Fashion, 2, 30);
        let mut p = init_params(4, 2, &cfg).unwrap();
        let det = ArrayDetector::new(&ds, &ds, Readout::Exact).unwrap();
        for e in 0..30 {
            let obs: Vec<_> = (0..6)
                .map(|i| det.observe(Split::Train, i, &p, e, Pass::Update, true).unwrap())
                .collect();
            p = grad_step(&labels, &obs, &p, &cfg, e).unwrap();
            assert!((p.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.w.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn loss_decreases_on_separable_pair() {
        let a = Grid::from_vec(2, 2, vec![1.0, 0.2, 0.1, 0.0]).unwrap();
        let b = Grid::from_vec(2, 2, vec![0.0, 0.1, 0.3, 1.0]).unwrap();
        let ds = toy(vec![a, b], vec![0, 1]);
        let mut cfg = TrainConfig::reference(DatasetKind::Mnist, 1, 40);
        cfg.lr_lambda = 0.01;
        cfg.lr_b = 0.01;
        cfg.lr_schedule.clear();
        let (_, hist) = train(&ds, &ds, 1, &cfg, None).unwrap();
        for w in hist.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss + 1e-15);
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let ds = toy(vec![Grid::filled(3, 3, 1.0), Grid::filled(3, 3, 2.0)], vec![0, 1]);
        let mut cfg = TrainConfig::reference(DatasetKind::Mnist, 1, 20);
        cfg.epochs = 0;
        let (p, h) = train(&ds, &ds, 1, &cfg, None).unwrap();
        assert!(h.is_empty());
        assert_eq!(p, init_params(3, 1, &cfg).unwrap());
    }

    #[test]
    fn confusion_counts() {
        let a = Grid::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Grid::from_vec(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let ds = toy(vec![a.clone(), b.clone(), a, b.clone()], vec![0, 1, 0, 1]);
        let shape = ActivationShape::new(11.0, 5.5).unwrap();
        // Probe on class 1: z = 1 for b, 0 for a; decision at z + b = 0.5.
        let good = NetworkParams::single(b.clone(), 0.0);
        let c = confusion_matrix(&ds, &good, shape).unwrap();
        assert_eq!(c.counts, [[2, 0], [0, 2]]);
        assert_eq!(c.total(), 4);
        let flipped = NetworkParams::single(Grid::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let c = confusion_matrix(&ds, &flipped, shape).unwrap();
        assert_eq!(c.counts[0][0] + c.counts[1][1], 0);
    }
}
