//! Repeated-training sweeps over readout and data parameters.
//!
//! Every sweep keeps one train/test split fixed and varies the network
//! initialisation and readout noise seeds across repeats.

use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{self, CameraConfig};
use crate::error::{Error, Result};
use crate::ingest::{BinaryDataset, DatasetKind};
use crate::measurement::MeasurementConfig;
use crate::rng::{self, Purpose};
use crate::training::{self, EpochRecord, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Mean coincidence counts per acquisition.
    Counts,
    /// Visibility factor at fixed counts.
    Visibility,
    /// Image side length at fixed counts.
    Resolution,
    /// Photon budget, single-neuron vs. camera perceptron.
    Camera,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub classes: (u8, u8),
    pub n_train: usize,
    pub n_test: usize,
    pub neurons: usize,
    pub train: TrainConfig,
    /// Counts for the visibility and resolution sweeps.
    pub cc: f64,
    /// Visibility factor for the counts, resolution and camera sweeps.
    pub eta: f64,
    /// Background counts for every sweep but the camera one.
    pub background: f64,
    /// Background levels crossed with the budget grid in the camera sweep.
    pub camera_backgrounds: Vec<f64>,
}

impl SweepConfig {
    pub fn defaults(kind: SweepKind) -> Self {
        let (dataset, grid, repeats, n_test, epochs) = match kind {
            SweepKind::Counts => (
                DatasetKind::Fashion,
                vec![10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0],
                20,
                100,
                20,
            ),
            SweepKind::Visibility => (DatasetKind::Fashion, vec![1.0, 0.8, 0.5, 0.2], 20, 100, 20),
            SweepKind::Resolution => (DatasetKind::Mnist, vec![9.0, 16.0, 32.0, 64.0], 5, 40, 20),
            SweepKind::Camera => (
                DatasetKind::Fashion,
                vec![10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0],
                10,
                100,
                20,
            ),
        };
        SweepConfig {
            kind,
            grid,
            repeats,
            seed: 0,
            dataset,
            classes: dataset.default_classes(),
            n_train: 100,
            n_test,
            neurons: 1,
            train: TrainConfig::reference(dataset, 1, epochs),
            cc: 3000.0,
            eta: 1.0,
            background: 0.0,
            camera_backgrounds: vec![0.0, 100.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.repeats == 0 {
            return Err(Error::InvalidConfig(
                "sweep needs a nonempty grid and at least one repeat".into(),
            ));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep grid values must be finite".into()));
        }
        if self.kind == SweepKind::Resolution && self.grid.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::InvalidConfig("resolutions must be positive integers".into()));
        }
        if self.kind == SweepKind::Camera && self.camera_backgrounds.is_empty() {
            return Err(Error::InvalidConfig(
                "camera sweep needs at least one background level".into(),
            ));
        }
        self.train.validate()
    }

    /// Seed for the `repeat`-th initialisation and readout noise.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        rng::stream(self.seed, Purpose::Sweep, [repeat as u64, 0, 0, 0]).next_u64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Qon,
    Noiseless,
    Camera,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Qon => "qon",
            Model::Noiseless => "noiseless",
            Model::Camera => "camera",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub background: f64,
    pub repeat: usize,
    pub model: Model,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub background: f64,
    pub model: Model,
    pub n: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Copy)]
struct Cell {
    value: f64,
    background: f64,
    repeat: usize,
    model: Model,
}

fn last(h: &[EpochRecord]) -> Result<&EpochRecord> {
    h.last()
        .ok_or_else(|| Error::InvalidConfig("sweep runs need at least one epoch".into()))
}

/// Runs every (grid value, repeat) cell; rows come back in grid order.
pub fn run_sweep(cfg: &SweepConfig, train: &BinaryDataset, test: &BinaryDataset) -> Result<SweepResult> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let backgrounds = match cfg.kind {
        SweepKind::Camera => cfg.camera_backgrounds.clone(),
        _ => vec![cfg.background],
    };
    for &value in &cfg.grid {
        for &background in &backgrounds {
            for repeat in 0..cfg.repeats {
                let models: &[Model] = match cfg.kind {
                    SweepKind::Camera => &[Model::Qon, Model::Camera],
                    _ => &[Model::Qon],
                };
                for &model in models {
                    cells.push(Cell {
                        value,
                        background,
                        repeat,
                        model,
                    });
                }
            }
        }
    }
    if cfg.kind == SweepKind::Counts {
        for repeat in 0..cfg.repeats {
            cells.push(Cell {
                value: f64::INFINITY,
                background: 0.0,
                repeat,
                model: Model::Noiseless,
            });
        }
    }
    let resampled: Vec<(usize, BinaryDataset, BinaryDataset)> = if cfg.kind == SweepKind::Resolution {
        cfg.grid
            .iter()
            .map(|&r| {
                let r = r as usize;
                (r, train.resampled(r), test.resampled(r))
            })
            .collect()
    } else {
        Vec::new()
    };

    let rows = cells
        .par_iter()
        .map(|c| {
            let seed = cfg.repeat_seed(c.repeat);
            let mut tc = cfg.train.clone();
            tc.seed = seed;
            let meas = |cc: f64, eta: f64, bg: f64| MeasurementConfig {
                mean_signal_cc: cc,
                eta_vis: eta,
                background_rate: bg,
                seed,
            };
            let (tr, te) = match cfg.kind {
                SweepKind::Resolution => {
                    let (_, a, b) = resampled
                        .iter()
                        .find(|(r, _, _)| *r == c.value as usize)
                        .expect("resampled above");
                    (a, b)
                }
                _ => (train, test),
            };
            let history = match (cfg.kind, c.model) {
                (_, Model::Noiseless) => training::train(tr, te, cfg.neurons, &tc, None)?.1,
                (_, Model::Camera) => {
                    let cam = CameraConfig {
                        budget: c.value,
                        background_rate: c.background,
                        seed,
                    };
                    camera::perceptron_train(tr, te, &tc, Some(cam))?.1
                }
                (SweepKind::Counts, _) => {
                    training::train(tr, te, cfg.neurons, &tc, Some(meas(c.value, cfg.eta, cfg.background)))?.1
                }
                (SweepKind::Visibility, _) => {
                    training::train(tr, te, cfg.neurons, &tc, Some(meas(cfg.cc, c.value, cfg.background)))?.1
                }
                (SweepKind::Resolution, _) => {
                    training::train(tr, te, cfg.neurons, &tc, Some(meas(cfg.cc, cfg.eta, cfg.background)))?.1
                }
                (SweepKind::Camera, _) => {
                    training::train(tr, te, cfg.neurons, &tc, Some(meas(c.value, cfg.eta, c.background)))?.1
                }
            };
            let r = last(&history)?;
            Ok(SweepRow {
                value: c.value,
                background: c.background,
                repeat: c.repeat,
                model: c.model,
                train_accuracy: r.train_accuracy,
                test_accuracy: r.test_accuracy,
                train_loss: r.train_loss,
                test_loss: r.test_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { kind: cfg.kind, rows })
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl SweepResult {
    /// Mean and sample standard deviation of test accuracy per
    /// (value, background, model), in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(f64, f64, Model)> = Vec::new();
        for r in &self.rows {
            let k = (r.value, r.background, r.model);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(value, background, model)| {
                let acc: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.value == value && r.background == background && r.model == model)
                    .map(|r| r.test_accuracy)
                    .collect();
                let (mean, std) = mean_std(&acc);
                SummaryRow {
                    value,
                    background,
                    model,
                    n: acc.len(),
                    mean_test_accuracy: mean,
                    std_test_accuracy: std,
                }
            })
            .collect()
    }

    pub fn mean_accuracy(&self, value: f64, background: f64, model: Model) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.value == value && s.background == background && s.model == model)
            .map(|s| s.mean_test_accuracy)
    }

    pub fn value_label(&self) -> &'static str {
        match self.kind {
            SweepKind::Counts => "coincidence counts",
            SweepKind::Visibility => "visibility factor",
            SweepKind::Resolution => "resolution",
            SweepKind::Camera => "photon budget",
        }
    }

    /// Per-run rows. The camera sweep uses
    /// `budget,background,repeat,model,test_accuracy`; the others
    /// `sweep_value,repeat,model,train_acc,test_acc,train_loss,test_loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.kind == SweepKind::Camera {
            w.write_record(["budget", "background", "repeat", "model", "test_accuracy"])?;
            for r in &self.rows {
                w.write_record([
                    r.value.to_string(),
                    r.background.to_string(),
                    r.repeat.to_string(),
                    r.model.name().to_string(),
                    r.test_accuracy.to_string(),
                ])?;
            }
        } else {
            w.write_record([
                "sweep_value",
                "repeat",
                "model",
                "train_acc",
                "test_acc",
                "train_loss",
                "test_loss",
            ])?;
            for r in &self.rows {
                w.write_record([
                    r.value.to_string(),
                    r.repeat.to_string(),
                    r.model.name().to_string(),
                    r.train_accuracy.to_string(),
                    r.test_accuracy.to_string(),
                    r.train_loss.to_string(),
                    r.test_loss.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "sweep_value",
            "background",
            "model",
            "n",
            "mean_test_acc",
            "std_test_acc",
        ])?;
        for s in self.summary() {
            w.write_record([
                s.value.to_string(),
                s.background.to_string(),
                s.model.name().to_string(),
                s.n.to_string(),
                s.mean_test_accuracy.to_string(),
                s.std_test_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::ingest::Sample;

    fn toy(n: usize, shift: usize) -> BinaryDataset {
        BinaryDataset {
            samples: (0..n)
                .map(|i| {
                    let label = (i % 2) as u8;
                    Sample {
                        image: Grid::from_fn(8, 8, |r, c| {
                            let on = if label == 0 { r < 4 } else { r >= 4 };
                            if on {
                                1.0 + ((r + c + i + shift) % 4) as f64
                            } else {
                                0.1
                            }
                        }),
                        label,
                        source_index: i,
                    }
                })
                .collect(),
            class_names: ["top".into(), "bottom".into()],
            resolution: 8,
        }
    }

    fn small(kind: SweepKind) -> SweepConfig {
        let mut c = SweepConfig::defaults(kind);
        c.repeats = 2;
        c.train.epochs = 4;
        c.grid.truncate(2);
        c
    }

    #[test]
    fn same_seed_same_table() {
        for kind in [SweepKind::Counts, SweepKind::Camera, SweepKind::Visibility] {
            let cfg = small(kind);
            let a = run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).unwrap();
            let b = run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn counts_sweep_layout() {
        let cfg = small(SweepKind::Counts);
        let r = run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).unwrap();
        assert_eq!(r.rows.len(), 2 * 2 + 2);
        assert_eq!(r.rows.iter().filter(|r| r.model == Model::Noiseless).count(), 2);
        let s = r.summary();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|s| s.n == 2));
        assert!(r.mean_accuracy(f64::INFINITY, 0.0, Model::Noiseless).is_some());
    }

    #[test]
    fn camera_sweep_pairs_models() {
        let cfg = small(SweepKind::Camera);
        let r = run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).unwrap();
        // 2 budgets × 2 backgrounds × 2 repeats × 2 models.
        assert_eq!(r.rows.len(), 16);
        assert_eq!(r.summary().len(), 8);
    }

    #[test]
    fn resolution_sweep_resamples() {
        let mut cfg = small(SweepKind::Resolution);
        cfg.grid = vec![4.0, 8.0];
        let r = run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).unwrap();
        assert_eq!(r.rows.len(), 4);
        cfg.grid = vec![2.5];
        assert!(run_sweep(&cfg, &toy(10, 0), &toy(6, 1)).is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let mut cfg = small(SweepKind::Counts);
        cfg.grid.clear();
        assert!(run_sweep(&cfg, &toy(4, 0), &toy(2, 0)).is_err());
    }

    #[test]
    fn csv_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_sweep(&small(SweepKind::Camera), &toy(10, 0), &toy(6, 1)).unwrap();
        let p = dir.path().join("c.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("budget,background,repeat,model,test_accuracy\n"));
        assert_eq!(text.lines().count(), 17);
        let r = run_sweep(&small(SweepKind::Counts), &toy(10, 0), &toy(6, 1)).unwrap();
        r.write_summary_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sweep_value,background,model,n,mean_test_acc,std_test_acc\n"));
        assert!(text.contains("inf,0,noiseless,2,"));
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-12);
        assert_eq!(mean_std(&[0.7]).1, 0.0);
    }
}
