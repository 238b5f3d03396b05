//! IDX dataset parsing and binary-task assembly.
//!
//! IDX layout (big-endian): a `u32` magic (`0x00000803` for images,
//! `0x00000801` for labels), then one `u32` per dimension, then the row-major
//! `u8` payload. Files ending in `.gz` are decompressed transparently.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{self, Purpose};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const PADDED_SIDE: usize = 32;
pub const DEFAULT_BORDER: usize = 2;

const FASHION_NAMES: [&str; 10] = [
    "t-shirt",
    "trouser",
    "pullover",
    "dress",
    "coat",
    "sandal",
    "shirt",
    "sneaker",
    "bag",
    "ankle-boot",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fashion,
}

impl DatasetKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
        }
    }

    /// Classes used by the reference experiments: digits 0/1, sneaker/bag.
    pub fn default_classes(self) -> (u8, u8) {
        match self {
            DatasetKind::Mnist => (0, 1),
            DatasetKind::Fashion => (7, 8),
        }
    }

    pub fn class_name(self, class: u8) -> String {
        match self {
            DatasetKind::Mnist => class.to_string(),
            DatasetKind::Fashion => FASHION_NAMES
                .get(class as usize)
                .map(|s| s.to_string())
                .unwrap_or_else(|| class.to_string()),
        }
    }
}

/// Parsed IDX pair with pixel values kept as reals in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub images: Vec<Grid>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image: Grid,
    pub label: u8,
    /// Index of the image in the source [`RawDataset`].
    pub source_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryDataset {
    pub samples: Vec<Sample>,
    pub class_names: [String; 2],
    pub resolution: usize,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = u8> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Same samples resampled to `target × target`.
    pub fn resampled(&self, target: usize) -> BinaryDataset {
        BinaryDataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    image: resample(&s.image, target),
                    label: s.label,
                    source_index: s.source_index,
                })
                .collect(),
            class_names: self.class_names.clone(),
            resolution: target,
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        GzDecoder::new(file)
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(path, e))?;
    } else {
        let mut file = file;
        file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    }
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
            needed: at + 4,
            got: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::MagicMismatch {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| Error::TruncatedFile {
        path: path.to_path_buf(),
        needed: offset + len,
        got: bytes.len(),
    })
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<Grid>> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::BadDimensions { rows, cols });
    }
    let px = rows * cols;
    let data = payload(bytes, 16, count * px, path)?;
    Ok(data
        .chunks_exact(px)
        .map(|chunk| {
            Grid::from_vec(rows, cols, chunk.iter().map(|&b| f64::from(b)).collect())
                .expect("chunk length matches shape")
        })
        .collect())
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    Ok(payload(bytes, 8, count, path)?.to_vec())
}

/// Parses an IDX image/label pair.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_images(&read_all(ip)?, ip)?;
    let labels = parse_labels(&read_all(lp)?, lp)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(RawDataset { images, labels })
}

/// Writes an IDX pair. Pixel values are rounded and clamped to `u8`.
pub fn write_idx(ds: &RawDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = ds.images.first().map(Grid::shape).unwrap_or((MNIST_SIDE, MNIST_SIDE));
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for v in [ds.len(), rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for g in &ds.images {
        img.extend(g.as_slice().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    let mut lab = Vec::with_capacity(8 + ds.labels.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    write_maybe_gz(images_path, &img)?;
    write_maybe_gz(labels_path, &lab)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?;
    } else {
        let mut file = file;
        file.write_all(bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Locates the image/label files of `kind` under `data_dir`.
///
/// Looks in `data_dir/<mnist|fashion>/` (or `data_dir` itself) for the
/// standard `train-*` or `t10k-*` names, gzip-compressed or not.
pub fn locate(data_dir: &Path, kind: DatasetKind) -> Result<(PathBuf, PathBuf)> {
    let dirs = [data_dir.join(kind.dir_name()), data_dir.to_path_buf()];
    for dir in &dirs {
        for prefix in ["train", "t10k"] {
            for ext in ["", ".gz"] {
                let images = dir.join(format!("{prefix}-images-idx3-ubyte{ext}"));
                let labels = dir.join(format!("{prefix}-labels-idx1-ubyte{ext}"));
                if images.is_file() && labels.is_file() {
                    return Ok((images, labels));
                }
            }
        }
    }
    Err(Error::io(
        dirs[0].join("train-images-idx3-ubyte"),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no IDX files found"),
    ))
}

/// Draws disjoint, class-balanced train/test subsets.
///
/// Each split takes `n/2` images of `class_a` (label 0) and the remaining
/// `n - n/2` of `class_b` (label 1), without replacement. Images are padded
/// to 32×32 and the order inside each split is shuffled.
pub fn make_binary_subset(
    ds: &RawDataset,
    class_a: u8,
    class_b: u8,
    n_train: usize,
    n_test: usize,
    seed: u64,
    names: [String; 2],
) -> Result<(BinaryDataset, BinaryDataset)> {
    let pool = |class: u8| -> Vec<usize> {
        ds.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    };
    let mut pools = [pool(class_a), pool(class_b)];
    let available = pools[0].len() + pools[1].len();
    let need = [
        n_train / 2 + n_test / 2,
        (n_train - n_train / 2) + (n_test - n_test / 2),
    ];
    if n_train + n_test > available || need[0] > pools[0].len() || need[1] > pools[1].len() {
        return Err(Error::InsufficientSamples {
            requested: n_train + n_test,
            available,
        });
    }
    for (k, p) in pools.iter_mut().enumerate() {
        p.shuffle(&mut rng::stream(seed, Purpose::Subset, [k as u64, 0, 0, 0]));
    }
    let take = |label: usize, range: std::ops::Range<usize>| -> Vec<(usize, u8)> {
        pools[label][range].iter().map(|&i| (i, label as u8)).collect()
    };
    let tr = [n_train / 2, n_train - n_train / 2];
    let te = [n_test / 2, n_test - n_test / 2];
    let mut train_idx = take(0, 0..tr[0]);
    train_idx.extend(take(1, 0..tr[1]));
    let mut test_idx = take(0, tr[0]..tr[0] + te[0]);
    test_idx.extend(take(1, tr[1]..tr[1] + te[1]));
    train_idx.shuffle(&mut rng::stream(seed, Purpose::Subset, [2, 0, 0, 0]));
    test_idx.shuffle(&mut rng::stream(seed, Purpose::Subset, [3, 0, 0, 0]));

    let build = |idx: Vec<(usize, u8)>| BinaryDataset {
        samples: idx
            .into_iter()
            .map(|(i, label)| Sample {
                image: pad(&ds.images[i], DEFAULT_BORDER),
                label,
                source_index: i,
            })
            .collect(),
        class_names: names.clone(),
        resolution: PADDED_SIDE,
    };
    Ok((build(train_idx), build(test_idx)))
}

/// Adds a zero frame of width `border` on every side.
/// Locates, loads and subsets a dataset in one call.
pub fn load_binary(
    data_dir: &Path,
    kind: DatasetKind,
    classes: (u8, u8),
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(BinaryDataset, BinaryDataset)> {
    let (images, labels) = locate(data_dir, kind)?;
    let raw = load_idx(images, labels)?;
    let names = [kind.class_name(classes.0), kind.class_name(classes.1)];
    make_binary_subset(&raw, classes.0, classes.1, n_train, n_test, seed, names)
}

pub fn pad(img: &Grid, border: usize) -> Grid {
    let (r, c) = img.shape();
    let mut out = Grid::zeros(r + 2 * border, c + 2 * border);
    for i in 0..r {
        for j in 0..c {
            out.set(i + border, j + border, img.get(i, j));
        }
    }
    out
}

/// Removes a frame of width `border`; inverse of [`pad`] on the interior.
pub fn crop(img: &Grid, border: usize) -> Grid {
    let (r, c) = img.shape();
    let (nr, nc) = (r.saturating_sub(2 * border), c.saturating_sub(2 * border));
    Grid::from_fn(nr, nc, |i, j| img.get(i + border, j + border))
}

/// Fraction of source cell `i` (unit width) that falls in target cell `o`,
/// for `n_in` source cells mapped onto `n_out` target cells.
fn box_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let step = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let (lo, hi) = (o as f64 * step, (o + 1) as f64 * step);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = hi.min((i + 1) as f64) - lo.max(i as f64);
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted box resampling to `target × target`.
///
/// Every source pixel distributes its value over the target cells in
/// proportion to the overlapping area, so the total intensity is preserved.
pub fn resample(img: &Grid, target: usize) -> Grid {
    assert!(target >= 1, "resample target must be at least 1");
    let (r, c) = img.shape();
    if r == target && c == target {
        return img.clone();
    }
    let wr = box_weights(r, target);
    let wc = box_weights(c, target);
    // Rows first.
    let mut tmp = Grid::zeros(target, c);
    for (o, row) in wr.iter().enumerate() {
        for &(i, w) in row {
            for j in 0..c {
                tmp.set(o, j, tmp.get(o, j) + w * img.get(i, j));
            }
        }
    }
    let mut out = Grid::zeros(target, target);
    for (o, col) in wc.iter().enumerate() {
        for &(j, w) in col {
            for i in 0..target {
                out.set(i, o, out.get(i, o) + w * tmp.get(i, j));
            }
        }
    }
    out
}
