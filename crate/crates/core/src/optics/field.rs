//! Sampled scalar fields and angular-spectrum propagation.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A complex field sampled on a rectangular grid of square pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
    /// Pixel pitch in metres.
    pub pitch: f64,
    /// Vacuum wavelength in metres.
    pub wavelength: f64,
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, values: Vec<Complex64>, pitch: f64, wavelength: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                left: (rows, cols),
                right: (values.len(), 1),
            });
        }
        if !(pitch > 0.0 && wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "pitch and wavelength must be positive, got {pitch} and {wavelength}"
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("field has non-finite entries".into()));
        }
        Ok(ComplexField {
            rows,
            cols,
            values,
            pitch,
            wavelength,
        })
    }

    /// Real amplitude `a` with phase `p` (both `rows × cols`).
    pub fn from_polar(amp: &Grid, phase: &Grid, pitch: f64, wavelength: f64) -> Result<Self> {
        amp.check_shape(phase)?;
        let values = amp
            .as_slice()
            .iter()
            .zip(phase.as_slice())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        Self::new(amp.rows(), amp.cols(), values, pitch, wavelength)
    }

    pub fn from_real(amp: &Grid, pitch: f64, wavelength: f64) -> Result<Self> {
        let values = amp.as_slice().iter().map(|&a| Complex64::new(a, 0.0)).collect();
        Self::new(amp.rows(), amp.cols(), values, pitch, wavelength)
    }

    /// Fundamental Gaussian mode `exp(−r²/w₀²)` centred on the grid.
    pub fn gaussian(n: usize, pitch: f64, wavelength: f64, waist: f64) -> Result<Self> {
        let c = (n as f64 - 1.0) / 2.0;
        let amp = Grid::from_fn(n, n, |r, col| {
            let x = (r as f64 - c) * pitch;
            let y = (col as f64 - c) * pitch;
            (-(x * x + y * y) / (waist * waist)).exp()
        });
        Self::from_real(&amp, pitch, wavelength)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        ComplexField { values, ..*self }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn amplitude(&self) -> Grid {
        self.map_real(|v| v.norm())
    }

    pub fn intensity(&self) -> Grid {
        self.map_real(|v| v.norm_sqr())
    }

    /// Phase in `(−π, π]`.
    pub fn phase(&self) -> Grid {
        self.map_real(|v| wrap_phase(v.arg()))
    }

    fn map_real(&self, f: impl Fn(&Complex64) -> f64) -> Grid {
        Grid::from_vec(self.rows, self.cols, self.values.iter().map(f).collect()).expect("shape preserved")
    }

    /// Rescaled to unit total energy.
    pub fn normalized(&self) -> Result<Self> {
        let e = self.energy();
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::ZeroProfile);
        }
        let k = 1.0 / e.sqrt();
        Ok(self.with_values(self.values.iter().map(|v| v * k).collect()))
    }

    /// `Σ self · conj(other)`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum())
    }

    /// Raw dump: `u64` rows, `u64` cols, `f64` pitch, `f64` wavelength, then
    /// interleaved real and imaginary parts row-major, all little-endian.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
        put(&(self.rows as u64).to_le_bytes())?;
        put(&(self.cols as u64).to_le_bytes())?;
        put(&self.pitch.to_le_bytes())?;
        put(&self.wavelength.to_le_bytes())?;
        for v in &self.values {
            put(&v.re.to_le_bytes())?;
            put(&v.im.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let word = |k: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 * k..8 * k + 8)
                .map(|b| b.try_into().expect("8 bytes"))
                .ok_or_else(|| Error::TruncatedFile {
                    path: path.to_path_buf(),
                    needed: 8 * k + 8,
                    got: bytes.len(),
                })
        };
        let rows = u64::from_le_bytes(word(0)?) as usize;
        let cols = u64::from_le_bytes(word(1)?) as usize;
        let pitch = f64::from_le_bytes(word(2)?);
        let wavelength = f64::from_le_bytes(word(3)?);
        let needed = 32 + 16 * rows * cols;
        if bytes.len() < needed {
            return Err(Error::TruncatedFile {
                path: path.to_path_buf(),
                needed,
                got: bytes.len(),
            });
        }
        let values = (0..rows * cols)
            .map(|i| {
                Ok(Complex64::new(
                    f64::from_le_bytes(word(4 + 2 * i)?),
                    f64::from_le_bytes(word(5 + 2 * i)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, values, pitch, wavelength)
    }
}

/// Maps any angle into `(−π, π]`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// `|⟨f, g⟩|²` for fields on the same grid.
pub fn overlap_physical(f: &ComplexField, g: &ComplexField) -> Result<f64> {
    Ok(f.inner(g)?.norm_sqr())
}

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Free-space propagation over a fixed distance with the angular spectrum
/// transfer function `exp(i·d·√(k² − kx² − ky²))`; evanescent components are
/// discarded.
pub struct Propagator {
    rows: usize,
    cols: usize,
    pitch: f64,
    wavelength: f64,
    distance: f64,
    plans: Plans,
    kernel: Vec<Complex64>,
}

fn spatial_freq(i: usize, n: usize, pitch: f64) -> f64 {
    let k = if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    };
    2.0 * PI * k / (n as f64 * pitch)
}

impl Propagator {
    pub fn new(rows: usize, cols: usize, pitch: f64, wavelength: f64, distance: f64) -> Self {
        let mut planner = FftPlanner::new();
        let plans = Plans {
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        };
        let k = 2.0 * PI / wavelength;
        let mut kernel = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let ky = spatial_freq(r, rows, pitch);
            for c in 0..cols {
                let kx = spatial_freq(c, cols, pitch);
                let arg = k * k - kx * kx - ky * ky;
                kernel.push(if arg > 0.0 {
                    Complex64::from_polar(1.0, distance * arg.sqrt())
                } else {
                    Complex64::new(0.0, 0.0)
                });
            }
        }
        Propagator {
            rows,
            cols,
            pitch,
            wavelength,
            distance,
            plans,
            kernel,
        }
    }

    pub fn for_field(f: &ComplexField, distance: f64) -> Self {
        Self::new(f.rows, f.cols, f.pitch, f.wavelength, distance)
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        if f.shape() != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                left: f.shape(),
                right: (self.rows, self.cols),
            });
        }
        if f.pitch != self.pitch || f.wavelength != self.wavelength {
            return Err(Error::Domain("field sampling differs from propagator".into()));
        }
        if self.distance == 0.0 {
            return Ok(f.clone());
        }
        let mut buf = f.values.clone();
        self.fft2(&mut buf, false);
        for (v, h) in buf.iter_mut().zip(&self.kernel) {
            *v *= h;
        }
        self.fft2(&mut buf, true);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for v in &mut buf {
            *v *= scale;
        }
        Ok(f.with_values(buf))
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.plans.row_inv, &self.plans.col_inv)
        } else {
            (&self.plans.row_fwd, &self.plans.col_fwd)
        };
        row.process(buf);
        let mut t = transpose(buf, self.rows, self.cols);
        col.process(&mut t);
        let back = transpose(&t, self.cols, self.rows);
        buf.copy_from_slice(&back);
    }
}

fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = buf[r * cols + c];
        }
    }
    out
}

/// Propagates `f` by `distance` metres (negative to back-propagate).
pub fn propagate(f: &ComplexField, distance: f64) -> Result<ComplexField> {
    Propagator::for_field(f, distance).apply(f)
}

/// Writes an 8-bit grayscale PNG scaled so the maximum maps to 255.
pub fn save_png(g: &Grid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), g.cols() as u32, g.rows() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let max = g.max().max(f64::MIN_POSITIVE);
    let bytes: Vec<u8> = g
        .as_slice()
        .iter()
        .map(|v| (v / max * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let png_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e.to_string()));
    enc.write_header()
        .map_err(png_err)?
        .write_image_data(&bytes)
        .map_err(png_err)
}

/// Reads an 8- or 16-bit grayscale (or RGB, averaged) PNG as pixel values.
pub fn load_png(path: &Path) -> Result<Grid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let png_err = |e: png::DecodingError| Error::io(path, std::io::Error::other(e.to_string()));
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    Ok(Grid::from_fn(h, w, |r, c| {
        let px = &data[(r * w + c) * channels..(r * w + c + 1) * channels];
        let colour = if channels >= 3 { 3 } else { 1 };
        px[..colour].iter().map(|&v| f64::from(v)).sum::<f64>() / colour as f64
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 808e-9;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Second-moment beam radius `2·√⟨x²⟩` of the intensity along rows.
    fn beam_radius(f: &ComplexField) -> f64 {
        let i = f.intensity();
        let c = (f.rows() as f64 - 1.0) / 2.0;
        let mut m0 = 0.0;
        let mut m2 = 0.0;
        for r in 0..f.rows() {
            for col in 0..f.cols() {
                let x = (r as f64 - c) * f.pitch;
                m0 += i.get(r, col);
                m2 += x * x * i.get(r, col);
            }
        }
        2.0 * (m2 / m0).sqrt()
    }

    #[test]
    fn zero_distance_is_identity() {
        let f = ComplexField::gaussian(32, 8e-6, LAMBDA, 5e-5).unwrap();
        assert_eq!(propagate(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn energy_is_conserved() {
        let f = ComplexField::gaussian(128, 8e-6, LAMBDA, 1e-4).unwrap();
        for d in [1e-3, 0.02, 0.2, -0.05] {
            let g = propagate(&f, d).unwrap();
            assert!(rel(g.energy(), f.energy()) < 1e-9, "d={d}");
        }
    }

    #[test]
    fn forward_then_back_restores_the_field() {
        let f = ComplexField::gaussian(64, 8e-6, LAMBDA, 8e-5).unwrap();
        let g = propagate(&propagate(&f, 0.05).unwrap(), -0.05).unwrap();
        let err: f64 = f
            .values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / f.energy().sqrt() < 1e-9);
    }

    #[test]
    fn propagation_composes() {
        let f = ComplexField::gaussian(64, 8e-6, LAMBDA, 6e-5).unwrap();
        let two = propagate(&propagate(&f, 0.01).unwrap(), 0.03).unwrap();
        let one = propagate(&f, 0.04).unwrap();
        let err: f64 = one
            .values()
            .iter()
            .zip(two.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / f.energy().sqrt() < 1e-9);
    }

    #[test]
    fn gaussian_beam_spreads_as_predicted() {
        let w0 = 1e-4;
        let pitch = 4e-6;
        let f = ComplexField::gaussian(256, pitch, LAMBDA, w0).unwrap();
        let zr = PI * w0 * w0 / LAMBDA;
        assert!(rel(beam_radius(&f), w0) < 0.02);
        for d in [0.5 * zr, zr, 1.5 * zr] {
            let g = propagate(&f, d).unwrap();
            let expected = w0 * (1.0 + (d / zr).powi(2)).sqrt();
            let got = beam_radius(&g);
            assert!(rel(got, expected) < 0.02, "d={d} got={got} expected={expected}");
        }
    }

    #[test]
    fn overlap_ignores_global_phase() {
        let f = ComplexField::gaussian(16, 8e-6, LAMBDA, 3e-5)
            .unwrap()
            .normalized()
            .unwrap();
        assert!((overlap_physical(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        let rot = Complex64::from_polar(1.0, 1.234);
        let g = f.with_values(f.values().iter().map(|v| v * rot).collect());
        assert!((overlap_physical(&f, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((overlap_physical(&g, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_fields_do_not_overlap() {
        let a = Grid::from_fn(4, 4, |r, _| (r < 2) as u8 as f64);
        let b = Grid::from_fn(4, 4, |r, _| (r >= 2) as u8 as f64);
        let f = ComplexField::from_real(&a, 1e-6, LAMBDA).unwrap();
        let g = ComplexField::from_real(&b, 1e-6, LAMBDA).unwrap();
        assert_eq!(overlap_physical(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn wrapped_phase_range() {
        for p in [-3.0 * PI, -PI, -1.0, 0.0, PI, 2.5 * PI, 7.0] {
            let w = wrap_phase(p);
            assert!(w > -PI && w <= PI, "{p} -> {w}");
            assert!(((p - w) / (2.0 * PI)).fract().abs() < 1e-12 || ((p - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = ComplexField::gaussian(5, 8e-6, LAMBDA, 1e-5).unwrap();
        let g = f.with_values(f.values().iter().map(|v| v * Complex64::new(0.3, -0.7)).collect());
        g.write_dump(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32 + 16 * 25);
        assert_eq!(ComplexField::read_dump(&path).unwrap(), g);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.png");
        let g = Grid::from_fn(3, 5, |r, c| (r * 5 + c) as f64);
        save_png(&g, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), (3, 5));
        assert_eq!(back.get(2, 4), 255.0);
        assert_eq!(back.get(0, 0), 0.0);
    }
}
