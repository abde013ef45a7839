//! Short-time Fourier analysis, spectrogram reassignment, and fixed-size
//! time-frequency images.
//!
//! Reassignment (Auger & Flandrin's method) relocates each spectrogram
//! cell's energy to its local center of gravity, computed from two auxiliary
//! STFTs taken with a time-ramped window `t z(t)` and the window derivative
//! `dz/dt`. Ridges of frequency-modulated pulses sharpen to near line width
//! while total energy is only moved, never scaled.
//!
//! All frequency axes are complex-baseband and fftshifted: bin `k` of an
//! `nfft` grid holds `(k - nfft/2) * fs / nfft` Hz.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Frequency rows of the fixed-size image.
pub const TFI_ROWS: usize = 128;
/// Time columns of the fixed-size image.
pub const TFI_COLS: usize = 256;

/// Gaussian analysis window sampled on `t_k = (k - (L-1)/2) / fs`, together
/// with its time-ramped and differentiated variants.
#[derive(Debug, Clone)]
pub struct AnalysisWindow {
    /// Unit-energy window.
    pub z: Vec<f64>,
    /// `t * z(t)`, seconds-weighted.
    pub tz: Vec<f64>,
    /// Analytic derivative `dz/dt`, 1/seconds.
    pub dz: Vec<f64>,
    pub fs: f64,
}

impl AnalysisWindow {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Build a Gaussian window of odd `len >= 9` with shape parameter
/// `sigma_samples` (standard deviation in samples).
pub fn gaussian_window(len: usize, sigma_samples: f64, fs: f64) -> Result<AnalysisWindow> {
    if len < 9 || len % 2 == 0 {
        return Err(Error::config(format!(
            "window length must be odd and >= 9, got {len}"
        )));
    }
    if !(sigma_samples > 0.0 && fs > 0.0) {
        return Err(Error::config("window sigma and fs must be positive"));
    }
    let c = (len - 1) as f64 / 2.0;
    let sigma_t = sigma_samples / fs;
    let mut z: Vec<f64> = (0..len)
        .map(|k| {
            let t = (k as f64 - c) / fs;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp()
        })
        .collect();
    let energy: f64 = z.iter().map(|v| v * v).sum();
    let scale = energy.sqrt().recip();
    for v in &mut z {
        *v *= scale;
    }
    let tz = z
        .iter()
        .enumerate()
        .map(|(k, &v)| (k as f64 - c) / fs * v)
        .collect();
    let dz = z
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let t = (k as f64 - c) / fs;
            -t / (sigma_t * sigma_t) * v
        })
        .collect();
    Ok(AnalysisWindow { z, tz, dz, fs })
}

/// The three aligned STFTs required by reassignment, on a common
/// `n_frames x nfft` grid.
#[derive(Debug, Clone)]
pub struct StftGrid {
    pub n_frames: usize,
    pub nfft: usize,
    pub hop: usize,
    pub fs: f64,
    pub f_z: Vec<Complex64>,
    pub f_tz: Vec<Complex64>,
    pub f_dz: Vec<Complex64>,
}

impl StftGrid {
    #[inline]
    pub fn idx(&self, frame: usize, bin: usize) -> usize {
        frame * self.nfft + bin
    }

    /// Center frequency of a (shifted) bin, Hz.
    #[inline]
    pub fn bin_freq(&self, bin: usize) -> f64 {
        (bin as f64 - self.nfft as f64 / 2.0) * self.fs / self.nfft as f64
    }

    /// Window-center time of a frame, seconds.
    #[inline]
    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.fs
    }
}

/// Dense energy matrix with explicit row/column meaning at each use site.
#[derive(Debug, Clone)]
pub struct EnergyGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl EnergyGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        EnergyGrid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transposed(&self) -> EnergyGrid {
        let mut out = EnergyGrid::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.at(r, c);
            }
        }
        out
    }
}

/// Compute the three STFTs in one pass. Frames are centered on
/// `m * hop`; the signal is zero-padded at both edges.
pub fn stft(
    samples: &[Complex64],
    window: &AnalysisWindow,
    hop: usize,
    nfft: usize,
) -> Result<StftGrid> {
    if samples.is_empty() {
        return Err(Error::shape("stft of an empty signal"));
    }
    if hop == 0 {
        return Err(Error::config("hop must be >= 1"));
    }
    let wlen = window.len();
    if nfft < wlen {
        return Err(Error::config(format!("nfft {nfft} < window length {wlen}")));
    }
    let n = samples.len();
    let n_frames = n.div_ceil(hop);
    let half = (wlen - 1) / 2;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut seg = vec![Complex64::default(); wlen];
    let mut buf = vec![Complex64::default(); nfft];

    let mut grid = StftGrid {
        n_frames,
        nfft,
        hop,
        fs: window.fs,
        f_z: vec![Complex64::default(); n_frames * nfft],
        f_tz: vec![Complex64::default(); n_frames * nfft],
        f_dz: vec![Complex64::default(); n_frames * nfft],
    };

    for m in 0..n_frames {
        let center = m * hop;
        for (i, s) in seg.iter_mut().enumerate() {
            let pos = center as isize + i as isize - half as isize;
            *s = if pos >= 0 && (pos as usize) < n {
                samples[pos as usize]
            } else {
                Complex64::default()
            };
        }
        for (taps, out) in [
            (&window.z, &mut grid.f_z),
            (&window.tz, &mut grid.f_tz),
            (&window.dz, &mut grid.f_dz),
        ] {
            for (b, (s, &w)) in buf.iter_mut().zip(seg.iter().zip(taps.iter())) {
                *b = s * w;
            }
            buf[wlen..].fill(Complex64::default());
            fft.process_with_scratch(&mut buf, &mut scratch);
            // fftshift into the output row.
            let row = &mut out[m * nfft..(m + 1) * nfft];
            let half_fft = nfft / 2;
            row[half_fft..].copy_from_slice(&buf[..half_fft]);
            row[..half_fft].copy_from_slice(&buf[half_fft..]);
        }
    }
    Ok(grid)
}

/// Reassigned coordinates of one cell: `(t_hat seconds, f_hat Hz, energy)`,
/// or `None` below the energy guard.
#[inline]
fn reassign_cell(grid: &StftGrid, m: usize, k: usize, eps: f64) -> Option<(f64, f64, f64)> {
    let idx = grid.idx(m, k);
    let fz = grid.f_z[idx];
    let s = fz.norm_sqr();
    if s <= eps {
        return None;
    }
    let conj = fz.conj();
    let rt = grid.f_tz[idx] * conj;
    let rd = grid.f_dz[idx] * conj;
    let t_hat = grid.frame_time(m) + rt.re / s;
    let f_hat = grid.bin_freq(k) - rd.im / s / (2.0 * PI);
    Some((t_hat, f_hat, s))
}

/// Relative floor (w.r.t. the peak spectrogram cell) below which cells are
/// skipped by reassignment.
pub const DEFAULT_EPS_REL: f64 = 1e-12;

/// Reassign the spectrogram onto its own grid. Rows are frames (time),
/// columns are shifted frequency bins. Off-grid targets clamp to the edges,
/// so energy above the guard is conserved exactly.
pub fn reassign(grid: &StftGrid) -> EnergyGrid {
    let mut out = EnergyGrid::zeros(grid.n_frames, grid.nfft);
    let max_s = grid.f_z.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    if max_s <= 0.0 {
        return out;
    }
    let eps = DEFAULT_EPS_REL * max_s;
    for m in 0..grid.n_frames {
        for k in 0..grid.nfft {
            if let Some((t_hat, f_hat, s)) = reassign_cell(grid, m, k, eps) {
                let mf = (t_hat * grid.fs / grid.hop as f64).round();
                let m_new = (mf.max(0.0) as usize).min(grid.n_frames - 1);
                let kf = (f_hat / grid.fs * grid.nfft as f64 + grid.nfft as f64 / 2.0).round();
                let k_new = (kf.max(0.0) as usize).min(grid.nfft - 1);
                out.data[m_new * grid.nfft + k_new] += s;
            }
        }
    }
    out
}

/// Plain spectrogram `|F_z|^2` on the native grid (frames x bins).
pub fn spectrogram(grid: &StftGrid) -> EnergyGrid {
    let mut out = EnergyGrid::zeros(grid.n_frames, grid.nfft);
    for (o, v) in out.data.iter_mut().zip(grid.f_z.iter()) {
        *o = v.norm_sqr();
    }
    out
}

/// Fixed-size normalized time-frequency image; row 0 is the lowest
/// frequency, column 0 the pulse start.
#[derive(Debug, Clone, PartialEq)]
pub struct TFImage {
    /// `TFI_ROWS x TFI_COLS`, row-major, values in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl TFImage {
    pub fn zeros() -> Self {
        TFImage {
            pixels: vec![0.0; TFI_ROWS * TFI_COLS],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * TFI_COLS + col]
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        if values.len() != TFI_ROWS * TFI_COLS {
            return Err(Error::shape(format!(
                "TFI must have {} values, got {}",
                TFI_ROWS * TFI_COLS,
                values.len()
            )));
        }
        Ok(TFImage {
            pixels: values.iter().map(|&v| v as f64).collect(),
        })
    }
}

/// Normalize a raw image buffer to [0, 1] in place. All-zero input stays
/// zero rather than going NaN.
fn normalize_max(pixels: &mut [f64]) {
    let max = pixels.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in pixels.iter_mut() {
            *v /= max;
        }
    }
}

/// Nearest-neighbor source index for destination index `i`; the rounding
/// convention `floor(i * src / dst + 0.5)` is frozen for golden tests.
#[inline]
fn nn_index(i: usize, src: usize, dst: usize) -> usize {
    ((i as f64 * src as f64 / dst as f64 + 0.5) as usize).min(src - 1)
}

/// Resample an energy matrix (rows = frequency, cols = time) to the fixed
/// 128x256 image by nearest-neighbor interpolation, then max-normalize.
/// Sources smaller than the target are zero-padded first.
pub fn to_tfi(src: &EnergyGrid) -> TFImage {
    let rows = src.rows.max(TFI_ROWS);
    let cols = src.cols.max(TFI_COLS);
    let padded: std::borrow::Cow<'_, EnergyGrid> = if rows != src.rows || cols != src.cols {
        let mut p = EnergyGrid::zeros(rows, cols);
        for r in 0..src.rows {
            let dst = &mut p.data[r * cols..r * cols + src.cols];
            dst.copy_from_slice(&src.data[r * src.cols..(r + 1) * src.cols]);
        }
        std::borrow::Cow::Owned(p)
    } else {
        std::borrow::Cow::Borrowed(src)
    };
    let mut img = TFImage::zeros();
    for r in 0..TFI_ROWS {
        let sr = nn_index(r, rows, TFI_ROWS);
        for c in 0..TFI_COLS {
            let sc = nn_index(c, cols, TFI_COLS);
            img.pixels[r * TFI_COLS + c] = padded.at(sr, sc);
        }
    }
    normalize_max(&mut img.pixels);
    img
}

/// Analysis configuration for the fixed pipeline.
#[derive(Debug, Clone)]
pub struct TfConfig {
    pub window_len: usize,
    pub sigma_samples: f64,
    pub nfft: usize,
    /// Hop is chosen as `max(1, n_samples / target_frames)` so every pulse
    /// yields at least this many frames (shorter pulses yield one frame per
    /// sample and pad the image).
    pub target_frames: usize,
}

impl Default for TfConfig {
    fn default() -> Self {
        TfConfig {
            window_len: 127,
            sigma_samples: 127.0 / 6.0,
            nfft: 512,
            target_frames: TFI_COLS,
        }
    }
}

impl TfConfig {
    pub fn hop_for(&self, n_samples: usize) -> usize {
        (n_samples / self.target_frames).max(1)
    }
}

/// STFT of a pulse under the pipeline configuration.
pub fn analyze(samples: &[Complex64], fs: f64, cfg: &TfConfig) -> Result<StftGrid> {
    let window = gaussian_window(cfg.window_len, cfg.sigma_samples, fs)?;
    stft(samples, &window, cfg.hop_for(samples.len()), cfg.nfft)
}

/// Reassigned time-frequency image of a pulse.
///
/// Reassigned coordinates are quantized straight onto the 128x256 output
/// grid (energies accumulate), which keeps one-bin ridges intact where
/// point decimation of the native grid would drop them.
pub fn tfi_from_pulse(samples: &[Complex64], fs: f64, cfg: &TfConfig) -> Result<TFImage> {
    let grid = analyze(samples, fs, cfg)?;
    let mut img = TFImage::zeros();
    let max_s = grid.f_z.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    if max_s <= 0.0 {
        return Ok(img);
    }
    let eps = DEFAULT_EPS_REL * max_s;
    // Image time span: the pulse, or the minimum span covered by
    // `target_frames` frames when the pulse is shorter (short pulses then
    // occupy the left part of the image).
    let span = (grid.n_frames.max(TFI_COLS) * grid.hop) as f64 / fs;
    for m in 0..grid.n_frames {
        for k in 0..grid.nfft {
            if let Some((t_hat, f_hat, s)) = reassign_cell(&grid, m, k, eps) {
                let col = ((t_hat / span * TFI_COLS as f64).max(0.0) as usize).min(TFI_COLS - 1);
                let row =
                    (((f_hat / fs + 0.5) * TFI_ROWS as f64).max(0.0) as usize).min(TFI_ROWS - 1);
                img.pixels[row * TFI_COLS + col] += s;
            }
        }
    }
    normalize_max(&mut img.pixels);
    Ok(img)
}

/// Plain-spectrogram image of a pulse (for side-by-side comparison with the
/// reassigned one).
pub fn stft_tfi_from_pulse(samples: &[Complex64], fs: f64, cfg: &TfConfig) -> Result<TFImage> {
    let grid = analyze(samples, fs, cfg)?;
    Ok(to_tfi(&spectrogram(&grid).transposed()))
}

/// Write a binary 8-bit PGM (P5), 256 wide x 128 high. File rows run from
/// high to low frequency so spectrogram ridges look conventional.
pub fn write_pgm(path: &Path, img: &TFImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "P5\n{TFI_COLS} {TFI_ROWS}\n255\n").map_err(io)?;
    let mut bytes = Vec::with_capacity(TFI_ROWS * TFI_COLS);
    for r in (0..TFI_ROWS).rev() {
        for c in 0..TFI_COLS {
            bytes.push((img.at(r, c) * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}
