//! Phase-domain features: the second pre-processing branch.
//!
//! The unwrapped instantaneous phase of a pulse is correlated with an
//! order-1 Hermite-Gaussian kernel, which acts as a smoothed differentiator:
//! discrete phase steps turn into isolated peaks whose height equals the
//! step size (the kernel is normalized so `sum |h| = 2`), while frequency
//! modulation only shifts the slowly varying baseline. Peaks that stand out
//! from a robust local trend estimate are reported as phase jumps and
//! quantized into a fixed-length vector.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Order-1 Hermite-Gaussian kernel `h(t_n) = beta * (t_n/sigma) *
/// exp(-pi t_n^2 / sigma^2)` on `n = -N_h ..= N_h`.
#[derive(Debug, Clone)]
pub struct HgKernel {
    /// `2 * half_len + 1` antisymmetric taps, `sum |taps| = 2`.
    pub taps: Vec<f64>,
    /// Time parameter, seconds.
    pub sigma: f64,
    /// Amplitude normalizer `2 / sum |h_{1,sigma}|`.
    pub beta: f64,
    pub half_len: usize,
}

impl HgKernel {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Unwrapped instantaneous phase: `arg(x[k])` with consecutive differences
/// forced into `(-pi, pi]`.
pub fn inst_phase(samples: &[Complex64]) -> Vec<f64> {
    assert!(!samples.is_empty(), "instantaneous phase of empty signal");
    let mut phase = Vec::with_capacity(samples.len());
    let mut prev = samples[0].arg();
    let mut offset = 0.0;
    phase.push(prev);
    for s in &samples[1..] {
        let raw = s.arg();
        let mut d = raw - prev;
        while d > PI {
            d -= 2.0 * PI;
            offset -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
            offset += 2.0 * PI;
        }
        phase.push(raw + offset);
        prev = raw;
    }
    phase
}

/// Build the kernel for a given minimum chip duration.
///
/// `sigma` is set so the interval holding 99% of `sum |h|` spans half the
/// minimum chip duration; the tap range covers 4 sigma.
pub fn hg_kernel(min_chip: f64, fs: f64) -> Result<HgKernel> {
    if min_chip * fs < 4.0 {
        return Err(Error::config(format!(
            "minimum chip duration {min_chip}s spans fewer than 4 samples at {fs} Hz"
        )));
    }
    // 99% of the half-line mass of (t/sigma) exp(-pi t^2/sigma^2) lies in
    // [0, T] with T = sigma * sqrt(ln(100)/pi); the effective support
    // [-T, T] must equal min_chip / 2.
    let t_support = min_chip / 4.0;
    let sigma = t_support / (100f64.ln() / PI).sqrt();
    let half_len = (4.0 * sigma * fs).ceil() as usize;
    let h1: Vec<f64> = (-(half_len as isize)..=half_len as isize)
        .map(|n| {
            let t = n as f64 / fs;
            t / sigma * (-PI * t * t / (sigma * sigma)).exp()
        })
        .collect();
    let abs_sum: f64 = h1.iter().map(|v| v.abs()).sum();
    let beta = 2.0 / abs_sum;
    Ok(HgKernel {
        taps: h1.iter().map(|v| v * beta).collect(),
        sigma,
        beta,
        half_len,
    })
}

/// Correlate the phase sequence with the kernel (same length output, edges
/// replicate). The orientation makes a positive phase step produce a
/// positive peak of equal height.
pub fn convolve_phase(phase: &[f64], kernel: &HgKernel) -> Vec<f64> {
    assert!(
        phase.len() > kernel.len(),
        "phase sequence shorter than kernel"
    );
    let n = phase.len();
    let h = kernel.half_len as isize;
    let mut out = Vec::with_capacity(n);
    for k in 0..n as isize {
        let mut acc = 0.0;
        for (i, &tap) in kernel.taps.iter().enumerate() {
            let pos = (k + i as isize - h).clamp(0, n as isize - 1) as usize;
            acc += tap * phase[pos];
        }
        out.push(acc);
    }
    out
}

/// A detected phase discontinuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseJump {
    /// Sample index of the response peak.
    pub index: usize,
    /// Signed jump level, radians.
    pub level: f64,
}

/// Robust outlier detector settings.
#[derive(Debug, Clone)]
pub struct JumpDetector {
    /// Threshold in MAD-derived sigmas.
    pub threshold_k: f64,
    /// Absolute threshold floor, radians (guards the noiseless case where
    /// the MAD collapses to zero).
    pub abs_floor: f64,
}

impl Default for JumpDetector {
    fn default() -> Self {
        JumpDetector {
            threshold_k: 6.0,
            abs_floor: 1e-6,
        }
    }
}

fn median_of(scratch: &mut [f64]) -> f64 {
    let mid = scratch.len() / 2;
    let (_, m, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Sliding-window median trend (window clipped at the edges).
fn median_trend(signal: &[f64], half_win: usize) -> Vec<f64> {
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(2 * half_win + 1);
    for k in 0..n {
        let lo = k.saturating_sub(half_win);
        let hi = (k + half_win + 1).min(n);
        scratch.clear();
        scratch.extend_from_slice(&signal[lo..hi]);
        out.push(median_of(&mut scratch));
    }
    out
}

/// Find phase jumps as outliers of the convolved phase.
///
/// The local trend (sliding median over twice the kernel support) is
/// removed first; a median trend tracks the monotone baseline shifts caused
/// by frequency modulation and hops but not the isolated bumps caused by
/// phase steps. Residual extrema beyond `k * MAD` are reported, closest
/// detections merged within half a kernel support, and the residual value
/// at the peak is the jump level. The first and last half kernel of the
/// pulse are not searched: the replicated padding makes the response roll
/// off there, which under strong FM baselines fakes outliers.
pub fn detect_jumps(response: &[f64], kernel: &HgKernel, cfg: &JumpDetector) -> Vec<PhaseJump> {
    let n = response.len();
    if n == 0 {
        return Vec::new();
    }
    let trend = median_trend(response, kernel.len());
    let residual: Vec<f64> = response.iter().zip(&trend).map(|(r, t)| r - t).collect();

    let mut scratch = residual.clone();
    let center = median_of(&mut scratch);
    let mut dev: Vec<f64> = residual.iter().map(|r| (r - center).abs()).collect();
    let mad = median_of(&mut dev);
    let threshold = (cfg.threshold_k * 1.4826 * mad).max(cfg.abs_floor);

    // Local extrema of |residual| above threshold.
    let guard = kernel.half_len;
    let mut peaks: Vec<PhaseJump> = Vec::new();
    for k in guard..n.saturating_sub(guard) {
        let v = residual[k].abs();
        if v <= threshold {
            continue;
        }
        let left = if k > 0 { residual[k - 1].abs() } else { 0.0 };
        let right = if k + 1 < n { residual[k + 1].abs() } else { 0.0 };
        if v >= left && v >= right {
            peaks.push(PhaseJump {
                index: k,
                level: residual[k],
            });
        }
    }

    // Merge clusters closer than half the kernel support, keeping the
    // strongest peak of each cluster.
    let merge_radius = kernel.half_len;
    let mut merged: Vec<PhaseJump> = Vec::new();
    for p in peaks {
        match merged.last_mut() {
            Some(last) if p.index - last.index < merge_radius => {
                if p.level.abs() > last.level.abs() {
                    *last = p;
                }
            }
            _ => merged.push(p),
        }
    }
    merged
}

/// Fixed-length discretized jump vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseJumpVector {
    pub values: Vec<f64>,
}

impl PhaseJumpVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Map detected jumps onto a `k_len`-slot vector: position scaled to the
/// slot grid, level wrapped into `(-pi, pi]` and quantized to `n_levels`
/// uniform lattice points over `[-pi, pi]`. Colliding slots keep the larger
/// magnitude.
pub fn to_jump_vector(
    jumps: &[PhaseJump],
    pulse_len: usize,
    k_len: usize,
    n_levels: usize,
) -> PhaseJumpVector {
    assert!(k_len >= 2 && n_levels >= 2 && pulse_len >= 2);
    let mut values: Vec<f64> = vec![0.0; k_len];
    let lattice_step = 2.0 * PI / (n_levels - 1) as f64;
    for j in jumps {
        let slot = ((j.index as f64 * (k_len - 1) as f64 / (pulse_len - 1) as f64).round()
            as usize)
            .min(k_len - 1);
        let wrapped = {
            let r = j.level.rem_euclid(2.0 * PI);
            if r > PI {
                r - 2.0 * PI
            } else {
                r
            }
        };
        let q = ((wrapped + PI) / lattice_step).round().clamp(0.0, (n_levels - 1) as f64);
        let level = -PI + q * lattice_step;
        if level.abs() > values[slot].abs() {
            values[slot] = level;
        }
    }
    PhaseJumpVector { values }
}

/// Full second-stage configuration.
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    /// Class-agnostic minimum chip duration assumed at inference, seconds.
    pub min_chip: f64,
    /// Jump-vector length.
    pub k_len: usize,
    /// Quantization levels over `[-pi, pi]`.
    pub n_levels: usize,
    pub detector: JumpDetector,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            min_chip: crate::waveform::MIN_CHIP,
            k_len: 256,
            n_levels: 16,
            detector: JumpDetector::default(),
        }
    }
}

/// Unwrap, correlate, detect, discretize: the whole second branch input.
pub fn phase_features(samples: &[Complex64], fs: f64, cfg: &PhaseConfig) -> Result<PhaseJumpVector> {
    let kernel = hg_kernel(cfg.min_chip, fs)?;
    let phase = inst_phase(samples);
    let response = convolve_phase(&phase, &kernel);
    let jumps = detect_jumps(&response, &kernel, &cfg.detector);
    Ok(to_jump_vector(&jumps, samples.len(), cfg.k_len, cfg.n_levels))
}
