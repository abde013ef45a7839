//! Code tables and phase laws for the coded modulation classes.
//!
//! Barker sequences are the canonical low-sidelobe bipolar codes; Costas
//! sequences are frequency-hop permutations with the all-distinct
//! displacement-vector property; Frank/P1-P4 are the classical polyphase
//! step-chirp codes; T1-T4 quantize linear or stepped FM phase trajectories
//! onto a small phase-state lattice.

use crate::error::{Error, Result};
use rand::Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

const BARKER_3: [i8; 3] = [1, 1, -1];
const BARKER_7: [i8; 7] = [1, 1, 1, -1, -1, 1, -1];
const BARKER_13: [i8; 13] = [1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1];

/// Canonical Barker sequence of length 3, 7, or 13.
pub fn barker_code(n: usize) -> Result<&'static [i8]> {
    match n {
        3 => Ok(&BARKER_3),
        7 => Ok(&BARKER_7),
        13 => Ok(&BARKER_13),
        _ => Err(Error::config(format!("no Barker code of length {n}"))),
    }
}

/// Welch-constructed order-10 Costas sequence (powers of 2 mod 11).
/// Exhaustive order-10 search is avoided at runtime; this one is verified
/// by the difference-triangle test below.
const COSTAS_10: [usize; 10] = [2, 4, 8, 5, 10, 9, 7, 3, 6, 1];

fn costas_property(seq: &[usize]) -> bool {
    let n = seq.len();
    // Displacement vectors (d, seq[i+d]-seq[i]) must be distinct for each d.
    for d in 1..n {
        let mut seen = [false; 2 * 16 + 1];
        for i in 0..n - d {
            let diff = seq[i + d] as isize - seq[i] as isize;
            let slot = (diff + 16) as usize;
            if seen[slot] {
                return false;
            }
            seen[slot] = true;
        }
    }
    true
}

/// Enumerate all Costas permutations of 1..=order by backtracking.
fn enumerate_costas(order: usize) -> Vec<Vec<usize>> {
    fn extend(order: usize, prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == order {
            out.push(prefix.clone());
            return;
        }
        for v in 1..=order {
            if used[v] {
                continue;
            }
            prefix.push(v);
            if costas_property(prefix) {
                used[v] = true;
                extend(order, prefix, used, out);
                used[v] = false;
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(order, &mut Vec::new(), &mut vec![false; order + 1], &mut out);
    out
}

fn costas_pool(order: usize) -> &'static [Vec<usize>] {
    static POOL_5: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    static POOL_7: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    match order {
        5 => POOL_5.get_or_init(|| enumerate_costas(5)),
        7 => POOL_7.get_or_init(|| enumerate_costas(7)),
        _ => unreachable!(),
    }
}

/// A Costas permutation of `1..=order` for order 5, 7, or 10.
///
/// Orders 5 and 7 draw uniformly (seeded) from the full enumerated family;
/// order 10 always returns the stored Welch sequence.
pub fn costas_sequence(order: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    match order {
        5 | 7 => {
            let pool = costas_pool(order);
            Ok(pool[rng.gen_range(0..pool.len())].clone())
        }
        10 => Ok(COSTAS_10.to_vec()),
        _ => Err(Error::config(format!("unsupported Costas order {order}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyphaseKind {
    Frank,
    P1,
    P2,
    P3,
    P4,
}

/// Polyphase code phases in radians.
///
/// `size` is the frequency-step count M for Frank/P1/P2 (code length M^2)
/// and the subcode count for P3/P4 (code length = size). Phases follow the
/// standard step-chirp constructions:
///
/// - Frank: `phi(i,j) = 2 pi (i-1)(j-1) / M`
/// - P1:    `phi(i,j) = -(pi/M) (M - (2j-1)) ((j-1)M + (i-1))`
/// - P2:    `phi(i,j) = -(pi/(2M)) (2i-1-M)(2j-1-M)`
/// - P3:    `phi(i)   = pi (i-1)^2 / rho`
/// - P4:    `phi(i)   = pi (i-1)^2 / rho - pi (i-1)`
///
/// with `j` the step index and `i` the sample index inside the step, both
/// advancing chronologically.
pub fn polyphase_code(kind: PolyphaseKind, size: usize) -> Result<Vec<f64>> {
    if size == 0 {
        return Err(Error::config("polyphase code size must be positive"));
    }
    let m = size as f64;
    let code = match kind {
        PolyphaseKind::Frank => {
            let mut c = Vec::with_capacity(size * size);
            for j in 1..=size {
                for i in 1..=size {
                    c.push(2.0 * PI * ((i - 1) * (j - 1)) as f64 / m);
                }
            }
            c
        }
        PolyphaseKind::P1 => {
            let mut c = Vec::with_capacity(size * size);
            for j in 1..=size {
                for i in 1..=size {
                    let a = m - (2 * j - 1) as f64;
                    let b = ((j - 1) * size + (i - 1)) as f64;
                    c.push(-(PI / m) * a * b);
                }
            }
            c
        }
        PolyphaseKind::P2 => {
            let mut c = Vec::with_capacity(size * size);
            for j in 1..=size {
                for i in 1..=size {
                    let a = (2 * i) as f64 - 1.0 - m;
                    let b = (2 * j) as f64 - 1.0 - m;
                    c.push(-(PI / (2.0 * m)) * a * b);
                }
            }
            c
        }
        PolyphaseKind::P3 => (1..=size)
            .map(|i| PI * ((i - 1) * (i - 1)) as f64 / m)
            .collect(),
        PolyphaseKind::P4 => (1..=size)
            .map(|i| PI * ((i - 1) * (i - 1)) as f64 / m - PI * (i - 1) as f64)
            .collect(),
    };
    Ok(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TCodeKind {
    T1,
    T2,
    T3,
    T4,
}

/// Parameters for [`t_code`].
#[derive(Debug, Clone)]
pub struct TCodeParams {
    /// Pulse width, seconds.
    pub pw: f64,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Segment count (T1/T2).
    pub n_segments: usize,
    /// Sweep bandwidth, Hz (T3/T4).
    pub bandwidth: f64,
    /// Phase-state count of the quantizer.
    pub n_phase_states: usize,
}

/// Continuous (pre-quantization) phase ramp argument for a T code, in units
/// of phase states. The emitted phase is `2 pi / n * floor(arg) mod 2 pi`.
pub(crate) fn t_code_prequant(kind: TCodeKind, p: &TCodeParams, t: f64) -> f64 {
    let n = p.n_phase_states as f64;
    match kind {
        TCodeKind::T1 => {
            let k = p.n_segments as f64;
            let j = ((k * t / p.pw).floor()).min(k - 1.0).max(0.0);
            (k * t - j * p.pw) * (j * n / p.pw)
        }
        TCodeKind::T2 => {
            let k = p.n_segments as f64;
            let j = ((k * t / p.pw).floor()).min(k - 1.0).max(0.0);
            (k * t - j * p.pw) * ((2.0 * j - k + 1.0) / p.pw) * (n / 2.0)
        }
        TCodeKind::T3 => n * p.bandwidth * t * t / (2.0 * p.pw),
        TCodeKind::T4 => n * p.bandwidth * t * t / (2.0 * p.pw) - n * p.bandwidth * t / 2.0,
    }
}

/// Per-sample quantized phase (radians) of a T-coded pulse.
pub fn t_code(kind: TCodeKind, p: &TCodeParams) -> Result<Vec<f64>> {
    if matches!(kind, TCodeKind::T1 | TCodeKind::T2) && p.n_segments == 0 {
        return Err(Error::config("T1/T2 require a positive segment count"));
    }
    if p.n_phase_states < 2 {
        return Err(Error::config("T codes require at least 2 phase states"));
    }
    let n_samples = (p.pw * p.fs).round() as usize;
    let n = p.n_phase_states as i64;
    let step = 2.0 * PI / n as f64;
    let mut phase = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = k as f64 / p.fs;
        let state = (t_code_prequant(kind, p, t).floor() as i64).rem_euclid(n);
        phase.push(step * state as f64);
    }
    Ok(phase)
}
