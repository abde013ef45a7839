//! Phase-law synthesis and noise injection.

use super::codes::{barker_code, costas_sequence, polyphase_code, t_code, TCodeParams};
use super::{IQPulse, ModulationClass, PulseMeta, PulseParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Wrap into (-pi, pi].
pub(crate) fn wrap_pm_pi(d: f64) -> f64 {
    let r = d.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Expand per-chip phase values to per-sample phases, recording the sample
/// index and wrapped phase step wherever the chip value actually changes.
/// The tail past the last full chip keeps the final value.
fn expand_chips(
    chip_phases: &[f64],
    chip_samples: f64,
    n: usize,
) -> (Vec<f64>, Vec<usize>, Vec<f64>) {
    let n_chips = chip_phases.len();
    let mut phase = Vec::with_capacity(n);
    let mut boundaries = Vec::new();
    let mut jumps = Vec::new();
    let mut prev_idx = 0usize;
    for k in 0..n {
        let idx = ((k as f64 / chip_samples) as usize).min(n_chips - 1);
        if idx != prev_idx {
            let step = wrap_pm_pi(chip_phases[idx] - chip_phases[prev_idx]);
            if step.abs() > 1e-9 {
                boundaries.push(k);
                jumps.push(step);
            }
            prev_idx = idx;
        }
        phase.push(chip_phases[idx]);
    }
    (phase, boundaries, jumps)
}

/// Boundaries from an arbitrary per-sample phase sequence (T codes).
fn boundaries_from_samples(phase: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut boundaries = Vec::new();
    let mut jumps = Vec::new();
    for k in 1..phase.len() {
        let step = wrap_pm_pi(phase[k] - phase[k - 1]);
        if step.abs() > 1e-9 {
            boundaries.push(k);
            jumps.push(step);
        }
    }
    (boundaries, jumps)
}

/// Synthesize a noiseless pulse. The envelope is rectangular with unit
/// magnitude; the instantaneous frequency/phase law is fixed by the class.
/// Deterministic: all randomness comes from `params.code_seed`.
pub fn synth_pulse(class: ModulationClass, params: &PulseParams) -> IQPulse {
    use ModulationClass::*;
    let n = params.n_samples();
    assert!(n > 0, "pulse must span at least one sample");
    let fs = params.fs;
    let pw = params.pw;
    let mut code_rng = ChaCha8Rng::seed_from_u64(params.code_seed);

    let (mod_phase, chip_boundaries, true_phase_jumps) = match class {
        Scm => (vec![0.0; n], Vec::new(), Vec::new()),
        LfmUp | LfmDown => {
            let sign = if class == LfmUp { 1.0 } else { -1.0 };
            let b = params.bandwidth;
            let phase = (0..n)
                .map(|k| {
                    let t = k as f64 / fs;
                    sign * 2.0 * PI * b * (t * t / (2.0 * pw) - t / 2.0)
                })
                .collect();
            (phase, Vec::new(), Vec::new())
        }
        SinusoidalFm => {
            let b = params.bandwidth;
            let p = params.fm_periods.max(1.0);
            let phase = (0..n)
                .map(|k| {
                    let t = k as f64 / fs;
                    b * pw / (2.0 * p) * (1.0 - (2.0 * PI * p * t / pw).cos())
                })
                .collect();
            (phase, Vec::new(), Vec::new())
        }
        TriangularFm => {
            // Zero-mean triangle deviation; G is its running integral.
            fn tri_integral(u: f64) -> f64 {
                if u < 0.25 {
                    2.0 * u * u
                } else if u < 0.75 {
                    2.0 * u - 2.0 * u * u - 0.25
                } else {
                    2.0 * (u - 1.0) * (u - 1.0)
                }
            }
            let b = params.bandwidth;
            let p = params.fm_periods.max(1.0);
            let phase = (0..n)
                .map(|k| {
                    let t = k as f64 / fs;
                    let v = p * t / pw;
                    2.0 * PI * (b / 2.0) * (pw / p) * tri_integral(v.fract())
                })
                .collect();
            (phase, Vec::new(), Vec::new())
        }
        Costas5 | Costas7 | Costas10 => {
            let order = params.costas_order;
            let seq = costas_sequence(order, &mut code_rng).expect("valid Costas order");
            let chip = pw / order as f64;
            let df = 1.0 / chip;
            let center = (order as f64 + 1.0) / 2.0;
            let freqs: Vec<f64> = seq.iter().map(|&c| (c as f64 - center) * df).collect();
            // Phase-continuous hop sequence.
            let mut acc = vec![0.0; order];
            for j in 1..order {
                acc[j] = acc[j - 1] + 2.0 * PI * freqs[j - 1] * chip;
            }
            let chip_samples = chip * fs;
            let mut phase = Vec::with_capacity(n);
            let mut boundaries = Vec::new();
            let mut prev = 0usize;
            for k in 0..n {
                let t = k as f64 / fs;
                let j = ((k as f64 / chip_samples) as usize).min(order - 1);
                if j != prev {
                    boundaries.push(k);
                    prev = j;
                }
                phase.push(acc[j] + 2.0 * PI * freqs[j] * (t - j as f64 * chip));
            }
            let jumps = vec![0.0; boundaries.len()];
            (phase, boundaries, jumps)
        }
        Barker3 | Barker7 | Barker13 => {
            let code = barker_code(class.barker_length().unwrap()).unwrap();
            let chip_phases: Vec<f64> = code
                .iter()
                .map(|&c| if c > 0 { 0.0 } else { PI })
                .collect();
            let chip = if params.chip_duration > 0.0 {
                params.chip_duration
            } else {
                pw / code.len() as f64
            };
            let (p, b, j) = expand_chips(&chip_phases, chip * fs, n);
            (p, b, j)
        }
        Qpsk | Psk8 | Psk16 => {
            let m = class.psk_order().unwrap();
            let chip = params.chip_duration;
            assert!(chip > 0.0, "PSK requires a chip duration");
            let n_sym = ((pw / chip) as usize).max(1);
            let chip_phases: Vec<f64> = (0..n_sym)
                .map(|_| 2.0 * PI * code_rng.gen_range(0..m) as f64 / m as f64)
                .collect();
            expand_chips(&chip_phases, chip * fs, n)
        }
        Frank | P1 | P2 => {
            let m = params.n_freq_steps;
            let code = polyphase_code(class.polyphase_kind().unwrap(), m).unwrap();
            let sub = pw / code.len() as f64;
            expand_chips(&code, sub * fs, n)
        }
        P3 | P4 => {
            let rho = params.n_subcodes;
            let code = polyphase_code(class.polyphase_kind().unwrap(), rho).unwrap();
            let sub = pw / rho as f64;
            expand_chips(&code, sub * fs, n)
        }
        T1 | T2 | T3 | T4 => {
            let tp = TCodeParams {
                pw,
                fs,
                n_segments: params.n_segments,
                bandwidth: params.bandwidth,
                n_phase_states: params.n_phase_states,
            };
            let phase = t_code(class.t_code_kind().unwrap(), &tp).expect("valid T-code params");
            let (b, j) = boundaries_from_samples(&phase);
            (phase, b, j)
        }
    };

    let offset = params.carrier_offset;
    let samples = mod_phase
        .iter()
        .enumerate()
        .map(|(k, &pm)| {
            let t = k as f64 / fs;
            Complex64::from_polar(1.0, 2.0 * PI * offset * t + pm)
        })
        .collect();

    IQPulse {
        samples,
        meta: PulseMeta {
            class,
            params: params.clone(),
            chip_boundaries,
            true_phase_jumps,
        },
    }
}

/// Add zero-mean circularly symmetric complex Gaussian noise scaled so the
/// pulse-average SNR equals `snr_db`. Infinite SNR returns the input
/// untouched.
pub fn add_awgn(pulse: &IQPulse, snr_db: f64, rng: &mut impl Rng) -> IQPulse {
    let mut out = pulse.clone();
    out.meta.params.snr_db = snr_db;
    if !snr_db.is_finite() {
        return out;
    }
    let signal_power =
        pulse.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / pulse.samples.len() as f64;
    let noise_power = signal_power * 10f64.powf(-snr_db / 10.0);
    let comp_std = (noise_power / 2.0).sqrt();
    for s in &mut out.samples {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(re * comp_std, im * comp_std);
    }
    out
}

/// Empirical SNR (dB) of a noisy pulse against its clean reference.
pub fn measure_snr_db(clean: &[Complex64], noisy: &[Complex64]) -> f64 {
    assert_eq!(clean.len(), noisy.len());
    let sig: f64 = clean.iter().map(|s| s.norm_sqr()).sum();
    let noise: f64 = clean
        .iter()
        .zip(noisy)
        .map(|(c, x)| (x - c).norm_sqr())
        .sum();
    10.0 * (sig / noise).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{sample_params, ALL_CLASSES};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_params() -> PulseParams {
        PulseParams {
            pw: 10e-6,
            ..PulseParams::default()
        }
    }

    #[test]
    fn scm_is_a_constant_tone() {
        let mut p = base_params();
        p.pw = 2e-6;
        let pulse = synth_pulse(ModulationClass::Scm, &p);
        assert_eq!(pulse.len(), 200);
        for s in &pulse.samples {
            assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(pulse.meta.chip_boundaries.is_empty());
    }

    #[test]
    fn lfm_up_sweeps_the_requested_band() {
        let mut p = base_params();
        p.bandwidth = 10e6;
        let pulse = synth_pulse(ModulationClass::LfmUp, &p);
        // Finite-difference instantaneous frequency against the analytic ramp.
        let fs = p.fs;
        let mut max_dev: f64 = 0.0;
        for k in 0..pulse.len() - 1 {
            let d = (pulse.samples[k + 1] * pulse.samples[k].conj()).arg();
            let f_meas = d * fs / (2.0 * PI);
            let t_mid = (k as f64 + 0.5) / fs;
            let f_true = p.bandwidth * (t_mid / p.pw - 0.5);
            max_dev = max_dev.max((f_meas - f_true).abs());
        }
        assert!(max_dev < 1e3, "max deviation {max_dev} Hz");
    }

    #[test]
    fn barker13_flips_pi_at_code_sign_changes() {
        let code = barker_code(13).unwrap();
        let mut p = base_params();
        p.chip_duration = 0.4e-6;
        p.pw = 13.0 * p.chip_duration;
        let pulse = synth_pulse(ModulationClass::Barker13, &p);
        let expected: Vec<usize> = (1..13)
            .filter(|&j| code[j] != code[j - 1])
            .map(|j| j * 40)
            .collect();
        assert_eq!(pulse.meta.chip_boundaries, expected);
        for jump in &pulse.meta.true_phase_jumps {
            assert!((jump.abs() - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn qpsk_jumps_live_on_the_psk_lattice() {
        let mut p = base_params();
        p.chip_duration = 0.5e-6;
        p.code_seed = 99;
        let pulse = synth_pulse(ModulationClass::Qpsk, &p);
        assert!(!pulse.meta.chip_boundaries.is_empty());
        for jump in &pulse.meta.true_phase_jumps {
            let steps = jump / (PI / 2.0);
            assert!((steps - steps.round()).abs() < 1e-9, "jump {jump}");
            assert!(jump.abs() > 1e-9);
        }
    }

    #[test]
    fn costas_hops_match_the_sequence() {
        let mut p = base_params();
        p.costas_order = 5;
        p.chip_duration = p.pw / 5.0;
        p.code_seed = 3;
        let pulse = synth_pulse(ModulationClass::Costas5, &p);
        assert_eq!(pulse.meta.chip_boundaries.len(), 4);
        // Mid-hop finite-difference frequency lands on the hop grid.
        let chip_samples = (p.chip_duration * p.fs) as usize;
        let df = 1.0 / p.chip_duration;
        for hop in 0..5 {
            let k = hop * chip_samples + chip_samples / 2;
            let d = (pulse.samples[k + 1] * pulse.samples[k].conj()).arg();
            let f_meas = d * p.fs / (2.0 * PI);
            let steps = f_meas / df + 3.0; // center = (order+1)/2
            assert!(
                (steps - steps.round()).abs() < 0.02,
                "hop {hop} freq {f_meas}"
            );
        }
    }

    #[test]
    fn every_class_has_unit_envelope_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for class in ALL_CLASSES {
            let params = sample_params(class, &mut rng);
            let a = synth_pulse(class, &params);
            let b = synth_pulse(class, &params);
            assert_eq!(a.len(), params.n_samples());
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!(x, y, "{class}: synthesis not reproducible");
            }
            for s in &a.samples {
                assert!((s.norm() - 1.0).abs() < 1e-12, "{class}: envelope");
            }
        }
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let p = base_params();
        let pulse = synth_pulse(ModulationClass::Scm, &p);
        let noisy = add_awgn(&pulse, f64::INFINITY, &mut ChaCha8Rng::seed_from_u64(1));
        for (a, b) in pulse.samples.iter().zip(&noisy.samples) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn awgn_calibration_within_tolerance() {
        let mut p = base_params();
        p.pw = 25e-6;
        let pulse = synth_pulse(ModulationClass::Scm, &p);
        let noisy = add_awgn(&pulse, 10.0, &mut ChaCha8Rng::seed_from_u64(7));
        let snr = measure_snr_db(&pulse.samples, &noisy.samples);
        assert!((snr - 10.0).abs() < 0.3, "measured {snr} dB");
        assert_eq!(noisy.meta.params.snr_db, 10.0);
    }

    #[test]
    fn awgn_seeds_change_noise_not_signal() {
        let p = base_params();
        let pulse = synth_pulse(ModulationClass::Scm, &p);
        let n1 = add_awgn(&pulse, 10.0, &mut ChaCha8Rng::seed_from_u64(1));
        let n2 = add_awgn(&pulse, 10.0, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(n1.samples.iter().zip(&n2.samples).any(|(a, b)| a != b));
        // Noise realizations differ; the underlying signal is the same pulse.
        let s1 = measure_snr_db(&pulse.samples, &n1.samples);
        let s2 = measure_snr_db(&pulse.samples, &n2.samples);
        assert!((s1 - 10.0).abs() < 0.3 && (s2 - 10.0).abs() < 0.3);
    }
}
