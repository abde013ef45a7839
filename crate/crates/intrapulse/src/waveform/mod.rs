//! Complex baseband pulse synthesis for 23 intra-pulse modulation classes.
//!
//! A pulse is modelled as `x(t) = a(t) e^{j phi(t)} + z(t)` with a
//! rectangular unit envelope, a class-specific phase law `phi(t)`, and
//! circularly symmetric complex Gaussian noise `z(t)` calibrated to a
//! requested SNR. Synthesis is a pure function of `(class, params)`;
//! all code randomness (PSK symbols, Costas selection) is driven by
//! `PulseParams::code_seed`, so repeat calls are bit-identical.

mod codes;
mod iqfile;
mod synth;

pub use codes::{
    barker_code, costas_sequence, polyphase_code, t_code, PolyphaseKind, TCodeKind, TCodeParams,
};
pub use iqfile::{read_iqpl, write_iqpl, IQPL_MAGIC};
pub use synth::{add_awgn, measure_snr_db, synth_pulse};

use num_complex::Complex64;
use rand::Rng;

/// Default sample rate (Hz) of the simulation protocol.
pub const DEFAULT_FS: f64 = 1e8;
/// Shortest chip/step duration (seconds) granted to coded classes.
pub const MIN_CHIP: f64 = 0.4e-6;
/// Pulse-width sampling range (seconds).
pub const PW_RANGE: (f64, f64) = (2e-6, 25e-6);
/// Carrier offsets are drawn uniformly from +-this value (Hz).
pub const MAX_CARRIER_OFFSET: f64 = 5e6;

/// The 23 intra-pulse modulation classes.
///
/// Discriminant order fixes the class ids used in dataset files and
/// checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u16)]
pub enum ModulationClass {
    Scm = 0,
    LfmUp = 1,
    LfmDown = 2,
    SinusoidalFm = 3,
    TriangularFm = 4,
    Costas5 = 5,
    Costas7 = 6,
    Costas10 = 7,
    Barker3 = 8,
    Barker7 = 9,
    Barker13 = 10,
    Qpsk = 11,
    Psk8 = 12,
    Psk16 = 13,
    Frank = 14,
    P1 = 15,
    P2 = 16,
    P3 = 17,
    P4 = 18,
    T1 = 19,
    T2 = 20,
    T3 = 21,
    T4 = 22,
}

use ModulationClass::*;

/// All 23 classes in id order.
pub const ALL_CLASSES: [ModulationClass; 23] = [
    Scm, LfmUp, LfmDown, SinusoidalFm, TriangularFm, Costas5, Costas7, Costas10, Barker3, Barker7,
    Barker13, Qpsk, Psk8, Psk16, Frank, P1, P2, P3, P4, T1, T2, T3, T4,
];

/// The reduced 7-class set (linear FM is the up-chirp variant).
pub const SEVEN_CLASSES: [ModulationClass; 7] =
    [Scm, LfmUp, Costas10, Barker13, Qpsk, Psk8, Psk16];

impl ModulationClass {
    pub fn id(self) -> u16 {
        self as u16
    }

    pub fn from_id(id: u16) -> Option<Self> {
        ALL_CLASSES.get(id as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Scm => "SCM",
            LfmUp => "LFM-up",
            LfmDown => "LFM-down",
            SinusoidalFm => "Sinusoidal-FM",
            TriangularFm => "Triangular-FM",
            Costas5 => "Costas-5",
            Costas7 => "Costas-7",
            Costas10 => "Costas-10",
            Barker3 => "Barker-3",
            Barker7 => "Barker-7",
            Barker13 => "Barker-13",
            Qpsk => "QPSK",
            Psk8 => "8-PSK",
            Psk16 => "16-PSK",
            Frank => "Frank",
            P1 => "P1",
            P2 => "P2",
            P3 => "P3",
            P4 => "P4",
            T1 => "T1",
            T2 => "T2",
            T3 => "T3",
            T4 => "T4",
        }
    }

    /// Task class sets: 7 or 23 classes.
    pub fn class_set(n: usize) -> crate::Result<&'static [ModulationClass]> {
        match n {
            7 => Ok(&SEVEN_CLASSES),
            23 => Ok(&ALL_CLASSES),
            _ => Err(crate::Error::config(format!(
                "unsupported class count {n} (expected 7 or 23)"
            ))),
        }
    }

    /// Classes whose parameters include a sweep bandwidth.
    pub fn has_bandwidth(self) -> bool {
        matches!(self, LfmUp | LfmDown | SinusoidalFm | TriangularFm | T3 | T4)
    }

    pub fn barker_length(self) -> Option<usize> {
        match self {
            Barker3 => Some(3),
            Barker7 => Some(7),
            Barker13 => Some(13),
            _ => None,
        }
    }

    pub fn costas_order(self) -> Option<usize> {
        match self {
            Costas5 => Some(5),
            Costas7 => Some(7),
            Costas10 => Some(10),
            _ => None,
        }
    }

    pub fn psk_order(self) -> Option<usize> {
        match self {
            Qpsk => Some(4),
            Psk8 => Some(8),
            Psk16 => Some(16),
            _ => None,
        }
    }

    pub fn polyphase_kind(self) -> Option<PolyphaseKind> {
        match self {
            Frank => Some(PolyphaseKind::Frank),
            P1 => Some(PolyphaseKind::P1),
            P2 => Some(PolyphaseKind::P2),
            P3 => Some(PolyphaseKind::P3),
            P4 => Some(PolyphaseKind::P4),
            _ => None,
        }
    }

    pub fn t_code_kind(self) -> Option<TCodeKind> {
        match self {
            T1 => Some(TCodeKind::T1),
            T2 => Some(TCodeKind::T2),
            T3 => Some(TCodeKind::T3),
            T4 => Some(TCodeKind::T4),
        _ => None,
        }
    }

    /// True for classes carrying discrete phase modulation (the classes the
    /// phase-jump branch is designed to separate).
    pub fn is_phase_coded(self) -> bool {
        self.barker_length().is_some()
            || self.psk_order().is_some()
            || self.polyphase_kind().is_some()
            || self.t_code_kind().is_some()
    }
}

impl std::fmt::Display for ModulationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Randomized per-pulse parameters.
///
/// Fields irrelevant to a class stay at their zero defaults. `snr_db` is
/// `INFINITY` until a noise level is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseParams {
    /// Pulse width, seconds.
    pub pw: f64,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Signal-to-noise ratio of the noisy pulse, dB (`INFINITY` = noiseless).
    pub snr_db: f64,
    /// Baseband carrier offset, Hz.
    pub carrier_offset: f64,
    /// Sweep bandwidth, Hz (FM classes and T3/T4).
    pub bandwidth: f64,
    /// Chip / step / segment duration, seconds (coded classes).
    pub chip_duration: f64,
    /// Frequency-step count M for Frank/P1/P2 (code length M^2).
    pub n_freq_steps: usize,
    /// Subcode count for P3/P4.
    pub n_subcodes: usize,
    /// Segment count for T1/T2.
    pub n_segments: usize,
    /// Hop count for Costas classes.
    pub costas_order: usize,
    /// Phase-state count for T codes.
    pub n_phase_states: usize,
    /// Modulation periods inside the pulse for sinusoidal/triangular FM.
    pub fm_periods: f64,
    /// Seed driving code randomness (PSK symbols, Costas selection).
    pub code_seed: u64,
}

impl Default for PulseParams {
    fn default() -> Self {
        PulseParams {
            pw: 10e-6,
            fs: DEFAULT_FS,
            snr_db: f64::INFINITY,
            carrier_offset: 0.0,
            bandwidth: 0.0,
            chip_duration: 0.0,
            n_freq_steps: 0,
            n_subcodes: 0,
            n_segments: 0,
            costas_order: 0,
            n_phase_states: 2,
            fm_periods: 0.0,
            code_seed: 0,
        }
    }
}

impl PulseParams {
    pub fn n_samples(&self) -> usize {
        (self.pw * self.fs).round() as usize
    }
}

/// Knobs for [`sample_params`] that the experiment protocol leaves fixed.
#[derive(Debug, Clone)]
pub struct SampleOptions {
    /// Draw a uniform carrier offset in +-[`MAX_CARRIER_OFFSET`]. Disable to
    /// pin every pulse at exact baseband center.
    pub randomize_carrier: bool,
    /// Phase-state count handed to T-code synthesis.
    pub n_phase_states: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            randomize_carrier: true,
            n_phase_states: 2,
        }
    }
}

/// Ground-truth metadata carried alongside the samples.
#[derive(Debug, Clone)]
pub struct PulseMeta {
    pub class: ModulationClass,
    pub params: PulseParams,
    /// Sample indices where the modulation state changes.
    pub chip_boundaries: Vec<usize>,
    /// Wrapped phase step (radians) at each boundary; 0 for pure frequency
    /// hops.
    pub true_phase_jumps: Vec<f64>,
}

/// A complex baseband pulse plus its ground truth.
#[derive(Debug, Clone)]
pub struct IQPulse {
    pub samples: Vec<Complex64>,
    pub meta: PulseMeta,
}

impl IQPulse {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draw per-pulse parameters from the protocol distributions.
pub fn sample_params(class: ModulationClass, rng: &mut impl Rng) -> PulseParams {
    sample_params_with(class, rng, &SampleOptions::default())
}

/// [`sample_params`] with explicit options.
///
/// Coded classes get `chip_duration >= MIN_CHIP` wherever the class structure
/// permits it inside the 2-25 us pulse-width window; P3/P4 at 67 subcodes
/// cannot satisfy both, so they are drawn at the top of the width range with
/// the subcode duration as close to the floor as the window allows.
pub fn sample_params_with(
    class: ModulationClass,
    rng: &mut impl Rng,
    opts: &SampleOptions,
) -> PulseParams {
    let (pw_lo, pw_hi) = PW_RANGE;
    let mut p = PulseParams {
        fs: DEFAULT_FS,
        n_phase_states: opts.n_phase_states,
        code_seed: rng.gen(),
        ..PulseParams::default()
    };
    p.carrier_offset = if opts.randomize_carrier {
        rng.gen_range(-MAX_CARRIER_OFFSET..MAX_CARRIER_OFFSET)
    } else {
        0.0
    };

    // Uniform pw with a class-specific lower bound so the chip floor holds.
    fn draw_pw<R: Rng + ?Sized>(rng: &mut R, min_chips: usize) -> f64 {
        let (pw_lo, pw_hi) = PW_RANGE;
        let lo = pw_lo.max((MIN_CHIP * min_chips as f64).min(pw_hi - 2e-6));
        rng.gen_range(lo..pw_hi)
    }
    // Strictly inside (5, 10) MHz.
    fn draw_bw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        loop {
            let b: f64 = rng.gen_range(5e6..10e6);
            if b > 5e6 {
                return b;
            }
        }
    }

    match class {
        Scm => {
            p.pw = draw_pw(rng, 0);
        }
        LfmUp | LfmDown => {
            p.pw = draw_pw(rng, 0);
            p.bandwidth = draw_bw(rng);
        }
        SinusoidalFm | TriangularFm => {
            p.pw = draw_pw(rng, 0);
            p.bandwidth = draw_bw(rng);
            p.fm_periods = rng.gen_range(1.0..3.0);
        }
        Costas5 | Costas7 | Costas10 => {
            let order = class.costas_order().unwrap();
            p.costas_order = order;
            p.pw = draw_pw(rng, order);
            p.chip_duration = p.pw / order as f64;
        }
        Barker3 | Barker7 | Barker13 => {
            let n = class.barker_length().unwrap();
            p.pw = draw_pw(rng, n);
            p.chip_duration = p.pw / n as f64;
        }
        Qpsk | Psk8 | Psk16 => {
            p.pw = draw_pw(rng, 0);
            p.chip_duration = rng.gen_range(MIN_CHIP..p.pw / 4.0);
        }
        Frank | P1 | P2 => {
            // The chip floor applies to the M frequency steps; each step
            // holds M subcodes.
            let m = [6usize, 7, 8][rng.gen_range(0..3)];
            p.n_freq_steps = m;
            p.pw = draw_pw(rng, m);
            p.chip_duration = p.pw / m as f64;
        }
        P3 | P4 => {
            let rho = [36usize, 49, 67][rng.gen_range(0..3)];
            p.n_subcodes = rho;
            p.pw = draw_pw(rng, rho);
            p.chip_duration = p.pw / rho as f64;
        }
        T1 | T2 => {
            let k = [4usize, 5, 6][rng.gen_range(0..3)];
            p.n_segments = k;
            p.pw = draw_pw(rng, k);
            p.chip_duration = p.pw / k as f64;
        }
        T3 | T4 => {
            p.pw = draw_pw(rng, 0);
            p.bandwidth = draw_bw(rng);
        }
    }

    debug_assert!(p.pw >= pw_lo && p.pw <= pw_hi);
    debug_assert!(p.n_samples() > 0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn class_ids_round_trip() {
        for (i, c) in ALL_CLASSES.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(ModulationClass::from_id(c.id()), Some(*c));
        }
        assert_eq!(ModulationClass::from_id(23), None);
    }

    #[test]
    fn seven_class_set_is_subset() {
        for c in SEVEN_CLASSES {
            assert!(ALL_CLASSES.contains(&c));
        }
        assert_eq!(ModulationClass::class_set(7).unwrap().len(), 7);
        assert_eq!(ModulationClass::class_set(23).unwrap().len(), 23);
        assert!(ModulationClass::class_set(9).is_err());
    }

    #[test]
    fn frank_step_counts_uniform() {
        // Over many draws each value of {6,7,8} should appear with
        // frequency in [0.30, 0.37].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            let p = sample_params(ModulationClass::Frank, &mut rng);
            counts[p.n_freq_steps - 6] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.30..=0.37).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn lfm_bandwidth_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = sample_params(ModulationClass::LfmUp, &mut rng);
            assert!(p.bandwidth > 5e6 && p.bandwidth < 10e6);
        }
    }

    #[test]
    fn scm_has_no_code_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = sample_params(ModulationClass::Scm, &mut rng);
            assert_eq!(p.bandwidth, 0.0);
            assert_eq!(p.chip_duration, 0.0);
            assert!(p.pw >= 2e-6 && p.pw <= 25e-6);
        }
    }

    #[test]
    fn chip_floor_honored_where_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in ALL_CLASSES {
            for _ in 0..300 {
                let p = sample_params(class, &mut rng);
                if p.chip_duration == 0.0 {
                    continue;
                }
                let n_chips = (p.pw / p.chip_duration + 1e-9).floor();
                assert!(
                    n_chips * p.chip_duration <= p.pw * (1.0 + 1e-9),
                    "{class}: chips exceed pw"
                );
                // 67-subcode P3/P4 cannot fit 0.4us subcodes in 25us.
                let floor = if p.n_subcodes == 67 { 0.34e-6 } else { MIN_CHIP };
                assert!(
                    p.chip_duration >= floor * (1.0 - 1e-9),
                    "{class}: chip {} below floor",
                    p.chip_duration
                );
            }
        }
    }

    #[test]
    fn periodic_fm_has_at_least_one_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let p = sample_params(ModulationClass::SinusoidalFm, &mut rng);
            assert!(p.fm_periods >= 1.0 && p.fm_periods <= 3.0);
        }
    }

    #[test]
    fn carrier_offset_can_be_disabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let opts = SampleOptions {
            randomize_carrier: false,
            ..Default::default()
        };
        let p = sample_params_with(ModulationClass::Scm, &mut rng, &opts);
        assert_eq!(p.carrier_offset, 0.0);
    }
}
