//! The dual-branch fusion classifier.
//!
//! - 2-D branch over the 128x256 time-frequency image: three conv layers of
//!   8/4/2 filters (5x5, 4x4, 4x4), each followed by ReLU and 2x2/2 max
//!   pooling, then a dense layer to 5 neurons.
//! - 1-D branch over the length-K jump vector: 8/4/2 filters (5, 4, 4) with
//!   2/2 pooling, then dense to 5 neurons.
//! - Head: the two 5-neuron outputs concatenated, two dense layers, softmax.
//!
//! `BranchMode::TfiOnly` drops the 1-D branch (the head then sees 5 inputs);
//! it exists for ablation runs.

use crate::error::{Error, Result};
use crate::net::layers::{
    conv1d_forward, conv1d_backward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, maxpool1d_forward, maxpool2d_forward, maxpool_backward, relu, relu_backward,
    softmax,
};
use crate::net::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Time-frequency image height (frequency rows).
pub const TFI_H: usize = crate::tf::TFI_ROWS;
/// Time-frequency image width (time columns).
pub const TFI_W: usize = crate::tf::TFI_COLS;
/// Flattened TFI length.
pub const TFI_LEN: usize = TFI_H * TFI_W;
/// Branch output width fixed by the architecture.
const BRANCH_OUT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchMode {
    Fused,
    TfiOnly,
}

#[derive(Debug, Clone)]
struct ConvParams {
    w: Tensor,
    b: Tensor,
}

#[derive(Debug, Clone)]
struct DenseParams {
    w: Tensor,
    b: Tensor,
}

#[derive(Debug, Clone)]
struct PjvBranch {
    c1: ConvParams,
    c2: ConvParams,
    c3: ConvParams,
    fc: DenseParams,
}

/// Weights of the full network plus its immutable dimensions.
#[derive(Debug, Clone)]
pub struct FusionNet {
    c: usize,
    k_len: usize,
    hidden: usize,
    t_c1: ConvParams,
    t_c2: ConvParams,
    t_c3: ConvParams,
    t_fc: DenseParams,
    pjv: Option<PjvBranch>,
    h1: DenseParams,
    h2: DenseParams,
}

impl FusionNet {
    /// He-initialized network (`std = sqrt(2/fan_in)`, zero biases); the
    /// draw order is fixed, so a seed fully determines the weights.
    pub fn new(c: usize, k_len: usize, hidden: usize, mode: BranchMode, seed: u64) -> Result<Self> {
        if c < 2 {
            return Err(Error::config("class count must be at least 2"));
        }
        if k_len < 8 || k_len % 8 != 0 {
            return Err(Error::config(format!(
                "jump-vector length {k_len} must be a positive multiple of 8"
            )));
        }
        if hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = |shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng| {
            Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
        };
        let conv = |o: usize, i: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng| ConvParams {
            w: he(&[o, i, kh, kw], i * kh * kw, rng),
            b: Tensor::zeros(&[o]),
        };
        let conv1 = |o: usize, i: usize, k: usize, rng: &mut ChaCha8Rng| ConvParams {
            w: he(&[o, i, k], i * k, rng),
            b: Tensor::zeros(&[o]),
        };
        let dense = |o: usize, i: usize, rng: &mut ChaCha8Rng| DenseParams {
            w: he(&[o, i], i, rng),
            b: Tensor::zeros(&[o]),
        };

        let t_c1 = conv(8, 1, 5, 5, &mut rng);
        let t_c2 = conv(4, 8, 4, 4, &mut rng);
        let t_c3 = conv(2, 4, 4, 4, &mut rng);
        let t_fc = dense(BRANCH_OUT, 2 * (TFI_H / 8) * (TFI_W / 8), &mut rng);
        let pjv = match mode {
            BranchMode::Fused => Some(PjvBranch {
                c1: conv1(8, 1, 5, &mut rng),
                c2: conv1(4, 8, 4, &mut rng),
                c3: conv1(2, 4, 4, &mut rng),
                fc: dense(BRANCH_OUT, 2 * (k_len / 8), &mut rng),
            }),
            BranchMode::TfiOnly => None,
        };
        let fusion_in = match mode {
            BranchMode::Fused => 2 * BRANCH_OUT,
            BranchMode::TfiOnly => BRANCH_OUT,
        };
        let h1 = dense(hidden, fusion_in, &mut rng);
        let h2 = dense(c, hidden, &mut rng);
        Ok(FusionNet {
            c,
            k_len,
            hidden,
            t_c1,
            t_c2,
            t_c3,
            t_fc,
            pjv,
            h1,
            h2,
        })
    }

    pub fn class_count(&self) -> usize {
        self.c
    }

    pub fn pjv_len(&self) -> usize {
        self.k_len
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn mode(&self) -> BranchMode {
        if self.pjv.is_some() {
            BranchMode::Fused
        } else {
            BranchMode::TfiOnly
        }
    }

    /// Parameters in canonical (checkpoint/optimizer) order.
    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("tfi.conv1.w", &self.t_c1.w),
            ("tfi.conv1.b", &self.t_c1.b),
            ("tfi.conv2.w", &self.t_c2.w),
            ("tfi.conv2.b", &self.t_c2.b),
            ("tfi.conv3.w", &self.t_c3.w),
            ("tfi.conv3.b", &self.t_c3.b),
            ("tfi.fc.w", &self.t_fc.w),
            ("tfi.fc.b", &self.t_fc.b),
        ];
        if let Some(p) = &self.pjv {
            out.extend([
                ("pjv.conv1.w", &p.c1.w),
                ("pjv.conv1.b", &p.c1.b),
                ("pjv.conv2.w", &p.c2.w),
                ("pjv.conv2.b", &p.c2.b),
                ("pjv.conv3.w", &p.c3.w),
                ("pjv.conv3.b", &p.c3.b),
                ("pjv.fc.w", &p.fc.w),
                ("pjv.fc.b", &p.fc.b),
            ]);
        }
        out.extend([
            ("head.fc1.w", &self.h1.w),
            ("head.fc1.b", &self.h1.b),
            ("head.fc2.w", &self.h2.w),
            ("head.fc2.b", &self.h2.b),
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out: Vec<(&'static str, &mut Tensor)> = vec![
            ("tfi.conv1.w", &mut self.t_c1.w),
            ("tfi.conv1.b", &mut self.t_c1.b),
            ("tfi.conv2.w", &mut self.t_c2.w),
            ("tfi.conv2.b", &mut self.t_c2.b),
            ("tfi.conv3.w", &mut self.t_c3.w),
            ("tfi.conv3.b", &mut self.t_c3.b),
            ("tfi.fc.w", &mut self.t_fc.w),
            ("tfi.fc.b", &mut self.t_fc.b),
        ];
        if let Some(p) = &mut self.pjv {
            out.extend([
                ("pjv.conv1.w", &mut p.c1.w),
                ("pjv.conv1.b", &mut p.c1.b),
                ("pjv.conv2.w", &mut p.c2.w),
                ("pjv.conv2.b", &mut p.c2.b),
                ("pjv.conv3.w", &mut p.c3.w),
                ("pjv.conv3.b", &mut p.c3.b),
                ("pjv.fc.w", &mut p.fc.w),
                ("pjv.fc.b", &mut p.fc.b),
            ]);
        }
        out.extend([
            ("head.fc1.w", &mut self.h1.w),
            ("head.fc1.b", &mut self.h1.b),
            ("head.fc2.w", &mut self.h2.w),
            ("head.fc2.b", &mut self.h2.b),
        ]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self
                .params()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    /// Class probabilities for one sample.
    pub fn forward(&self, tfi: &[f64], pjv: &[f64]) -> Vec<f64> {
        let mut trace = Trace::default();
        self.forward_into(tfi, pjv, &mut trace);
        softmax(&trace.logits)
    }

    /// Forward pass reusing the caller's trace buffers; leaves all
    /// activations cached for a subsequent backward pass.
    pub fn forward_into(&self, tfi: &[f64], pjv: &[f64], tr: &mut Trace) {
        assert_eq!(tfi.len(), TFI_LEN, "TFI input shape");
        // 2-D branch.
        tr.t_pad1 = conv2d_forward(tfi, TFI_H, TFI_W, &self.t_c1.w, &self.t_c1.b, &mut tr.t_act1);
        relu(&mut tr.t_act1);
        maxpool2d_forward(&tr.t_act1, 8, TFI_H, TFI_W, &mut tr.t_pool1, &mut tr.t_arg1);
        tr.t_pad2 = conv2d_forward(
            &tr.t_pool1,
            TFI_H / 2,
            TFI_W / 2,
            &self.t_c2.w,
            &self.t_c2.b,
            &mut tr.t_act2,
        );
        relu(&mut tr.t_act2);
        maxpool2d_forward(&tr.t_act2, 4, TFI_H / 2, TFI_W / 2, &mut tr.t_pool2, &mut tr.t_arg2);
        tr.t_pad3 = conv2d_forward(
            &tr.t_pool2,
            TFI_H / 4,
            TFI_W / 4,
            &self.t_c3.w,
            &self.t_c3.b,
            &mut tr.t_act3,
        );
        relu(&mut tr.t_act3);
        maxpool2d_forward(&tr.t_act3, 2, TFI_H / 4, TFI_W / 4, &mut tr.t_pool3, &mut tr.t_arg3);
        dense_forward(&tr.t_pool3, &self.t_fc.w, &self.t_fc.b, &mut tr.t_out);
        relu(&mut tr.t_out);

        // 1-D branch.
        tr.concat.clear();
        tr.concat.extend_from_slice(&tr.t_out);
        if let Some(p) = &self.pjv {
            assert_eq!(pjv.len(), self.k_len, "jump-vector input shape");
            let k = self.k_len;
            tr.p_pad1 = conv1d_forward(pjv, k, &p.c1.w, &p.c1.b, &mut tr.p_act1);
            relu(&mut tr.p_act1);
            maxpool1d_forward(&tr.p_act1, 8, k, &mut tr.p_pool1, &mut tr.p_arg1);
            tr.p_pad2 = conv1d_forward(&tr.p_pool1, k / 2, &p.c2.w, &p.c2.b, &mut tr.p_act2);
            relu(&mut tr.p_act2);
            maxpool1d_forward(&tr.p_act2, 4, k / 2, &mut tr.p_pool2, &mut tr.p_arg2);
            tr.p_pad3 = conv1d_forward(&tr.p_pool2, k / 4, &p.c3.w, &p.c3.b, &mut tr.p_act3);
            relu(&mut tr.p_act3);
            maxpool1d_forward(&tr.p_act3, 2, k / 4, &mut tr.p_pool3, &mut tr.p_arg3);
            dense_forward(&tr.p_pool3, &p.fc.w, &p.fc.b, &mut tr.p_out);
            relu(&mut tr.p_out);
            tr.concat.extend_from_slice(&tr.p_out);
        }

        // Fusion head.
        dense_forward(&tr.concat, &self.h1.w, &self.h1.b, &mut tr.h1_out);
        relu(&mut tr.h1_out);
        dense_forward(&tr.h1_out, &self.h2.w, &self.h2.b, &mut tr.logits);
    }

    /// Backward pass for one sample: `d_logits` is the loss gradient at the
    /// output logits; gradients accumulate into `grads` (canonical order).
    /// Raw inputs are not needed again, the trace caches the padded copies.
    pub fn backward_from(
        &self,
        tr: &Trace,
        d_logits: &[f64],
        grads: &mut Grads,
        s: &mut BackScratch,
    ) {
        let g = &mut grads.tensors;
        let n_tfi = 8; // tensors in the 2-D branch
        let (head_base, pjv_base) = if self.pjv.is_some() {
            (n_tfi + 8, n_tfi)
        } else {
            (n_tfi, usize::MAX)
        };

        // Head.
        {
            let (gw, gb) = pair_mut(g, head_base + 2);
            dense_backward(&tr.h1_out, &self.h2.w, d_logits, gw, gb, Some(&mut s.d_h1));
        }
        relu_backward(&mut s.d_h1, &tr.h1_out);
        {
            let (gw, gb) = pair_mut(g, head_base);
            dense_backward(&tr.concat, &self.h1.w, &s.d_h1, gw, gb, Some(&mut s.d_concat));
        }

        // 1-D branch.
        if let Some(p) = &self.pjv {
            let k = self.k_len;
            s.d_out.clear();
            s.d_out.extend_from_slice(&s.d_concat[BRANCH_OUT..2 * BRANCH_OUT]);
            relu_backward(&mut s.d_out, &tr.p_out);
            {
                let (gw, gb) = pair_mut(g, pjv_base + 6);
                dense_backward(&tr.p_pool3, &p.fc.w, &s.d_out, gw, gb, Some(&mut s.d_flat));
            }
            maxpool_backward(&s.d_flat, &tr.p_arg3, &mut s.d_act, tr.p_act3.len());
            relu_backward(&mut s.d_act, &tr.p_act3);
            {
                let (gw, gb) = pair_mut(g, pjv_base + 4);
                conv1d_backward(&tr.p_pad3, k / 4, &p.c3.w, &s.d_act, gw, gb, Some(&mut s.d_pool));
            }
            maxpool_backward(&s.d_pool, &tr.p_arg2, &mut s.d_act, tr.p_act2.len());
            relu_backward(&mut s.d_act, &tr.p_act2);
            {
                let (gw, gb) = pair_mut(g, pjv_base + 2);
                conv1d_backward(&tr.p_pad2, k / 2, &p.c2.w, &s.d_act, gw, gb, Some(&mut s.d_pool));
            }
            maxpool_backward(&s.d_pool, &tr.p_arg1, &mut s.d_act, tr.p_act1.len());
            relu_backward(&mut s.d_act, &tr.p_act1);
            {
                let (gw, gb) = pair_mut(g, pjv_base);
                conv1d_backward(&tr.p_pad1, k, &p.c1.w, &s.d_act, gw, gb, None);
            }
        }

        // 2-D branch.
        s.d_out.clear();
        s.d_out.extend_from_slice(&s.d_concat[..BRANCH_OUT]);
        relu_backward(&mut s.d_out, &tr.t_out);
        {
            let (gw, gb) = pair_mut(g, 6);
            dense_backward(&tr.t_pool3, &self.t_fc.w, &s.d_out, gw, gb, Some(&mut s.d_flat));
        }
        maxpool_backward(&s.d_flat, &tr.t_arg3, &mut s.d_act, tr.t_act3.len());
        relu_backward(&mut s.d_act, &tr.t_act3);
        {
            let (gw, gb) = pair_mut(g, 4);
            conv2d_backward(
                &tr.t_pad3,
                TFI_H / 4,
                TFI_W / 4,
                &self.t_c3.w,
                &s.d_act,
                gw,
                gb,
                Some(&mut s.d_pool),
            );
        }
        maxpool_backward(&s.d_pool, &tr.t_arg2, &mut s.d_act, tr.t_act2.len());
        relu_backward(&mut s.d_act, &tr.t_act2);
        {
            let (gw, gb) = pair_mut(g, 2);
            conv2d_backward(
                &tr.t_pad2,
                TFI_H / 2,
                TFI_W / 2,
                &self.t_c2.w,
                &s.d_act,
                gw,
                gb,
                Some(&mut s.d_pool),
            );
        }
        maxpool_backward(&s.d_pool, &tr.t_arg1, &mut s.d_act, tr.t_act1.len());
        relu_backward(&mut s.d_act, &tr.t_act1);
        {
            let (gw, gb) = pair_mut(g, 0);
            conv2d_backward(
                &tr.t_pad1,
                TFI_H,
                TFI_W,
                &self.t_c1.w,
                &s.d_act,
                gw,
                gb,
                None,
            );
        }
    }

    /// Hash of the discrete routing state (ReLU sign patterns and pooling
    /// argmax choices) over a batch. Two parameter points with equal
    /// signatures at the ends of a single-coordinate segment bound a region
    /// where the loss is smooth, which is what finite-difference gradient
    /// probes need.
    pub fn activation_signature(&self, batch: &Batch) -> u64 {
        fn mix(h: &mut u64, v: u64) {
            *h = (*h ^ v).wrapping_mul(0x100_0000_01b3);
        }
        fn mix_signs(h: &mut u64, values: &[f64]) {
            let mut word = 0u64;
            for (i, v) in values.iter().enumerate() {
                if *v > 0.0 {
                    word |= 1 << (i % 64);
                }
                if i % 64 == 63 {
                    mix(h, word);
                    word = 0;
                }
            }
            mix(h, word);
        }
        fn mix_indices(h: &mut u64, values: &[u32]) {
            for v in values {
                mix(h, *v as u64);
            }
        }
        let mut trace = Trace::default();
        let mut sig = 0xcbf2_9ce4_8422_2325u64;
        for i in 0..batch.len() {
            self.forward_into(batch.tfi_of(i), batch.pjv_of(i), &mut trace);
            mix_signs(&mut sig, &trace.t_act1);
            mix_signs(&mut sig, &trace.t_act2);
            mix_signs(&mut sig, &trace.t_act3);
            mix_signs(&mut sig, &trace.t_out);
            mix_indices(&mut sig, &trace.t_arg1);
            mix_indices(&mut sig, &trace.t_arg2);
            mix_indices(&mut sig, &trace.t_arg3);
            if self.pjv.is_some() {
                mix_signs(&mut sig, &trace.p_act1);
                mix_signs(&mut sig, &trace.p_act2);
                mix_signs(&mut sig, &trace.p_act3);
                mix_signs(&mut sig, &trace.p_out);
                mix_indices(&mut sig, &trace.p_arg1);
                mix_indices(&mut sig, &trace.p_arg2);
                mix_indices(&mut sig, &trace.p_arg3);
            }
            mix_signs(&mut sig, &trace.h1_out);
        }
        sig
    }

    /// Mean categorical cross-entropy, correct-prediction count, and mean
    /// parameter gradients over a batch.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, usize, Grads)> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::config("empty batch"));
        }
        let mut grads = self.zero_grads();
        let mut trace = Trace::default();
        let mut scratch = BackScratch::default();
        let mut loss = 0.0;
        let mut correct = 0;
        let scale = 1.0 / n as f64;
        for i in 0..n {
            let label = batch.labels[i];
            if label >= self.c {
                return Err(Error::shape(format!(
                    "label {label} out of range for {} classes",
                    self.c
                )));
            }
            let tfi = batch.tfi_of(i);
            let pjv = batch.pjv_of(i);
            self.forward_into(tfi, pjv, &mut trace);
            let probs = softmax(&trace.logits);
            loss -= probs[label].max(1e-300).ln() * scale;
            let argmax = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if argmax == label {
                correct += 1;
            }
            let mut d_logits = probs;
            d_logits[label] -= 1.0;
            for d in &mut d_logits {
                *d *= scale;
            }
            self.backward_from(&trace, &d_logits, &mut grads, &mut scratch);
        }
        Ok((loss, correct, grads))
    }
}

fn pair_mut(g: &mut [Tensor], base: usize) -> (&mut Tensor, &mut Tensor) {
    let (a, b) = g[base..base + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Parameter gradients aligned with [`FusionNet::params`] order.
#[derive(Debug, Clone)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
}

/// Reusable forward activations of one sample.
#[derive(Debug, Default)]
pub struct Trace {
    t_pad1: Vec<f64>,
    t_act1: Vec<f64>,
    t_pool1: Vec<f64>,
    t_arg1: Vec<u32>,
    t_pad2: Vec<f64>,
    t_act2: Vec<f64>,
    t_pool2: Vec<f64>,
    t_arg2: Vec<u32>,
    t_pad3: Vec<f64>,
    t_act3: Vec<f64>,
    t_pool3: Vec<f64>,
    t_arg3: Vec<u32>,
    t_out: Vec<f64>,
    p_pad1: Vec<f64>,
    p_act1: Vec<f64>,
    p_pool1: Vec<f64>,
    p_arg1: Vec<u32>,
    p_pad2: Vec<f64>,
    p_act2: Vec<f64>,
    p_pool2: Vec<f64>,
    p_arg2: Vec<u32>,
    p_pad3: Vec<f64>,
    p_act3: Vec<f64>,
    p_pool3: Vec<f64>,
    p_arg3: Vec<u32>,
    p_out: Vec<f64>,
    concat: Vec<f64>,
    h1_out: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Reusable backward-pass scratch buffers.
#[derive(Debug, Default)]
pub struct BackScratch {
    d_h1: Vec<f64>,
    d_concat: Vec<f64>,
    d_out: Vec<f64>,
    d_flat: Vec<f64>,
    d_act: Vec<f64>,
    d_pool: Vec<f64>,
}

/// A batch of training inputs in dense row-major buffers.
#[derive(Debug, Default, Clone)]
pub struct Batch {
    pub tfis: Vec<f64>,
    pub pjvs: Vec<f64>,
    pub labels: Vec<usize>,
    pub k_len: usize,
}

impl Batch {
    pub fn with_k(k_len: usize) -> Self {
        Batch {
            k_len,
            ..Batch::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn clear(&mut self) {
        self.tfis.clear();
        self.pjvs.clear();
        self.labels.clear();
    }

    pub fn tfi_of(&self, i: usize) -> &[f64] {
        &self.tfis[i * TFI_LEN..(i + 1) * TFI_LEN]
    }

    pub fn pjv_of(&self, i: usize) -> &[f64] {
        &self.pjvs[i * self.k_len..(i + 1) * self.k_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_inputs(seed: u64, k_len: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tfi: Vec<f64> = (0..TFI_LEN).map(|_| rng.gen::<f64>()).collect();
        let pjv: Vec<f64> = (0..k_len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        (tfi, pjv)
    }

    #[test]
    fn parameter_counts_are_exact() {
        // Layer-by-layer audit of the fixed architecture.
        let net = FusionNet::new(7, 256, 32, BranchMode::Fused, 1).unwrap();
        let by_name: std::collections::HashMap<_, _> = net
            .params()
            .iter()
            .map(|(n, t)| (*n, t.numel()))
            .collect();
        assert_eq!(by_name["tfi.conv1.w"] + by_name["tfi.conv1.b"], 208);
        assert_eq!(by_name["tfi.conv2.w"] + by_name["tfi.conv2.b"], 516);
        assert_eq!(by_name["tfi.conv3.w"] + by_name["tfi.conv3.b"], 130);
        assert_eq!(by_name["tfi.fc.w"] + by_name["tfi.fc.b"], 1024 * 5 + 5);
        assert_eq!(by_name["pjv.conv1.w"] + by_name["pjv.conv1.b"], 48);
        assert_eq!(by_name["pjv.conv2.w"] + by_name["pjv.conv2.b"], 132);
        assert_eq!(by_name["pjv.conv3.w"] + by_name["pjv.conv3.b"], 34);
        assert_eq!(by_name["pjv.fc.w"] + by_name["pjv.fc.b"], 64 * 5 + 5);
        assert_eq!(by_name["head.fc1.w"] + by_name["head.fc1.b"], 10 * 32 + 32);
        assert_eq!(by_name["head.fc2.w"] + by_name["head.fc2.b"], 32 * 7 + 7);
        assert_eq!(net.n_params(), 7101);

        let net23 = FusionNet::new(23, 256, 32, BranchMode::Fused, 1).unwrap();
        assert_eq!(net23.n_params(), 6870 + 32 * 23 + 23);
    }

    #[test]
    fn architecture_decreases_channels_and_sizes() {
        let net = FusionNet::new(7, 256, 32, BranchMode::Fused, 2).unwrap();
        // Channel counts 8 -> 4 -> 2 with kernel sizes 5x5, 4x4, 4x4.
        assert_eq!(net.t_c1.w.shape(), &[8, 1, 5, 5]);
        assert_eq!(net.t_c2.w.shape(), &[4, 8, 4, 4]);
        assert_eq!(net.t_c3.w.shape(), &[2, 4, 4, 4]);
        let p = net.pjv.as_ref().unwrap();
        assert_eq!(p.c1.w.shape(), &[8, 1, 5]);
        assert_eq!(p.c2.w.shape(), &[4, 8, 4]);
        assert_eq!(p.c3.w.shape(), &[2, 4, 4]);
        // Branch outputs are 5 + 5 into the head.
        assert_eq!(net.t_fc.w.shape(), &[5, 1024]);
        assert_eq!(p.fc.w.shape(), &[5, 64]);
        assert_eq!(net.h1.w.shape(), &[32, 10]);
        assert_eq!(net.h2.w.shape(), &[7, 32]);
    }

    #[test]
    fn forward_is_a_probability_simplex_point() {
        let net = FusionNet::new(7, 256, 32, BranchMode::Fused, 3).unwrap();
        let (tfi, pjv) = random_inputs(4, 256);
        let p = net.forward(&tfi, &pjv);
        assert_eq!(p.len(), 7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v >= 0.0));
        // Bit-identical on repeat.
        assert_eq!(p, net.forward(&tfi, &pjv));
    }

    #[test]
    fn zeroed_head_gives_uniform_probabilities() {
        let mut net = FusionNet::new(7, 256, 32, BranchMode::Fused, 5).unwrap();
        for (name, t) in net.params_mut() {
            if name.starts_with("head.fc2") {
                t.fill(0.0);
            }
        }
        let (tfi, pjv) = random_inputs(6, 256);
        let p = net.forward(&tfi, &pjv);
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    fn single_batch(net: &FusionNet, seed: u64, n: usize) -> Batch {
        let mut batch = Batch::with_k(net.pjv_len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n {
            let (tfi, pjv) = random_inputs(seed + 100 + i as u64, net.pjv_len());
            batch.tfis.extend_from_slice(&tfi);
            batch.pjvs.extend_from_slice(&pjv);
            batch.labels.push(rng.gen_range(0..net.class_count()));
        }
        batch
    }

    #[test]
    fn uniform_model_loss_is_ln_c() {
        let mut net = FusionNet::new(7, 256, 32, BranchMode::Fused, 7).unwrap();
        for (name, t) in net.params_mut() {
            if name.starts_with("head.fc2") {
                t.fill(0.0);
            }
        }
        let batch = single_batch(&net, 8, 4);
        let (loss, _, _) = net.loss_and_grads(&batch).unwrap();
        assert!((loss - (7.0f64).ln()).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn confident_correct_model_has_tiny_loss() {
        let mut net = FusionNet::new(7, 256, 32, BranchMode::Fused, 9).unwrap();
        // Rig the output layer: huge bias on class 2, nothing else.
        for (name, t) in net.params_mut() {
            if name == "head.fc2.w" {
                t.fill(0.0);
            }
            if name == "head.fc2.b" {
                t.fill(-50.0);
                t.as_mut_slice()[2] = 50.0;
            }
        }
        let mut batch = single_batch(&net, 10, 3);
        batch.labels = vec![2, 2, 2];
        let (loss, correct, _) = net.loss_and_grads(&batch).unwrap();
        assert!(loss <= 1e-6, "loss {loss}");
        assert_eq!(correct, 3);
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let net = FusionNet::new(7, 256, 32, BranchMode::Fused, 11).unwrap();
        let mut batch = single_batch(&net, 12, 1);
        batch.labels = vec![7];
        assert!(net.loss_and_grads(&batch).is_err());
    }

    #[test]
    fn batch_gradients_are_deterministic() {
        let net = FusionNet::new(7, 256, 32, BranchMode::Fused, 13).unwrap();
        let batch = single_batch(&net, 14, 3);
        let (l1, c1, g1) = net.loss_and_grads(&batch).unwrap();
        let (l2, c2, g2) = net.loss_and_grads(&batch).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(c1, c2);
        for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    /// End-to-end wiring check: seeded parameter sample across every tensor,
    /// 2-sample batch, central differences (non-smooth points skipped).
    #[test]
    fn sampled_end_to_end_gradient_check() {
        use crate::net::gradcheck::GradCheck;
        for mode in [BranchMode::Fused, BranchMode::TfiOnly] {
            let net = FusionNet::new(5, 256, 32, mode, 15).unwrap();
            let batch = single_batch(&net, 16, 2);
            let report = GradCheck::default()
                .check_sampled(&net, &batch, 2, 99)
                .unwrap();
            assert!(report.checked > 0);
            assert!(report.max_rel_err < 1e-4, "max rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn tfi_only_mode_has_no_pjv_parameters() {
        let net = FusionNet::new(7, 256, 32, BranchMode::TfiOnly, 17).unwrap();
        assert!(net.params().iter().all(|(n, _)| !n.starts_with("pjv")));
        assert_eq!(net.mode(), BranchMode::TfiOnly);
        assert_eq!(net.h1.w.shape(), &[32, 5]);
        let (tfi, pjv) = random_inputs(18, 256);
        let p = net.forward(&tfi, &pjv);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
