//! Layer primitives with hand-written forward/backward passes.
//!
//! Convolutions use cross-correlation semantics with SAME padding (output
//! spatial size equals input size); for even kernels the padding splits as
//! `floor((k-1)/2)` before and the remainder after. Max pooling truncates an
//! odd trailing edge and breaks ties toward the lowest index so gradient
//! routing is deterministic.

use crate::net::tensor::Tensor;

pub fn same_padding(k: usize) -> (usize, usize) {
    let before = (k - 1) / 2;
    (before, k - 1 - before)
}

/// Zero-pad a `[C, H, W]` volume for SAME convolution with a `kh x kw`
/// kernel. Returns the padded buffer and its spatial dims.
fn pad_2d(input: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> (Vec<f64>, usize, usize) {
    let (pt, _pb) = same_padding(kh);
    let (pl, _pr) = same_padding(kw);
    let ph = h + kh - 1;
    let pw = w + kw - 1;
    let mut out = vec![0.0; c * ph * pw];
    for ci in 0..c {
        for y in 0..h {
            let src = &input[(ci * h + y) * w..(ci * h + y + 1) * w];
            let dst_off = (ci * ph + y + pt) * pw + pl;
            out[dst_off..dst_off + w].copy_from_slice(src);
        }
    }
    (out, ph, pw)
}

/// 2-D convolution forward. `input` is `[in_c, h, w]`, `weights`
/// `[out_c, in_c, kh, kw]`, output `[out_c, h, w]`. Returns the padded
/// input for reuse in the backward pass.
pub fn conv2d_forward(
    input: &[f64],
    h: usize,
    w: usize,
    weights: &Tensor,
    bias: &Tensor,
    out: &mut Vec<f64>,
) -> Vec<f64> {
    let [out_c, in_c, kh, kw]: [usize; 4] = weights.shape().try_into().expect("conv2d weights rank");
    assert_eq!(input.len(), in_c * h * w, "conv2d input shape");
    assert_eq!(bias.numel(), out_c);
    let (padded, ph, pw) = pad_2d(input, in_c, h, w, kh, kw);
    out.clear();
    out.resize(out_c * h * w, 0.0);
    let wv = weights.as_slice();
    let bv = bias.as_slice();
    for o in 0..out_c {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bv[o]);
        for i in 0..in_c {
            let ppl = &padded[i * ph * pw..(i + 1) * ph * pw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wt = wv[((o * in_c + i) * kh + ky) * kw + kx];
                    for y in 0..h {
                        let prow = &ppl[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let orow = &mut plane[y * w..(y + 1) * w];
                        for x in 0..w {
                            orow[x] += wt * prow[x];
                        }
                    }
                }
            }
        }
    }
    padded
}

/// 2-D convolution backward. Accumulates weight/bias gradients and, unless
/// the layer is first in the stack, writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    padded: &[f64],
    h: usize,
    w: usize,
    weights: &Tensor,
    grad_out: &[f64],
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
    grad_input: Option<&mut Vec<f64>>,
) {
    let [out_c, in_c, kh, kw]: [usize; 4] = weights.shape().try_into().expect("conv2d weights rank");
    let ph = h + kh - 1;
    let pw = w + kw - 1;
    assert_eq!(grad_out.len(), out_c * h * w);
    let gw = grad_w.as_mut_slice();
    let gb = grad_b.as_mut_slice();
    for o in 0..out_c {
        let gpl = &grad_out[o * h * w..(o + 1) * h * w];
        gb[o] += gpl.iter().sum::<f64>();
        for i in 0..in_c {
            let ppl = &padded[i * ph * pw..(i + 1) * ph * pw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let prow = &ppl[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let grow = &gpl[y * w..(y + 1) * w];
                        for x in 0..w {
                            acc += prow[x] * grow[x];
                        }
                    }
                    gw[((o * in_c + i) * kh + ky) * kw + kx] += acc;
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        let wv = weights.as_slice();
        let mut gpad = vec![0.0; in_c * ph * pw];
        for o in 0..out_c {
            let gpl = &grad_out[o * h * w..(o + 1) * h * w];
            for i in 0..in_c {
                let dst = &mut gpad[i * ph * pw..(i + 1) * ph * pw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wt = wv[((o * in_c + i) * kh + ky) * kw + kx];
                        for y in 0..h {
                            let drow = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            let grow = &gpl[y * w..(y + 1) * w];
                            for x in 0..w {
                                drow[x] += wt * grow[x];
                            }
                        }
                    }
                }
            }
        }
        // Crop the padding off.
        let (pt, _) = same_padding(kh);
        let (pl, _) = same_padding(kw);
        gi.clear();
        gi.resize(in_c * h * w, 0.0);
        for i in 0..in_c {
            for y in 0..h {
                let src = (i * ph + y + pt) * pw + pl;
                let dst = (i * h + y) * w;
                gi[dst..dst + w].copy_from_slice(&gpad[src..src + w]);
            }
        }
    }
}

/// 1-D convolution forward over `[in_c, w]`; weights `[out_c, in_c, k]`.
pub fn conv1d_forward(
    input: &[f64],
    w: usize,
    weights: &Tensor,
    bias: &Tensor,
    out: &mut Vec<f64>,
) -> Vec<f64> {
    let [out_c, in_c, k]: [usize; 3] = weights.shape().try_into().expect("conv1d weights rank");
    assert_eq!(input.len(), in_c * w, "conv1d input shape");
    let (pl, _) = same_padding(k);
    let pw = w + k - 1;
    let mut padded = vec![0.0; in_c * pw];
    for i in 0..in_c {
        padded[i * pw + pl..i * pw + pl + w].copy_from_slice(&input[i * w..(i + 1) * w]);
    }
    out.clear();
    out.resize(out_c * w, 0.0);
    let wv = weights.as_slice();
    for o in 0..out_c {
        let row = &mut out[o * w..(o + 1) * w];
        row.fill(bias.as_slice()[o]);
        for i in 0..in_c {
            let prow = &padded[i * pw..(i + 1) * pw];
            for kx in 0..k {
                let wt = wv[(o * in_c + i) * k + kx];
                for x in 0..w {
                    row[x] += wt * prow[x + kx];
                }
            }
        }
    }
    padded
}

pub fn conv1d_backward(
    padded: &[f64],
    w: usize,
    weights: &Tensor,
    grad_out: &[f64],
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
    grad_input: Option<&mut Vec<f64>>,
) {
    let [out_c, in_c, k]: [usize; 3] = weights.shape().try_into().expect("conv1d weights rank");
    let pw = w + k - 1;
    let gw = grad_w.as_mut_slice();
    let gb = grad_b.as_mut_slice();
    for o in 0..out_c {
        let grow = &grad_out[o * w..(o + 1) * w];
        gb[o] += grow.iter().sum::<f64>();
        for i in 0..in_c {
            let prow = &padded[i * pw..(i + 1) * pw];
            for kx in 0..k {
                let mut acc = 0.0;
                for x in 0..w {
                    acc += prow[x + kx] * grow[x];
                }
                gw[(o * in_c + i) * k + kx] += acc;
            }
        }
    }
    if let Some(gi) = grad_input {
        let wv = weights.as_slice();
        let mut gpad = vec![0.0; in_c * pw];
        for o in 0..out_c {
            let grow = &grad_out[o * w..(o + 1) * w];
            for i in 0..in_c {
                let drow = &mut gpad[i * pw..(i + 1) * pw];
                for kx in 0..k {
                    let wt = wv[(o * in_c + i) * k + kx];
                    for x in 0..w {
                        drow[x + kx] += wt * grow[x];
                    }
                }
            }
        }
        let (pl, _) = same_padding(k);
        gi.clear();
        gi.resize(in_c * w, 0.0);
        for i in 0..in_c {
            gi[i * w..(i + 1) * w].copy_from_slice(&gpad[i * pw + pl..i * pw + pl + w]);
        }
    }
}

/// 2x2 stride-2 max pooling over `[c, h, w]`; records flat argmax indices
/// for the backward pass. First maximum wins on ties.
pub fn maxpool2d_forward(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    out: &mut Vec<f64>,
    argmax: &mut Vec<u32>,
) -> (usize, usize) {
    let oh = h / 2;
    let ow = w / 2;
    out.clear();
    argmax.clear();
    out.reserve(c * oh * ow);
    argmax.reserve(c * oh * ow);
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let base = (2 * y) * w + 2 * x;
                let cands = [base, base + 1, base + w, base + w + 1];
                let mut best = cands[0];
                for &cand in &cands[1..] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                out.push(plane[best]);
                argmax.push((ci * h * w + best) as u32);
            }
        }
    }
    (oh, ow)
}

pub fn maxpool_backward(grad_out: &[f64], argmax: &[u32], grad_input: &mut Vec<f64>, input_len: usize) {
    grad_input.clear();
    grad_input.resize(input_len, 0.0);
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        grad_input[idx as usize] += g;
    }
}

/// Size-2 stride-2 max pooling over `[c, w]`.
pub fn maxpool1d_forward(
    input: &[f64],
    c: usize,
    w: usize,
    out: &mut Vec<f64>,
    argmax: &mut Vec<u32>,
) -> usize {
    let ow = w / 2;
    out.clear();
    argmax.clear();
    for ci in 0..c {
        let row = &input[ci * w..(ci + 1) * w];
        for x in 0..ow {
            let a = 2 * x;
            let best = if row[a + 1] > row[a] { a + 1 } else { a };
            out.push(row[best]);
            argmax.push((ci * w + best) as u32);
        }
    }
    ow
}

/// Dense layer forward: `out = W in + b` with `W` of shape `[out, in]`.
pub fn dense_forward(input: &[f64], weights: &Tensor, bias: &Tensor, out: &mut Vec<f64>) {
    let [n_out, n_in]: [usize; 2] = weights.shape().try_into().expect("dense weights rank");
    assert_eq!(input.len(), n_in, "dense input shape");
    let wv = weights.as_slice();
    out.clear();
    out.reserve(n_out);
    for o in 0..n_out {
        let row = &wv[o * n_in..(o + 1) * n_in];
        let mut acc = bias.as_slice()[o];
        for (a, b) in row.iter().zip(input) {
            acc += a * b;
        }
        out.push(acc);
    }
}

pub fn dense_backward(
    input: &[f64],
    weights: &Tensor,
    grad_out: &[f64],
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
    grad_input: Option<&mut Vec<f64>>,
) {
    let [n_out, n_in]: [usize; 2] = weights.shape().try_into().expect("dense weights rank");
    let gw = grad_w.as_mut_slice();
    let gb = grad_b.as_mut_slice();
    for o in 0..n_out {
        gb[o] += grad_out[o];
        let row = &mut gw[o * n_in..(o + 1) * n_in];
        let g = grad_out[o];
        for (r, &x) in row.iter_mut().zip(input) {
            *r += g * x;
        }
    }
    if let Some(gi) = grad_input {
        gi.clear();
        gi.resize(n_in, 0.0);
        let wv = weights.as_slice();
        for o in 0..n_out {
            let row = &wv[o * n_in..(o + 1) * n_in];
            let g = grad_out[o];
            for (d, &wt) in gi.iter_mut().zip(row) {
                *d += g * wt;
            }
        }
    }
}

pub fn relu(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Mask `grad` by the ReLU activation pattern (`activated` holds post-ReLU
/// values).
pub fn relu_backward(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
