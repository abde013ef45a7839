//! Central finite-difference verification of the analytic gradients.
//!
//! ReLU and max pooling make the loss piecewise smooth; a finite-difference
//! probe that straddles a kink measures a subgradient mixture and cannot
//! match the analytic value at any tolerance. Every pre-activation is an
//! affine function of a single perturbed coordinate, so if the discrete
//! routing state (ReLU signs, pooling argmax) is identical at both probe
//! ends, the loss is smooth on the whole segment; only such coordinates are
//! compared, the rest are reported as skipped.

use crate::error::{Error, Result};
use crate::net::model::{Batch, FusionNet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Central-difference step.
    pub h: f64,
    /// Maximum allowed relative error on smooth points.
    pub tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_nonsmooth: usize,
    pub max_rel_err: f64,
}

fn loss_of(model: &FusionNet, batch: &Batch) -> Result<f64> {
    let (loss, _, _) = model.loss_and_grads(batch)?;
    Ok(loss)
}

impl GradCheck {
    /// Check one parameter coordinate. `Ok(None)` means the segment crossed
    /// a ReLU/pooling boundary and was skipped; otherwise the relative error
    /// is returned.
    pub fn check_coord(
        &self,
        model: &FusionNet,
        batch: &Batch,
        tensor_idx: usize,
        coord: usize,
        analytic: f64,
    ) -> Result<Option<f64>> {
        let mut plus = model.clone();
        plus.params_mut()[tensor_idx].1.as_mut_slice()[coord] += self.h;
        let mut minus = model.clone();
        minus.params_mut()[tensor_idx].1.as_mut_slice()[coord] -= self.h;
        if plus.activation_signature(batch) != minus.activation_signature(batch) {
            return Ok(None);
        }
        let fd = (loss_of(&plus, batch)? - loss_of(&minus, batch)?) / (2.0 * self.h);
        let denom = analytic.abs().max(fd.abs());
        if denom < 1e-10 {
            return Ok(Some(0.0));
        }
        Ok(Some((analytic - fd).abs() / denom))
    }

    /// Check `per_tensor` seeded random coordinates of every parameter
    /// tensor. Fails fast on the first smooth point whose relative error
    /// exceeds `tol`.
    pub fn check_sampled(
        &self,
        model: &FusionNet,
        batch: &Batch,
        per_tensor: usize,
        seed: u64,
    ) -> Result<GradCheckReport> {
        let (_, _, grads) = model.loss_and_grads(batch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = GradCheckReport::default();
        let n_tensors = model.params().len();
        for ti in 0..n_tensors {
            let (name, tensor) = (model.params()[ti].0, model.params()[ti].1);
            let numel = tensor.numel();
            let n_checks = per_tensor.min(numel);
            for _ in 0..n_checks {
                let coord = rng.gen_range(0..numel);
                let analytic = grads.tensors[ti].as_slice()[coord];
                match self.check_coord(model, batch, ti, coord, analytic)? {
                    None => report.skipped_nonsmooth += 1,
                    Some(rel) => {
                        report.checked += 1;
                        report.max_rel_err = report.max_rel_err.max(rel);
                        if rel >= self.tol {
                            return Err(Error::shape(format!(
                                "gradient mismatch at {name}[{coord}]: relative error {rel:.3e}"
                            )));
                        }
                    }
                }
            }
        }
        if report.checked == 0 {
            return Err(Error::shape("no smooth points found for gradient check"));
        }
        Ok(report)
    }
}
