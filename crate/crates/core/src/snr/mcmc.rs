//! Affine-invariant ensemble sampling over trajectory position
//! uncertainty, and the window refinement built on it.
//!
//! The walker state is the concatenated per-bin source position. Priors
//! are Gaussians centered on the best-fit trajectory with the Kalman
//! position variances; the likelihood is the Poisson model with the flux
//! and backgrounds frozen from the best fit. Walkers update in two half
//! ensembles with one RNG stream per walker, so results are deterministic
//! under the seed regardless of evaluation order.

use super::{optimize_array, optimize_window, OptimalWindow, Segment, SegmentSeries};
use crate::attribution::{geometry_factor, EncounterWindow, TrackModel};
use crate::error::{Error, Result};
use crate::response::{DetectorArrayGeometry, ResponseTable};
use crate::stats::poisson_neg_log_like;
use crate::types::NUM_DETECTORS;
use crate::util::{seed_stream, seed_stream_indexed};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Ensemble-sampler configuration.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub walkers: usize,
    pub iterations: usize,
    /// Leading iterations discarded while walkers spread from the
    /// initial guess.
    pub burn_in: usize,
    /// Stretch-move scale parameter.
    pub stretch_a: f64,
    /// Random subset of kept samples evaluated for windows.
    pub subset: usize,
    /// Cap on the number of trajectory control bins (walker dimension is
    /// three times this).
    pub max_control_bins: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            walkers: 600,
            iterations: 400,
            burn_in: 100,
            stretch_a: 2.0,
            subset: 1000,
            max_control_bins: 30,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.walkers < 2 * dim.max(1) {
            return Err(Error::validation(format!(
                "{} walkers < twice the dimension {dim}",
                self.walkers
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::validation("burn-in must be below iterations"));
        }
        if self.stretch_a <= 1.0 {
            return Err(Error::validation("stretch parameter must exceed 1"));
        }
        Ok(())
    }
}

/// Run the stretch-move ensemble sampler. `init` holds one starting
/// position per walker. `visit` is called for every walker at every
/// iteration with `(iteration, walker, position, log_prob)`.
pub fn sample_ensemble<F, V>(
    log_prob: F,
    init: Vec<Vec<f64>>,
    iterations: usize,
    stretch_a: f64,
    seed: u64,
    mut visit: V,
) where
    F: Fn(&[f64]) -> f64,
    V: FnMut(usize, usize, &[f64], f64),
{
    let n_walkers = init.len();
    assert!(n_walkers >= 4, "ensemble needs at least four walkers");
    let dim = init[0].len();
    let half = n_walkers / 2;

    let mut rngs: Vec<_> = (0..n_walkers)
        .map(|k| seed_stream_indexed(seed, "walker", k as u64))
        .collect();
    let mut positions = init;
    let mut log_probs: Vec<f64> = positions.iter().map(|p| log_prob(p)).collect();
    let mut proposal = vec![0.0; dim];

    for iter in 0..iterations {
        for (lo, hi, other_lo, other_hi) in [(0, half, half, n_walkers), (half, n_walkers, 0, half)]
        {
            for k in lo..hi {
                let rng = &mut rngs[k];
                let u: f64 = rng.gen();
                let z = ((stretch_a - 1.0) * u + 1.0).powi(2) / stretch_a;
                let partner = rng.gen_range(other_lo..other_hi);
                for j in 0..dim {
                    let c = positions[partner][j];
                    proposal[j] = c + z * (positions[k][j] - c);
                }
                let lp_new = log_prob(&proposal);
                let ln_accept = (dim as f64 - 1.0) * z.ln() + lp_new - log_probs[k];
                let accept = ln_accept >= 0.0 || rng.gen::<f64>().ln() < ln_accept;
                if accept {
                    positions[k].copy_from_slice(&proposal);
                    log_probs[k] = lp_new;
                }
            }
        }
        for k in 0..n_walkers {
            visit(iter, k, &positions[k], log_probs[k]);
        }
    }
}

/// Outcome of the MCMC window refinement.
#[derive(Debug, Clone)]
pub struct RefineResult {
    /// Per-detector optimal configuration from the chosen sample.
    pub window: OptimalWindow,
    /// Summed-array optimal window bins from its own chosen sample.
    pub summed_bins: Vec<usize>,
    pub summed_duration: f64,
    /// Negative log-likelihood of the chosen optimal-configuration sample.
    pub chosen_nll: f64,
    /// Walker dimension (three coordinates per control bin).
    pub dim: usize,
    /// Kept samples after burn-in.
    pub kept_samples: usize,
}

struct Interp {
    /// For each covered bin: (left control index, fraction toward right).
    weights: Vec<(usize, f64)>,
}

impl Interp {
    fn position(&self, covered_idx: usize, theta: &[f64]) -> Vector3<f64> {
        let (j, frac) = self.weights[covered_idx];
        let n_ctrl = theta.len() / 3;
        let right = (j + 1).min(n_ctrl - 1);
        let a = Vector3::new(theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]);
        let b = Vector3::new(theta[3 * right], theta[3 * right + 1], theta[3 * right + 2]);
        a * (1.0 - frac) + b * frac
    }
}

/// Refine the integration windows of a fitted track by sampling its
/// position uncertainty. Flux and backgrounds stay frozen at the best
/// fit. Returns the per-detector optimal configuration chosen by the
/// largest-total-duration rule (ties to the lowest negative
/// log-likelihood, then the earliest sample) and the summed-array window
/// selected the same way.
pub fn mcmc_refine(
    model: &TrackModel,
    window: &EncounterWindow,
    alpha: f64,
    backgrounds: &[f64],
    response: &ResponseTable,
    geometry: &DetectorArrayGeometry,
    config: &McmcConfig,
) -> Result<RefineResult> {
    let covered: Vec<usize> = (0..window.n_bins())
        .filter(|&i| model.covered[i] && model.positions[i].is_some())
        .collect();
    if covered.is_empty() {
        return Err(Error::validation(
            "track covers no bins inside the analysis span",
        ));
    }

    // Control bins: an even subsample of the covered bins.
    let n_ctrl = covered.len().min(config.max_control_bins);
    let control: Vec<usize> = (0..n_ctrl)
        .map(|j| covered[j * (covered.len() - 1) / (n_ctrl - 1).max(1)])
        .collect();
    let dim = 3 * n_ctrl;
    config.validate(dim)?;

    // Gaussian priors per control bin from the track position variance.
    let mu: Vec<Vector3<f64>> = control
        .iter()
        .map(|&i| model.positions[i].unwrap())
        .collect();
    let sigma: Vec<Vector3<f64>> = control
        .iter()
        .map(|&i| {
            let var = model.pos_var[i].unwrap_or_else(|| Vector3::new(1e-4, 1e-4, 1e-4));
            Vector3::new(
                var.x.max(1e-8).sqrt(),
                var.y.max(1e-8).sqrt(),
                var.z.max(1e-8).sqrt(),
            )
        })
        .collect();

    // Interpolation weights from control bins to every covered bin.
    let interp = Interp {
        weights: covered
            .iter()
            .map(|&i| {
                let pos = control.partition_point(|&c| c <= i);
                if pos == 0 {
                    (0, 0.0)
                } else if pos >= n_ctrl {
                    (n_ctrl - 1, 0.0)
                } else {
                    let (lo, hi) = (control[pos - 1], control[pos]);
                    (pos - 1, (i - lo) as f64 / (hi - lo).max(1) as f64)
                }
            })
            .collect(),
    };

    // Constant likelihood terms from bins the trajectory cannot affect.
    let mut const_nll = 0.0;
    for d in 0..NUM_DETECTORS {
        for i in 0..window.n_bins() {
            if !model.covered[i] {
                let lam = backgrounds[d] * window.dt;
                const_nll += poisson_neg_log_like(&[window.counts[d][i]], &[lam]);
            }
        }
    }

    let weights_for = |theta: &[f64]| -> Vec<Vec<f64>> {
        (0..NUM_DETECTORS)
            .map(|d| {
                covered
                    .iter()
                    .enumerate()
                    .map(|(ci, &bin)| {
                        let pos = interp.position(ci, theta);
                        let (plat, yaw) = model.platform[bin];
                        geometry_factor(
                            geometry,
                            response,
                            d,
                            &plat,
                            yaw,
                            &pos,
                            model.transmission[d][bin],
                        )
                    })
                    .collect()
            })
            .collect()
    };

    let nll_for = |w: &[Vec<f64>]| -> f64 {
        let mut nll = const_nll;
        for d in 0..NUM_DETECTORS {
            for (ci, &bin) in covered.iter().enumerate() {
                let lam = (alpha * w[d][ci] + backgrounds[d]) * window.dt;
                let x = window.counts[d][bin];
                nll += if x > 0.0 {
                    lam - x * lam.ln() + statrs::function::gamma::ln_gamma(x + 1.0)
                } else {
                    lam
                };
            }
        }
        nll
    };

    let log_prob = |theta: &[f64]| -> f64 {
        let mut lp = 0.0;
        for (j, (m, s)) in mu.iter().zip(&sigma).enumerate() {
            for axis in 0..3 {
                let z = (theta[3 * j + axis] - m[axis]) / s[axis];
                lp -= 0.5 * z * z;
            }
        }
        lp - nll_for(&weights_for(theta))
    };

    // Walkers start in a tight ball around the best-fit trajectory.
    let mut init_rng = seed_stream(config.seed, "mcmc-init");
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let init: Vec<Vec<f64>> = (0..config.walkers)
        .map(|_| {
            let mut theta = Vec::with_capacity(dim);
            for (m, s) in mu.iter().zip(&sigma) {
                for axis in 0..3 {
                    theta.push(m[axis] + 0.1 * s[axis] * gauss.sample(&mut init_rng));
                }
            }
            theta
        })
        .collect();

    // Uniform reservoir subsample of the kept samples.
    let mut reservoir: Vec<Vec<f64>> = Vec::with_capacity(config.subset);
    let mut subset_rng = seed_stream(config.seed, "mcmc-subset");
    let mut kept: usize = 0;
    sample_ensemble(
        log_prob,
        init,
        config.iterations,
        config.stretch_a,
        config.seed,
        |iter, _walker, theta, _lp| {
            if iter < config.burn_in {
                return;
            }
            kept += 1;
            if reservoir.len() < config.subset {
                reservoir.push(theta.to_vec());
            } else {
                let j = subset_rng.gen_range(0..kept);
                if j < config.subset {
                    reservoir[j] = theta.to_vec();
                }
            }
        },
    );

    // Evaluate both window constructions per subset sample and apply the
    // selection rule: largest duration, then lowest nll, then first.
    let mut best_config: Option<(f64, f64, usize, OptimalWindow)> = None;
    let mut best_summed: Option<(f64, f64, usize, Vec<usize>)> = None;
    for (idx, theta) in reservoir.iter().enumerate() {
        let w = weights_for(theta);
        let nll = nll_for(&w);
        let per_det: Vec<SegmentSeries> = (0..NUM_DETECTORS)
            .map(|d| SegmentSeries {
                detector: d,
                segments: covered
                    .iter()
                    .enumerate()
                    .map(|(ci, &bin)| Segment {
                        bin,
                        dt: window.dt,
                        w: w[d][ci],
                    })
                    .collect(),
            })
            .collect();
        let opt = optimize_array(&per_det);
        let replace = match &best_config {
            Some((dur, best_nll, _, _)) => {
                opt.total_duration > *dur || (opt.total_duration == *dur && nll < *best_nll)
            }
            None => true,
        };
        if replace {
            best_config = Some((opt.total_duration, nll, idx, opt));
        }

        let summed = SegmentSeries {
            detector: 0,
            segments: covered
                .iter()
                .enumerate()
                .map(|(ci, &bin)| Segment {
                    bin,
                    dt: window.dt,
                    w: (0..NUM_DETECTORS).map(|d| w[d][ci]).sum(),
                })
                .collect(),
        };
        let (sel, _) = optimize_window(&summed);
        let bins: Vec<usize> = sel.iter().map(|&s| summed.segments[s].bin).collect();
        let dur = bins.len() as f64 * window.dt;
        let replace = match &best_summed {
            Some((best_dur, best_nll, _, _)) => {
                dur > *best_dur || (dur == *best_dur && nll < *best_nll)
            }
            None => true,
        };
        if replace {
            best_summed = Some((dur, nll, idx, bins));
        }
    }

    let (_, chosen_nll, _, window_out) =
        best_config.ok_or_else(|| Error::numerical("empty MCMC subset"))?;
    let (summed_duration, _, _, summed_bins) =
        best_summed.ok_or_else(|| Error::numerical("empty MCMC subset"))?;
    Ok(RefineResult {
        window: window_out,
        summed_bins,
        summed_duration,
        chosen_nll,
        dim,
        kept_samples: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sampler validation on a known 3-D Gaussian target.
    #[test]
    fn gaussian_target_moments() {
        let variances = [1.0, 4.0, 9.0];
        let log_prob = |theta: &[f64]| -> f64 {
            -0.5 * theta
                .iter()
                .zip(&variances)
                .map(|(&x, &v)| x * x / v)
                .sum::<f64>()
        };
        let n_walkers = 100;
        let mut init_rng = seed_stream(1, "test-init");
        let init: Vec<Vec<f64>> = (0..n_walkers)
            .map(|_| (0..3).map(|_| init_rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let mut sums = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut n = 0.0;
        sample_ensemble(log_prob, init, 600, 2.0, 9, |iter, _, theta, _| {
            if iter < 100 {
                return;
            }
            for a in 0..3 {
                sums[a] += theta[a];
                sq[a] += theta[a] * theta[a];
            }
            n += 1.0;
        });
        for a in 0..3 {
            let mean = sums[a] / n;
            let var = sq[a] / n - mean * mean;
            let sigma = variances[a].sqrt();
            assert!(mean.abs() < 0.05 * sigma, "axis {a}: mean {mean}");
            assert!(
                (var / variances[a] - 1.0).abs() < 0.10,
                "axis {a}: var {var} vs {}",
                variances[a]
            );
        }
    }

    #[test]
    fn sampler_deterministic_under_seed() {
        let log_prob = |theta: &[f64]| -> f64 { -0.5 * theta.iter().map(|x| x * x).sum::<f64>() };
        let run = |seed: u64| -> Vec<f64> {
            let init: Vec<Vec<f64>> = (0..10)
                .map(|k| vec![k as f64 * 0.01, -0.02 * k as f64])
                .collect();
            let mut out = Vec::new();
            sample_ensemble(log_prob, init, 50, 2.0, seed, |_, _, theta, _| {
                out.extend_from_slice(theta);
            });
            out
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn config_validation() {
        let config = McmcConfig::default();
        assert!(config.validate(90).is_ok());
        assert!(config.validate(400).is_err());
        let bad = McmcConfig {
            burn_in: 500,
            ..Default::default()
        };
        assert!(bad.validate(10).is_err());
    }
}
