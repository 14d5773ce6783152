//! Coarse spectrum model: a 128-channel grid over 0-3 MeV, a smooth
//! background shape, and the 662 keV photopeak used for the source term.

/// Number of spectrum channels carried in count records.
pub const CHANNELS: usize = 128;

/// Upper edge of the spectrum grid, keV.
pub const E_MAX_KEV: f64 = 3000.0;

/// Width of one channel, keV.
pub const CHANNEL_WIDTH_KEV: f64 = E_MAX_KEV / CHANNELS as f64;

/// Photopeak energy of the simulated source, keV.
pub const PHOTOPEAK_KEV: f64 = 662.0;

/// Fractional FWHM of the photopeak at 662 keV.
pub const PHOTOPEAK_FWHM_FRAC: f64 = 0.075;

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949;

/// Center energy of channel `c`, keV.
pub fn channel_energy(c: usize) -> f64 {
    (c as f64 + 0.5) * CHANNEL_WIDTH_KEV
}

/// Channel containing energy `kev`, clamped to the grid.
pub fn channel_of(kev: f64) -> usize {
    ((kev / CHANNEL_WIDTH_KEV).floor() as i64).clamp(0, CHANNELS as i64 - 1) as usize
}

/// Round an energy bound to the nearest channel boundary index in `0..=CHANNELS`.
pub fn boundary_of(kev: f64) -> usize {
    ((kev / CHANNEL_WIDTH_KEV).round() as i64).clamp(0, CHANNELS as i64) as usize
}

/// Smooth background shape, normalized to unit sum. An exponential
/// continuum over a flat floor; no line structure.
pub fn background_shape() -> Vec<f64> {
    let mut shape: Vec<f64> = (0..CHANNELS)
        .map(|c| (-channel_energy(c) / 350.0).exp() + 0.08)
        .collect();
    let total: f64 = shape.iter().sum();
    for v in &mut shape {
        *v /= total;
    }
    shape
}

/// Photopeak channel weights restricted to channels `[ch_lo, ch_hi)`,
/// normalized to unit sum over that range. The Gaussian is evaluated at
/// channel centers; restriction keeps the full source term inside the
/// counting region so rates stay consistent with the count model.
pub fn photopeak_weights(ch_lo: usize, ch_hi: usize) -> Vec<f64> {
    let sigma = PHOTOPEAK_KEV * PHOTOPEAK_FWHM_FRAC / FWHM_TO_SIGMA;
    let mut w = vec![0.0; CHANNELS];
    let mut total = 0.0;
    for (c, wc) in w.iter_mut().enumerate().take(ch_hi).skip(ch_lo) {
        let z = (channel_energy(c) - PHOTOPEAK_KEV) / sigma;
        *wc = (-0.5 * z * z).exp();
        total += *wc;
    }
    assert!(total > 0.0, "photopeak falls outside [{ch_lo}, {ch_hi})");
    for wc in &mut w {
        *wc /= total;
    }
    w
}
