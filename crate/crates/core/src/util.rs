//! Seeded RNG streams and a small checksum, shared across modules.

use rand::SeedableRng;
use rand_pcg::Pcg64;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent RNG stream for `(master seed, tag)`. Different tags give
/// uncorrelated streams so generators can be added without perturbing
/// existing ones.
pub fn seed_stream(master: u64, tag: &str) -> Pcg64 {
    let mix = fnv1a64(tag.as_bytes())
        .rotate_left(17)
        .wrapping_mul(0x9e37_79b9_7f4a_7c15);
    Pcg64::seed_from_u64(master ^ mix)
}

/// Indexed RNG stream, e.g. one per MCMC walker.
pub fn seed_stream_indexed(master: u64, tag: &str, index: u64) -> Pcg64 {
    let mix = fnv1a64(tag.as_bytes()) ^ index.wrapping_mul(0xd134_2543_de82_ef95);
    Pcg64::seed_from_u64(master ^ mix.rotate_left(23).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = theta.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}
