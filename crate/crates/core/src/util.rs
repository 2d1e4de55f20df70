//! Small numeric helpers shared across modules.

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convergence test for coordinate descent: equality up to a 1e-12 relative
/// guard.
pub(crate) fn objective_settled(current: f64, previous: f64) -> bool {
    if !previous.is_finite() {
        return false;
    }
    (current - previous).abs() <= 1e-12 * current.abs().max(previous.abs())
}

/// splitmix64 over (seed, a, b); used to derive per-batch, per-restart seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
