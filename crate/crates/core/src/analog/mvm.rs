//! Crossbar matrix-vector products: the ideal Kirchhoff sum and the
//! non-ideal version with read noise and IR drop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::analog::config::CrossbarConfig;
use crate::analog::grid::CrossbarNetwork;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `I_j = sum_i G_ij V_i` for row-major `g` (`rows x cols`).
pub fn ideal_mvm<S: Real>(g: &[S], rows: usize, cols: usize, v: &[S]) -> Result<Vec<S>> {
    if g.len() != rows * cols || v.len() != rows {
        return Err(Error::Contract(format!(
            "ideal_mvm: {} conductances and {} voltages for a {rows}x{cols} crossbar",
            g.len(),
            v.len()
        )));
    }
    let mut out = vec![S::zero(); cols];
    for (i, &vi) in v.iter().enumerate() {
        for (o, &gij) in out.iter_mut().zip(&g[i * cols..(i + 1) * cols]) {
            *o += gij * vi;
        }
    }
    Ok(out)
}

/// Mixes a tuple of integers into one RNG seed (splitmix64 finalizer).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// Multiplies every conductance by an independent lognormal(0, sigma) draw.
pub fn apply_read_noise<S: Real>(g: &[f64], sigma: f64, seed: u64) -> Result<Vec<S>> {
    if sigma == 0.0 {
        return Ok(g.iter().map(|v| S::from_f64_lossy(*v)).collect());
    }
    let dist = LogNormal::new(0.0, sigma)
        .map_err(|e| Error::InvalidConfig(format!("read noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(g.iter().map(|v| S::from_f64_lossy(v * dist.sample(&mut rng))).collect())
}

/// Builds the parasitic network for a (possibly noisy) conductance matrix.
pub fn build_network<S: Real>(
    g: &[S],
    rows: usize,
    cols: usize,
    config: &CrossbarConfig,
) -> Result<CrossbarNetwork<S>> {
    CrossbarNetwork::new(g, rows, cols, config.r_wire_ohm, config.r_source_ohm, config.r_sink_ohm)
}

/// Column currents with lognormal read noise drawn from `seed` and IR drop
/// solved exactly.
pub fn nonideal_mvm<S: Real>(
    g: &[f64],
    rows: usize,
    cols: usize,
    v: &[S],
    config: &CrossbarConfig,
    seed: u64,
) -> Result<Vec<S>> {
    config.validate()?;
    let noisy = apply_read_noise::<S>(g, config.read_noise_sigma, seed)?;
    build_network(&noisy, rows, cols, config)?.column_currents(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless() -> CrossbarConfig {
        CrossbarConfig {
            r_wire_ohm: 0.0,
            r_source_ohm: 0.0,
            r_sink_ohm: 0.0,
            read_noise_sigma: 0.0,
            ..CrossbarConfig::default()
        }
    }

    #[test]
    fn diagonal_and_zero_examples() {
        let g = [1e-6f64, 0.0, 0.0, 1e-6];
        let i = ideal_mvm(&g, 2, 2, &[0.1, 0.2]).unwrap();
        assert!((i[0] - 0.1e-6).abs() < 1e-20 && (i[1] - 0.2e-6).abs() < 1e-20);
        assert_eq!(ideal_mvm(&g, 2, 2, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let i = ideal_mvm(&[1.0, 2.0, 3.0, 4.0], 2, 2, &[5.0, 6.0]).unwrap();
        assert_eq!(i, vec![23.0, 34.0]);
    }

    #[test]
    fn lossless_nonideal_equals_ideal() {
        let g: Vec<f64> = (0..12).map(|k| 1e-5 * (1.0 + k as f64 * 0.7)).collect();
        let v = [0.2, 0.0, 0.2, 0.13];
        let a = nonideal_mvm(&g, 4, 3, &v, &lossless(), 7).unwrap();
        let b = ideal_mvm(&g, 4, 3, &v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * y.abs());
        }
    }

    #[test]
    fn noise_is_seeded() {
        let g = vec![5e-5; 16];
        let mut c = lossless();
        c.read_noise_sigma = 0.2;
        let v = [0.2; 4];
        let a = nonideal_mvm(&g, 4, 4, &v, &c, 3).unwrap();
        assert_eq!(a, nonideal_mvm(&g, 4, 4, &v, &c, 3).unwrap());
        assert_ne!(a, nonideal_mvm(&g, 4, 4, &v, &c, 4).unwrap());
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
    }
}
