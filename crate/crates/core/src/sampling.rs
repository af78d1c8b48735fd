//! Deterministic point streams on the unit square.
//!
//! Point `i` of a stream depends only on `(seed, stream, i)`, so any batching
//! of the index range over worker threads produces the same points.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Two-dimensional Sobol' sequence with hash-based nested uniform
    /// (Owen) scrambling keyed by the seed.
    #[default]
    Sobol,
    /// Independent uniforms from a ChaCha8 stream.
    Pseudo,
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampler::Sobol => "sobol",
            Sampler::Pseudo => "pseudo",
        })
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sobol" => Ok(Sampler::Sobol),
            "pseudo" => Ok(Sampler::Pseudo),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Direction numbers of the second Sobol' coordinate (primitive polynomial
/// `x + 1`); the first coordinate is the van der Corput sequence.
const SOBOL_DIR: [u32; 32] = {
    let mut v = [0u32; 32];
    v[0] = 1 << 31;
    let mut k = 1;
    while k < 32 {
        v[k] = v[k - 1] ^ (v[k - 1] >> 1);
        k += 1;
    }
    v
};

fn sobol_u32(i: u32) -> [u32; 2] {
    let mut y = 0u32;
    let mut bits = i;
    let mut k = 0;
    while bits != 0 {
        if bits & 1 == 1 {
            y ^= SOBOL_DIR[k];
        }
        bits >>= 1;
        k += 1;
    }
    [i.reverse_bits(), y]
}

/// Laine–Karras style hash that only lets lower bits affect higher ones.
fn lk_permute(mut x: u32, seed: u32) -> u32 {
    x = x.wrapping_add(seed);
    x ^= x.wrapping_mul(0x6c50_b47c);
    x ^= x.wrapping_mul(0xb82f_1e52);
    x ^= x.wrapping_mul(0xc7af_e638);
    x ^= x.wrapping_mul(0x8d22_f6e6);
    x
}

fn owen_scramble(x: u32, seed: u32) -> u32 {
    lk_permute(x.reverse_bits(), seed).reverse_bits()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A stream of points in `[0, 1)²`.
#[derive(Debug, Clone)]
pub struct PointStream {
    sampler: Sampler,
    seed: u64,
    stream: u64,
    keys: [u64; 2],
}

impl PointStream {
    pub fn new(sampler: Sampler, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        // Shift words live far from the pseudo-random points' word range.
        rng.set_word_pos(u128::from(u64::MAX) << 2);
        let keys = [rng.random::<u64>(), rng.random::<u64>()];
        Self { sampler, seed, stream, keys }
    }

    /// Fills `out` with points `start .. start + out.len()`.
    pub fn fill(&self, start: u64, out: &mut [[f64; 2]]) {
        match self.sampler {
            Sampler::Sobol => {
                for (j, p) in out.iter_mut().enumerate() {
                    let i = start + j as u64;
                    // Beyond 2³² points the sequence restarts under fresh keys.
                    let epoch = i >> 32;
                    let raw = sobol_u32(i as u32);
                    for d in 0..2 {
                        let key = splitmix64(self.keys[d] ^ epoch);
                        let hi = owen_scramble(raw[d], key as u32);
                        // Bits below 2⁻³² are filled uniformly so no two
                        // points share a lattice value.
                        let lo = splitmix64(key ^ i.wrapping_mul(0xD605_BBB5_8C8A_BC4B));
                        let v = (f64::from(hi) + unit_f64(lo)) * (1.0 / 4_294_967_296.0);
                        p[d] = if v < 1.0 { v } else { 1.0 - f64::EPSILON / 2.0 };
                    }
                }
            }
            Sampler::Pseudo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(self.stream);
                // Each point consumes two u64 = four 32-bit words.
                rng.set_word_pos(u128::from(start) * 4);
                for p in out.iter_mut() {
                    p[0] = unit_f64(rng.next_u64());
                    p[1] = unit_f64(rng.next_u64());
                }
            }
        }
    }

    pub fn point(&self, i: u64) -> [f64; 2] {
        let mut p = [[0.0; 2]];
        self.fill(i, &mut p);
        p[0]
    }
}

#[inline]
fn unit_f64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream id for a neighbourhood radius, so each rung draws its own points.
pub fn stream_for_eps(eps: f64) -> u64 {
    splitmix64(eps.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batching_does_not_change_points() {
        for sampler in [Sampler::Sobol, Sampler::Pseudo] {
            let s = PointStream::new(sampler, 7, 3);
            let mut whole = vec![[0.0; 2]; 100];
            s.fill(0, &mut whole);
            let mut parts = vec![[0.0; 2]; 100];
            s.fill(0, &mut parts[..37]);
            s.fill(37, &mut parts[37..]);
            assert_eq!(whole, parts);
            assert_eq!(s.point(55), whole[55]);
            assert!(whole.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn seeds_and_streams_differ() {
        let a = PointStream::new(Sampler::Pseudo, 1, 0).point(0);
        let b = PointStream::new(Sampler::Pseudo, 2, 0).point(0);
        let c = PointStream::new(Sampler::Pseudo, 1, 1).point(0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        let d = PointStream::new(Sampler::Sobol, 1, 0).point(0);
        let e = PointStream::new(Sampler::Sobol, 2, 0).point(0);
        assert_ne!(d, e);
    }

    #[test]
    fn sobol_is_evenly_spread() {
        // Fraction of points in a sub-rectangle matches its area far better
        // than binomial noise.
        let s = PointStream::new(Sampler::Sobol, 11, 0);
        let n = 100_000u64;
        let mut pts = vec![[0.0; 2]; n as usize];
        s.fill(0, &mut pts);
        let hits = pts.iter().filter(|p| p[0] < 0.3 && p[1] < 0.7).count() as f64;
        let frac = hits / n as f64;
        assert!((frac - 0.21).abs() < 2e-4, "{frac}");
    }

    #[test]
    fn sobol_net_property() {
        // The first 2^m points of a scrambled (0,2)-sequence put exactly one
        // point in every dyadic box of area 2^-m, including the thin ones.
        let s = PointStream::new(Sampler::Sobol, 5, 9);
        let m = 10;
        let mut pts = vec![[0.0; 2]; 1 << m];
        s.fill(0, &mut pts);
        for kx in 0..=m {
            let (nx, ny) = (1usize << kx, 1usize << (m - kx));
            let mut seen = vec![0u32; 1 << m];
            for p in &pts {
                let cx = (p[0] * nx as f64) as usize;
                let cy = (p[1] * ny as f64) as usize;
                seen[cx * ny + cy] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1), "box shape {nx}x{ny}");
        }
    }
}
