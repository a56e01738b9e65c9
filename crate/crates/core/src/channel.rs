//! Quasi-static Rayleigh block fading.
//!
//! Each block draws one source-relay and one relay-destination power gain,
//! both exponential with unit mean. Streams are ChaCha8 keyed by the seed,
//! with the ChaCha stream id selecting an independent substream per worker.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fading power gains `|h|^2` (source to relay) and `|g|^2` (relay to destination).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBlock {
    pub h2: f64,
    pub g2: f64,
}

/// Seeded, splittable source of fading blocks.
#[derive(Debug, Clone)]
pub struct FadingStream {
    rng: ChaCha8Rng,
}

impl FadingStream {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent substream `worker_index` of `seed`.
    pub fn substream(seed: u64, worker_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(worker_index);
        Self { rng }
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-mean exponential by inversion. `1 - U` lies in (0, 1], so the
    /// logarithm is always finite.
    pub fn exponential(&mut self) -> f64 {
        -(-self.uniform()).ln_1p()
    }

    pub fn draw_block(&mut self) -> ChannelBlock {
        let h2 = self.exponential();
        let g2 = self.exponential();
        ChannelBlock { h2, g2 }
    }
}

/// Substream for one parallel worker. A pure function of
/// `(seed, worker_index)`; index 0 is the stream [`FadingStream::new`] uses.
pub fn split_stream(seed: u64, worker_index: u64) -> FadingStream {
    FadingStream::substream(seed, worker_index)
}

impl Iterator for FadingStream {
    type Item = ChannelBlock;

    fn next(&mut self) -> Option<ChannelBlock> {
        Some(self.draw_block())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_identical() {
        let a: Vec<_> = FadingStream::new(42).take(100).collect();
        let b: Vec<_> = FadingStream::new(42).take(100).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn substreams_differ_and_replay() {
        let s0: Vec<_> = split_stream(9, 0).take(1000).collect();
        let s1: Vec<_> = split_stream(9, 1).take(1000).collect();
        assert!(s0.iter().zip(&s1).all(|(x, y)| x != y));
        let again: Vec<_> = split_stream(9, 1).take(1000).collect();
        assert_eq!(s1, again);
        let main: Vec<_> = FadingStream::new(9).take(1000).collect();
        assert_eq!(main, s0);
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        // Exp(1) has unit variance, so 3 sigma at n = 10^6 is 0.003.
        let n = 1_000_000;
        let mut s = FadingStream::new(1);
        let (mut sh, mut sg) = (0.0, 0.0);
        for _ in 0..n {
            let b = s.draw_block();
            assert!(b.h2 >= 0.0 && b.g2 >= 0.0);
            sh += b.h2;
            sg += b.g2;
        }
        let (mh, mg) = (sh / n as f64, sg / n as f64);
        assert!((0.997..=1.003).contains(&mh), "{mh}");
        assert!((0.997..=1.003).contains(&mg), "{mg}");
    }

    #[test]
    fn threshold_probability_matches_cdf() {
        let n = 1_000_000;
        let threshold: f64 = 0.3;
        let p = 1.0 - (-threshold).exp();
        let mut s = FadingStream::new(2);
        let hits = (0..n).filter(|_| s.draw_block().h2 < threshold).count();
        let freq = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma, "{freq} vs {p}");
    }

    #[test]
    fn kolmogorov_smirnov_against_exponential() {
        let n = 100_000;
        let mut s = FadingStream::new(3);
        let mut x: Vec<f64> = (0..n).map(|_| s.draw_block().h2).collect();
        x.sort_by(f64::total_cmp);
        let d = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = 1.0 - (-v).exp();
                (cdf - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - cdf)
            })
            .fold(0.0, f64::max);
        // Asymptotic critical value at significance 0.01.
        assert!(d < 1.6276 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn substreams_uncorrelated() {
        let n = 100_000;
        let a: Vec<f64> = split_stream(11, 0).take(n).map(|b| b.h2).collect();
        let b: Vec<f64> = split_stream(11, 1).take(n).map(|b| b.h2).collect();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        let r = sab / (saa * sbb).sqrt();
        assert!(r.abs() < 0.01, "r = {r}");
    }
}
