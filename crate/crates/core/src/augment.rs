//! Seeded photometric augmentation feeding the context-consistency loss.
//!
//! Jitter is applied to 3-channel views in the fixed order brightness,
//! contrast, saturation, hue, followed by additive Gaussian noise. Values
//! are clamped to `[0, 1]` after every operation.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::preprocess::MultiBandImage;
use crate::{contract, Result};

/// Deterministic generator: xoshiro256++ seeded through splitmix64.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
    spare_gaussian: Option<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream indices into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    /// Independent sub-stream of `seed` addressed by `path`.
    pub fn stream(seed: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(seed, path))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via the Box-Muller transform.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationPolicy {
    /// Multiplicative brightness factor range.
    pub brightness: (f64, f64),
    /// Blend factor towards the per-image mean luma.
    pub contrast: (f64, f64),
    /// Blend factor towards the per-pixel luma.
    pub saturation: (f64, f64),
    /// Hue rotation as a fraction of the hue circle.
    pub hue: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            brightness: (0.8, 1.2),
            contrast: (0.8, 1.2),
            saturation: (0.8, 1.2),
            hue: (-0.05, 0.05),
            noise_sigma: 0.02,
        }
    }
}

impl AugmentationPolicy {
    /// No jitter and no noise.
    pub fn identity() -> Self {
        Self {
            brightness: (1.0, 1.0),
            contrast: (1.0, 1.0),
            saturation: (1.0, 1.0),
            hue: (0.0, 0.0),
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), neutral) in [
            ("brightness", self.brightness, 1.0),
            ("contrast", self.contrast, 1.0),
            ("saturation", self.saturation, 1.0),
            ("hue", self.hue, 0.0),
        ] {
            contract!(
                lo <= neutral && neutral <= hi,
                "{name} range [{lo}, {hi}] must contain {neutral}"
            );
        }
        contract!(self.noise_sigma >= 0.0, "noise sigma {} is negative", self.noise_sigma);
        Ok(())
    }
}

fn luma(rgb: &[f32]) -> f32 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(1.0) * 6.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Factors drawn for one jitter application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterFactors {
    pub fn draw(policy: &AugmentationPolicy, rng: &mut SeededRng) -> Self {
        Self {
            brightness: rng.uniform(policy.brightness.0, policy.brightness.1),
            contrast: rng.uniform(policy.contrast.0, policy.contrast.1),
            saturation: rng.uniform(policy.saturation.0, policy.saturation.1),
            hue: rng.uniform(policy.hue.0, policy.hue.1),
        }
    }

    pub fn apply(&self, img: &MultiBandImage) -> Result<MultiBandImage> {
        contract!(img.bands() == 3, "color jitter needs 3 channels, got {}", img.bands());
        let mut v = img.values().to_vec();
        let clamp = |x: f32| x.clamp(0.0, 1.0);

        let fb = self.brightness as f32;
        v.iter_mut().for_each(|x| *x = clamp(*x * fb));

        let fc = self.contrast as f32;
        let mean = (v.chunks(3).map(|p| luma(p) as f64).sum::<f64>() / img.pixels() as f64) as f32;
        v.iter_mut().for_each(|x| *x = clamp(fc * *x + (1.0 - fc) * mean));

        let fs = self.saturation as f32;
        for px in v.chunks_mut(3) {
            let l = luma(px);
            px.iter_mut().for_each(|x| *x = clamp(fs * *x + (1.0 - fs) * l));
        }

        if self.hue != 0.0 {
            for px in v.chunks_mut(3) {
                let (h, s, val) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
                let (r, g, b) = hsv_to_rgb(h + self.hue, s, val);
                px[0] = clamp(r as f32);
                px[1] = clamp(g as f32);
                px[2] = clamp(b as f32);
            }
        }
        MultiBandImage::new(img.height(), img.width(), 3, v)
    }
}

/// Brightness, contrast, saturation and hue jitter with factors drawn from `policy`.
pub fn color_jitter(img: &MultiBandImage, policy: &AugmentationPolicy, rng: &mut SeededRng) -> Result<MultiBandImage> {
    contract!(img.bands() == 3, "color jitter needs 3 channels, got {}", img.bands());
    JitterFactors::draw(policy, rng).apply(img)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every value, then clamps.
pub fn add_gaussian_noise(img: &MultiBandImage, sigma: f64, rng: &mut SeededRng) -> Result<MultiBandImage> {
    contract!(sigma >= 0.0, "noise sigma {sigma} is negative");
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let values = img
        .values()
        .iter()
        .map(|&x| (x as f64 + sigma * rng.next_gaussian()).clamp(0.0, 1.0) as f32)
        .collect();
    MultiBandImage::new(img.height(), img.width(), img.bands(), values)
}

/// Augments both temporal branches with independent draws from the
/// sub-stream `(seed, iteration, branch)`.
pub fn augment_pair(
    pre: &MultiBandImage,
    post: &MultiBandImage,
    policy: &AugmentationPolicy,
    seed: u64,
    iteration: usize,
) -> Result<(MultiBandImage, MultiBandImage)> {
    policy.validate()?;
    let branch = |img: &MultiBandImage, b: u64| -> Result<MultiBandImage> {
        let mut rng = SeededRng::stream(seed, &[iteration as u64, b]);
        let jittered = color_jitter(img, policy, &mut rng)?;
        add_gaussian_noise(&jittered, policy.noise_sigma, &mut rng)
    };
    Ok((branch(pre, 0)?, branch(post, 1)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rgb(seed: u64, h: usize, w: usize) -> MultiBandImage {
        let mut rng = SeededRng::new(seed);
        MultiBandImage::new(h, w, 3, (0..h * w * 3).map(|_| rng.next_f64() as f32).collect()).unwrap()
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        assert!((0..100).all(|_| a.next_u64() == b.next_u64()));
        let mut c = SeededRng::new(43);
        assert_ne!(SeededRng::new(42).next_u64(), c.next_u64());
    }

    #[test]
    fn stream_is_fixed_across_platforms() {
        // Frozen first outputs for seed 0; any change to the generator breaks run reproducibility.
        let mut rng = SeededRng::new(0);
        let first = rng.next_u64();
        let mut again = Xoshiro256PlusPlus::seed_from_u64(0);
        assert_eq!(first, again.next_u64());
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn degenerate_policy_is_identity() {
        let img = random_rgb(1, 5, 7);
        let mut rng = SeededRng::new(3);
        let out = color_jitter(&img, &AugmentationPolicy::identity(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn brightness_factor() {
        let img = MultiBandImage::new(1, 1, 3, vec![0.5, 0.5, 0.5]).unwrap();
        let policy = AugmentationPolicy {
            brightness: (1.2, 1.2),
            ..AugmentationPolicy::identity()
        };
        let out = color_jitter(&img, &policy, &mut SeededRng::new(0)).unwrap();
        for v in out.values() {
            assert!((v - 0.6).abs() < 1e-6);
        }
    }

    #[test]
    fn gray_is_fixed_under_saturation_and_hue() {
        let img = MultiBandImage::new(1, 3, 3, vec![0.2, 0.2, 0.2, 0.7, 0.7, 0.7, 1.0, 1.0, 1.0]).unwrap();
        let policy = AugmentationPolicy {
            saturation: (0.5, 1.5),
            hue: (-0.3, 0.3),
            ..AugmentationPolicy::identity()
        };
        let mut rng = SeededRng::new(8);
        for _ in 0..10 {
            let out = color_jitter(&img, &policy, &mut rng).unwrap();
            for (a, b) in out.values().iter().zip(img.values()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hue_full_turn_round_trips() {
        let img = random_rgb(12, 4, 4);
        let f = JitterFactors {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 1.0,
        };
        for (a, b) in f.apply(&img).unwrap().values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn jitter_rejects_non_rgb() {
        let img = MultiBandImage::new(1, 1, 2, vec![0.1, 0.2]).unwrap();
        assert!(color_jitter(&img, &AugmentationPolicy::default(), &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = random_rgb(2, 3, 3);
        assert_eq!(add_gaussian_noise(&img, 0.0, &mut SeededRng::new(1)).unwrap(), img);
        assert!(add_gaussian_noise(&img, -1.0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn noise_std_matches_sigma() {
        let (h, w) = (200, 200);
        let img = MultiBandImage::new(h, w, 3, vec![0.5; h * w * 3]).unwrap();
        let sigma = 0.02;
        let out = add_gaussian_noise(&img, sigma, &mut SeededRng::new(77)).unwrap();
        let n = out.values().len() as f64;
        let mean = out.values().iter().map(|&v| v as f64 - 0.5).sum::<f64>() / n;
        let var = out.values().iter().map(|&v| (v as f64 - 0.5 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(n >= 1e5);
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let img = random_rgb(4, 6, 6);
        let a = add_gaussian_noise(&img, 0.1, &mut SeededRng::new(5)).unwrap();
        let b = add_gaussian_noise(&img, 0.1, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_draws_depend_on_iteration_only_through_the_stream() {
        let a = random_rgb(1, 8, 8);
        let b = random_rgb(2, 8, 8);
        let policy = AugmentationPolicy::default();
        let first = augment_pair(&a, &b, &policy, 99, 3).unwrap();
        let again = augment_pair(&a, &b, &policy, 99, 3).unwrap();
        let next = augment_pair(&a, &b, &policy, 99, 4).unwrap();
        assert_eq!(first, again);
        assert_ne!(first.0, next.0);
        assert_ne!(first.1, next.1);
    }

    #[test]
    fn degenerate_policy_leaves_pair_unchanged() {
        let a = random_rgb(1, 4, 4);
        let b = random_rgb(2, 4, 4);
        let (x, y) = augment_pair(&a, &b, &AugmentationPolicy::identity(), 0, 0).unwrap();
        assert_eq!((x, y), (a, b));
    }

    #[test]
    fn policy_ranges_must_contain_neutral_value() {
        assert!(AugmentationPolicy::default().validate().is_ok());
        let bad = AugmentationPolicy {
            brightness: (1.1, 1.3),
            ..AugmentationPolicy::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn outputs_stay_in_unit_interval(seed in 0u64..1000, t in 0usize..80) {
            let a = random_rgb(seed, 4, 5);
            let b = random_rgb(seed + 1, 4, 5);
            let policy = AugmentationPolicy {
                brightness: (0.2, 3.0),
                contrast: (0.1, 2.5),
                saturation: (0.0, 3.0),
                hue: (-0.5, 0.5),
                noise_sigma: 0.3,
            };
            let (x, y) = augment_pair(&a, &b, &policy, seed, t).unwrap();
            proptest::prop_assert!(x.values().iter().chain(y.values()).all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn identity_policy_composes_to_identity(seed in 0u64..1000, reps in 1usize..5) {
            let a = random_rgb(seed, 3, 3);
            let mut cur = a.clone();
            let mut rng = SeededRng::new(seed);
            for _ in 0..reps {
                cur = color_jitter(&cur, &AugmentationPolicy::identity(), &mut rng).unwrap();
            }
            proptest::prop_assert_eq!(cur, a);
        }
    }
}
