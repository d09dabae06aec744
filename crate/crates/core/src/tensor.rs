//! Dense image tensors and the handful of elementwise operations the
//! attacks are built from.
//!
//! Pixels are stored as `f64`, row-major with the channel index innermost,
//! and every tensor carries its dynamic range `L` (the largest legal pixel
//! value). Values are only quantized when written to an 8-bit file.

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image dimensions. Serialized as `[height, width, channels]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// Number of scalar values (`height * width * channels`).
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }
}

impl From<[usize; 3]> for Shape {
    fn from(v: [usize; 3]) -> Self {
        Shape::new(v[0], v[1], v[2])
    }
}

impl From<Shape> for [usize; 3] {
    fn from(s: Shape) -> Self {
        s.as_array()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An image with real-valued pixels in `[0, range]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    range: f64,
    pixels: Vec<f64>,
}

impl ImageTensor {
    /// Builds a tensor, checking the buffer length against the shape.
    ///
    /// Pixels are taken as given; use [`ImageTensor::clipped`] to force them
    /// into range.
    pub fn new(shape: Shape, range: f64, pixels: Vec<f64>) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dynamic range must be positive and finite, got {range}"
            )));
        }
        if pixels.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels supplied for shape {shape} ({} expected)",
                pixels.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, range, pixels })
    }

    /// A 1x`len`x1 tensor, handy for small analytic problems.
    pub fn from_vec(pixels: Vec<f64>, range: f64) -> Result<Self> {
        let shape = Shape::new(1, pixels.len(), 1);
        Self::new(shape, range, pixels)
    }

    pub fn zeros(shape: Shape, range: f64) -> Result<Self> {
        Self::new(shape, range, vec![0.0; shape.len()])
    }

    pub fn filled(shape: Shape, range: f64, value: f64) -> Result<Self> {
        Self::new(shape, range, vec![value; shape.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Copy with every pixel clamped to `[0, range]`.
    pub fn clipped(&self) -> Self {
        let range = self.range;
        self.map(|p| p.clamp(0.0, range))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            range: self.range,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0.0).count()
    }

    /// Errors unless `other` has the same shape and dynamic range.
    pub fn check_compatible(&self, other: &ImageTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{} vs {}", self.shape, other.shape)));
        }
        if self.range != other.range {
            return Err(Error::ShapeMismatch(format!(
                "dynamic range {} vs {}",
                self.range, other.range
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            shape: self.shape,
            range: self.range,
            pixels: self.pixels.iter().zip(&other.pixels).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Elementwise `self - other`, unclipped.
    pub fn sub(&self, other: &ImageTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
}

/// Elementwise mean of two images.
pub fn midpoint(a: &ImageTensor, b: &ImageTensor) -> Result<ImageTensor> {
    a.zip_with(b, |x, y| 0.5 * (x + y))
}

/// Sum of squared pixel differences.
pub fn l2_sq_dist(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Largest absolute pixel difference.
pub fn linf_dist(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(a.pixels
        .iter()
        .zip(&b.pixels)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())))
}

/// `base + scale * delta`, clipped to `[0, L]`.
pub fn add_scaled_clipped(base: &ImageTensor, delta: &ImageTensor, scale: f64) -> Result<ImageTensor> {
    let range = base.range;
    base.zip_with(delta, |b, d| (b + scale * d).clamp(0.0, range))
}

/// A tensor with exactly `n` distinct pixels set to `L` and the rest zero.
pub fn sparse_mask(shape: Shape, range: f64, n: usize, rng: &mut RandomSource) -> Result<ImageTensor> {
    let total = shape.len();
    if n == 0 || n > total {
        return Err(Error::NTooLarge {
            requested: n,
            available: total,
        });
    }
    let mut pixels = vec![0.0; total];
    for i in index::sample(&mut rng.rng, total, n) {
        pixels[i] = range;
    }
    ImageTensor::new(shape, range, pixels)
}

/// Seedable random source. Substreams share a seed but draw independent
/// sequences, so restarts and sweep cells can be derived from one seed.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Fresh generator on substream `stream` of the same seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(p: &[f64]) -> ImageTensor {
        ImageTensor::from_vec(p.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(midpoint(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), v(&[0.5, 0.5]));
        let x = v(&[0.3, 0.7, 0.1]);
        assert_eq!(midpoint(&x, &x).unwrap(), x);
        let m = midpoint(&v(&[0.2, 0.8]), &v(&[0.6, 0.0])).unwrap();
        assert!((m.pixels()[0] - 0.4).abs() < 1e-15);
        assert!((m.pixels()[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let x = v(&[0.1, 0.2]);
        assert_eq!(l2_sq_dist(&x, &x).unwrap(), 0.0);
        let a = ImageTensor::from_vec(vec![0.0, 0.0], 5.0).unwrap();
        let b = ImageTensor::from_vec(vec![3.0, 4.0], 5.0).unwrap();
        assert_eq!(l2_sq_dist(&a, &b).unwrap(), 25.0);
        assert_eq!(l2_sq_dist(&v(&[1.0]), &v(&[0.5])).unwrap(), 0.25);

        assert_eq!(linf_dist(&x, &x).unwrap(), 0.0);
        assert!((linf_dist(&v(&[0.0, 0.9]), &v(&[0.5, 1.0])).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(linf_dist(&v(&[1.0]), &v(&[0.0])).unwrap(), 1.0);
    }

    #[test]
    fn add_scaled_clipped_examples() {
        let out = add_scaled_clipped(&v(&[0.5]), &v(&[1.0]), 0.0196).unwrap();
        assert!((out.pixels()[0] - 0.5196).abs() < 1e-15);
        assert_eq!(add_scaled_clipped(&v(&[0.9]), &v(&[1.0]), 0.5).unwrap(), v(&[1.0]));
        let x = v(&[0.25, 0.75]);
        assert_eq!(add_scaled_clipped(&x, &v(&[0.0, 0.0]), 3.0).unwrap(), x);
    }

    #[test]
    fn sparse_mask_examples() {
        let mut rng = RandomSource::new(7);
        let m = sparse_mask(Shape::new(1, 1, 1), 1.0, 1, &mut rng).unwrap();
        assert_eq!(m.pixels(), &[1.0]);
        let m = sparse_mask(Shape::new(2, 2, 1), 255.0, 4, &mut rng).unwrap();
        assert!(m.pixels().iter().all(|&p| p == 255.0));
        assert!(matches!(
            sparse_mask(Shape::new(2, 2, 1), 1.0, 5, &mut rng),
            Err(Error::NTooLarge { .. })
        ));
        assert!(sparse_mask(Shape::new(2, 2, 1), 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn mismatched_shapes_and_ranges_are_rejected() {
        let a = v(&[0.0, 0.0]);
        let b = v(&[0.0, 0.0, 0.0]);
        assert!(matches!(midpoint(&a, &b), Err(Error::ShapeMismatch(_))));
        let c = ImageTensor::from_vec(vec![0.0, 0.0], 255.0).unwrap();
        assert!(matches!(l2_sq_dist(&a, &c), Err(Error::ShapeMismatch(_))));
        assert!(ImageTensor::new(Shape::new(2, 2, 1), 1.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn substreams_differ_but_are_reproducible() {
        let shape = Shape::new(8, 8, 1);
        let base = RandomSource::new(3);
        let a = sparse_mask(shape, 1.0, 5, &mut base.substream(1)).unwrap();
        let b = sparse_mask(shape, 1.0, 5, &mut base.substream(1)).unwrap();
        let c = sparse_mask(shape, 1.0, 5, &mut base.substream(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(0.0..=1.0f64, len),
            prop::collection::vec(0.0..=1.0f64, len),
        )
    }

    proptest! {
        #[test]
        fn midpoint_is_symmetric_and_halves_linf((a, b) in (1usize..32).prop_flat_map(pair)) {
            let (a, b) = (v(&a), v(&b));
            let m = midpoint(&a, &b).unwrap();
            prop_assert_eq!(&m, &midpoint(&b, &a).unwrap());
            let half = linf_dist(&a, &b).unwrap() / 2.0;
            prop_assert!((linf_dist(&m, &a).unwrap() - half).abs() <= 1e-15);
        }

        #[test]
        fn l2_zero_iff_equal((a, b) in (1usize..32).prop_flat_map(pair)) {
            let (a, b) = (v(&a), v(&b));
            let d = l2_sq_dist(&a, &b).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, a == b);
        }

        #[test]
        fn add_scaled_clipped_stays_in_range(
            (a, b) in (1usize..32).prop_flat_map(pair),
            scale in -10.0..10.0f64,
        ) {
            let out = add_scaled_clipped(&v(&a), &v(&b), scale).unwrap();
            prop_assert!(out.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn sparse_mask_has_exactly_n_entries(len in 1usize..64, seed: u64, frac in 0.0..1.0f64) {
            let n = 1 + ((len - 1) as f64 * frac) as usize;
            let shape = Shape::new(1, len, 1);
            let m = sparse_mask(shape, 2.0, n, &mut RandomSource::new(seed)).unwrap();
            prop_assert_eq!(m.count_nonzero(), n);
            prop_assert!(m.pixels().iter().all(|&p| p == 0.0 || p == 2.0));
            let again = sparse_mask(shape, 2.0, n, &mut RandomSource::new(seed)).unwrap();
            prop_assert_eq!(m, again);
        }
    }
}
