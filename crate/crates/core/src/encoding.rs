//! Signal-domain encoding of images, fragments and Gabor kernels, and the
//! mapping from fragment/kernel differences to IDAC codes and oscillator
//! frequencies.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Side of the square patch processed by one array.
pub const PATCH_SIDE: usize = 5;
/// Number of pixels in a patch, and of active oscillators.
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;
/// Largest IDAC code produced by the difference encoder.
pub const MAX_CODE: u8 = 20;
/// Codes are loaded through a 5-bit DAC.
pub const DAC_BITS: u32 = 5;

/// 8-bit grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < PATCH_SIDE || height < PATCH_SIDE {
            return Err(Error::Range(format!(
                "image {width}x{height} is smaller than one {PATCH_SIDE}x{PATCH_SIDE} fragment"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels supplied for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from values in the signal domain [-1, 1], rounding to
    /// the nearest gray level.
    pub fn from_signal(width: usize, height: usize, signal: &[f64]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(signal.len());
        for &s in signal {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::Domain(format!("signal value {s} outside [-1, 1]")));
            }
            pixels.push(signal_to_gray(s));
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    /// Number of valid fragment positions along each axis (stride 1, no padding).
    pub fn fragment_grid(&self) -> (usize, usize) {
        (self.width - PATCH_SIDE + 1, self.height - PATCH_SIDE + 1)
    }
}

/// A 5x5 image patch in the signal domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment25 {
    values: [f64; PATCH_LEN],
}

impl Fragment25 {
    pub fn new(values: [f64; PATCH_LEN]) -> Result<Self> {
        check_unit_range(&values)?;
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; PATCH_LEN] = values.try_into().map_err(|_| {
            Error::Shape(format!("fragment needs {PATCH_LEN} values, got {}", values.len()))
        })?;
        Self::new(arr)
    }

    pub fn filled(value: f64) -> Result<Self> {
        Self::new([value; PATCH_LEN])
    }

    pub fn values(&self) -> &[f64; PATCH_LEN] {
        &self.values
    }
}

impl From<&Kernel25> for Fragment25 {
    fn from(kern: &Kernel25) -> Self {
        Self {
            values: kern.values,
        }
    }
}

/// A 5x5 Gabor kernel (or any unit-range kernel) with its generating parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel25 {
    values: [f64; PATCH_LEN],
    pub theta_deg: f64,
    pub k: f64,
    pub sigma: f64,
}

impl Kernel25 {
    /// Wraps raw values. The values must already lie in [-1, 1].
    pub fn from_values(values: [f64; PATCH_LEN], theta_deg: f64, k: f64, sigma: f64) -> Result<Self> {
        check_unit_range(&values)?;
        Ok(Self {
            values,
            theta_deg,
            k,
            sigma,
        })
    }

    pub fn values(&self) -> &[f64; PATCH_LEN] {
        &self.values
    }

    /// Self dot product, the largest dot any fragment equal in shape can reach.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Sum of absolute values, the largest dot any unit-range fragment can reach.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// 25 IDAC codes, one per active oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodeVector {
    codes: [u8; PATCH_LEN],
}

impl CodeVector {
    pub fn new(codes: [u8; PATCH_LEN]) -> Result<Self> {
        if let Some(c) = codes.iter().find(|&&c| c > MAX_CODE) {
            return Err(Error::Domain(format!("IDAC code {c} exceeds {MAX_CODE}")));
        }
        Ok(Self { codes })
    }

    pub fn codes(&self) -> &[u8; PATCH_LEN] {
        &self.codes
    }

    pub fn mean(&self) -> f64 {
        self.codes.iter().map(|&c| c as f64).sum::<f64>() / PATCH_LEN as f64
    }

    pub fn is_zero(&self) -> bool {
        self.codes.iter().all(|&c| c == 0)
    }
}

/// Linear frequency-vs-code calibration of one ring-oscillator variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqCalib {
    stages: u32,
    /// Frequency at code 0, GHz.
    pub f0: f64,
    /// Increment per code, GHz.
    pub slope: f64,
}

impl FreqCalib {
    pub fn new(stages: u32, f0: f64, slope: f64) -> Result<Self> {
        check_stages(stages)?;
        if !(f0 > 0.0 && f0.is_finite()) || !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Parameter(format!(
                "frequency calibration needs f0 > 0 and slope > 0 (got f0={f0}, slope={slope})"
            )));
        }
        Ok(Self { stages, f0, slope })
    }

    /// Default calibration for a 3, 5 or 7 stage ring.
    pub fn preset(stages: u32) -> Result<Self> {
        let (f0, slope) = match stages {
            3 => (4.0, 0.050),
            5 => (2.4, 0.030),
            7 => (1.7, 0.021),
            _ => return Err(stages_error(stages)),
        };
        Self::new(stages, f0, slope)
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    /// Relative frequency span over the full code range.
    pub fn relative_span(&self) -> f64 {
        self.slope * MAX_CODE as f64 / self.f0
    }

    pub fn frequency(&self, code: u8) -> f64 {
        self.f0 + self.slope * code as f64
    }
}

pub(crate) fn check_stages(stages: u32) -> Result<()> {
    match stages {
        3 | 5 | 7 => Ok(()),
        _ => Err(stages_error(stages)),
    }
}

fn stages_error(stages: u32) -> Error {
    Error::Parameter(format!("ring must have 3, 5 or 7 stages, got {stages}"))
}

fn check_unit_range(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::Domain(format!("value {v} outside [-1, 1]"))),
        None => Ok(()),
    }
}

/// Maps a gray level onto [-1, 1] with both endpoints reachable.
pub fn gray_to_signal(g: i64) -> Result<f64> {
    if !(0..=255).contains(&g) {
        return Err(Error::Domain(format!("gray level {g} outside [0, 255]")));
    }
    Ok(2.0 * g as f64 / 255.0 - 1.0)
}

/// Inverse of [`gray_to_signal`], rounding to the nearest gray level.
pub fn signal_to_gray(s: f64) -> u8 {
    ((s.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Real even Gabor kernel on the 5x5 grid centred at (2, 2), peak-normalized
/// to unit maximum magnitude.
pub fn gabor_kernel(theta_deg: f64, k: f64, sigma: f64) -> Result<Kernel25> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::Parameter(format!("k must be non-negative, got {k}")));
    }
    if !theta_deg.is_finite() {
        return Err(Error::Parameter(format!("orientation {theta_deg} is not finite")));
    }
    let theta = theta_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let half = (PATCH_SIDE / 2) as f64;
    let mut values = [0.0; PATCH_LEN];
    for (i, v) in values.iter_mut().enumerate() {
        let x = (i % PATCH_SIDE) as f64 - half;
        let y = (i / PATCH_SIDE) as f64 - half;
        let envelope = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        *v = envelope * (k * (x * cos_t + y * sin_t)).cos();
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in values.iter_mut() {
        *v = (*v / peak).clamp(-1.0, 1.0);
    }
    Ok(Kernel25 {
        values,
        theta_deg,
        k,
        sigma,
    })
}

/// Cartesian product of orientations and inverse wavelengths, orientations
/// in the outer loop.
pub fn make_filter_bank(orientations: &[f64], ks: &[f64], sigma: f64) -> Result<Vec<Kernel25>> {
    if orientations.is_empty() || ks.is_empty() {
        return Err(Error::Parameter(
            "filter bank needs at least one orientation and one k".into(),
        ));
    }
    orientations
        .iter()
        .flat_map(|&theta| ks.iter().map(move |&k| gabor_kernel(theta, k, sigma)))
        .collect()
}

/// Default bank parameters: four orientations, two wavelengths.
pub fn default_bank_params() -> (Vec<f64>, Vec<f64>, f64) {
    (vec![0.0, 45.0, 90.0, 135.0], vec![PI / 4.0, PI / 2.0], 1.5)
}

pub fn default_filter_bank() -> Vec<Kernel25> {
    let (orientations, ks, sigma) = default_bank_params();
    make_filter_bank(&orientations, &ks, sigma).expect("default bank parameters are valid")
}

/// Reads the 5x5 window whose top-left pixel is (row, col).
pub fn extract_fragment(image: &GrayImage, row: usize, col: usize) -> Result<Fragment25> {
    if row + PATCH_SIDE > image.height || col + PATCH_SIDE > image.width {
        return Err(Error::Range(format!(
            "window at ({row}, {col}) exceeds {}x{} image",
            image.width, image.height
        )));
    }
    let mut values = [0.0; PATCH_LEN];
    for r in 0..PATCH_SIDE {
        for c in 0..PATCH_SIDE {
            values[r * PATCH_SIDE + c] = gray_to_signal(image.pixel(row + r, col + c) as i64)?;
        }
    }
    Ok(Fragment25 { values })
}

pub fn ideal_dot(f: &Fragment25, kern: &Kernel25) -> f64 {
    f.values.iter().zip(kern.values.iter()).map(|(a, b)| a * b).sum()
}

/// Quantizes each |f_i - k_i| (range [0, 2]) onto codes 0..=20, rounding half up.
pub fn encode_differences(f: &Fragment25, kern: &Kernel25) -> CodeVector {
    let mut codes = [0u8; PATCH_LEN];
    for (code, (a, b)) in codes.iter_mut().zip(f.values.iter().zip(kern.values.iter())) {
        let scaled = (10.0 * (a - b).abs() + 0.5).floor();
        *code = scaled.min(MAX_CODE as f64) as u8;
    }
    CodeVector { codes }
}

/// Natural frequencies in GHz.
pub fn codes_to_frequencies(codes: &CodeVector, calib: &FreqCalib) -> [f64; PATCH_LEN] {
    let mut out = [0.0; PATCH_LEN];
    for (f, &c) in out.iter_mut().zip(codes.codes.iter()) {
        *f = calib.frequency(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gray_endpoints_and_midpoint() {
        assert_eq!(gray_to_signal(0).unwrap(), -1.0);
        assert_eq!(gray_to_signal(255).unwrap(), 1.0);
        // 256/255 - 1 = 1/255
        assert_abs_diff_eq!(gray_to_signal(128).unwrap(), 1.0 / 255.0, epsilon = 1e-15);
        assert!(matches!(gray_to_signal(256), Err(Error::Domain(_))));
        assert!(matches!(gray_to_signal(-1), Err(Error::Domain(_))));
    }

    #[test]
    fn gray_mapping_inverts_exactly() {
        let mut prev = f64::NEG_INFINITY;
        for g in 0..=255 {
            let s = gray_to_signal(g).unwrap();
            assert!(s > prev);
            prev = s;
            assert_eq!(signal_to_gray(s) as i64, g);
        }
    }

    #[test]
    fn flat_gabor_is_centered_gaussian() {
        let kern = gabor_kernel(0.0, 0.0, 100.0).unwrap();
        let v = kern.values();
        assert!(v.iter().all(|&x| x > 0.0));
        assert_eq!(v[12], 1.0);
        for r in 0..5 {
            for c in 0..5 {
                let a = v[r * 5 + c];
                assert_abs_diff_eq!(a, v[c * 5 + r], epsilon = 1e-15);
                assert_abs_diff_eq!(a, v[r * 5 + (4 - c)], epsilon = 1e-15);
                assert_abs_diff_eq!(a, v[(4 - r) * 5 + c], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn vertical_gabor_is_transpose_of_horizontal() {
        for &k in &[PI / 4.0, PI / 2.0, 1.1] {
            let h = gabor_kernel(0.0, k, 1.5).unwrap();
            let v = gabor_kernel(90.0, k, 1.5).unwrap();
            for r in 0..5 {
                for c in 0..5 {
                    assert_abs_diff_eq!(h.values()[r * 5 + c], v.values()[c * 5 + r], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gabor_center_row_matches_direct_formula() {
        // Independent evaluation: row r = 2 so y = 0 and the carrier is cos(k x).
        let sigma: f64 = 1.5;
        let k = PI / 2.0;
        let kern = gabor_kernel(0.0, k, sigma).unwrap();
        let expected: Vec<f64> = [-2.0f64, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&x| (-x * x / (2.0 * sigma * sigma)).exp() * (k * x).cos())
            .collect();
        // exp(-4/4.5)·cos(π) = -0.41111229050718745, exp(-1/4.5)·cos(π/2) ≈ 0
        assert_abs_diff_eq!(expected[0], -0.411_112_290_507_187_45, epsilon = 1e-15);
        for c in 0..5 {
            assert_abs_diff_eq!(kern.values()[10 + c], expected[c], epsilon = 1e-15);
        }
    }

    #[test]
    fn gabor_rejects_bad_sigma() {
        assert!(matches!(gabor_kernel(0.0, 1.0, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(gabor_kernel(0.0, 1.0, -2.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn gabor_periodic_in_orientation() {
        let a = gabor_kernel(30.0, 0.9, 1.5).unwrap();
        let b = gabor_kernel(390.0, 0.9, 1.5).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn bank_cardinality_and_order() {
        let bank = make_filter_bank(&[0.0, 45.0, 90.0, 135.0], &[0.5, 1.0], 1.5).unwrap();
        assert_eq!(bank.len(), 8);
        assert_eq!((bank[0].theta_deg, bank[0].k), (0.0, 0.5));
        assert_eq!((bank[1].theta_deg, bank[1].k), (0.0, 1.0));
        assert_eq!((bank[2].theta_deg, bank[2].k), (45.0, 0.5));
        let single = make_filter_bank(&[0.0], &[0.0], 1.5).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].values().iter().all(|&v| v > 0.0));
        assert!(make_filter_bank(&[], &[1.0], 1.5).is_err());
        assert!(make_filter_bank(&[0.0], &[], 1.5).is_err());
    }

    #[test]
    fn default_bank_kernels_pairwise_distinct() {
        let bank = default_filter_bank();
        assert_eq!(bank.len(), 8);
        for i in 0..bank.len() {
            for j in i + 1..bank.len() {
                let max_diff = bank[i]
                    .values()
                    .iter()
                    .zip(bank[j].values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(max_diff > 1e-3, "kernels {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn fragment_extraction() {
        let black = GrayImage::new(5, 5, vec![0; 25]).unwrap();
        assert!(extract_fragment(&black, 0, 0).unwrap().values().iter().all(|&v| v == -1.0));
        let white = GrayImage::new(7, 6, vec![255; 42]).unwrap();
        assert!(extract_fragment(&white, 1, 2).unwrap().values().iter().all(|&v| v == 1.0));
        assert!(matches!(extract_fragment(&white, 2, 0), Err(Error::Range(_))));
        assert!(matches!(extract_fragment(&white, 0, 3), Err(Error::Range(_))));

        // 6x6 ramp: pixel (r, c) = 10 (6 r + c)
        let ramp: Vec<u8> = (0..36).map(|i| (10 * i) as u8).collect();
        let img = GrayImage::new(6, 6, ramp).unwrap();
        let frag = extract_fragment(&img, 1, 1).unwrap();
        // top-left of the window is pixel (1,1) = 70, bottom-right (5,5) = 350 % 256 = 94
        assert_abs_diff_eq!(frag.values()[0], 140.0 / 255.0 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frag.values()[1], 160.0 / 255.0 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frag.values()[5], 260.0 / 255.0 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frag.values()[24], 188.0 / 255.0 - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn image_size_checks() {
        assert!(matches!(GrayImage::new(4, 5, vec![0; 20]), Err(Error::Range(_))));
        assert!(matches!(GrayImage::new(5, 5, vec![0; 24]), Err(Error::Shape(_))));
    }

    #[test]
    fn dot_product_examples() {
        let ones = Fragment25::filled(1.0).unwrap();
        let kern_ones = Kernel25::from_values([1.0; 25], 0.0, 0.0, 1.0).unwrap();
        assert_eq!(ideal_dot(&ones, &kern_ones), 25.0);
        let mut alt = [0.0; 25];
        for (i, v) in alt.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let alt = Fragment25::new(alt).unwrap();
        assert_eq!(ideal_dot(&alt, &kern_ones), 1.0);
    }

    #[test]
    fn difference_codes() {
        let kern = gabor_kernel(45.0, PI / 4.0, 1.5).unwrap();
        assert!(encode_differences(&Fragment25::from(&kern), &kern).is_zero());

        let plus = Fragment25::filled(1.0).unwrap();
        let minus = Kernel25::from_values([-1.0; 25], 0.0, 0.0, 1.0).unwrap();
        assert!(encode_differences(&plus, &minus).codes().iter().all(|&c| c == 20));

        let f = Fragment25::filled(0.35).unwrap();
        let k = Kernel25::from_values([-0.15; 25], 0.0, 0.0, 1.0).unwrap();
        assert!(encode_differences(&f, &k).codes().iter().all(|&c| c == 5));
    }

    #[test]
    fn code_vector_range() {
        assert!(CodeVector::new([20; 25]).is_ok());
        assert!(CodeVector::new([21; 25]).is_err());
        assert!((MAX_CODE as u32) < (1 << DAC_BITS));
    }

    #[test]
    fn frequency_mapping_is_linear() {
        let calib = FreqCalib::preset(5).unwrap();
        let mut codes = [0u8; 25];
        for (i, c) in codes.iter_mut().enumerate() {
            *c = (i % 5) as u8 * 5;
        }
        let freqs = codes_to_frequencies(&CodeVector::new(codes).unwrap(), &calib);
        assert_eq!(freqs[0], calib.f0);
        assert_abs_diff_eq!(freqs[4], calib.f0 + 20.0 * calib.slope, epsilon = 1e-15);
        let step = freqs[1] - freqs[0];
        for w in freqs[..5].windows(2) {
            assert!(((w[1] - w[0]) - step).abs() <= 1e-12 * step.abs());
        }
    }

    #[test]
    fn calib_validation() {
        for s in [3, 5, 7] {
            let c = FreqCalib::preset(s).unwrap();
            assert!((0.1..=0.4).contains(&c.relative_span()));
        }
        assert!(FreqCalib::preset(4).is_err());
        assert!(FreqCalib::new(3, 0.0, 0.1).is_err());
        assert!(FreqCalib::new(3, 1.0, -0.1).is_err());
    }
}
