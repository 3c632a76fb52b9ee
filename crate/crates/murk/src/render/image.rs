//! Image containers for scalar, RGB and Stokes-valued pixel data, plus the
//! four-angle polarizer capture model applied imagewise.
//!
//! All containers are row-major with pixel `(0, 0)` at the top-left; `get`
//! and `set` take `(x, y)` pixel coordinates.

use crate::error::{Error, Result};
use crate::stokes::{invert_capture_pixel, StokesVector, CAPTURE_ANGLES};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: [f64; 3]) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }
}

/// Per-pixel, per-RGB-channel Stokes vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[StokesVector; 3]>,
}

impl StokesImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[StokesVector::new(0.0, 0.0, 0.0); 3]; (width * height) as usize],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [StokesVector; 3] {
        self.data[self.idx(x, y)]
    }

    /// Channel-summed Stokes vector at a pixel (luminance-style aggregate).
    pub fn combined(&self, x: u32, y: u32) -> StokesVector {
        let px = self.get(x, y);
        let mut acc = StokesVector::new(0.0, 0.0, 0.0);
        for s in px {
            acc += s;
        }
        acc * (1.0 / 3.0)
    }

    /// `s0` per channel as an RGB image.
    pub fn intensity(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width, self.height);
        for (dst, src) in out.data.iter_mut().zip(self.data.iter()) {
            *dst = [src[0].s0, src[1].s0, src[2].s0];
        }
        out
    }

    /// Worst realizability violation across pixels, as a fraction of `s0`
    /// (zero when every pixel is a valid partially-polarized state).
    pub fn max_realizability_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for px in &self.data {
            for s in px {
                let lp = s.polarized_intensity();
                if lp > s.s0 {
                    let denom = s.s0.abs().max(1e-300);
                    worst = worst.max((lp - s.s0) / denom);
                }
            }
        }
        worst
    }
}

/// The four linear-polarizer captures at 0, 45, 90 and 135 degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSet {
    /// Indexed in `CAPTURE_ANGLES` order.
    pub images: [RgbImage; 4],
}

pub const CAPTURE_NAMES: [&str; 4] = ["i000", "i045", "i090", "i135"];
pub const PURE_BSDF_CAPTURE_NAMES: [&str; 4] = ["b000", "b045", "b090", "b135"];

impl CaptureSet {
    pub fn width(&self) -> u32 {
        self.images[0].width
    }

    pub fn height(&self) -> u32 {
        self.images[0].height
    }

    /// Reassemble the Stokes image from the four captures (exact inverse of
    /// [`capture_images`]).
    pub fn invert(&self) -> StokesImage {
        let mut out = StokesImage::new(self.width(), self.height());
        for i in 0..out.data.len() {
            for ch in 0..3 {
                out.data[i][ch] = invert_capture_pixel(
                    self.images[0].data[i][ch],
                    self.images[1].data[i][ch],
                    self.images[2].data[i][ch],
                    self.images[3].data[i][ch],
                );
            }
        }
        out
    }
}

/// Apply the ideal-polarizer measurement at the four canonical angles to
/// every pixel and channel.
pub fn capture_images(stokes: &StokesImage) -> CaptureSet {
    let mut images: [RgbImage; 4] = std::array::from_fn(|_| RgbImage::new(stokes.width, stokes.height));
    for (a, angle) in CAPTURE_ANGLES.iter().enumerate() {
        for (dst, src) in images[a].data.iter_mut().zip(stokes.data.iter()) {
            for ch in 0..3 {
                dst[ch] = src[ch].measure_polarizer(*angle);
            }
        }
    }
    CaptureSet { images }
}

/// Derived polarimetric quantities per pixel and channel.
#[derive(Debug, Clone)]
pub struct PolarimetricMaps {
    pub dop: RgbImage,
    /// Angle of polarization in radians, folded into `[0, pi)`.
    pub aop: RgbImage,
    pub imax: RgbImage,
    pub imin: RgbImage,
}

pub fn polarimetric_maps(stokes: &StokesImage) -> PolarimetricMaps {
    let (w, h) = (stokes.width, stokes.height);
    let mut maps = PolarimetricMaps {
        dop: RgbImage::new(w, h),
        aop: RgbImage::new(w, h),
        imax: RgbImage::new(w, h),
        imin: RgbImage::new(w, h),
    };
    for i in 0..stokes.data.len() {
        for ch in 0..3 {
            let s = stokes.data[i][ch];
            let (dop, aop) = s.dop_aop();
            let (imax, imin) = s.maxmin();
            maps.dop.data[i][ch] = dop;
            maps.aop.data[i][ch] = aop;
            maps.imax.data[i][ch] = imax;
            maps.imin.data[i][ch] = imin;
        }
    }
    maps
}

/// Masked summary statistics of a polarimetric render.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PolarimetricSummary {
    pub masked_pixels: usize,
    /// Mean DoP of the channel-averaged Stokes vector over the mask.
    pub mean_dop: f64,
    pub mean_dop_per_channel: [f64; 3],
    /// Histogram of channel-averaged DoP over `[0, 1]`.
    pub dop_histogram: Vec<u32>,
    /// Histogram of channel-averaged AoP over `[0, pi)`.
    pub aop_histogram: Vec<u32>,
    /// AoP histogram mode, in radians (bin center).
    pub aop_mode: f64,
    /// Principal AoP of the mask: angle of the summed Stokes vector.
    pub aop_principal: f64,
    pub mean_s0: [f64; 3],
}

pub const SUMMARY_BINS: usize = 90;

/// Compute masked polarimetric statistics. Pixels where `mask <= 0.5` are
/// ignored; an empty mask is refused.
pub fn polarimetric_summary(stokes: &StokesImage, mask: &ScalarImage) -> Result<PolarimetricSummary> {
    if stokes.width != mask.width || stokes.height != mask.height {
        return Err(Error::Dimension(format!(
            "stokes {}x{} vs mask {}x{}",
            stokes.width, stokes.height, mask.width, mask.height
        )));
    }
    let mut n = 0usize;
    let mut dop_sum = 0.0;
    let mut dop_ch_sum = [0.0; 3];
    let mut s0_sum = [0.0; 3];
    let mut dop_hist = vec![0u32; SUMMARY_BINS];
    let mut aop_hist = vec![0u32; SUMMARY_BINS];
    let mut agg = StokesVector::new(0.0, 0.0, 0.0);
    for i in 0..stokes.data.len() {
        if mask.data[i] <= 0.5 {
            continue;
        }
        n += 1;
        let px = stokes.data[i];
        let mut combined = StokesVector::new(0.0, 0.0, 0.0);
        for ch in 0..3 {
            combined += px[ch];
            dop_ch_sum[ch] += px[ch].dop_aop().0;
            s0_sum[ch] += px[ch].s0;
        }
        agg += combined;
        let (dop, aop) = combined.dop_aop();
        dop_sum += dop;
        let db = ((dop * SUMMARY_BINS as f64) as usize).min(SUMMARY_BINS - 1);
        dop_hist[db] += 1;
        let ab = ((aop / std::f64::consts::PI * SUMMARY_BINS as f64) as usize).min(SUMMARY_BINS - 1);
        aop_hist[ab] += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mode_bin = aop_hist
        .iter()
        .enumerate()
        .max_by_key(|(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let aop_mode = (mode_bin as f64 + 0.5) / SUMMARY_BINS as f64 * std::f64::consts::PI;
    let inv_n = 1.0 / n as f64;
    Ok(PolarimetricSummary {
        masked_pixels: n,
        mean_dop: dop_sum * inv_n,
        mean_dop_per_channel: [
            dop_ch_sum[0] * inv_n,
            dop_ch_sum[1] * inv_n,
            dop_ch_sum[2] * inv_n,
        ],
        dop_histogram: dop_hist,
        aop_histogram: aop_hist,
        aop_mode,
        aop_principal: agg.dop_aop().1,
        mean_s0: [s0_sum[0] * inv_n, s0_sum[1] * inv_n, s0_sum[2] * inv_n],
    })
}

/// Circular distance between two polarization angles (period pi).
pub fn aop_distance(a: f64, b: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut d = (a - b).rem_euclid(pi);
    if d > pi / 2.0 {
        d = pi - d;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capture_round_trip_imagewise() {
        let mut img = StokesImage::new(8, 4);
        for (i, px) in img.data.iter_mut().enumerate() {
            for (ch, s) in px.iter_mut().enumerate() {
                let base = (i * 3 + ch) as f64;
                let s0 = 1.0 + 0.1 * base;
                *s = StokesVector::new(s0, 0.3 * s0 * (base * 0.7).cos(), 0.3 * s0 * (base * 0.7).sin());
            }
        }
        let caps = capture_images(&img);
        let back = caps.invert();
        for i in 0..img.data.len() {
            for ch in 0..3 {
                let a = img.data[i][ch];
                let b = back.data[i][ch];
                assert!((a.s0 - b.s0).abs() < 1e-12);
                assert!((a.s1 - b.s1).abs() < 1e-12);
                assert!((a.s2 - b.s2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unpolarized_image_measures_half_everywhere() {
        let mut img = StokesImage::new(4, 4);
        for px in img.data.iter_mut() {
            for s in px.iter_mut() {
                *s = StokesVector::unpolarized(1.0);
            }
        }
        let caps = capture_images(&img);
        for a in 0..4 {
            for px in &caps.images[a].data {
                for ch in 0..3 {
                    assert!((px[ch] - 0.5).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn captures_sum_to_twice_s0() {
        let s = StokesVector::new(2.0, 0.5, -0.7);
        let mut img = StokesImage::new(2, 2);
        img.data[3] = [s; 3];
        let caps = capture_images(&img);
        let total: f64 = (0..4).map(|a| caps.images[a].data[3][0]).sum();
        assert!((total - 2.0 * s.s0).abs() < 1e-12);
    }

    #[test]
    fn summary_of_unpolarized_is_zero_dop() {
        let mut img = StokesImage::new(4, 4);
        for px in img.data.iter_mut() {
            *px = [StokesVector::unpolarized(2.0); 3];
        }
        let mut mask = ScalarImage::new(4, 4);
        for m in mask.data.iter_mut() {
            *m = 1.0;
        }
        let s = polarimetric_summary(&img, &mask).unwrap();
        assert_eq!(s.masked_pixels, 16);
        assert_eq!(s.mean_dop, 0.0);
        assert!((s.mean_s0[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn summary_refuses_empty_mask() {
        let img = StokesImage::new(4, 4);
        let mask = ScalarImage::new(4, 4);
        assert!(matches!(
            polarimetric_summary(&img, &mask),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn summary_aop_statistics_locate_the_common_angle() {
        let psi = 0.4;
        let mut img = StokesImage::new(8, 8);
        for px in img.data.iter_mut() {
            *px = [StokesVector::polarized(1.0, psi); 3];
        }
        let mut mask = ScalarImage::new(8, 8);
        for m in mask.data.iter_mut() {
            *m = 1.0;
        }
        let s = polarimetric_summary(&img, &mask).unwrap();
        let expected = StokesVector::polarized(1.0, psi).dop_aop().1;
        assert!(aop_distance(s.aop_principal, expected) < 1e-9);
        assert!(aop_distance(s.aop_mode, expected) < std::f64::consts::PI / SUMMARY_BINS as f64);
        assert!((s.mean_dop - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aop_distance_wraps_at_pi() {
        let pi = std::f64::consts::PI;
        assert!((aop_distance(0.01, pi - 0.01) - 0.02).abs() < 1e-12);
        assert!((aop_distance(0.0, pi / 2.0) - pi / 2.0).abs() < 1e-12);
        assert!(aop_distance(1.0, 1.0) < 1e-15);
    }

    #[test]
    fn realizability_violation_detector() {
        let mut img = StokesImage::new(2, 1);
        img.data[0] = [StokesVector::new(1.0, 0.5, 0.5); 3];
        assert_eq!(img.max_realizability_violation(), 0.0);
        img.data[1] = [StokesVector::new(1.0, 1.0, 0.5); 3];
        assert!(img.max_realizability_violation() > 0.1);
    }
}
