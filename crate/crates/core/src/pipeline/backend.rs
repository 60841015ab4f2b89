use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BackendError, PipelineError};
use crate::geometry::{CameraModel, PixelPoint, WorldPoint};
use crate::marker::{detect_marker, segment, HsvThresholds};
use crate::render::{draw_sphere_marker, overlay_anchor, RgbImage, MARKER_COLOR};
use crate::scene::Scene;

/// Turns a clean head image plus an instruction into an edited image that
/// carries one marker at the intended slot.
pub trait GroundingBackend {
    fn ground(&self, head_rgb: &RgbImage, instruction_text: &str) -> Result<RgbImage, BackendError>;
}

impl<B: GroundingBackend + ?Sized> GroundingBackend for &B {
    fn ground(&self, head_rgb: &RgbImage, text: &str) -> Result<RgbImage, BackendError> {
        (**self).ground(head_rgb, text)
    }
}

impl<B: GroundingBackend + ?Sized> GroundingBackend for Box<B> {
    fn ground(&self, head_rgb: &RgbImage, text: &str) -> Result<RgbImage, BackendError> {
        (**self).ground(head_rgb, text)
    }
}

/// Marks a known ground-truth point exactly where the head camera sees it.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    head: CameraModel,
    target: WorldPoint,
    radius: f64,
}

impl OracleBackend {
    pub fn new(scene: &Scene, target: WorldPoint, radius: f64) -> Self {
        Self {
            head: scene.cameras.head,
            target,
            radius,
        }
    }
}

impl GroundingBackend for OracleBackend {
    fn ground(&self, head_rgb: &RgbImage, _: &str) -> Result<RgbImage, BackendError> {
        let mut out = head_rgb.clone();
        if overlay_anchor(&mut out, &self.head, self.target, self.radius).is_none() {
            log::warn!("oracle target is behind the head camera");
        }
        Ok(out)
    }
}

/// Wraps another backend and moves its marker by an isotropic Gaussian
/// pixel offset.
pub struct PerturbedBackend<B> {
    inner: B,
    sigma_px: f64,
    thresholds: HsvThresholds,
    rng: Mutex<ChaCha8Rng>,
}

impl<B: GroundingBackend> PerturbedBackend<B> {
    pub fn new(inner: B, sigma_px: f64, seed: u64) -> Result<Self, PipelineError> {
        if !(sigma_px >= 0.0 && sigma_px.is_finite()) {
            return Err(PipelineError::InvalidSigma(sigma_px));
        }
        Ok(Self {
            inner,
            sigma_px,
            thresholds: HsvThresholds::default(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    fn offset(&self) -> (f64, f64) {
        let normal = Normal::new(0.0, self.sigma_px).expect("sigma validated");
        let mut rng = self.rng.lock().unwrap_or_else(|p| p.into_inner());
        (normal.sample(&mut *rng), normal.sample(&mut *rng))
    }
}

impl<B: GroundingBackend> GroundingBackend for PerturbedBackend<B> {
    fn ground(&self, head_rgb: &RgbImage, text: &str) -> Result<RgbImage, BackendError> {
        let marked = self.inner.ground(head_rgb, text)?;
        if self.sigma_px == 0.0 {
            return Ok(marked);
        }
        let Ok(det) = detect_marker(&marked, &self.thresholds) else {
            return Ok(marked);
        };
        let (dx, dy) = self.offset();
        let mut out = if marked.width() == head_rgb.width() && marked.height() == head_rgb.height() {
            head_rgb.clone()
        } else {
            erase_marker(&marked, &self.thresholds)
        };
        let radius = (det.area / std::f64::consts::PI).sqrt();
        let c = PixelPoint::new(det.center.u + dx, det.center.v + dy);
        draw_sphere_marker(&mut out, c, radius, MARKER_COLOR);
        Ok(out)
    }
}

/// Removes marker-colored pixels by copying the nearest unmarked pixel on
/// the same row (left first). Used when no clean copy of the image exists.
pub fn erase_marker(img: &RgbImage, th: &HsvThresholds) -> RgbImage {
    let mask = segment(img, th).dilate();
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.get(x, y) {
                continue;
            }
            let left = (0..x).rev().find(|&i| !mask.get(i, y));
            let right = (x + 1..img.width()).find(|&i| !mask.get(i, y));
            let src = match (left, right) {
                (Some(l), Some(r)) => Some(if x - l <= r - x { l } else { r }),
                (l, r) => l.or(r),
            };
            if let Some(sx) = src {
                out.set(x, y, img.get(sx, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::detect_marker;
    use crate::render::BACKGROUND;

    struct Fixed(PixelPoint, f64);
    impl GroundingBackend for Fixed {
        fn ground(&self, img: &RgbImage, _: &str) -> Result<RgbImage, BackendError> {
            let mut out = img.clone();
            draw_sphere_marker(&mut out, self.0, self.1, MARKER_COLOR);
            Ok(out)
        }
    }

    #[test]
    fn zero_sigma_is_transparent() {
        let img = RgbImage::new(120, 90, BACKGROUND);
        let inner = Fixed(PixelPoint::new(50.3, 40.7), 8.0);
        let p = PerturbedBackend::new(&inner, 0.0, 1).unwrap();
        assert_eq!(p.ground(&img, "").unwrap(), inner.ground(&img, "").unwrap());
    }

    #[test]
    fn offsets_are_seeded() {
        let img = RgbImage::new(200, 200, BACKGROUND);
        let inner = Fixed(PixelPoint::new(100.0, 100.0), 8.0);
        let a = PerturbedBackend::new(&inner, 5.0, 9).unwrap();
        let b = PerturbedBackend::new(&inner, 5.0, 9).unwrap();
        let c = PerturbedBackend::new(&inner, 5.0, 10).unwrap();
        let (ia, ib, ic) = (a.ground(&img, "").unwrap(), b.ground(&img, "").unwrap(), c.ground(&img, "").unwrap());
        assert_eq!(ia, ib);
        assert_ne!(ia, ic);
        // the old marker is gone and the new one keeps its size
        let th = HsvThresholds::default();
        detect_marker(&ia, &th).unwrap();
        let before = inner.ground(&img, "").unwrap().count(MARKER_COLOR) as f64;
        let after = ia.count(MARKER_COLOR) as f64;
        assert!((after - before).abs() / before < 0.1, "{before} vs {after}");
    }

    #[test]
    fn negative_sigma_rejected() {
        let inner = Fixed(PixelPoint::new(1.0, 1.0), 1.0);
        assert!(PerturbedBackend::new(inner, -1.0, 0).is_err());
    }

    #[test]
    fn erase_restores_uniform_background() {
        let clean = RgbImage::new(60, 40, [90, 90, 90]);
        let mut marked = clean.clone();
        draw_sphere_marker(&mut marked, PixelPoint::new(30.0, 20.0), 6.0, MARKER_COLOR);
        assert_eq!(erase_marker(&marked, &HsvThresholds::default()), clean);
    }
}
