//! Marker-center extraction: HSV thresholding, 3×3 opening then closing,
//! 8-connected components, and a second-moment ellipse fit on the largest
//! component.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;
use crate::render::{Rgb, RgbImage};

/// Components smaller than this (pixels) are treated as speckle.
pub const MIN_COMPONENT_AREA: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("no marker found (largest component {largest_area} px)")]
    NoMarker { largest_area: usize },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholds {
    /// Hue interval in degrees; wraps through 0 when `hue_lo > hue_hi`.
    pub hue_lo: f64,
    pub hue_hi: f64,
    pub sat_lo: f64,
    pub val_lo: f64,
}

impl Default for HsvThresholds {
    fn default() -> Self {
        Self {
            hue_lo: 200.0,
            hue_hi: 260.0,
            sat_lo: 0.5,
            val_lo: 0.3,
        }
    }
}

impl HsvThresholds {
    pub fn validate(&self) -> Result<(), DetectError> {
        let hue_ok = |h: f64| (0.0..360.0).contains(&h);
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !hue_ok(self.hue_lo) || !hue_ok(self.hue_hi) {
            return Err(DetectError::InvalidThresholds("hue bounds must lie in [0, 360)".into()));
        }
        if !frac_ok(self.sat_lo) || !frac_ok(self.val_lo) {
            return Err(DetectError::InvalidThresholds(
                "saturation and value bounds must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn matches(&self, c: Rgb) -> bool {
        let (h, s, v) = rgb_to_hsv(c);
        let hue_in = if self.hue_lo <= self.hue_hi {
            h >= self.hue_lo && h <= self.hue_hi
        } else {
            h >= self.hue_lo || h <= self.hue_hi
        };
        hue_in && s >= self.sat_lo && v >= self.val_lo
    }
}

/// Hue in degrees [0, 360), saturation and value in [0, 1].
pub fn rgb_to_hsv(c: Rgb) -> (f64, f64, f64) {
    let [r, g, b] = c.map(|x| x as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h % 360.0, s, max)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[(y * self.width + x) as usize] = on;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// 3×3 min (`erode`) or max filter; out-of-image neighbors are ignored.
    fn filter3(&self, erode: bool) -> Mask {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = Mask::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let mut acc = erode;
                'n: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let v = self.bits[(ny * w + nx) as usize];
                        if erode && !v {
                            acc = false;
                            break 'n;
                        }
                        if !erode && v {
                            acc = true;
                            break 'n;
                        }
                    }
                }
                out.bits[(y * w + x) as usize] = acc;
            }
        }
        out
    }

    pub fn erode(&self) -> Mask {
        self.filter3(true)
    }

    pub fn dilate(&self) -> Mask {
        self.filter3(false)
    }

    pub fn open(&self) -> Mask {
        self.erode().dilate()
    }

    pub fn close(&self) -> Mask {
        self.dilate().erode()
    }
}

/// Threshold in HSV, then one 3×3 opening followed by one 3×3 closing.
pub fn segment(img: &RgbImage, th: &HsvThresholds) -> Mask {
    let mut raw = Mask::new(img.width(), img.height());
    for (bit, px) in raw.bits.iter_mut().zip(img.pixels()) {
        *bit = th.matches(*px);
    }
    raw.open().close()
}

/// A connected region with accumulated first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub area: usize,
    sum_x: f64,
    sum_y: f64,
    sum_xx: f64,
    sum_yy: f64,
    sum_xy: f64,
}

impl Component {
    pub fn centroid(&self) -> PixelPoint {
        let n = self.area as f64;
        PixelPoint::new(self.sum_x / n, self.sum_y / n)
    }

    /// Central second moments `(mu20, mu02, mu11)` per pixel.
    fn central(&self) -> (f64, f64, f64) {
        let n = self.area as f64;
        let c = self.centroid();
        (
            self.sum_xx / n - c.u * c.u,
            self.sum_yy / n - c.v * c.v,
            self.sum_xy / n - c.u * c.v,
        )
    }
}

/// 8-connected components in row-major discovery order.
pub fn components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut seen = vec![false; mask.bits.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        let mut comp = Component {
            area: 0,
            sum_x: 0.0,
            sum_y: 0.0,
            sum_xx: 0.0,
            sum_yy: 0.0,
            sum_xy: 0.0,
        };
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            let (fx, fy) = (x as f64, y as f64);
            comp.area += 1;
            comp.sum_x += fx;
            comp.sum_y += fy;
            comp.sum_xx += fx * fx;
            comp.sum_yy += fy * fy;
            comp.sum_xy += fx * fy;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    pub center: PixelPoint,
    /// Full (major, minor) axis lengths in pixels.
    pub axes: (f64, f64),
    pub area: f64,
    /// Component area over fitted ellipse area, clamped to [0, 1].
    pub confidence: f64,
}

/// Moment-based ellipse fit. Pixels are unit squares, which adds 1/12 to each
/// variance and keeps thin blobs from collapsing to a zero minor axis.
pub fn fit_ellipse(c: &Component) -> MarkerDetection {
    let (mu20, mu02, mu11) = c.central();
    let (a, b) = (mu20 + 1.0 / 12.0, mu02 + 1.0 / 12.0);
    let mean = (a + b) / 2.0;
    let spread = (((a - b) / 2.0).powi(2) + mu11 * mu11).sqrt();
    let l1 = mean + spread;
    let l2 = (mean - spread).max(1.0 / 12.0);
    // a uniform ellipse with semi-axis s has variance s²/4 along that axis
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let ellipse_area = std::f64::consts::PI * major * minor / 4.0;
    MarkerDetection {
        center: c.centroid(),
        axes: (major, minor),
        area: c.area as f64,
        confidence: (c.area as f64 / ellipse_area).clamp(0.0, 1.0),
    }
}

/// Picks the largest component; equal areas go to the smaller row-major
/// centroid.
pub fn largest_component(comps: &[Component]) -> Option<&Component> {
    comps.iter().min_by(|a, b| {
        let (ca, cb) = (a.centroid(), b.centroid());
        b.area
            .cmp(&a.area)
            .then(ca.v.total_cmp(&cb.v))
            .then(ca.u.total_cmp(&cb.u))
    })
}

pub fn detect_marker(img: &RgbImage, th: &HsvThresholds) -> Result<MarkerDetection, DetectError> {
    let mask = segment(img, th);
    let comps = components(&mask);
    let best = largest_component(&comps).ok_or(DetectError::NoMarker { largest_area: 0 })?;
    if best.area < MIN_COMPONENT_AREA {
        return Err(DetectError::NoMarker {
            largest_area: best.area,
        });
    }
    Ok(fit_ellipse(best))
}
