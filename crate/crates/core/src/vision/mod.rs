//! Classical preprocessing front-end for ring detection.
//!
//! The pipeline thresholds the image in HSV space to find purple pixels,
//! box-blurs the mask, masks the original image with the blurred response
//! so only neighborhoods around purple objects survive, then extracts
//! connected-component candidates and asks a pluggable detector to accept
//! or reject each one. Accepted candidates get a depth read from the
//! paired depth map and come out as pixel detections ready for the
//! camera-geometry chain.

pub mod image;
pub mod ops;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelDetection;
pub use image::{BinaryMask, ColorImage, DepthMap, GrayImage};
pub use ops::{box_blur, find_candidates, hsv_threshold, mask_image, rgb_to_hsv, Candidate, HsvRange};

fn default_hsv() -> HsvRange {
    HsvRange { h_min: 123, h_max: 169, s_min: 39, s_max: 192, v_min: 76, v_max: 255 }
}

fn default_blur_radius() -> u32 {
    17
}

fn default_mask_threshold() -> u8 {
    0
}

fn default_min_area() -> u32 {
    50
}

fn default_aspect_bounds() -> (f64, f64) {
    (0.5, 2.5)
}

fn default_fill_bounds() -> (f64, f64) {
    (0.2, 0.9)
}

/// Tunable pipeline parameters; the defaults are the field-tested values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_hsv")]
    pub hsv: HsvRange,
    #[serde(default = "default_blur_radius")]
    pub blur_radius: u32,
    /// Blurred response must exceed this for a pixel to survive masking.
    #[serde(default = "default_mask_threshold")]
    pub mask_threshold: u8,
    #[serde(default = "default_min_area")]
    pub min_area: u32,
    /// Accepted bounding-box aspect ratio range (width / height).
    #[serde(default = "default_aspect_bounds")]
    pub aspect_bounds: (f64, f64),
    /// Accepted fill ratio range (component pixels / box area).
    #[serde(default = "default_fill_bounds")]
    pub fill_bounds: (f64, f64),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hsv: default_hsv(),
            blur_radius: default_blur_radius(),
            mask_threshold: default_mask_threshold(),
            min_area: default_min_area(),
            aspect_bounds: default_aspect_bounds(),
            fill_bounds: default_fill_bounds(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hsv.validate()?;
        if self.min_area < 1 {
            return Err(Error::InvalidConfig("min_area must be at least 1".into()));
        }
        if self.aspect_bounds.0 > self.aspect_bounds.1 || self.fill_bounds.0 > self.fill_bounds.1 {
            return Err(Error::InvalidConfig("detector bounds have min > max".into()));
        }
        Ok(())
    }
}

/// Detector verdict for one candidate.
#[derive(Debug, Clone, Copy)]
pub struct Verdict {
    pub accepted: bool,
    /// Confidence in `[0, 1]`.
    pub score: f64,
}

/// Pluggable accept/reject stage standing where a learned model would run.
/// Receives the candidate geometry and its crop from the masked image.
pub trait RingDetector {
    fn evaluate(&self, candidate: &Candidate, crop: &ColorImage) -> Verdict;
}

/// Default geometric detector: accepts a candidate whose bounding box has
/// a plausible aspect ratio and whose fill ratio looks like an annulus
/// rather than a solid blob or a sliver. The fill ratio doubles as the
/// confidence score.
#[derive(Debug, Clone)]
pub struct HeuristicDetector {
    pub aspect_bounds: (f64, f64),
    pub fill_bounds: (f64, f64),
}

impl HeuristicDetector {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        HeuristicDetector { aspect_bounds: cfg.aspect_bounds, fill_bounds: cfg.fill_bounds }
    }
}

impl Default for HeuristicDetector {
    fn default() -> Self {
        HeuristicDetector {
            aspect_bounds: default_aspect_bounds(),
            fill_bounds: default_fill_bounds(),
        }
    }
}

impl RingDetector for HeuristicDetector {
    fn evaluate(&self, candidate: &Candidate, _crop: &ColorImage) -> Verdict {
        let aspect = candidate.aspect_ratio();
        let fill = candidate.fill_ratio();
        let accepted = (self.aspect_bounds.0..=self.aspect_bounds.1).contains(&aspect)
            && (self.fill_bounds.0..=self.fill_bounds.1).contains(&fill);
        Verdict { accepted, score: fill.clamp(0.0, 1.0) }
    }
}

/// Intermediate images from Steps 2-4, kept around for debug output.
pub struct PreprocessOutput {
    pub mask: BinaryMask,
    pub blurred: GrayImage,
    pub masked: ColorImage,
}

/// Run Steps 2-4 on one image.
pub fn preprocess(img: &ColorImage, cfg: &PipelineConfig) -> Result<PreprocessOutput> {
    let mask = hsv_threshold(img, &cfg.hsv);
    let blurred = box_blur(&mask, cfg.blur_radius);
    let masked = mask_image(img, &blurred, cfg.mask_threshold)?;
    Ok(PreprocessOutput { mask, blurred, masked })
}

/// One accepted candidate, with its depth reading when available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptedRing {
    pub candidate: Candidate,
    pub score: f64,
    /// Absent when no depth map was supplied.
    pub detection: Option<PixelDetection>,
}

/// Full per-image result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub candidates: Vec<Candidate>,
    pub accepted: Vec<AcceptedRing>,
    pub rejected_count: usize,
    /// Accepted candidates dropped because every depth sample around the
    /// centroid was invalid.
    pub dropped_no_depth: usize,
}

impl DetectionReport {
    /// The detections with valid depth, in candidate order.
    pub fn detections(&self) -> Vec<PixelDetection> {
        self.accepted.iter().filter_map(|a| a.detection).collect()
    }
}

/// Median of the 3x3 depth neighborhood around a pixel, skipping invalid
/// (zero or non-finite) readings. `None` when every sample is invalid.
pub fn sample_depth(depth: &DepthMap, u: u32, v: u32) -> Option<f64> {
    let mut vals: Vec<f32> = Vec::with_capacity(9);
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let x = u as i64 + dx;
            let y = v as i64 + dy;
            if x < 0 || y < 0 || x >= depth.width as i64 || y >= depth.height as i64 {
                continue;
            }
            let d = depth.get(x as u32, y as u32);
            if d.is_finite() && d > 0.0 {
                vals.push(d);
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    let med = if n % 2 == 1 {
        vals[n / 2] as f64
    } else {
        (vals[n / 2 - 1] as f64 + vals[n / 2] as f64) / 2.0
    };
    Some(med)
}

/// Run the full pipeline on a paired image and depth map.
///
/// Candidate geometry comes from the threshold mask; detector crops come
/// from the masked image so the detector sees what a downstream model
/// would. Depth is the 3x3 median at the candidate centroid.
pub fn detect_rings(
    img: &ColorImage,
    depth: Option<&DepthMap>,
    cfg: &PipelineConfig,
    detector: &dyn RingDetector,
) -> Result<DetectionReport> {
    cfg.validate()?;
    if let Some(d) = depth {
        if d.width != img.width || d.height != img.height {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} vs depth {}x{}",
                img.width, img.height, d.width, d.height
            )));
        }
    }
    let pre = preprocess(img, cfg)?;
    let candidates = find_candidates(&pre.mask, cfg.min_area);

    let mut accepted = Vec::new();
    let mut rejected_count = 0;
    let mut dropped_no_depth = 0;
    for cand in &candidates {
        let crop = pre.masked.crop(cand.x0, cand.y0, cand.x1, cand.y1);
        let verdict = detector.evaluate(cand, &crop);
        if !verdict.accepted {
            rejected_count += 1;
            continue;
        }
        let detection = match depth {
            None => None,
            Some(map) => {
                let u = cand.centroid_u.round() as u32;
                let v = cand.centroid_v.round() as u32;
                match sample_depth(map, u.min(map.width - 1), v.min(map.height - 1)) {
                    Some(d) => Some(PixelDetection::new(cand.centroid_u, cand.centroid_v, d)?),
                    None => {
                        dropped_no_depth += 1;
                        continue;
                    }
                }
            }
        };
        accepted.push(AcceptedRing { candidate: cand.clone(), score: verdict.score, detection });
    }
    Ok(DetectionReport { candidates, accepted, rejected_count, dropped_no_depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Paint a filled disc; the test-side stand-in for a ring seen from
    /// above is an annulus (disc minus inner disc).
    pub(crate) fn paint_annulus(
        img: &mut ColorImage,
        cx: f64,
        cy: f64,
        r_outer: f64,
        r_inner: f64,
        rgb: (u8, u8, u8),
    ) {
        for y in 0..img.height {
            for x in 0..img.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let d2 = dx * dx + dy * dy;
                if d2 <= r_outer * r_outer && d2 >= r_inner * r_inner {
                    img.set_pixel(x, y, rgb);
                }
            }
        }
    }

    struct RejectAll;
    impl RingDetector for RejectAll {
        fn evaluate(&self, _c: &Candidate, _crop: &ColorImage) -> Verdict {
            Verdict { accepted: false, score: 0.0 }
        }
    }

    #[test]
    fn blank_image_detects_nothing() {
        let img = ColorImage::new(64, 48);
        let depth = DepthMap::constant(64, 48, 1.0);
        let cfg = PipelineConfig::default();
        let report = detect_rings(&img, Some(&depth), &cfg, &HeuristicDetector::default()).unwrap();
        assert!(report.candidates.is_empty());
        assert!(report.accepted.is_empty());
    }

    #[test]
    fn synthetic_disc_detects_at_expected_centroid() {
        let mut img = ColorImage::new(640, 480);
        // Green backdrop, well outside the purple window.
        for y in 0..480 {
            for x in 0..640 {
                img.set_pixel(x, y, (30, 120, 40));
            }
        }
        paint_annulus(&mut img, 220.0, 380.0, 40.0, 25.0, (140, 80, 150));
        let depth = DepthMap::constant(640, 480, 1.2);
        let cfg = PipelineConfig::default();
        let report = detect_rings(&img, Some(&depth), &cfg, &HeuristicDetector::default()).unwrap();
        let dets = report.detections();
        assert_eq!(dets.len(), 1);
        assert!((dets[0].u - 220.0).abs() <= 2.0, "u = {}", dets[0].u);
        assert!((dets[0].v - 380.0).abs() <= 2.0, "v = {}", dets[0].v);
        assert!((dets[0].depth - 1.2).abs() < 1e-6);
    }

    #[test]
    fn rejecting_detector_empties_output() {
        let mut img = ColorImage::new(320, 240);
        paint_annulus(&mut img, 160.0, 120.0, 30.0, 18.0, (140, 80, 150));
        let depth = DepthMap::constant(320, 240, 2.0);
        let cfg = PipelineConfig::default();
        let report = detect_rings(&img, Some(&depth), &cfg, &RejectAll).unwrap();
        assert!(!report.candidates.is_empty());
        assert!(report.accepted.is_empty());
        assert_eq!(report.rejected_count, report.candidates.len());
    }

    #[test]
    fn invalid_depth_neighborhood_drops_candidate() {
        let mut img = ColorImage::new(320, 240);
        paint_annulus(&mut img, 160.0, 120.0, 30.0, 18.0, (140, 80, 150));
        let depth = DepthMap::new(320, 240); // all zeros = invalid
        let cfg = PipelineConfig::default();
        let report = detect_rings(&img, Some(&depth), &cfg, &HeuristicDetector::default()).unwrap();
        assert!(report.detections().is_empty());
        assert_eq!(report.dropped_no_depth, 1);
    }

    #[test]
    fn missing_depth_map_keeps_detection_without_position() {
        let mut img = ColorImage::new(320, 240);
        paint_annulus(&mut img, 160.0, 120.0, 30.0, 18.0, (140, 80, 150));
        let cfg = PipelineConfig::default();
        let report = detect_rings(&img, None, &cfg, &HeuristicDetector::default()).unwrap();
        assert_eq!(report.accepted.len(), 1);
        assert!(report.accepted[0].detection.is_none());
    }

    #[test]
    fn depth_median_skips_zeros() {
        let mut depth = DepthMap::new(5, 5);
        depth.set(2, 2, 2.0);
        depth.set(1, 2, 1.0);
        depth.set(3, 2, 3.0);
        // Six zeros skipped; median of {1, 2, 3} is 2.
        assert_eq!(sample_depth(&depth, 2, 2), Some(2.0));
        assert_eq!(sample_depth(&depth, 0, 0), None);
    }

    #[test]
    fn detect_rings_is_deterministic() {
        let mut img = ColorImage::new(200, 200);
        paint_annulus(&mut img, 70.0, 90.0, 28.0, 16.0, (140, 80, 150));
        paint_annulus(&mut img, 150.0, 60.0, 22.0, 12.0, (150, 90, 160));
        let depth = DepthMap::constant(200, 200, 1.5);
        let cfg = PipelineConfig::default();
        let det = HeuristicDetector::default();
        let a = detect_rings(&img, Some(&depth), &cfg, &det).unwrap();
        let b = detect_rings(&img, Some(&depth), &cfg, &det).unwrap();
        assert_eq!(a.detections().len(), b.detections().len());
        for (x, y) in a.detections().iter().zip(b.detections().iter()) {
            assert_eq!(x.u, y.u);
            assert_eq!(x.v, y.v);
            assert_eq!(x.depth, y.depth);
        }
    }

    #[test]
    fn config_parses_partial_json_with_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"blur_radius": 9}"#).unwrap();
        assert_eq!(cfg.blur_radius, 9);
        assert_eq!(cfg.hsv.h_min, 123);
        assert_eq!(cfg.hsv.h_max, 169);
        assert_eq!(cfg.min_area, 50);
    }
}
