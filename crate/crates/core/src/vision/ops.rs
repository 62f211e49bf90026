//! The four preprocessing steps plus candidate extraction.

use serde::{Deserialize, Serialize};

use super::image::{BinaryMask, ColorImage, GrayImage};
use crate::error::{Error, Result};

/// Inclusive HSV window. Hue uses the half-degree 0-180 scale common to
/// vision toolchains; saturation and value are 0-255.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_min: u8,
    pub h_max: u8,
    pub s_min: u8,
    pub s_max: u8,
    pub v_min: u8,
    pub v_max: u8,
}

impl HsvRange {
    pub fn validate(&self) -> Result<()> {
        if self.h_min > self.h_max || self.s_min > self.s_max || self.v_min > self.v_max {
            return Err(Error::InvalidConfig(format!("HSV range has min > max: {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, h: u8, s: u8, v: u8) -> bool {
        (self.h_min..=self.h_max).contains(&h)
            && (self.s_min..=self.s_max).contains(&s)
            && (self.v_min..=self.v_max).contains(&v)
    }
}

/// Convert one RGB pixel to HSV on the (0-180, 0-255, 0-255) scales.
///
/// Standard hexcone conversion with the hue halved to fit a byte; ties
/// between equal channel maxima resolve in R, G, B order.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;

    let v = max;
    let s = if max > 0.0 { 255.0 * delta / max } else { 0.0 };
    let h_deg = if delta == 0.0 {
        0.0
    } else if max == rf {
        60.0 * (gf - bf) / delta
    } else if max == gf {
        120.0 + 60.0 * (bf - rf) / delta
    } else {
        240.0 + 60.0 * (rf - gf) / delta
    };
    let h_deg = if h_deg < 0.0 { h_deg + 360.0 } else { h_deg };
    let mut h = (h_deg / 2.0).round() as u16;
    if h >= 180 {
        h = 0; // hue wraps
    }
    (h as u8, s.round() as u8, v.round() as u8)
}

/// Step 2: binary mask of pixels whose HSV falls inside the closed range.
pub fn hsv_threshold(img: &ColorImage, range: &HsvRange) -> BinaryMask {
    let mut mask = BinaryMask::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let (r, g, b) = img.pixel(x, y);
            let (h, s, v) = rgb_to_hsv(r, g, b);
            mask.set(x, y, range.contains(h, s, v));
        }
    }
    mask
}

/// Step 3: normalized box blur over a `(2*radius+1)^2` window.
///
/// Borders replicate the edge pixel; the mean rounds to the nearest
/// integer (halves up). Radius zero is the identity.
pub fn box_blur(mask: &BinaryMask, radius: u32) -> GrayImage {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut out = GrayImage::new(mask.width, mask.height);
    if w == 0 || h == 0 {
        return out;
    }
    if radius == 0 {
        for y in 0..mask.height {
            for x in 0..mask.width {
                out.set(x, y, if mask.get(x, y) { 255 } else { 0 });
            }
        }
        return out;
    }

    let r = radius as usize;
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    // Summed-area table over the edge-replicated padding.
    let mut sat = vec![0u64; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = py.saturating_sub(r).min(h - 1) as u32;
        let mut row_sum = 0u64;
        for px in 0..pw {
            let sx = px.saturating_sub(r).min(w - 1) as u32;
            row_sum += if mask.get(sx, sy) { 255 } else { 0 };
            sat[(py + 1) * (pw + 1) + px + 1] = sat[py * (pw + 1) + px + 1] + row_sum;
        }
    }
    let side = 2 * r + 1;
    let area = (side * side) as u64;
    let window_sum = |x0: usize, y0: usize| -> u64 {
        let (x1, y1) = (x0 + side, y0 + side);
        sat[y1 * (pw + 1) + x1] + sat[y0 * (pw + 1) + x0]
            - sat[y0 * (pw + 1) + x1]
            - sat[y1 * (pw + 1) + x0]
    };
    for y in 0..h {
        for x in 0..w {
            let sum = window_sum(x, y);
            let mean = (2 * sum + area) / (2 * area);
            out.set(x as u32, y as u32, mean as u8);
        }
    }
    out
}

/// Step 4: keep input pixels where the blurred response exceeds the
/// threshold, black elsewhere.
pub fn mask_image(img: &ColorImage, blurred: &GrayImage, threshold: u8) -> Result<ColorImage> {
    if img.width != blurred.width || img.height != blurred.height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width, img.height, blurred.width, blurred.height
        )));
    }
    let mut out = ColorImage::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            if blurred.get(x, y) > threshold {
                out.set_pixel(x, y, img.pixel(x, y));
            }
        }
    }
    Ok(out)
}

/// A connected purple region proposed for detection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    /// Inclusive bounding box corners in pixels.
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    /// Component centroid.
    pub centroid_u: f64,
    pub centroid_v: f64,
    pub pixel_count: u32,
}

impl Candidate {
    pub fn box_width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn box_height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn box_area(&self) -> u32 {
        self.box_width() * self.box_height()
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.box_width() as f64 / self.box_height() as f64
    }

    pub fn fill_ratio(&self) -> f64 {
        self.pixel_count as f64 / self.box_area() as f64
    }
}

/// 8-connected components of the mask with at least `min_area` pixels,
/// sorted by area descending, ties by bounding-box top-left corner in
/// row-major order.
pub fn find_candidates(mask: &BinaryMask, min_area: u32) -> Vec<Candidate> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut visited = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    let mut queue = Vec::new();

    for sy in 0..h {
        for sx in 0..w {
            let si = (sy * w + sx) as usize;
            if visited[si] || !mask.get(sx as u32, sy as u32) {
                continue;
            }
            visited[si] = true;
            queue.clear();
            queue.push((sx, sy));
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            let (mut sum_x, mut sum_y, mut count) = (0u64, 0u64, 0u32);
            while let Some((x, y)) = queue.pop() {
                sum_x += x as u64;
                sum_y += y as u64;
                count += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let ni = (ny * w + nx) as usize;
                        if !visited[ni] && mask.get(nx as u32, ny as u32) {
                            visited[ni] = true;
                            queue.push((nx, ny));
                        }
                    }
                }
            }
            if count >= min_area {
                out.push(Candidate {
                    x0: x0 as u32,
                    y0: y0 as u32,
                    x1: x1 as u32,
                    y1: y1 as u32,
                    centroid_u: sum_x as f64 / count as f64,
                    centroid_v: sum_y as f64 / count as f64,
                    pixel_count: count,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.y0.cmp(&b.y0))
            .then(a.x0.cmp(&b.x0))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hsv_of_pure_red_and_black() {
        assert_eq!(rgb_to_hsv(255, 0, 0), (0, 255, 255));
        assert_eq!(rgb_to_hsv(0, 0, 0), (0, 0, 0));
    }

    #[test]
    fn hsv_of_mid_purple_lands_in_band() {
        let (h, _, _) = rgb_to_hsv(128, 0, 128);
        assert!((130..=160).contains(&h), "hue {h}");
    }

    /// An RGB triple whose HSV lies inside the detector window
    /// (hue 123-169, sat 39-192, val 76-255).
    pub(crate) fn in_band_purple() -> (u8, u8, u8) {
        let rgb = (140, 80, 150);
        let (h, s, v) = rgb_to_hsv(rgb.0, rgb.1, rgb.2);
        assert!((123..=169).contains(&h) && (39..=192).contains(&s) && v >= 76);
        rgb
    }

    fn detector_range() -> HsvRange {
        HsvRange { h_min: 123, h_max: 169, s_min: 39, s_max: 192, v_min: 76, v_max: 255 }
    }

    #[test]
    fn threshold_accepts_uniform_purple() {
        let mut img = ColorImage::new(8, 6);
        let purple = in_band_purple();
        for y in 0..6 {
            for x in 0..8 {
                img.set_pixel(x, y, purple);
            }
        }
        let mask = hsv_threshold(&img, &detector_range());
        assert_eq!(mask.count_nonzero(), 48);
    }

    #[test]
    fn threshold_rejects_black() {
        let img = ColorImage::new(8, 6);
        let mask = hsv_threshold(&img, &detector_range());
        assert_eq!(mask.count_nonzero(), 0);
    }

    #[test]
    fn degenerate_range_matches_exact_values_only() {
        let mut img = ColorImage::new(2, 1);
        img.set_pixel(0, 0, (255, 0, 0)); // h=0, s=255, v=255
        img.set_pixel(1, 0, (254, 0, 0));
        let range = HsvRange { h_min: 0, h_max: 0, s_min: 255, s_max: 255, v_min: 255, v_max: 255 };
        let mask = hsv_threshold(&img, &range);
        assert!(mask.get(0, 0));
        assert!(!mask.get(1, 0));
    }

    #[test]
    fn blur_radius_zero_is_identity() {
        let mut mask = BinaryMask::new(5, 5);
        mask.set(2, 2, true);
        let g = box_blur(&mask, 0);
        assert_eq!(g.data(), mask.data());
    }

    #[test]
    fn blur_keeps_uniform_input() {
        let mut mask = BinaryMask::new(7, 4);
        for y in 0..4 {
            for x in 0..7 {
                mask.set(x, y, true);
            }
        }
        let g = box_blur(&mask, 3);
        assert!(g.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn blur_spreads_single_pixel_to_mean() {
        let mut mask = BinaryMask::new(9, 9);
        mask.set(4, 4, true);
        let g = box_blur(&mask, 1);
        // 255/9 rounds to 28 over the 3x3 footprint.
        for y in 3..=5 {
            for x in 3..=5 {
                assert_eq!(g.get(x, y), 28, "at ({x},{y})");
            }
        }
        assert_eq!(g.get(2, 4), 0);
        assert_eq!(g.get(4, 6), 0);
        // Mass preserved within per-pixel rounding for an interior signal.
        let mass: u32 = g.data().iter().map(|&v| v as u32).sum();
        assert!((mass as i64 - 255).unsigned_abs() <= 9 / 2 + 1, "mass {mass}");
    }

    #[test]
    fn hue_band_complement_masks_partition_the_image() {
        // Splitting the hue axis into the detector band and its complement
        // (full saturation/value spans) must classify every pixel into
        // exactly one mask.
        let mid = detector_range();
        let lo = HsvRange { h_min: 0, h_max: mid.h_min - 1, s_min: 0, s_max: 255, v_min: 0, v_max: 255 };
        let hi = HsvRange { h_min: mid.h_max + 1, h_max: 179, s_min: 0, s_max: 255, v_min: 0, v_max: 255 };
        let full = HsvRange { h_min: mid.h_min, h_max: mid.h_max, s_min: 0, s_max: 255, v_min: 0, v_max: 255 };
        let mut img = ColorImage::new(32, 32);
        let mut s = 1234u64;
        for y in 0..32 {
            for x in 0..32 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                img.set_pixel(x, y, ((s >> 16) as u8, (s >> 28) as u8, (s >> 40) as u8));
            }
        }
        let m_lo = hsv_threshold(&img, &lo);
        let m_mid = hsv_threshold(&img, &full);
        let m_hi = hsv_threshold(&img, &hi);
        for y in 0..32 {
            for x in 0..32 {
                let count =
                    m_lo.get(x, y) as u8 + m_mid.get(x, y) as u8 + m_hi.get(x, y) as u8;
                assert_eq!(count, 1, "pixel ({x},{y}) in {count} masks");
            }
        }
    }

    #[test]
    fn blur_replicates_edges() {
        // A fully-set mask column at the border must stay saturated when
        // the window hangs off the image.
        let mut mask = BinaryMask::new(6, 6);
        for y in 0..6 {
            for x in 0..6 {
                mask.set(x, y, true);
            }
        }
        let g = box_blur(&mask, 2);
        assert_eq!(g.get(0, 0), 255);
        assert_eq!(g.get(5, 5), 255);
    }

    #[test]
    fn mask_image_blackout_and_passthrough() {
        let mut img = ColorImage::new(3, 3);
        img.set_pixel(1, 1, (10, 20, 30));
        let zeros = GrayImage::new(3, 3);
        let black = mask_image(&img, &zeros, 0).unwrap();
        assert!(black.data().iter().all(|&b| b == 0));

        let mut full = GrayImage::new(3, 3);
        for y in 0..3 {
            for x in 0..3 {
                full.set(x, y, 255);
            }
        }
        let kept = mask_image(&img, &full, 0).unwrap();
        assert_eq!(kept, img);
    }

    #[test]
    fn mask_image_rejects_dimension_mismatch() {
        let img = ColorImage::new(3, 3);
        let g = GrayImage::new(2, 3);
        assert!(mask_image(&img, &g, 0).is_err());
    }

    #[test]
    fn empty_mask_yields_no_candidates() {
        let mask = BinaryMask::new(10, 10);
        assert!(find_candidates(&mask, 1).is_empty());
    }

    #[test]
    fn two_rectangles_sort_by_area() {
        let mut mask = BinaryMask::new(40, 20);
        // 10x10 = 100 px at (20, 5); 10x5 = 50 px at (2, 2).
        for y in 5..15 {
            for x in 20..30 {
                mask.set(x, y, true);
            }
        }
        for y in 2..7 {
            for x in 2..12 {
                mask.set(x, y, true);
            }
        }
        let cands = find_candidates(&mask, 1);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].pixel_count, 100);
        assert_eq!((cands[0].x0, cands[0].y0, cands[0].x1, cands[0].y1), (20, 5, 29, 14));
        assert_eq!(cands[0].centroid_u, 24.5);
        assert_eq!(cands[0].centroid_v, 9.5);
        assert_eq!(cands[1].pixel_count, 50);
        assert_eq!((cands[1].x0, cands[1].y0), (2, 2));
        assert_eq!(cands[1].centroid_u, 6.5);
        assert_eq!(cands[1].centroid_v, 4.0);
    }

    #[test]
    fn min_area_filters_small_components() {
        let mut mask = BinaryMask::new(10, 10);
        mask.set(3, 3, true);
        mask.set(4, 4, true); // diagonal pair, 8-connected => one component of 2
        assert!(find_candidates(&mask, 3).is_empty());
        assert_eq!(find_candidates(&mask, 2).len(), 1);
    }

    proptest! {
        #[test]
        fn blur_output_stays_in_byte_range_and_uniform_mass(
            w in 1u32..24, h in 1u32..24, radius in 0u32..6, seed in 0u64..1000
        ) {
            let mut mask = BinaryMask::new(w, h);
            let mut s = seed;
            for y in 0..h {
                for x in 0..w {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    mask.set(x, y, s >> 63 == 1);
                }
            }
            let g = box_blur(&mask, radius);
            // Output is a mean of 0/255 samples, so it stays within range
            // and never exceeds the mask maximum.
            let max_in = if mask.count_nonzero() > 0 { 255 } else { 0 };
            prop_assert!(g.data().iter().all(|&v| v <= max_in));
        }

        #[test]
        fn masking_is_conservative(w in 1u32..16, h in 1u32..16, seed in 0u64..1000) {
            let mut img = ColorImage::new(w, h);
            let mut blurred = GrayImage::new(w, h);
            let mut s = seed;
            for y in 0..h {
                for x in 0..w {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    img.set_pixel(x, y, ((s >> 16) as u8, (s >> 24) as u8, (s >> 32) as u8));
                    blurred.set(x, y, (s >> 40) as u8);
                }
            }
            let out = mask_image(&img, &blurred, 128).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let o = out.pixel(x, y);
                    if o != (0, 0, 0) {
                        prop_assert_eq!(o, img.pixel(x, y));
                    }
                }
            }
        }
    }
}
