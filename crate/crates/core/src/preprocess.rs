//! Mammogram intensity normalization and resizing.
//!
//! All float-to-integer conversions round half up. Resizing uses area
//! averaging ([`RESIZE_KERNEL`]); pixel values after a resize depend on that
//! kernel while image dimensions depend only on the scale rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Identifier recorded in sidecars for the resampling kernel.
pub const RESIZE_KERNEL: &str = "area-average-v1";

pub const DEFAULT_LOWER_OFFSET: u32 = 500;
pub const DEFAULT_UPPER_OFFSET: u32 = 800;
pub const DEFAULT_MAX_LONG: u32 = 2100;
pub const DEFAULT_MAX_SHORT: u32 = 1700;

/// Grayscale image with row-major pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: u32,
    height: u32,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image must be nonempty, got {width}x{height}"
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::InvalidInput(format!(
                "bit depth must be in 1..=16, got {bit_depth}"
            )));
        }
        if pixels.len() as u64 != u64::from(width) * u64::from(height) {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} image needs {} pixels, got {}",
                u64::from(width) * u64::from(height),
                pixels.len()
            )));
        }
        let limit = 1u32 << bit_depth;
        if let Some(p) = pixels.iter().find(|&&p| u32::from(p) >= limit) {
            return Err(Error::InvalidInput(format!(
                "pixel value {p} does not fit in {bit_depth} bits"
            )));
        }
        Ok(PixelImage {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub lower_offset: u32,
    pub upper_offset: u32,
    /// Pixels at or below this value are background and excluded from the mode.
    pub background_threshold: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lower_offset: DEFAULT_LOWER_OFFSET,
            upper_offset: DEFAULT_UPPER_OFFSET,
            background_threshold: 0,
        }
    }
}

/// Most frequent intensity above the background threshold, ties toward
/// the smaller intensity.
pub fn mode_excluding_background(img: &PixelImage, cfg: &WindowConfig) -> Result<u16> {
    let mut hist = vec![0u64; 1 << img.bit_depth];
    for &p in &img.pixels {
        hist[usize::from(p)] += 1;
    }
    let start = (cfg.background_threshold as usize + 1).min(hist.len());
    let mut best: Option<(usize, u64)> = None;
    for (v, &count) in hist.iter().enumerate().skip(start) {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((v, count));
        }
    }
    best.map(|(v, _)| v as u16).ok_or_else(|| {
        Error::Degenerate(format!(
            "no pixel above background threshold {}",
            cfg.background_threshold
        ))
    })
}

/// Result of [`window_rescale`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Windowed {
    pub image: PixelImage,
    pub mode: u16,
    /// Clip window; may extend below zero or above the source range.
    pub lo: i64,
    pub hi: i64,
}

/// Clips to `[mode - lower_offset, mode + upper_offset]` and maps that
/// window linearly onto `0..=255`.
pub fn window_rescale(img: &PixelImage, cfg: &WindowConfig) -> Result<Windowed> {
    if cfg.lower_offset == 0 && cfg.upper_offset == 0 {
        return Err(Error::Config("window offsets must not both be zero".into()));
    }
    let mode = mode_excluding_background(img, cfg)?;
    let lo = i64::from(mode) - i64::from(cfg.lower_offset);
    let hi = i64::from(mode) + i64::from(cfg.upper_offset);
    let span = hi - lo;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| {
            let c = i64::from(p).clamp(lo, hi) - lo;
            // round(255 * c / span), half up, in exact integer arithmetic
            ((510 * c + span) / (2 * span)) as u16
        })
        .collect();
    Ok(Windowed {
        image: PixelImage::new(img.width, img.height, 8, pixels)?,
        mode,
        lo,
        hi,
    })
}

/// Affine map from `log10(gray)` to optical density, clamped to
/// `[od_min, od_max]`. With `invert` set, higher density maps to darker
/// output; otherwise to brighter output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdCalibration {
    pub id: String,
    pub slope: f64,
    pub intercept: f64,
    pub od_min: f64,
    pub od_max: f64,
    #[serde(default)]
    pub invert: bool,
}

impl OdCalibration {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.slope, self.intercept, self.od_min, self.od_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config(format!(
                "calibration {:?} has non-finite coefficients",
                self.id
            )));
        }
        if self.slope == 0.0 {
            return Err(Error::Config(format!(
                "calibration {:?} is constant (slope 0), not monotone",
                self.id
            )));
        }
        if self.od_max <= self.od_min {
            return Err(Error::Config(format!(
                "calibration {:?} needs od_max > od_min, got [{}, {}]",
                self.id, self.od_min, self.od_max
            )));
        }
        Ok(())
    }

    /// Optical density of gray value `g`; `0` is evaluated as `1`.
    pub fn density(&self, g: u16) -> f64 {
        let g = f64::from(g.max(1));
        (self.slope * g.log10() + self.intercept).clamp(self.od_min, self.od_max)
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

pub fn od_map(img: &PixelImage, cal: &OdCalibration) -> Result<PixelImage> {
    cal.validate()?;
    let range = cal.od_max - cal.od_min;
    // one evaluation per gray level
    let lut: Vec<u16> = (0..(1u32 << img.bit_depth))
        .map(|g| {
            let v = round_half_up(255.0 * (cal.density(g as u16) - cal.od_min) / range)
                .clamp(0.0, 255.0) as u16;
            if cal.invert {
                255 - v
            } else {
                v
            }
        })
        .collect();
    let pixels = img.pixels.iter().map(|&p| lut[usize::from(p)]).collect();
    PixelImage::new(img.width, img.height, 8, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeConfig {
    max_long: u32,
    max_short: u32,
}

impl ResizeConfig {
    pub fn new(max_long: u32, max_short: u32) -> Result<Self> {
        if max_short == 0 || max_long < max_short {
            return Err(Error::Config(format!(
                "resize limits need max_long >= max_short > 0, got {max_long}/{max_short}"
            )));
        }
        Ok(ResizeConfig {
            max_long,
            max_short,
        })
    }

    pub fn max_long(&self) -> u32 {
        self.max_long
    }

    pub fn max_short(&self) -> u32 {
        self.max_short
    }
}

impl Default for ResizeConfig {
    fn default() -> Self {
        ResizeConfig {
            max_long: DEFAULT_MAX_LONG,
            max_short: DEFAULT_MAX_SHORT,
        }
    }
}

/// Isotropic scale as an exact ratio `num / den`:
/// `min(max_long / long, max_short / short, 1)`.
pub fn scale_ratio(width: u32, height: u32, cfg: &ResizeConfig) -> (u64, u64) {
    let long = u64::from(width.max(height));
    let short = u64::from(width.min(height));
    let candidates = [
        (u64::from(cfg.max_long), long),
        (u64::from(cfg.max_short), short),
        (1, 1),
    ];
    candidates
        .into_iter()
        .min_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)))
        .expect("three candidates")
}

/// Output dimensions: `floor(dim * s)`, at least 1.
pub fn resized_dims(width: u32, height: u32, cfg: &ResizeConfig) -> (u32, u32) {
    let (num, den) = scale_ratio(width, height, cfg);
    let f = |d: u32| ((u64::from(d) * num / den) as u32).max(1);
    (f(width), f(height))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resized {
    pub image: PixelImage,
    /// Nominal isotropic factor applied to coordinates.
    pub scale: f64,
}

/// Area-average weights mapping `n_in` samples onto `n_out` samples.
fn area_weights(n_in: u32, n_out: u32) -> Vec<Vec<(usize, f64)>> {
    let ratio = f64::from(n_in) / f64::from(n_out);
    (0..n_out)
        .map(|j| {
            let start = f64::from(j) * ratio;
            let end = (f64::from(j + 1) * ratio).min(f64::from(n_in));
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(n_in as usize);
            (first..last)
                .filter_map(|k| {
                    let overlap = end.min(k as f64 + 1.0) - start.max(k as f64);
                    (overlap > 0.0).then(|| (k, overlap / (end - start)))
                })
                .collect()
        })
        .collect()
}

/// Downscales to fit both limits, never upscaling.
pub fn isotropic_resize(img: &PixelImage, cfg: &ResizeConfig) -> Resized {
    let (num, den) = scale_ratio(img.width, img.height, cfg);
    let scale = num as f64 / den as f64;
    let (ow, oh) = resized_dims(img.width, img.height, cfg);
    if (ow, oh) == (img.width, img.height) {
        return Resized {
            image: img.clone(),
            scale,
        };
    }

    let wx = area_weights(img.width, ow);
    let wy = area_weights(img.height, oh);
    let (iw, ow_us) = (img.width as usize, ow as usize);

    let mut rows = vec![0.0f64; img.height as usize * ow_us];
    for y in 0..img.height as usize {
        let src = &img.pixels[y * iw..(y + 1) * iw];
        for (x, taps) in wx.iter().enumerate() {
            rows[y * ow_us + x] = taps.iter().map(|&(k, w)| w * f64::from(src[k])).sum();
        }
    }
    let max = f64::from((1u32 << img.bit_depth) - 1);
    let mut pixels = vec![0u16; ow_us * oh as usize];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..ow_us {
            let v: f64 = taps.iter().map(|&(k, w)| w * rows[k * ow_us + x]).sum();
            pixels[y * ow_us + x] = round_half_up(v).clamp(0.0, max) as u16;
        }
    }
    Resized {
        image: PixelImage {
            width: ow,
            height: oh,
            bit_depth: img.bit_depth,
            pixels,
        },
        scale,
    }
}

/// Scales box coordinates to follow an image resize by `s`.
pub fn transform_boxes(boxes: &[BoundingBox], s: f64) -> Result<Vec<BoundingBox>> {
    boxes.iter().map(|b| b.scaled(s)).collect()
}

/// Reads an 8- or 16-bit grayscale PNG or PGM. `bit_depth` overrides the
/// container depth for 12/14-bit data stored in 16-bit samples.
pub fn read_image(path: &Path, bit_depth: Option<u8>) -> Result<PixelImage> {
    let err = |message: String| Error::Image {
        path: path.to_owned(),
        message,
    };
    let dynamic = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let (w, h) = (dynamic.width(), dynamic.height());
    let (container, pixels) = match dynamic {
        image::DynamicImage::ImageLuma8(buf) => {
            (8, buf.into_raw().into_iter().map(u16::from).collect())
        }
        image::DynamicImage::ImageLuma16(buf) => (16, buf.into_raw()),
        other => {
            return Err(err(format!(
                "expected grayscale image, got {:?}",
                other.color()
            )))
        }
    };
    let depth = bit_depth.unwrap_or(container);
    if depth > container {
        return Err(err(format!(
            "bit depth {depth} exceeds the {container}-bit container"
        )));
    }
    PixelImage::new(w, h, depth, pixels).map_err(|e| err(e.to_string()))
}

/// Writes a PNG: 8-bit samples for depth ≤ 8, 16-bit otherwise.
pub fn write_png(path: &Path, img: &PixelImage) -> Result<()> {
    let err = |e: image::ImageError| Error::Image {
        path: path.to_owned(),
        message: e.to_string(),
    };
    if img.bit_depth <= 8 {
        let raw: Vec<u8> = img.pixels.iter().map(|&p| p as u8).collect();
        image::GrayImage::from_raw(img.width, img.height, raw)
            .expect("buffer length checked at construction")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(err)
    } else {
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
            img.width,
            img.height,
            img.pixels.clone(),
        )
        .expect("buffer length checked at construction")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: u32, h: u32, depth: u8, px: Vec<u16>) -> PixelImage {
        PixelImage::new(w, h, depth, px).unwrap()
    }

    #[test]
    fn pixel_image_validation() {
        assert!(PixelImage::new(2, 2, 8, vec![0; 3]).is_err());
        assert!(PixelImage::new(0, 2, 8, vec![]).is_err());
        assert!(PixelImage::new(1, 1, 8, vec![256]).is_err());
        assert!(PixelImage::new(1, 1, 12, vec![4096]).is_err());
        assert!(PixelImage::new(1, 1, 12, vec![4095]).is_ok());
    }

    #[test]
    fn mode_examples() {
        let cfg = WindowConfig::default();
        assert_eq!(
            mode_excluding_background(&img(2, 2, 12, vec![777; 4]), &cfg).unwrap(),
            777
        );

        let mut px = vec![1000u16; 5];
        px.extend([2000; 9]);
        px.extend([3000; 9]);
        px.push(0);
        assert_eq!(
            mode_excluding_background(&img(4, 6, 12, px), &cfg).unwrap(),
            2000
        );

        let mut px = vec![0u16; 99];
        px.push(700);
        assert_eq!(
            mode_excluding_background(&img(10, 10, 12, px), &cfg).unwrap(),
            700
        );
    }

    #[test]
    fn mode_all_background_is_degenerate() {
        let cfg = WindowConfig {
            background_threshold: 10,
            ..WindowConfig::default()
        };
        let r = mode_excluding_background(&img(2, 2, 8, vec![0, 5, 10, 3]), &cfg);
        assert!(matches!(r, Err(Error::Degenerate(_))));
        // a threshold beyond the depth range leaves nothing
        let cfg = WindowConfig {
            background_threshold: 70_000,
            ..WindowConfig::default()
        };
        assert!(mode_excluding_background(&img(1, 1, 8, vec![200]), &cfg).is_err());
    }

    #[test]
    fn window_endpoints_and_mode_pixel() {
        let mut px = vec![2000u16; 10];
        px.extend([0, 1200, 1500, 2800, 3000, 4095]);
        let w = window_rescale(&img(4, 4, 12, px), &WindowConfig::default()).unwrap();
        assert_eq!((w.mode, w.lo, w.hi), (2000, 1500, 2800));
        assert_eq!(w.image.bit_depth(), 8);
        // 255 * 500 / 1300 = 98.08 -> 98
        assert_eq!(w.image.pixels()[0], 98);
        assert_eq!(&w.image.pixels()[10..], &[0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn window_rounds_half_up() {
        // window [0, 2]: value 1 maps to 127.5 -> 128
        let cfg = WindowConfig {
            lower_offset: 1,
            upper_offset: 1,
            background_threshold: 0,
        };
        let w = window_rescale(&img(3, 1, 8, vec![1, 1, 2]), &cfg).unwrap();
        assert_eq!(w.image.pixels(), &[128, 128, 255]);
        let zero = WindowConfig {
            lower_offset: 0,
            upper_offset: 0,
            background_threshold: 0,
        };
        assert!(window_rescale(&img(1, 1, 8, vec![5]), &zero).is_err());
    }

    fn linear_cal(depth: u8) -> OdCalibration {
        let top = f64::from((1u32 << depth) - 1).log10();
        OdCalibration {
            id: "test".into(),
            slope: 3.0 / top,
            intercept: 0.5,
            od_min: 0.5,
            od_max: 3.5,
            invert: false,
        }
    }

    #[test]
    fn od_spans_full_range() {
        let cal = linear_cal(12);
        let out = od_map(&img(3, 1, 12, vec![1, 64, 4095]), &cal).unwrap();
        assert_eq!(out.pixels()[0], 0);
        assert_eq!(out.pixels()[2], 255);
        let inv = OdCalibration {
            invert: true,
            ..cal
        };
        let out = od_map(&img(3, 1, 12, vec![1, 64, 4095]), &inv).unwrap();
        assert_eq!((out.pixels()[0], out.pixels()[2]), (255, 0));
    }

    #[test]
    fn od_zero_is_treated_as_one() {
        let cal = linear_cal(12);
        let out = od_map(&img(2, 1, 12, vec![0, 1]), &cal).unwrap();
        assert_eq!(out.pixels()[0], out.pixels()[1]);
        assert_eq!(cal.density(0), cal.density(1));
    }

    #[test]
    fn od_is_invariant_to_joint_scaling() {
        let cal = OdCalibration {
            id: "dba".into(),
            slope: -0.93,
            intercept: 4.47,
            od_min: 0.0,
            od_max: 3.0,
            invert: false,
        };
        let doubled = OdCalibration {
            slope: cal.slope * 2.0,
            intercept: cal.intercept * 2.0,
            od_min: cal.od_min * 2.0,
            od_max: cal.od_max * 2.0,
            ..cal.clone()
        };
        let px: Vec<u16> = (0..4096).collect();
        let src = img(64, 64, 12, px);
        assert_eq!(od_map(&src, &cal).unwrap(), od_map(&src, &doubled).unwrap());
    }

    #[test]
    fn od_rejects_bad_calibration() {
        let src = img(1, 1, 8, vec![3]);
        let mut cal = linear_cal(8);
        cal.slope = 0.0;
        assert!(matches!(od_map(&src, &cal), Err(Error::Config(_))));
        let mut cal = linear_cal(8);
        cal.od_max = cal.od_min;
        assert!(od_map(&src, &cal).is_err());
        let mut cal = linear_cal(8);
        cal.intercept = f64::NAN;
        assert!(od_map(&src, &cal).is_err());
    }

    #[test]
    fn resize_dimension_rules() {
        let cfg = ResizeConfig::default();
        assert_eq!(resized_dims(4000, 3000, &cfg), (2100, 1575));
        assert_eq!(scale_ratio(4000, 3000, &cfg), (2100, 4000));
        assert_eq!(resized_dims(1000, 800, &cfg), (1000, 800));
        // 1700/3000 binds over 2100/3400; 3400 * 17/30 = 1926.67
        assert_eq!(resized_dims(3000, 3400, &cfg), (1700, 1926));
        assert_eq!(resized_dims(3000, 1, &cfg), (2100, 1));
        assert!(ResizeConfig::new(100, 200).is_err());
        assert!(ResizeConfig::new(0, 0).is_err());
    }

    #[test]
    fn resize_preserves_constant_images() {
        let src = img(40, 30, 12, vec![1234; 1200]);
        let cfg = ResizeConfig::new(21, 17).unwrap();
        let r = isotropic_resize(&src, &cfg);
        assert_eq!((r.image.width(), r.image.height()), (21, 15));
        assert!(r.image.pixels().iter().all(|&p| p == 1234));
        assert!((r.scale - 21.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn resize_halving_averages_blocks() {
        let src = img(4, 2, 8, vec![0, 2, 10, 20, 4, 6, 30, 41]);
        let r = isotropic_resize(&src, &ResizeConfig::new(2, 1).unwrap());
        // blocks average to 3 and 25.25
        assert_eq!(r.image.pixels(), &[3, 25]);
    }

    #[test]
    fn resize_never_upscales() {
        let src = img(3, 2, 8, vec![1, 2, 3, 4, 5, 6]);
        let r = isotropic_resize(&src, &ResizeConfig::default());
        assert_eq!(r.image, src);
        assert_eq!(r.scale, 1.0);
    }

    #[test]
    fn box_transform() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(transform_boxes(&[b], 1.0).unwrap(), vec![b]);
        let half = transform_boxes(&[b], 0.5).unwrap();
        assert_eq!(half[0], BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap());
        assert!(transform_boxes(&[b], 0.0).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let src = img(3, 2, 12, vec![0, 100, 4095, 7, 8, 9]);
        write_png(&p, &src).unwrap();
        assert_eq!(read_image(&p, Some(12)).unwrap(), src);
        assert_eq!(read_image(&p, None).unwrap().bit_depth(), 16);
        let eight = img(2, 1, 8, vec![3, 250]);
        write_png(&p, &eight).unwrap();
        assert_eq!(read_image(&p, None).unwrap(), eight);
        assert!(read_image(&p, Some(12)).is_err());
    }
}
