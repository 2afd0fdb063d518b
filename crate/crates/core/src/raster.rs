//! Raster types and the geometric operations shared by preprocessing and
//! test-time augmentation.
//!
//! All intensities are `f64` in `[0, 1]`. Rasters are row-major with the
//! origin at the top-left pixel.

use crate::error::{Error, Result};

/// Grayscale raster with unit-interval intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Validating constructor: dimensions must be nonzero, the buffer must
    /// match them and every value must lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "buffer of {} pixels does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel {} has value {} outside [0, 1]",
                i, pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        check_unit(value, "fill value")?;
        Ok(Self {
            width,
            height,
            pixels: vec![value; width * height],
        })
    }

    /// Builds an image from `f(x, y)`, clamping every value into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Wraps a buffer whose values the caller has already clamped.
    pub(crate) fn from_clamped(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        debug_assert!(pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Applies `f` to each pixel and clamps the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        let pixels = self.pixels.iter().map(|&v| clamp_unit(f(v))).collect();
        GrayImage::from_clamped(self.width, self.height, pixels)
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        check_dims(w, h)?;
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop window ({x0},{y0}) {w}x{h} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + w]);
        }
        Ok(GrayImage::from_clamped(w, h, pixels))
    }

    pub fn same_dims<T: Dims>(&self, other: &T) -> Result<()> {
        ensure_same_dims(self.dims(), other.dims())
    }
}

/// Anything with raster dimensions.
pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Dims for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Dims for ValidityMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Two-level raster: foreground `true`, background `false`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask of {} bits does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// The mask as a `{0, 1}` intensity image.
    pub fn to_image(&self) -> GrayImage {
        let pixels = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        GrayImage::from_clamped(self.width, self.height, pixels)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<BinaryMask> {
        check_dims(w, h)?;
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop window ({x0},{y0}) {w}x{h} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut bits = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            bits.extend_from_slice(&self.bits[row + x0..row + x0 + w]);
        }
        Ok(BinaryMask {
            width: w,
            height: h,
            bits,
        })
    }
}

/// Marks which pixels of a transformed raster came from inside the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::invalid("validity buffer does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_valid(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Pixelwise AND.
    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        ensure_same_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(ValidityMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

/// Color raster with unit-interval channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(Error::invalid("rgb buffer does not match dimensions"));
        }
        if pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("rgb channel outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Gray image replicated into three channels.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            pixels: img.pixels.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        self.pixels[y * self.width + x] = rgb.map(clamp_unit);
    }

    /// Bicubic resample of each channel independently.
    pub fn resample_bicubic(&self, target_w: usize, target_h: usize) -> Result<RgbImage> {
        let mut channels = Vec::with_capacity(3);
        for c in 0..3 {
            let plane = GrayImage::from_clamped(
                self.width,
                self.height,
                self.pixels.iter().map(|p| p[c]).collect(),
            );
            channels.push(resample_bicubic(&plane, target_w, target_h)?);
        }
        let pixels = (0..target_w * target_h)
            .map(|i| {
                [
                    channels[0].pixels[i],
                    channels[1].pixels[i],
                    channels[2].pixels[i],
                ]
            })
            .collect();
        Ok(RgbImage {
            width: target_w,
            height: target_h,
            pixels,
        })
    }
}

/// Geometric operation applied by [`apply_transform`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformKind {
    Identity,
    /// Mirror columns.
    FlipH,
    /// Integer translation: output `(x, y)` reads source `(x - dx, y - dy)`.
    Shift {
        dx: i32,
        dy: i32,
    },
    /// Rotation about the image center, in degrees.
    Rotate {
        degrees: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeomTransform {
    pub kind: TransformKind,
    /// Intensity written where the output samples outside the source.
    pub fill: f64,
}

impl GeomTransform {
    pub const IDENTITY: GeomTransform = GeomTransform {
        kind: TransformKind::Identity,
        fill: 0.0,
    };

    pub fn new(kind: TransformKind) -> Self {
        Self { kind, fill: 0.0 }
    }

    pub fn flip_h() -> Self {
        Self::new(TransformKind::FlipH)
    }

    pub fn shift(dx: i32, dy: i32) -> Self {
        Self::new(TransformKind::Shift { dx, dy })
    }

    pub fn rotate(degrees: f64) -> Self {
        Self::new(TransformKind::Rotate { degrees })
    }

    pub fn with_fill(mut self, fill: f64) -> Self {
        self.fill = fill;
        self
    }

    pub fn inverse(&self) -> GeomTransform {
        let kind = match self.kind {
            TransformKind::Identity => TransformKind::Identity,
            TransformKind::FlipH => TransformKind::FlipH,
            TransformKind::Shift { dx, dy } => TransformKind::Shift { dx: -dx, dy: -dy },
            TransformKind::Rotate { degrees } => TransformKind::Rotate { degrees: -degrees },
        };
        GeomTransform {
            kind,
            fill: self.fill,
        }
    }

    /// Short filesystem-safe label, e.g. `id`, `flip`, `shift_-5_0`, `rot_5`.
    pub fn tag(&self) -> String {
        match self.kind {
            TransformKind::Identity => "id".to_string(),
            TransformKind::FlipH => "flip".to_string(),
            TransformKind::Shift { dx, dy } => format!("shift_{dx}_{dy}"),
            TransformKind::Rotate { degrees } => format!("rot_{degrees}"),
        }
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        check_unit(self.fill, "transform fill")?;
        match self.kind {
            TransformKind::Shift { dx, dy } => {
                let limit = width.min(height) as u64;
                if dx.unsigned_abs() as u64 >= limit || dy.unsigned_abs() as u64 >= limit {
                    return Err(Error::invalid(format!(
                        "shift ({dx},{dy}) must be smaller than {limit} pixels"
                    )));
                }
            }
            // Written so that NaN is rejected too.
            TransformKind::Rotate { degrees }
                if degrees.abs().partial_cmp(&90.0) != Some(std::cmp::Ordering::Less) =>
            {
                return Err(Error::invalid(format!(
                    "rotation {degrees} must be within (-90, 90)"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Keys cubic convolution kernel with `a = -0.5` (Catmull-Rom).
#[inline]
pub fn keys_cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

/// Four-tap contributions for every output coordinate along one axis.
/// Pixel centers are aligned: output `i` samples source `(i + 0.5) * src/dst - 0.5`.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|i| {
            let s = (i as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let frac = s - base;
            let base = base as isize;
            let mut index = [0usize; 4];
            let mut weight = [0.0; 4];
            for k in 0..4 {
                let offset = k as isize - 1;
                index[k] = (base + offset).clamp(0, last) as usize;
                weight[k] = keys_cubic(frac - offset as f64);
            }
            Taps { index, weight }
        })
        .collect()
}

/// Separable bicubic resample with clamp-to-edge borders. Output values are
/// clamped into `[0, 1]` since the kernel overshoots near steps.
pub fn resample_bicubic(src: &GrayImage, target_w: usize, target_h: usize) -> Result<GrayImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::invalid(format!(
            "target size {target_w}x{target_h} must be nonzero"
        )));
    }
    if src.dims() == (target_w, target_h) {
        return Ok(src.clone());
    }
    let (sw, sh) = src.dims();
    let col_taps = axis_taps(sw, target_w);
    let row_taps = axis_taps(sh, target_h);

    // Horizontal pass: sh rows x target_w columns.
    let mut horiz = vec![0.0; sh * target_w];
    for y in 0..sh {
        let row = &src.pixels[y * sw..(y + 1) * sw];
        let out = &mut horiz[y * target_w..(y + 1) * target_w];
        for (o, taps) in out.iter_mut().zip(&col_taps) {
            *o = (0..4).map(|k| taps.weight[k] * row[taps.index[k]]).sum();
        }
    }

    let mut pixels = vec![0.0; target_w * target_h];
    for (y, taps) in row_taps.iter().enumerate() {
        let out = &mut pixels[y * target_w..(y + 1) * target_w];
        for (x, o) in out.iter_mut().enumerate() {
            let v: f64 = (0..4)
                .map(|k| taps.weight[k] * horiz[taps.index[k] * target_w + x])
                .sum();
            *o = clamp_unit(v);
        }
    }
    Ok(GrayImage::from_clamped(target_w, target_h, pixels))
}

/// Applies `t` to `src`, returning the warped image and which output pixels
/// were sampled from inside the source.
pub fn apply_transform(src: &GrayImage, t: &GeomTransform) -> Result<(GrayImage, ValidityMask)> {
    warp(src, None, t)
}

/// Maps a prediction made on a transformed copy back to the original frame.
/// The returned validity is the forward validity carried through the inverse
/// warp, so pixels that were ever filled stay marked invalid.
pub fn invert_transform(
    pred: &GrayImage,
    validity: &ValidityMask,
    t: &GeomTransform,
) -> Result<(GrayImage, ValidityMask)> {
    ensure_same_dims(pred.dims(), validity.dims())?;
    warp(pred, Some(validity), &t.inverse())
}

fn warp(
    src: &GrayImage,
    validity: Option<&ValidityMask>,
    t: &GeomTransform,
) -> Result<(GrayImage, ValidityMask)> {
    let (w, h) = src.dims();
    t.check(w, h)?;
    let src_valid = |x: usize, y: usize| validity.is_none_or(|v| v.is_valid(x, y));
    let mut pixels = Vec::with_capacity(w * h);
    let mut bits = Vec::with_capacity(w * h);

    match t.kind {
        TransformKind::Identity => {
            pixels.extend_from_slice(src.pixels());
            match validity {
                Some(v) => bits.extend_from_slice(v.bits()),
                None => bits.resize(w * h, true),
            }
        }
        TransformKind::FlipH => {
            for y in 0..h {
                for x in 0..w {
                    let sx = w - 1 - x;
                    pixels.push(src.get(sx, y));
                    bits.push(src_valid(sx, y));
                }
            }
        }
        TransformKind::Shift { dx, dy } => {
            for y in 0..h {
                for x in 0..w {
                    let sx = x as i64 - dx as i64;
                    let sy = y as i64 - dy as i64;
                    if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                        let (sx, sy) = (sx as usize, sy as usize);
                        pixels.push(src.get(sx, sy));
                        bits.push(src_valid(sx, sy));
                    } else {
                        pixels.push(t.fill);
                        bits.push(false);
                    }
                }
            }
        }
        TransformKind::Rotate { degrees } => {
            let (sin, cos) = degrees.to_radians().sin_cos();
            let cx = (w as f64 - 1.0) / 2.0;
            let cy = (h as f64 - 1.0) / 2.0;
            let max_x = (w - 1) as f64;
            let max_y = (h - 1) as f64;
            const EDGE_EPS: f64 = 1e-9;
            for y in 0..h {
                for x in 0..w {
                    // Inverse mapping: rotate the output coordinate by -theta.
                    let ux = x as f64 - cx;
                    let uy = y as f64 - cy;
                    let mut sx = cos * ux + sin * uy + cx;
                    let mut sy = -sin * ux + cos * uy + cy;
                    if sx < -EDGE_EPS
                        || sy < -EDGE_EPS
                        || sx > max_x + EDGE_EPS
                        || sy > max_y + EDGE_EPS
                    {
                        pixels.push(t.fill);
                        bits.push(false);
                        continue;
                    }
                    sx = sx.clamp(0.0, max_x);
                    sy = sy.clamp(0.0, max_y);
                    let x0 = sx.floor() as usize;
                    let y0 = sy.floor() as usize;
                    let fx = sx - x0 as f64;
                    let fy = sy - y0 as f64;
                    let x1 = (x0 + 1).min(w - 1);
                    let y1 = (y0 + 1).min(h - 1);
                    // Lerp form keeps constant neighbourhoods exact.
                    let lerp = |a: f64, b: f64, f: f64| a + f * (b - a);
                    let top = lerp(src.get(x0, y0), src.get(x1, y0), fx);
                    let bottom = lerp(src.get(x0, y1), src.get(x1, y1), fx);
                    let v = lerp(top, bottom, fy);
                    let ok = src_valid(x0, y0)
                        && (fx == 0.0 || src_valid(x1, y0))
                        && (fy == 0.0 || src_valid(x0, y1))
                        && (fx == 0.0 || fy == 0.0 || src_valid(x1, y1));
                    pixels.push(clamp_unit(v));
                    bits.push(ok);
                }
            }
        }
    }
    Ok((
        GrayImage::from_clamped(w, h, pixels),
        ValidityMask {
            width: w,
            height: h,
            bits,
        },
    ))
}

/// Places `src` at the top-left of a `target_w`x`target_h` canvas of `fill`.
pub fn pad_to(src: &GrayImage, target_w: usize, target_h: usize, fill: f64) -> Result<GrayImage> {
    check_unit(fill, "pad fill")?;
    let (w, h) = src.dims();
    if target_w < w || target_h < h {
        return Err(Error::invalid(format!(
            "pad target {target_w}x{target_h} is smaller than source {w}x{h}"
        )));
    }
    let mut pixels = vec![fill; target_w * target_h];
    for y in 0..h {
        pixels[y * target_w..y * target_w + w].copy_from_slice(&src.pixels[y * w..(y + 1) * w]);
    }
    Ok(GrayImage::from_clamped(target_w, target_h, pixels))
}

/// Anchor positions and colors of the jet colormap.
pub const JET_ANCHORS: [(f64, [f64; 3]); 6] = [
    (0.0, [0.0, 0.0, 0.5]),
    (0.125, [0.0, 0.0, 1.0]),
    (0.375, [0.0, 1.0, 1.0]),
    (0.625, [1.0, 1.0, 0.0]),
    (0.875, [1.0, 0.0, 0.0]),
    (1.0, [0.5, 0.0, 0.0]),
];

/// Index of the anchor segment containing `v` (0..=4).
pub fn jet_segment(v: f64) -> usize {
    let v = clamp_unit(v);
    JET_ANCHORS[1..JET_ANCHORS.len() - 1]
        .iter()
        .take_while(|(pos, _)| v > *pos)
        .count()
}

pub fn jet_color(v: f64) -> [f64; 3] {
    let v = clamp_unit(v);
    let seg = jet_segment(v);
    let (p0, c0) = JET_ANCHORS[seg];
    let (p1, c1) = JET_ANCHORS[seg + 1];
    let t = (v - p0) / (p1 - p0);
    [0, 1, 2].map(|c| clamp_unit(c0[c] + t * (c1[c] - c0[c])))
}

pub fn jet_colormap(values: &GrayImage) -> RgbImage {
    RgbImage {
        width: values.width,
        height: values.height,
        pixels: values.pixels.iter().map(|&v| jet_color(v)).collect(),
    }
}

#[inline]
pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        Err(Error::invalid(format!(
            "dimensions {width}x{height} must be nonzero"
        )))
    } else {
        Ok(())
    }
}

fn check_unit(v: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {v} outside [0, 1]")))
    }
}
