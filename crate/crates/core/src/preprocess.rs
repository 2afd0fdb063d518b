//! Lung-ROI cropping, resolution ladders and aspect-ratio correction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, resample_bicubic, BinaryMask, GrayImage};

/// Axis-aligned box; `(x0, y0)` is the inclusive top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Where a sample came from and which processing steps touched it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub record_id: String,
    pub tags: Vec<String>,
}

/// A CXR and its lesion mask, kept at identical dimensions. The mask stays
/// an intensity image until it is binarized downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    image: GrayImage,
    tb_mask: GrayImage,
    pub provenance: Provenance,
}

impl SamplePair {
    pub fn new(image: GrayImage, tb_mask: GrayImage, record_id: impl Into<String>) -> Result<Self> {
        ensure_same_dims(image.dims(), tb_mask.dims())?;
        Ok(Self {
            image,
            tb_mask,
            provenance: Provenance {
                record_id: record_id.into(),
                tags: Vec::new(),
            },
        })
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn tb_mask(&self) -> &GrayImage {
        &self.tb_mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    fn derive(&self, image: GrayImage, tb_mask: GrayImage, tag: Option<&str>) -> SamplePair {
        assert_eq!(image.dims(), tb_mask.dims(), "image/mask lockstep broken");
        let mut provenance = self.provenance.clone();
        if let Some(tag) = tag {
            provenance.tags.push(tag.to_string());
        }
        SamplePair {
            image,
            tb_mask,
            provenance,
        }
    }
}

/// Which preprocessing condition a ladder belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Original,
    Cropped,
    ArCorrected,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Cropped => "cropped",
            Mode::ArCorrected => "ar_corrected",
        }
    }

    /// Short label used in report rows: `O`, `CR`, `AR-CR`.
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Original => "O",
            Mode::Cropped => "CR",
            Mode::ArCorrected => "AR-CR",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" | "O" => Ok(Mode::Original),
            "cropped" | "CR" => Ok(Mode::Cropped),
            "ar_corrected" | "AR-CR" => Ok(Mode::ArCorrected),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// Target raster size. Displayed and parsed as `HxW` (height first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("resolution {s:?} must look like HxW, e.g. 256x224"));
        let (h, w) = s.split_once(['x', 'X', '×']).ok_or_else(bad)?;
        let h: usize = h.trim().parse().map_err(|_| bad())?;
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        if h == 0 || w == 0 {
            return Err(bad());
        }
        Ok(Resolution::new(h, w))
    }
}

/// The square ladder from 32 to 1024 pixels.
pub const DEFAULT_SIDES: [usize; 7] = [32, 64, 128, 256, 512, 768, 1024];
/// Heights of the aspect-ratio corrected ladder.
pub const AR_HEIGHTS: [usize; 6] = [64, 128, 256, 512, 768, 1024];

#[derive(Clone, Debug, PartialEq)]
pub struct LadderSpec {
    resolutions: Vec<Resolution>,
    pub mode: Mode,
}

impl LadderSpec {
    pub fn new(resolutions: Vec<Resolution>, mode: Mode) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::Empty("ladder has no resolutions".into()));
        }
        if mode == Mode::ArCorrected {
            if let Some(r) = resolutions
                .iter()
                .find(|r| r.width < 32 || r.height < 32 || r.width % 32 != 0 || r.height % 32 != 0)
            {
                return Err(Error::invalid(format!(
                    "aspect-ratio corrected resolution {r} must be a multiple of 32 in both dimensions"
                )));
            }
        }
        Ok(Self { resolutions, mode })
    }

    /// Seven square resolutions, 32 through 1024.
    pub fn default_square(mode: Mode) -> Self {
        Self {
            resolutions: DEFAULT_SIDES
                .iter()
                .map(|&s| Resolution::square(s))
                .collect(),
            mode,
        }
    }

    /// Height-fixed ladder with widths from [`ar_target_width`].
    pub fn aspect_corrected(heights: &[usize], ar: f64) -> Result<Self> {
        let resolutions = heights
            .iter()
            .map(|&h| Ok(Resolution::new(h, ar_target_width(h, ar)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(resolutions, Mode::ArCorrected)
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.resolutions
    }
}

/// Tightest box around the foreground.
pub fn lung_bbox(lung_mask: &BinaryMask) -> Result<BBox> {
    let (w, h) = lung_mask.dims();
    let (mut x_min, mut y_min, mut x_max, mut y_max) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if lung_mask.get(x, y) {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
    }
    if x_min == usize::MAX {
        return Err(Error::Empty("lung mask has no foreground".into()));
    }
    Ok(BBox {
        x0: x_min,
        y0: y_min,
        w: x_max - x_min + 1,
        h: y_max - y_min + 1,
    })
}

/// Crops image and lesion mask to the lung bounding box; tags `CR`.
pub fn crop_to_lungs(pair: &SamplePair, lung_mask: &BinaryMask) -> Result<SamplePair> {
    ensure_same_dims(pair.dims(), lung_mask.dims())?;
    let b = lung_bbox(lung_mask)?;
    let image = pair.image.crop(b.x0, b.y0, b.w, b.h)?;
    let tb_mask = pair.tb_mask.crop(b.x0, b.y0, b.w, b.h)?;
    Ok(pair.derive(image, tb_mask, Some("CR")))
}

fn resample_pair(pair: &SamplePair, res: Resolution, tag: Option<&str>) -> Result<SamplePair> {
    let image = resample_bicubic(&pair.image, res.width, res.height)?;
    let tb_mask = resample_bicubic(&pair.tb_mask, res.width, res.height)?;
    Ok(pair.derive(image, tb_mask, tag))
}

/// One resampled pair per ladder entry, in ladder order.
pub fn build_ladder(pair: &SamplePair, spec: &LadderSpec) -> Result<Vec<SamplePair>> {
    spec.resolutions
        .iter()
        .map(|&res| resample_pair(pair, res, None))
        .collect()
}

/// Largest multiple of 32 not above `height * ar`, but at least 32.
pub fn ar_target_width(height: usize, ar: f64) -> Result<usize> {
    if height == 0 || !height.is_multiple_of(32) {
        return Err(Error::invalid(format!(
            "height {height} must be a positive multiple of 32"
        )));
    }
    if !(ar > 0.0 && ar <= 1.0) {
        return Err(Error::invalid(format!(
            "aspect ratio {ar} must lie in (0, 1]"
        )));
    }
    let raw = height as f64 * ar;
    Ok(((raw / 32.0).floor() as usize * 32).max(32))
}

/// Anisotropic resample to `height` x `ar_target_width(height, ar)`; tags `AR-CR`.
pub fn ar_correct(pair: &SamplePair, height: usize, ar: f64) -> Result<SamplePair> {
    let width = ar_target_width(height, ar)?;
    resample_pair(pair, Resolution::new(height, width), Some("AR-CR"))
}
