use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::Predictor;
use crate::error::{Error, Result};
use crate::raster::{
    apply_transform, clamp_unit, ensure_same_dims, invert_transform, GeomTransform, GrayImage,
    TransformKind, ValidityMask,
};

/// Shift magnitude in pixels; each shift part contributes `-5` and `+5`.
pub const SHIFT_PIXELS: i32 = 5;
/// Rotation magnitude in degrees; the rotation part contributes `-5` and `+5`.
pub const ROTATION_DEGREES: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TtaPart {
    FlipH,
    WidthShift,
    HeightShift,
    Rotation,
}

impl TtaPart {
    pub fn description(&self) -> &'static str {
        match self {
            TtaPart::FlipH => "horizontal flipping",
            TtaPart::WidthShift => "width shifting",
            TtaPart::HeightShift => "height shifting",
            TtaPart::Rotation => "rotation",
        }
    }

    fn transforms(&self) -> Vec<GeomTransform> {
        match self {
            TtaPart::FlipH => vec![GeomTransform::flip_h()],
            TtaPart::WidthShift => vec![
                GeomTransform::shift(-SHIFT_PIXELS, 0),
                GeomTransform::shift(SHIFT_PIXELS, 0),
            ],
            TtaPart::HeightShift => vec![
                GeomTransform::shift(0, -SHIFT_PIXELS),
                GeomTransform::shift(0, SHIFT_PIXELS),
            ],
            TtaPart::Rotation => vec![
                GeomTransform::rotate(-ROTATION_DEGREES),
                GeomTransform::rotate(ROTATION_DEGREES),
            ],
        }
    }
}

/// The eight augmentation combinations. Every method includes the original
/// image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TtaMethod {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
}

impl TtaMethod {
    pub const ALL: [TtaMethod; 8] = [
        TtaMethod::M1,
        TtaMethod::M2,
        TtaMethod::M3,
        TtaMethod::M4,
        TtaMethod::M5,
        TtaMethod::M6,
        TtaMethod::M7,
        TtaMethod::M8,
    ];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn id(&self) -> &'static str {
        ["M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"][self.index()]
    }

    pub fn parts(&self) -> &'static [TtaPart] {
        use TtaPart::*;
        match self {
            TtaMethod::M1 => &[FlipH],
            TtaMethod::M2 => &[WidthShift],
            TtaMethod::M3 => &[HeightShift],
            TtaMethod::M4 => &[WidthShift, HeightShift],
            TtaMethod::M5 => &[FlipH, WidthShift, HeightShift],
            TtaMethod::M6 => &[Rotation],
            TtaMethod::M7 => &[WidthShift, HeightShift, Rotation],
            TtaMethod::M8 => &[FlipH, WidthShift, HeightShift, Rotation],
        }
    }

    /// e.g. `Original + horizontal flipping + rotation`.
    pub fn description(&self) -> String {
        std::iter::once("Original")
            .chain(self.parts().iter().map(|p| p.description()))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl fmt::Display for TtaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TtaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TtaMethod::ALL
            .iter()
            .copied()
            .find(|m| m.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown TTA method {s:?} (expected M1..M8)")))
    }
}

impl Serialize for TtaMethod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

/// Transforms of `method` in expansion order: identity, then flip, width
/// shifts, height shifts and rotations as included.
pub fn tta_transforms(method: TtaMethod) -> Vec<GeomTransform> {
    std::iter::once(GeomTransform::IDENTITY)
        .chain(method.parts().iter().flat_map(|p| p.transforms()))
        .collect()
}

/// Every distinct transform used by any method, in expansion order.
pub fn canonical_transforms() -> Vec<GeomTransform> {
    tta_transforms(TtaMethod::M8)
}

/// An augmented input ready for inference.
#[derive(Clone, Debug)]
pub struct TtaCopy {
    pub transform: GeomTransform,
    pub image: GrayImage,
    pub validity: ValidityMask,
}

/// A prediction made on an augmented copy, still in the augmented frame.
#[derive(Clone, Debug)]
pub struct TtaPrediction {
    pub transform: GeomTransform,
    pub map: GrayImage,
    pub validity: ValidityMask,
}

pub fn tta_expand(img: &GrayImage, method: TtaMethod) -> Result<Vec<TtaCopy>> {
    tta_transforms(method)
        .into_iter()
        .map(|t| {
            let (image, validity) = apply_transform(img, &t)?;
            Ok(TtaCopy {
                transform: t,
                image,
                validity,
            })
        })
        .collect()
}

/// Maps every prediction back to the original frame and takes the
/// validity-weighted per-pixel mean. Pixels no copy covers fall back to the
/// identity copy (or the first copy when there is none).
pub fn tta_aggregate(entries: &[TtaPrediction]) -> Result<GrayImage> {
    let first = entries
        .first()
        .ok_or_else(|| Error::Empty("no TTA predictions to aggregate".into()))?;
    let dims = first.map.dims();
    let (w, h) = dims;
    let mut mean = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    let fallback_at = entries
        .iter()
        .position(|e| e.transform.kind == TransformKind::Identity)
        .unwrap_or(0);
    let mut fallback = None;
    for (k, e) in entries.iter().enumerate() {
        ensure_same_dims(dims, e.map.dims())?;
        let (back, valid) = invert_transform(&e.map, &e.validity, &e.transform)?;
        for (i, (&v, &ok)) in back.pixels().iter().zip(valid.bits()).enumerate() {
            if ok {
                count[i] += 1;
                // Running mean: identical inputs reproduce themselves exactly.
                mean[i] += (v - mean[i]) / count[i] as f64;
            }
        }
        if k == fallback_at {
            fallback = Some(back);
        }
    }
    let fallback = fallback.expect("fallback index is in range");
    let pixels = mean
        .iter()
        .zip(&count)
        .zip(fallback.pixels())
        .map(|((&m, &c), &f)| if c == 0 { f } else { clamp_unit(m) })
        .collect();
    GrayImage::new(w, h, pixels)
}

/// Expand, predict every copy, and aggregate in the original frame.
pub fn tta_predict(p: &dyn Predictor, img: &GrayImage, method: TtaMethod) -> Result<GrayImage> {
    let copies = tta_expand(img, method)?;
    let mut preds = Vec::with_capacity(copies.len());
    for (i, c) in copies.into_iter().enumerate() {
        let map = predict_checked(p, &c.image).map_err(|e| Error::Predictor {
            copy: i,
            source: Box::new(e),
        })?;
        preds.push(TtaPrediction {
            transform: c.transform,
            map,
            validity: c.validity,
        });
    }
    tta_aggregate(&preds)
}

pub(crate) fn predict_checked(p: &dyn Predictor, img: &GrayImage) -> Result<GrayImage> {
    let out = p.predict(img)?;
    ensure_same_dims(img.dims(), out.dims())?;
    Ok(out)
}
