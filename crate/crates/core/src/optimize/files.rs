use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::synthetic::image_fingerprint;
use super::Predictor;
use crate::error::{Error, Result};
use crate::io::read_gray;
use crate::raster::{apply_transform, GeomTransform, GrayImage};

/// Serves precomputed probability maps from disk.
///
/// Layout under the snapshot directory: `<id>.png` for the plain image and
/// `<id>__<tag>.png` for an augmented copy, where `<tag>` is the transform's
/// tag (`flip`, `shift_-5_0`, `rot_5`, ...).
#[derive(Clone, Debug, Default)]
pub struct MapLookupPredictor {
    paths: HashMap<u64, PathBuf>,
}

impl MapLookupPredictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn map_path(dir: &Path, id: &str, t: &GeomTransform) -> PathBuf {
        if *t == GeomTransform::IDENTITY {
            dir.join(format!("{id}.png"))
        } else {
            dir.join(format!("{id}__{}.png", t.tag()))
        }
    }

    /// Registers `image` and its copies under `transforms`.
    pub fn register(
        &mut self,
        dir: &Path,
        id: &str,
        image: &GrayImage,
        transforms: &[GeomTransform],
    ) -> Result<()> {
        self.paths
            .entry(image_fingerprint(image))
            .or_insert_with(|| Self::map_path(dir, id, &GeomTransform::IDENTITY));
        for t in transforms {
            let (copy, _) = apply_transform(image, t)?;
            self.paths
                .entry(image_fingerprint(&copy))
                .or_insert_with(|| Self::map_path(dir, id, t));
        }
        Ok(())
    }
}

impl Predictor for MapLookupPredictor {
    fn predict(&self, image: &GrayImage) -> Result<GrayImage> {
        let path = self
            .paths
            .get(&image_fingerprint(image))
            .ok_or(Error::UnknownImage)?;
        if !path.exists() {
            return Err(Error::data(path, "probability map not found"));
        }
        read_gray(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{quantize16, write_prob16};
    use crate::optimize::canonical_transforms;

    #[test]
    fn serves_written_maps_and_names_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        let map = GrayImage::from_fn(16, 16, |x, _| x as f64 / 15.0).unwrap();
        write_prob16(&dir.path().join("P001.png"), &map).unwrap();
        let mut p = MapLookupPredictor::new();
        p.register(dir.path(), "P001", &img, &canonical_transforms())
            .unwrap();
        assert_eq!(p.predict(&img).unwrap(), quantize16(&map));
        let (flipped, _) = apply_transform(&img, &GeomTransform::flip_h()).unwrap();
        let err = p.predict(&flipped).unwrap_err().to_string();
        assert!(err.contains("P001__flip.png"), "{err}");
        let other = GrayImage::filled(16, 16, 0.5).unwrap();
        assert!(matches!(p.predict(&other), Err(Error::UnknownImage)));
    }
}
