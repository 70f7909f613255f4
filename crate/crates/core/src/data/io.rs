//! Dataset directories: `<root>/<split>/images/*.png`, optional
//! `<root>/<split>/masks/*.png` and `<root>/<split>/labels.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use super::{DatasetSplit, Sample, SplitRole, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::ops::upsample::resize_bilinear;
use crate::tensor::{Shape, Tensor};

pub const LABELS_HEADER: &str = "stem,class";

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem().and_then(|s| s.to_str())) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

fn read_labels(path: &Path, classes: usize) -> Result<BTreeMap<String, usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == LABELS_HEADER => {}
        other => {
            return Err(Error::Data(format!(
                "{}: expected header `{LABELS_HEADER}`, found `{}`",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let mut out = BTreeMap::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Data(format!("{}:{}: malformed row `{line}`", path.display(), n + 2));
        let (stem, class) = line.split_once(',').ok_or_else(bad)?;
        let class: usize = class.trim().parse().map_err(|_| bad())?;
        if class >= classes {
            return Err(Error::Data(format!(
                "{}:{}: class {class} outside 0..{classes}",
                path.display(),
                n + 2
            )));
        }
        if out.insert(stem.trim().to_string(), class).is_some() {
            return Err(Error::Data(format!("{}: duplicate stem `{stem}`", path.display())));
        }
    }
    Ok(out)
}

/// Nearest-neighbour resize using pixel-centre alignment.
pub fn resize_nearest(input: &Tensor<f32>, out_h: usize, out_w: usize) -> Tensor<f32> {
    let s = input.shape();
    let src = |o: usize, out: usize, size: usize| (((o as f64 + 0.5) * size as f64 / out as f64) as usize).min(size - 1);
    let mut out = Tensor::zeros(Shape::new(s.n, out_h, out_w, s.c));
    for n in 0..s.n {
        let x = input.item(n);
        let y = out.item_mut(n);
        for oy in 0..out_h {
            let iy = src(oy, out_h, s.h);
            for ox in 0..out_w {
                let ix = src(ox, out_w, s.w);
                let (o, i) = ((oy * out_w + ox) * s.c, (iy * s.w + ix) * s.c);
                y[o..o + s.c].copy_from_slice(&x[i..i + s.c]);
            }
        }
    }
    out
}

/// Reads an RGB PNG as a `1×size×size×3` tensor in `[0, 1]`, resizing bilinearly.
pub fn read_image(path: &Path, size: usize) -> Result<Tensor<f32>> {
    decode_rgb(path, size)
}

/// Writes a single-channel `1×H×W×1` tensor in `[0, 1]` as an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, map: &Tensor<f32>) -> Result<()> {
    let s = map.shape();
    if s.n != 1 || s.c != 1 {
        return Err(crate::error::shape_err!("grayscale PNG needs a 1×H×W×1 map, got {s}"));
    }
    let gray = GrayImage::from_raw(s.w as u32, s.h as u32, map.data().iter().map(|&v| to_u8(v)).collect())
        .expect("buffer length matches dimensions");
    gray.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn decode_rgb(path: &Path, size: usize) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let t = Tensor::from_vec(
        Shape::new(1, h, w, 3),
        img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    )?;
    if h == size && w == size {
        Ok(t)
    } else {
        resize_bilinear(&t, size, size)
    }
}

fn decode_mask(path: &Path, size: usize) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let t = Tensor::from_vec(
        Shape::new(1, h, w, 1),
        img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    )?;
    let t = if h == size && w == size {
        t
    } else {
        resize_nearest(&t, size, size)
    };
    Ok(t.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
}

/// Loads one split, resizing images bilinearly and masks by nearest neighbour
/// to 320×320. Samples are ordered by stem.
pub fn load_dataset(root: &Path, role: SplitRole, classes: usize) -> Result<DatasetSplit> {
    load_dataset_sized(root, role, classes, IMAGE_SIZE)
}

/// [`load_dataset`] with another target side length.
pub fn load_dataset_sized(root: &Path, role: SplitRole, classes: usize, size: usize) -> Result<DatasetSplit> {
    if size == 0 {
        return Err(crate::error::config_err!("image size must be positive"));
    }
    let dir = root.join(role.dir());
    let images_dir = dir.join("images");
    if !images_dir.is_dir() {
        return Err(Error::Data(format!("{} does not exist", images_dir.display())));
    }
    let images = png_stems(&images_dir)?;
    let masks = png_stems(&dir.join("masks"))?;
    if let Some(orphan) = masks.keys().find(|k| !images.contains_key(*k)) {
        return Err(Error::Data(format!(
            "mask `{orphan}` in {} has no matching image",
            dir.join("masks").display()
        )));
    }
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.is_file() {
        Some(read_labels(&labels_path, classes)?)
    } else {
        None
    };
    let mut samples = Vec::with_capacity(images.len());
    for (stem, path) in &images {
        let label = match &labels {
            Some(l) => Some(*l.get(stem).ok_or_else(|| {
                Error::Data(format!("{} has no row for `{stem}`", labels_path.display()))
            })?),
            None => None,
        };
        samples.push(Sample {
            id: stem.clone(),
            image: decode_rgb(path, size)?,
            mask: masks.get(stem).map(|p| decode_mask(p, size)).transpose()?,
            label,
        });
    }
    let split = DatasetSplit {
        role,
        classes,
        samples,
        provenance: format!("loaded from {}", dir.display()),
    };
    split.validate()?;
    Ok(split)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a split in the layout read by [`load_dataset`].
pub fn write_split(root: &Path, split: &DatasetSplit) -> Result<()> {
    split.validate()?;
    let dir = root.join(split.role.dir());
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let masks_dir = dir.join("masks");
    if split.samples.iter().any(|s| s.mask.is_some()) {
        fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    }
    let mut csv = format!("{LABELS_HEADER}\n");
    for s in &split.samples {
        let sh = s.image.shape();
        let rgb = RgbImage::from_raw(sh.w as u32, sh.h as u32, s.image.data().iter().map(|&v| to_u8(v)).collect())
            .expect("buffer length matches dimensions");
        let path = images_dir.join(format!("{}.png", s.id));
        rgb.save(&path).map_err(|source| Error::Image { path, source })?;
        if let Some(m) = &s.mask {
            let gray = GrayImage::from_raw(sh.w as u32, sh.h as u32, m.data().iter().map(|&v| to_u8(v)).collect())
                .expect("buffer length matches dimensions");
            let path = masks_dir.join(format!("{}.png", s.id));
            gray.save(&path).map_err(|source| Error::Image { path, source })?;
        }
        if let Some(l) = s.label {
            csv.push_str(&format!("{},{l}\n", s.id));
        }
    }
    if split.samples.iter().any(|s| s.label.is_some()) {
        let path = dir.join("labels.csv");
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: usize) -> Sample {
        let image = Tensor::from_fn(Shape::new(1, IMAGE_SIZE, IMAGE_SIZE, 3), |i| ((i * 37) % 256) as f32 / 255.0);
        let mask = Tensor::from_fn(Shape::new(1, IMAGE_SIZE, IMAGE_SIZE, 1), |i| ((i / 7) % 2) as f32);
        Sample {
            id: id.into(),
            image,
            mask: Some(mask),
            label: Some(label),
        }
    }

    #[test]
    fn round_trip_within_one_level() {
        let dir = tempfile::tempdir().unwrap();
        let split = DatasetSplit {
            role: SplitRole::Validation,
            classes: 3,
            samples: vec![sample("b", 2), sample("a", 0)],
            provenance: String::new(),
        };
        write_split(dir.path(), &split).unwrap();
        let back = load_dataset(dir.path(), SplitRole::Validation, 3).unwrap();
        assert_eq!(back.samples.len(), 2);
        assert_eq!(back.samples[0].id, "a");
        let orig = &split.samples[1];
        let got = &back.samples[0];
        assert_eq!(got.label, Some(0));
        assert_eq!(got.mask, orig.mask);
        let worst = got
            .image
            .data()
            .iter()
            .zip(orig.image.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(worst <= 1.0 / 255.0 + 1e-6, "{worst}");
    }

    #[test]
    fn large_sources_are_resized_and_masks_stay_binary() {
        let dir = tempfile::tempdir().unwrap();
        let split_dir = dir.path().join("train");
        fs::create_dir_all(split_dir.join("images")).unwrap();
        fs::create_dir_all(split_dir.join("masks")).unwrap();
        RgbImage::from_pixel(640, 640, image::Rgb([200, 100, 50]))
            .save(split_dir.join("images/x.png"))
            .unwrap();
        GrayImage::from_fn(640, 640, |x, y| image::Luma([if (x / 40 + y / 40) % 2 == 0 { 255 } else { 0 }]))
            .save(split_dir.join("masks/x.png"))
            .unwrap();
        let split = load_dataset(dir.path(), SplitRole::Train, 10).unwrap();
        let s = &split.samples[0];
        assert_eq!(s.image.shape(), Shape::new(1, 320, 320, 3));
        assert!((s.image.data()[0] - 200.0 / 255.0).abs() < 1e-6);
        let m = s.mask.as_ref().unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.label.is_none());
    }

    #[test]
    fn orphan_masks_and_bad_classes_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let split_dir = dir.path().join("test");
        fs::create_dir_all(split_dir.join("images")).unwrap();
        fs::create_dir_all(split_dir.join("masks")).unwrap();
        RgbImage::new(4, 4).save(split_dir.join("images/a.png")).unwrap();
        GrayImage::new(4, 4).save(split_dir.join("masks/z.png")).unwrap();
        assert!(load_dataset(dir.path(), SplitRole::Test, 2).is_err());
        fs::remove_file(split_dir.join("masks/z.png")).unwrap();
        fs::write(split_dir.join("labels.csv"), "stem,class\na,5\n").unwrap();
        let err = load_dataset(dir.path(), SplitRole::Test, 2).unwrap_err();
        assert!(err.to_string().contains("class 5"), "{err}");
    }

    #[test]
    fn empty_masks_directory_means_no_masks() {
        let dir = tempfile::tempdir().unwrap();
        let split_dir = dir.path().join("train");
        fs::create_dir_all(split_dir.join("images")).unwrap();
        fs::create_dir_all(split_dir.join("masks")).unwrap();
        RgbImage::new(320, 320).save(split_dir.join("images/a.png")).unwrap();
        let split = load_dataset(dir.path(), SplitRole::Train, 2).unwrap();
        assert!(split.samples[0].mask.is_none());
    }

    #[test]
    fn nearest_resize_is_idempotent_on_binary_and_constant() {
        let m = Tensor::from_fn(Shape::new(1, 7, 5, 1), |i| (i % 3 == 0) as u8 as f32);
        let r = resize_nearest(&m, 13, 11);
        assert!(r.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let c = Tensor::full(Shape::new(1, 9, 9, 3), 0.25f32);
        assert!(resize_nearest(&c, 4, 4).data().iter().all(|&v| v == 0.25));
    }
}
