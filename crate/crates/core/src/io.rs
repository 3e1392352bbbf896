//! PNG/BMP reading into `[0, 1]` RGB tensors and 8-bit PNG writing.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loads any PNG or BMP as 8-bit RGB (alpha dropped, grey expanded) scaled to
/// `[0, 1]`.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })?;
    Ok(from_rgb8(&img.to_rgb8()))
}

pub fn from_rgb8(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::from_fn([3, h as usize, w as usize], |c, i, j| {
        img.get_pixel(j as u32, i as u32)[c] as f64 / 255.0
    })
}

/// Clamps to `[0, 1]` and quantizes with `round(v * 255)`, halves rounding up.
/// One-channel tensors are written as grey RGB.
pub fn to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.chw()?;
    if c != 3 && c != 1 {
        return Err(Error::Shape {
            op: "to_rgb8",
            axis: "channels",
            expected: 3,
            found: c,
        });
    }
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        Rgb(std::array::from_fn(|k| q(t.at(if c == 1 { 0 } else { k }, i, j))))
    }))
}

pub fn save_png(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_rgb8(t)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
}

/// PNG and BMP files directly inside `dir`, sorted by name.
pub fn image_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if p.is_file() && matches!(ext.as_deref(), Some("png" | "bmp")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let t = Tensor::from_fn([3, 5, 7], |c, i, j| ((c * 50 + i * 13 + j * 29) % 256) as f64 / 255.0);
        save_png(&t, &p).unwrap();
        assert_eq!(load_rgb(&p).unwrap(), t);
    }

    #[test]
    fn quantization_clamps_and_rounds_half_up() {
        let t = Tensor::from_vec(&[1, 1, 4], vec![-0.5, 0.5 / 255.0, 1.5, 0.499 / 255.0]).unwrap();
        let img = to_rgb8(&t).unwrap();
        let v: Vec<u8> = (0..4).map(|x| img.get_pixel(x, 0)[0]).collect();
        assert_eq!(v, vec![0, 1, 255, 0]);
    }

    #[test]
    fn bmp_and_listing() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_fn([3, 4, 4], |c, i, j| ((c + i + j) * 20) as f64 / 255.0);
        to_rgb8(&t).unwrap().save(dir.path().join("b.bmp")).unwrap();
        save_png(&t, dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let files = image_files(dir.path()).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, vec!["a.png", "b.bmp"]);
        assert_eq!(load_rgb(&files[1]).unwrap(), t);
    }

    #[test]
    fn unreadable_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(load_rgb(&p).is_err());
        assert!(matches!(load_rgb(dir.path().join("missing.png")), Err(Error::Io { .. })));
    }
}
