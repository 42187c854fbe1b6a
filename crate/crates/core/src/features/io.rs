//! Patch and mask files.
//!
//! Patches are 8-bit RGB PNGs (`X.png`) or raw interleaved RGB bytes
//! (`X.rgb`) with a sidecar `X.rgb.size` holding `width height`. Masks are
//! 16-bit grayscale PNGs named `X.mask.png`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};

use super::{FeatureError, LabelMask, Patch, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> FeatureError {
    FeatureError::Io(format!("{}: {e}", path.display()))
}

pub fn load_patch(path: &Path) -> Result<Patch> {
    let is_raw = path.extension().is_some_and(|e| e == "rgb");
    if is_raw {
        return load_raw_patch(path);
    }
    let img = image::open(path).map_err(|e| io_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    Patch::new(w as usize, h as usize, pixels)
}

fn load_raw_patch(path: &Path) -> Result<Patch> {
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".size");
    let sidecar = PathBuf::from(sidecar);
    let dims = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| io_err(&sidecar, e))?;
    let [width, height] = parsed[..] else {
        return Err(io_err(&sidecar, "expected `width height`"));
    };
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != width * height * 3 {
        return Err(io_err(
            path,
            format!("{} bytes for a {width}x{height} RGB image", bytes.len()),
        ));
    }
    let pixels = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Patch::new(width, height, pixels)
}

pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let img = image::open(path).map_err(|e| io_err(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    let labels = img.pixels().map(|p| u32::from(p.0[0])).collect();
    LabelMask::new(w as usize, h as usize, labels)
}

pub fn save_patch_png(patch: &Patch, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
        patch.width as u32,
        patch.height as u32,
        patch.pixels.iter().flatten().copied().collect(),
    )
    .expect("buffer sized from patch");
    buf.save(path).map_err(|e| io_err(path, e))
}

pub fn save_mask_png(mask: &LabelMask, path: &Path) -> Result<()> {
    let labels: Vec<u16> = mask
        .labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| io_err(path, format!("label {l} exceeds 16 bits"))))
        .collect::<Result<_>>()?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width as u32, mask.height as u32, labels)
            .expect("buffer sized from mask");
    buf.save(path).map_err(|e| io_err(path, e))
}

/// Patch files in `dir` (PNG or raw), sorted by name, excluding masks.
pub fn list_patches(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".mask.png") {
            continue;
        }
        if name.ends_with(".png") || name.ends_with(".rgb") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Identifier of a patch file: its name without `.png` / `.rgb`.
pub fn patch_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.strip_suffix(".png")
        .or_else(|| name.strip_suffix(".rgb"))
        .unwrap_or(name)
        .to_string()
}

/// Mask path paired with a patch stem.
pub fn mask_path_for(mask_dir: &Path, stem: &str) -> PathBuf {
    mask_dir.join(format!("{stem}.mask.png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let patch = Patch::new(3, 2, vec![[1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12], [0, 0, 0], [255, 255, 255]])
            .unwrap();
        let mask = LabelMask::new(3, 2, vec![0, 1, 1, 300, 300, 0]).unwrap();
        save_patch_png(&patch, &dir.path().join("a.png")).unwrap();
        save_mask_png(&mask, &dir.path().join("a.mask.png")).unwrap();
        assert_eq!(load_patch(&dir.path().join("a.png")).unwrap().pixels, patch.pixels);
        assert_eq!(load_mask(&mask_path_for(dir.path(), "a")).unwrap(), mask);
        let listed = list_patches(dir.path()).unwrap();
        assert_eq!(listed.len(), 1);
        assert_eq!(patch_stem(&listed[0]), "a");
    }

    #[test]
    fn raw_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("r.rgb"), [9u8, 8, 7, 6, 5, 4]).unwrap();
        fs::write(dir.path().join("r.rgb.size"), "2 1\n").unwrap();
        let p = load_patch(&dir.path().join("r.rgb")).unwrap();
        assert_eq!(p.pixels, vec![[9, 8, 7], [6, 5, 4]]);
        fs::write(dir.path().join("r.rgb.size"), "3 1\n").unwrap();
        assert!(load_patch(&dir.path().join("r.rgb")).is_err());
    }
}
