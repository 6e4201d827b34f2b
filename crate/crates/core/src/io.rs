//! File formats: 8-bit grayscale PNG frames, frame directories with a TOML
//! sidecar manifest, synthetic dataset manifests, and the comment header
//! that opens every generated table.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::image::ImagePatch;
use crate::pipeline::Roi;
use crate::synthgen::LabeledSample;
use crate::{Error, Result};

pub const FRAME_MANIFEST: &str = "manifest.toml";

pub fn read_png(path: impl AsRef<Path>) -> Result<ImagePatch> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    ImagePatch::from_levels(w as usize, h as usize, gray.into_raw())
}

pub fn write_png(path: impl AsRef<Path>, img: &ImagePatch) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        img.levels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Sidecar of a frame directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub frame_rate_hz: f64,
    #[serde(default)]
    pub roi: Option<Roi>,
}

impl FrameManifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(FRAME_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: FrameManifest =
            toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if !(m.frame_rate_hz > 0.0) {
            return Err(Error::format(&path, "frame_rate_hz must be positive"));
        }
        Ok(m)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(FRAME_MANIFEST);
        let text = toml::to_string(self).map_err(|e| Error::format(&path, e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// PNG files whose stem is all digits, sorted by frame number.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let number = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse::<u64>().ok());
        if let (true, Some(n)) = (is_png, number) {
            frames.push((n, path));
        }
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<ImagePatch>> {
    list_frames(dir)?.iter().map(read_png).collect()
}

/// Zero-padded frame file name.
pub fn frame_name(index: usize) -> String {
    format!("{index:06}.png")
}

pub fn write_frames(
    dir: impl AsRef<Path>,
    frames: &[ImagePatch],
    manifest: &FrameManifest,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        write_png(dir.join(frame_name(i)), f)?;
    }
    manifest.write(dir)
}

/// `# crloc <version> config_sha256=<hash> seed=<seed>`
pub fn header_line(config_sha256: &str, seed: u64) -> String {
    format!(
        "# crloc {} config_sha256={config_sha256} seed={seed}",
        env!("CARGO_PKG_VERSION")
    )
}

pub fn write_header(out: &mut impl Write, config_sha256: &str, seed: u64) -> std::io::Result<()> {
    writeln!(out, "{}", header_line(config_sha256, seed))
}

/// Drops leading `#` comment lines from a table.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Dataset manifest rows: `file,x,y,r,A,sigma_n,light,dark,line_x,line_y,line_angle`.
pub fn write_dataset_manifest(
    out: &mut impl Write,
    files: &[String],
    samples: &[LabeledSample],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "file",
        "x",
        "y",
        "r",
        "A",
        "sigma_n",
        "light",
        "dark",
        "line_x",
        "line_y",
        "line_angle",
    ])?;
    for (f, s) in files.iter().zip(samples) {
        let sc = &s.scene;
        let bg = &sc.background;
        w.write_record([
            f.clone(),
            format!("{:.6}", s.truth.x),
            format!("{:.6}", s.truth.y),
            format!("{:.6}", sc.cr.radius),
            format!("{:.6}", sc.cr.amplitude),
            format!("{:.6}", sc.noise.sigma_n),
            format!("{:.6}", bg.light_intensity),
            format!("{:.6}", bg.dark_intensity),
            format!("{:.6}", bg.line_point.x),
            format!("{:.6}", bg.line_point.y),
            format!("{:.6}", bg.line_angle),
        ])?;
    }
    w.flush()
}
