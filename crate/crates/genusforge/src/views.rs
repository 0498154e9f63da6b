//! View sets on disk: one 16-bit grayscale silhouette PNG and one 16-bit
//! RGBA normal PNG per camera, plus `manifest.json` with the cameras.
//!
//! Normals are stored as `n·0.5 + 0.5`; alpha is opaque exactly where the
//! normal is defined, so background pixels decode to the zero vector.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use genusforge_core::render::{Camera, RenderedView};
use genusforge_core::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ViewSetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    PngDecode {
        path: PathBuf,
        source: png::DecodingError,
    },
    #[error("{path}: {source}")]
    PngEncode {
        path: PathBuf,
        source: png::EncodingError,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    BadImage { path: PathBuf, reason: String },
    #[error("manifest format {0} is not supported")]
    UnsupportedFormat(u32),
    #[error("camera {id}: {source}")]
    Camera {
        id: usize,
        source: genusforge_core::render::RenderError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    /// Where the views came from, for humans.
    pub source: String,
    pub views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub id: usize,
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub silhouette: String,
    pub normals: String,
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ViewSetError + '_ {
    move |source| ViewSetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn quantize(x: f64) -> u16 {
    (x.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn dequantize(q: u16) -> f64 {
    q as f64 / 65535.0
}

fn write_png16(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    samples: &[u16],
) -> Result<(), ViewSetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Sixteen);
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    let encode_err = |source| ViewSetError::PngEncode {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(&bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Decodes a 16-bit PNG of the expected color type and size into samples.
fn read_png16(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
) -> Result<Vec<u16>, ViewSetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let decode_err = |source| ViewSetError::PngDecode {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(decode_err)?;
    let info = reader.info();
    let bad = |reason: String| ViewSetError::BadImage {
        path: path.to_path_buf(),
        reason,
    };
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != color {
        return Err(bad(format!(
            "expected 16-bit {color:?}, found {:?} {:?}",
            info.bit_depth, info.color_type
        )));
    }
    if (info.width as usize, info.height as usize) != (width, height) {
        return Err(bad(format!(
            "expected {width}x{height}, found {}x{}",
            info.width, info.height
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    Ok(buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect())
}

pub fn silhouette_name(id: usize) -> String {
    format!("view_{id:03}_silhouette.png")
}

pub fn normals_name(id: usize) -> String {
    format!("view_{id:03}_normals.png")
}

/// Writes the views and their manifest into `dir`, creating it if needed.
pub fn write_view_set(
    dir: &Path,
    cameras: &[Camera],
    views: &[RenderedView],
    sigma: f64,
    seed: u64,
    source: &str,
) -> Result<Manifest, ViewSetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (width, height) = cameras.first().map_or((0, 0), |c| (c.width, c.height));
    let mut entries = Vec::with_capacity(views.len());
    for (id, (cam, view)) in cameras.iter().zip(views).enumerate() {
        let sil: Vec<u16> = view.coverage.iter().map(|&c| quantize(c)).collect();
        let nrm: Vec<u16> = view
            .normals
            .iter()
            .flat_map(|n| {
                let alpha = if *n == Vec3::ZERO { 0 } else { u16::MAX };
                [
                    quantize(n.x * 0.5 + 0.5),
                    quantize(n.y * 0.5 + 0.5),
                    quantize(n.z * 0.5 + 0.5),
                    alpha,
                ]
            })
            .collect();
        let entry = ViewEntry {
            id,
            position: arr(cam.position),
            target: arr(cam.target),
            up: arr(cam.up),
            fov_y: cam.fov_y,
            silhouette: silhouette_name(id),
            normals: normals_name(id),
        };
        write_png16(
            &dir.join(&entry.silhouette),
            cam.width,
            cam.height,
            png::ColorType::Grayscale,
            &sil,
        )?;
        write_png16(
            &dir.join(&entry.normals),
            cam.width,
            cam.height,
            png::ColorType::Rgba,
            &nrm,
        )?;
        entries.push(entry);
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        seed,
        width,
        height,
        sigma,
        source: source.to_string(),
        views: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|source| ViewSetError::Manifest {
            path: path.clone(),
            source,
        })?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ViewSetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|source| ViewSetError::Manifest {
            path: path.clone(),
            source,
        })?;
    if manifest.format != FORMAT_VERSION {
        return Err(ViewSetError::UnsupportedFormat(manifest.format));
    }
    Ok(manifest)
}

/// Loads cameras and target views from a directory written by [`write_view_set`].
pub fn read_view_set(
    dir: &Path,
) -> Result<(Manifest, Vec<Camera>, Vec<RenderedView>), ViewSetError> {
    let manifest = read_manifest(dir)?;
    let (w, h) = (manifest.width, manifest.height);
    let mut cameras = Vec::with_capacity(manifest.views.len());
    let mut views = Vec::with_capacity(manifest.views.len());
    for (i, e) in manifest.views.iter().enumerate() {
        let cam = Camera::look_at(vec3(e.position), vec3(e.target), vec3(e.up), e.fov_y, w, h)
            .map_err(|source| ViewSetError::Camera { id: e.id, source })?;
        let sil_path = dir.join(&e.silhouette);
        let coverage: Vec<f64> = read_png16(&sil_path, w, h, png::ColorType::Grayscale)?
            .into_iter()
            .map(dequantize)
            .collect();
        let nrm_path = dir.join(&e.normals);
        let normals: Vec<Vec3> = read_png16(&nrm_path, w, h, png::ColorType::Rgba)?
            .chunks_exact(4)
            .map(|q| {
                if q[3] == 0 {
                    Vec3::ZERO
                } else {
                    let d = |s: u16| dequantize(s) * 2.0 - 1.0;
                    Vec3::new(d(q[0]), d(q[1]), d(q[2]))
                }
            })
            .collect();
        let view = RenderedView::from_buffers(i, w, h, coverage, normals)
            .map_err(|source| ViewSetError::Camera { id: e.id, source })?;
        cameras.push(cam);
        views.push(view);
    }
    Ok((manifest, cameras, views))
}

#[cfg(test)]
mod tests {
    use super::*;
    use genusforge_core::optimize::render_views;
    use genusforge_core::primitives::icosphere;
    use genusforge_core::render::{make_camera_rig, RenderParams, DEFAULT_FOV_Y};

    #[test]
    fn quantization_is_exact_at_the_ends_and_half_step_inside() {
        assert_eq!(dequantize(quantize(0.0)), 0.0);
        assert_eq!(dequantize(quantize(1.0)), 1.0);
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            assert!((dequantize(quantize(x)) - x).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn view_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = icosphere(2, 0.8);
        let cams = make_camera_rig(3, 2.5, 24, 20, DEFAULT_FOV_Y);
        let views = render_views(&mesh, &cams, &RenderParams::default()).unwrap();
        let manifest = write_view_set(dir.path(), &cams, &views, 1.0, 9, "sphere").unwrap();
        assert_eq!(manifest.views.len(), 3);
        let (back, cams2, views2) = read_view_set(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(cams2, cams);
        for (a, b) in views.iter().zip(&views2) {
            for (x, y) in a.coverage.iter().zip(&b.coverage) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-15);
            }
            for (m, n) in a.normals.iter().zip(&b.normals) {
                assert_eq!(*m == Vec3::ZERO, *n == Vec3::ZERO);
                assert!((*m - *n).norm() <= 2.0 / 65535.0);
            }
        }
    }

    #[test]
    fn wrong_size_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = icosphere(1, 0.8);
        let cams = make_camera_rig(1, 2.5, 8, 8, DEFAULT_FOV_Y);
        let views = render_views(&mesh, &cams, &RenderParams::default()).unwrap();
        write_view_set(dir.path(), &cams, &views, 1.0, 0, "sphere").unwrap();
        let mut manifest = read_manifest(dir.path()).unwrap();
        manifest.width = 9;
        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            read_view_set(dir.path()),
            Err(ViewSetError::BadImage { .. })
        ));
    }
}
