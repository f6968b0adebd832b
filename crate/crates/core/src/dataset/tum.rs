//! TUM RGB-D sequence directories: `rgb.txt`, `depth.txt`, `groundtruth.txt`
//! and the images they list.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::Frame;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::imaging::{DepthImage, IntensityImage};

/// Raw depth units per meter.
pub const DEPTH_SCALE: f64 = 5000.0;

/// Default association window, seconds.
pub const MAX_TIME_OFFSET: f64 = 0.02;

/// Intrinsics of the 640×480 sensors used throughout the dataset.
pub fn default_intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
    }
}

/// One associated rgb/depth capture.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociatedFrame {
    pub rgb_time: f64,
    pub rgb_path: PathBuf,
    pub depth_time: f64,
    pub depth_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceManifest {
    pub root: PathBuf,
    /// Ordered by rgb timestamp.
    pub frames: Vec<AssociatedFrame>,
    /// Camera-to-world poses; empty when the sequence has no ground truth.
    pub ground_truth: Vec<(f64, RigidTransform<f64>)>,
}

impl SequenceManifest {
    /// Decodes the `index`-th associated frame, stamped with its rgb time.
    pub fn load_frame(&self, index: usize) -> Result<Frame<f64>> {
        let entry = self.frames.get(index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "frame {index} out of range ({} frames)",
                self.frames.len()
            ))
        })?;
        let (intensity, depth) = decode_frame(&entry.rgb_path, &entry.depth_path)?;
        Frame::new(intensity, depth, entry.rgb_time)
    }
}

/// Non-comment lines of `path` as (line number, fields).
fn read_table(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_owned).collect()))
        .collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn parse_number(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(path, line, format!("'{field}' is not a number")))
}

/// Rows of `field_count` fields with strictly increasing leading timestamps.
fn timestamped_rows(path: &Path, field_count: usize) -> Result<Vec<(usize, f64, Vec<String>)>> {
    let mut rows = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (line, fields) in read_table(path)? {
        if fields.len() != field_count {
            return Err(parse_error(
                path,
                line,
                format!("expected {field_count} fields, found {}", fields.len()),
            ));
        }
        let t = parse_number(path, line, &fields[0])?;
        if t <= last {
            return Err(parse_error(
                path,
                line,
                format!("timestamp {t} does not increase"),
            ));
        }
        last = t;
        rows.push((line, t, fields));
    }
    Ok(rows)
}

/// Parses a `timestamp path` list, resolving paths against `root`.
pub fn parse_file_list(path: &Path, root: &Path) -> Result<Vec<(f64, PathBuf)>> {
    Ok(timestamped_rows(path, 2)?
        .into_iter()
        .map(|(_, t, f)| (t, root.join(&f[1])))
        .collect())
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines.
pub fn parse_trajectory(path: &Path) -> Result<Vec<(f64, RigidTransform<f64>)>> {
    timestamped_rows(path, 8)?
        .into_iter()
        .map(|(line, t, f)| {
            let v = f[1..]
                .iter()
                .map(|s| parse_number(path, line, s))
                .collect::<Result<Vec<_>>>()?;
            let q = Quaternion::new(v[6], v[3], v[4], v[5]);
            if !(q.norm() > 1e-9) {
                return Err(parse_error(path, line, "zero quaternion"));
            }
            let rotation = UnitQuaternion::from_quaternion(q)
                .to_rotation_matrix()
                .into_inner();
            Ok((
                t,
                RigidTransform {
                    rotation,
                    translation: Vector3::new(v[0], v[1], v[2]),
                },
            ))
        })
        .collect()
}

/// Greedy nearest-timestamp matching: candidate pairs within `max_offset` are
/// taken in order of increasing time difference, each entry used at most
/// once. Returns index pairs sorted by the first index.
pub fn associate(first: &[f64], second: &[f64], max_offset: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in first.iter().enumerate() {
        for (j, b) in second.iter().enumerate() {
            let d = (a - b).abs();
            if d <= max_offset {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_first = vec![false; first.len()];
    let mut used_second = vec![false; second.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_first[i] && !used_second[j] {
            used_first[i] = true;
            used_second[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Reads a sequence directory. `groundtruth.txt` is optional.
pub fn load_sequence(root: &Path, max_time_offset: f64) -> Result<SequenceManifest> {
    if !(max_time_offset >= 0.0 && max_time_offset.is_finite()) {
        return Err(Error::InvalidInput("time offset must be non-negative".into()));
    }
    let rgb = parse_file_list(&root.join("rgb.txt"), root)?;
    let depth = parse_file_list(&root.join("depth.txt"), root)?;
    let rgb_t: Vec<f64> = rgb.iter().map(|e| e.0).collect();
    let depth_t: Vec<f64> = depth.iter().map(|e| e.0).collect();
    let frames = associate(&rgb_t, &depth_t, max_time_offset)
        .into_iter()
        .map(|(i, j)| AssociatedFrame {
            rgb_time: rgb[i].0,
            rgb_path: rgb[i].1.clone(),
            depth_time: depth[j].0,
            depth_path: depth[j].1.clone(),
        })
        .collect();
    let gt_path = root.join("groundtruth.txt");
    let ground_truth = if gt_path.exists() {
        parse_trajectory(&gt_path)?
    } else {
        Vec::new()
    };
    Ok(SequenceManifest {
        root: root.to_owned(),
        frames,
        ground_truth,
    })
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Decodes an rgb image to luma in `[0, 1]` and a 16-bit depth image to meters.
pub fn decode_frame(rgb_path: &Path, depth_path: &Path) -> Result<(IntensityImage<f64>, DepthImage<f64>)> {
    let rgb = open_image(rgb_path)?.into_rgb8();
    let depth = match open_image(depth_path)? {
        DynamicImage::ImageLuma16(d) => d,
        other => {
            return Err(Error::Decode {
                path: depth_path.to_owned(),
                message: format!("expected 16-bit single-channel depth, found {:?}", other.color()),
            })
        }
    };
    if rgb.dimensions() != depth.dimensions() {
        return Err(Error::Decode {
            path: depth_path.to_owned(),
            message: format!(
                "depth is {:?} but rgb is {:?}",
                depth.dimensions(),
                rgb.dimensions()
            ),
        });
    }
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let intensity = rgb
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    let meters = depth.pixels().map(|p| p[0] as f64 / DEPTH_SCALE).collect();
    Ok((
        IntensityImage::new(w, h, intensity)?,
        DepthImage::new(w, h, meters)?,
    ))
}

/// Raw 16-bit depth units; invalid pixels become 0.
pub fn depth_to_raw(depth: &DepthImage<f64>) -> Result<Vec<u16>> {
    let mut raw = Vec::with_capacity(depth.width() * depth.height());
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            let v = match depth.get(col, row) {
                Some(d) => {
                    let units = (d * DEPTH_SCALE).round();
                    if !(1.0..=u16::MAX as f64).contains(&units) {
                        return Err(Error::InvalidInput(format!(
                            "depth {d} m is not representable in 16-bit units"
                        )));
                    }
                    units as u16
                }
                None => 0,
            };
            raw.push(v);
        }
    }
    Ok(raw)
}

/// Writes `depth` as a 16-bit PNG in dataset units.
pub fn write_depth_png(depth: &DepthImage<f64>, path: &Path) -> Result<()> {
    let raw = depth_to_raw(depth)?;
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer matches dimensions");
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Writes intensity as an 8-bit grayscale PNG.
pub fn write_intensity_png(intensity: &IntensityImage<f64>, path: &Path) -> Result<()> {
    let raw = intensity
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(intensity.width() as u32, intensity.height() as u32, raw)
        .expect("buffer matches dimensions");
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Formats a pose as `tx ty tz qx qy qz qw` with `qw ≥ 0`.
pub fn format_pose(pose: &RigidTransform<f64>) -> String {
    let mut q = UnitQuaternion::from_matrix(&pose.rotation).into_inner();
    if q.w < 0.0 {
        q = -q;
    }
    let t = pose.translation;
    format!(
        "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        t.x, t.y, t.z, q.i, q.j, q.k, q.w
    )
}

/// Writes frames and poses as a sequence directory that [`load_sequence`]
/// reads back. Intensity is quantized to 8 bits and depth to dataset units.
pub fn write_sequence(
    root: &Path,
    frames: &[Frame<f64>],
    ground_truth: &[(f64, RigidTransform<f64>)],
) -> Result<()> {
    for sub in ["rgb", "depth"] {
        fs::create_dir_all(root.join(sub)).map_err(|e| Error::io(root.join(sub), e))?;
    }
    let mut rgb_list = String::from("# timestamp filename\n");
    let mut depth_list = String::from("# timestamp filename\n");
    for f in frames {
        let name = format!("{:.6}.png", f.timestamp);
        write_intensity_png(&f.intensity, &root.join("rgb").join(&name))?;
        write_depth_png(&f.depth, &root.join("depth").join(&name))?;
        rgb_list.push_str(&format!("{:.6} rgb/{name}\n", f.timestamp));
        depth_list.push_str(&format!("{:.6} depth/{name}\n", f.timestamp));
    }
    let mut gt = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, pose) in ground_truth {
        gt.push_str(&format!("{t:.6} {}\n", format_pose(pose)));
    }
    for (name, text) in [
        ("rgb.txt", rgb_list),
        ("depth.txt", depth_list),
        ("groundtruth.txt", gt),
    ] {
        let path = root.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
