//! The binary point-cloud container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "STG4"
//! 4       4     version (u32, currently 1)
//! 8       8     point count (u64)
//! 16      24*n  records
//! ```
//!
//! Each 24-byte record:
//!
//! ```text
//! offset  size  field
//! 0       12    position, f32 x/y/z, meters, world frame
//! 12      3     color, u8 r/g/b
//! 15      2     frame index (u16)
//! 17      1     camera index (u8)
//! 18      1     flags (bit 0 = dynamic, bit 1 = removed)
//! 19      5     reserved, must be zero
//! ```
//!
//! The fixed stride allows memory-mapped scanning. Records are grouped by
//! frame: all records of a frame are contiguous and frame indices increase
//! strictly across groups. Timestamps are not stored here; they live in the
//! scene sidecar, and [`load_cloud`] leaves them at zero.

use super::SceneIoError;
use crate::geometry::Point3;
use crate::reconstruction::{FramePointCloud, FrameTag, ScenePoint};
use std::io::{BufWriter, Write};
use std::path::Path;

pub const CLOUD_MAGIC: [u8; 4] = *b"STG4";
pub const CLOUD_VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 24;

const HEADER_BYTES: usize = 16;

/// Writes world-frame frame clouds to the binary container.
///
/// Frames must carry the world tag and strictly increasing frame indices so
/// that a later [`load_cloud`] reproduces the same grouping.
pub fn save_cloud(frames: &[FramePointCloud], path: &Path) -> Result<(), SceneIoError> {
    for window in frames.windows(2) {
        if window[1].frame_index <= window[0].frame_index {
            return Err(SceneIoError::validation(format!(
                "cloud frames must have strictly increasing indices, got {} then {}",
                window[0].frame_index, window[1].frame_index
            )));
        }
    }
    for frame in frames {
        if frame.tag != FrameTag::World {
            return Err(SceneIoError::WrongFrameTag {
                expected: FrameTag::World,
                found: frame.tag,
            });
        }
    }
    let count: u64 = frames.iter().map(|f| f.points.len() as u64).sum();
    let file = std::fs::File::create(path).map_err(|e| SceneIoError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| SceneIoError::io(path, e));
    write(&CLOUD_MAGIC)?;
    write(&CLOUD_VERSION.to_le_bytes())?;
    write(&count.to_le_bytes())?;
    for frame in frames {
        for point in &frame.points {
            let mut record = [0u8; RECORD_BYTES];
            record[0..4].copy_from_slice(&(point.position.x as f32).to_le_bytes());
            record[4..8].copy_from_slice(&(point.position.y as f32).to_le_bytes());
            record[8..12].copy_from_slice(&(point.position.z as f32).to_le_bytes());
            record[12..15].copy_from_slice(&point.color);
            record[15..17].copy_from_slice(&frame.frame_index.to_le_bytes());
            record[17] = point.camera_index;
            record[18] = point.flags;
            write(&record)?;
        }
    }
    out.flush().map_err(|e| SceneIoError::io(path, e))
}

/// Reads a container written by [`save_cloud`], grouping records back into
/// per-frame clouds. Timestamps are restored as zero.
pub fn load_cloud(path: &Path) -> Result<Vec<FramePointCloud>, SceneIoError> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SceneIoError::MissingFile(path.to_path_buf())
        } else {
            SceneIoError::io(path, e)
        }
    })?;
    if bytes.len() < HEADER_BYTES {
        return Err(SceneIoError::TruncatedFile {
            path: path.to_path_buf(),
        });
    }
    if bytes[0..4] != CLOUD_MAGIC {
        return Err(SceneIoError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CLOUD_VERSION {
        return Err(SceneIoError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[HEADER_BYTES..];
    let expected = (count as usize).checked_mul(RECORD_BYTES);
    match expected {
        Some(len) if body.len() >= len => {
            if body.len() > len {
                return Err(SceneIoError::parse(
                    path,
                    format!("{} trailing bytes after {count} records", body.len() - len),
                ));
            }
        }
        _ => {
            return Err(SceneIoError::TruncatedFile {
                path: path.to_path_buf(),
            })
        }
    }
    let mut frames: Vec<FramePointCloud> = Vec::new();
    for (i, record) in body.chunks_exact(RECORD_BYTES).enumerate() {
        let x = f32::from_le_bytes(record[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(record[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(record[8..12].try_into().unwrap());
        let position = Point3::new(f64::from(x), f64::from(y), f64::from(z));
        if !position.is_finite() {
            return Err(SceneIoError::parse(
                path,
                format!("record {i}: non-finite position"),
            ));
        }
        let color = [record[12], record[13], record[14]];
        let frame_index = u16::from_le_bytes(record[15..17].try_into().unwrap());
        let camera_index = record[17];
        let flags = record[18];
        if flags & 0b1111_1100 != 0 {
            return Err(SceneIoError::parse(
                path,
                format!("record {i}: undefined flag bits set: {flags:#010b}"),
            ));
        }
        if record[19..].iter().any(|&b| b != 0) {
            return Err(SceneIoError::parse(
                path,
                format!("record {i}: reserved bytes are not zero"),
            ));
        }
        match frames.last_mut() {
            Some(frame) if frame.frame_index == frame_index => frame.points.push(ScenePoint {
                position,
                color,
                camera_index,
                flags,
            }),
            Some(frame) if frame.frame_index > frame_index => {
                return Err(SceneIoError::validation(format!(
                    "record {i}: frame {frame_index} follows frame {}; records must be \
                     grouped by increasing frame index",
                    frame.frame_index
                )))
            }
            _ => frames.push(FramePointCloud {
                frame_index,
                timestamp: 0.0,
                tag: FrameTag::World,
                points: vec![ScenePoint {
                    position,
                    color,
                    camera_index,
                    flags,
                }],
            }),
        }
    }
    Ok(frames)
}

/// Writes an ASCII PLY (positions and colors only) for third-party viewers.
///
/// Positions are written at the container's f32 precision.
pub fn export_ply(frames: &[FramePointCloud], path: &Path) -> Result<(), SceneIoError> {
    let count: usize = frames.iter().map(|f| f.points.len()).sum();
    let file = std::fs::File::create(path).map_err(|e| SceneIoError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = |line: String| {
        out.write_all(line.as_bytes())
            .map_err(|e| SceneIoError::io(path, e))
    };
    emit(format!(
        "ply\nformat ascii 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    ))?;
    for frame in frames {
        for p in &frame.points {
            emit(format!(
                "{} {} {} {} {} {}\n",
                p.position.x as f32,
                p.position.y as f32,
                p.position.z as f32,
                p.color[0],
                p.color[1],
                p.color[2],
            ))?;
        }
    }
    out.flush().map_err(|e| SceneIoError::io(path, e))
}
