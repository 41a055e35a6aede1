//! Labelled depth datasets: synthetic generation and the on-disk container.
//!
//! Binary file, all integers little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `DPDS` |
//! | 4 | version (`u32`, currently 1) |
//! | 4 + 4 | width, height (`u32`) |
//! | 4 × 8 | fx, fy, cx, cy (`f64`) |
//! | 8 | frame count (`u64`) |
//! | 4 | CRC-32 of the annotation sidecar |
//! | per frame | subject id (`u32`), then `width × height` depths (`u16`, mm, 0 = missing) |
//! | 4 | CRC-32 of all preceding bytes |
//!
//! Annotations live next to it in `<file>.json`: an array with one entry per
//! frame, each an array of `[x, y, z]` joint positions in mm.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::binio::{verify_crc, Reader, Writer};
use super::hand::{sample_pose, HandModel};
use super::render::{render_depth, SyntheticSceneConfig};
use crate::augmentation::mix_seed;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthFrame, Pose3D};

pub const DATASET_MAGIC: [u8; 4] = *b"DPDS";
pub const DATASET_VERSION: u32 = 1;
/// Size of the fixed file header in bytes.
pub const DATASET_HEADER_BYTES: usize = 4 + 4 + 8 + 32 + 8 + 4;
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<DepthFrame>,
    pub annotations: Vec<Pose3D>,
    pub subjects: Vec<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.annotations.first().map_or(0, Pose3D::num_joints)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if self.annotations.len() != n || self.subjects.len() != n {
            return Err(Error::Shape(format!(
                "{n} frames, {} annotations, {} subject ids",
                self.annotations.len(),
                self.subjects.len()
            )));
        }
        let j = self.num_joints();
        if self.annotations.iter().any(|a| a.num_joints() != j) {
            return Err(Error::Shape("annotations differ in joint count".into()));
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(Error::Shape(format!("frames must all be {w}x{h}")));
        }
        Ok(())
    }

    /// Sorted distinct subject ids.
    pub fn subject_ids(&self) -> Vec<u32> {
        let mut ids = self.subjects.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            intrinsics: self.intrinsics,
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            annotations: indices.iter().map(|&i| self.annotations[i].clone()).collect(),
            subjects: indices.iter().map(|&i| self.subjects[i]).collect(),
        }
    }

    /// Splits into `(rest, held_out)` by subject id.
    pub fn split_subjects(&self, held_out: &[u32]) -> (Dataset, Dataset) {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| held_out.contains(&self.subjects[i]));
        (self.subset(&train), self.subset(&test))
    }

    /// First `n` frames.
    pub fn head(&self, n: usize) -> Dataset {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

/// Renders `n_frames` frames, assigning frame `i` to subject `i % n_subjects`.
/// Each subject has its own hand geometry; everything derives from `cfg.seed`.
pub fn generate_dataset(n_frames: usize, n_subjects: u32, cfg: &SyntheticSceneConfig) -> Result<Dataset> {
    if n_frames == 0 || n_subjects == 0 {
        return Err(Error::Config("need at least one frame and one subject".into()));
    }
    cfg.validate()?;
    let models: Vec<HandModel> = (0..n_subjects).map(|s| HandModel::for_subject(cfg.seed, s)).collect();
    let mut out = Dataset {
        intrinsics: cfg.intrinsics,
        frames: Vec::with_capacity(n_frames),
        annotations: Vec::with_capacity(n_frames),
        subjects: Vec::with_capacity(n_frames),
    };
    for i in 0..n_frames {
        let subject = (i % n_subjects as usize) as u32;
        let model = &models[subject as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xf4a3e, i as u64));
        let mut rendered = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let (angles, _) = sample_pose(model, &cfg.limits, &cfg.placement, &mut rng)?;
            match render_depth(model, &angles, cfg, &mut rng) {
                Ok(r) => {
                    rendered = Some(r);
                    break;
                }
                Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (frame, pose) = rendered
            .ok_or_else(|| Error::Config("hand placement never fits inside the camera frame".into()))?;
        out.frames.push(frame);
        out.annotations.push(pose);
        out.subjects.push(subject);
    }
    Ok(out)
}

/// Path of the annotation sidecar belonging to a dataset file.
pub fn annotation_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn encode_annotations(ds: &Dataset) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(&ds.annotations)?)
}

/// Serializes the binary container; the annotation bytes are needed for the header CRC.
pub fn encode_dataset(ds: &Dataset, annotations: &[u8]) -> Result<Vec<u8>> {
    ds.validate()?;
    let k = &ds.intrinsics;
    let mut w = Writer::new();
    w.bytes(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(k.width as u32);
    w.u32(k.height as u32);
    for v in [k.fx, k.fy, k.cx, k.cy] {
        w.f64(v);
    }
    w.u64(ds.len() as u64);
    w.u32(crc32fast::hash(annotations));
    for (f, &s) in ds.frames.iter().zip(&ds.subjects) {
        w.u32(s);
        for &d in &f.depth {
            w.u16(d);
        }
    }
    Ok(w.finish())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let ann = encode_annotations(ds)?;
    let bin = encode_dataset(ds, &ann)?;
    fs::write(path, bin)?;
    fs::write(annotation_path(path), ann)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bin = fs::read(path)?;
    let ann = fs::read(annotation_path(path))?;
    decode_dataset(&bin, &ann)
}

pub fn decode_dataset(bin: &[u8], annotations: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bin, "dataset file");
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Version { found: version, expected: DATASET_VERSION });
    }
    let (width, height) = (r.u32()? as usize, r.u32()? as usize);
    let (fx, fy, cx, cy) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let count = r.u64()? as usize;
    let ann_crc = r.u32()?;
    let record = 4 + 2 * width * height;
    let expected = count
        .checked_mul(record)
        .and_then(|b| b.checked_add(DATASET_HEADER_BYTES + 4))
        .ok_or_else(|| Error::Format("frame count overflows".into()))?;
    if bin.len() < expected {
        return Err(Error::Truncated(format!("dataset file has {} bytes, header implies {expected}", bin.len())));
    }
    if bin.len() > expected {
        return Err(Error::Format(format!("{} trailing bytes after the last frame", bin.len() - expected)));
    }
    verify_crc(bin, "dataset file")?;
    if crc32fast::hash(annotations) != ann_crc {
        return Err(Error::Checksum("annotation sidecar".into()));
    }
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, width, height)
        .map_err(|e| Error::Format(format!("stored intrinsics are invalid: {e}")))?;
    let mut frames = Vec::with_capacity(count);
    let mut subjects = Vec::with_capacity(count);
    for _ in 0..count {
        subjects.push(r.u32()?);
        let raw = r.take(2 * width * height)?;
        let depth = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        frames.push(DepthFrame::new(width, height, depth)?);
    }
    let annotations: Vec<Pose3D> = serde_json::from_slice(annotations)?;
    if annotations.len() != count {
        return Err(Error::Format(format!("{} annotations for {count} frames", annotations.len())));
    }
    let ds = Dataset { intrinsics, frames, annotations, subjects };
    ds.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(ds)
}
