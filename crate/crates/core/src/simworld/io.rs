//! On-disk corpus.
//!
//! ```text
//! <root>/index.json                 corpus index
//! <root>/ep_0000/episode.json       scene, rig, profile and frame count
//! <root>/ep_0000/frame_0000.bin     one binary record per frame
//! ```
//!
//! Frame record (integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes "IDRVFRAM"
//! version   u32
//! t         u32
//! command   u8 (0 left, 1 straight, 2 right)
//! dtype     u8, always 1 (f64) for depth, pose and expert
//! images    4 × u32 extents [M, H, W, 3]
//! depth     3 × u32 extents [M, h, w]
//! expert    u32 waypoint count S
//! pose      3 × f64 (x, y, heading)
//! body      M·H·W·3 u8 image bytes, M·h·w f64 depth,
//!           M·h·w u8 class ids, S·2 f64 expert waypoints
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::episode::{Episode, FrameObservation, GenConfig};
use super::scene::{MotionProfile, Scene};
use super::shapes::Pose2;
use crate::diffcore::Tensor;
use crate::encoders::Command;
use crate::error::{Error, Result};
use crate::geometry::CameraModel;

pub const FRAME_MAGIC: &[u8; 8] = b"IDRVFRAM";
pub const FRAME_VERSION: u32 = 1;
pub const CORPUS_VERSION: u32 = 1;

/// Per-manoeuvre episode counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManeuverCounts {
    pub left: usize,
    pub straight: usize,
    pub right: usize,
}

impl ManeuverCounts {
    pub fn add(&mut self, c: Command) {
        match c {
            Command::Left => self.left += 1,
            Command::Straight => self.straight += 1,
            Command::Right => self.right += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub dir: String,
    pub seed: u64,
    pub maneuver: Command,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub version: u32,
    /// Generator settings, so episodes can be regenerated from their seeds.
    pub config: GenConfig,
    pub episodes: Vec<IndexEntry>,
    pub counts: ManeuverCounts,
}

impl CorpusIndex {
    pub fn new(config: GenConfig, episodes: Vec<IndexEntry>) -> Self {
        let mut counts = ManeuverCounts::default();
        episodes.iter().for_each(|e| counts.add(e.maneuver));
        Self { version: CORPUS_VERSION, config, episodes, counts }
    }
}

#[derive(Serialize, Deserialize)]
struct EpisodeMeta {
    version: u32,
    seed: u64,
    maneuver: Command,
    profile_index: usize,
    profile: MotionProfile,
    dt: f64,
    scene: Scene,
    rig: Vec<CameraModel>,
    frames: usize,
}

pub fn episode_dir_name(i: usize) -> String {
    format!("ep_{i:04}")
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:04}.bin"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(Error::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn encode_frame(frame: &FrameObservation) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + frame.images.len() + frame.depth.numel() * 9 + frame.expert.numel() * 8);
    out.extend_from_slice(FRAME_MAGIC);
    out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.t as u32).to_le_bytes());
    out.push(frame.command.index() as u8);
    out.push(1);
    for e in frame.image_shape {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &e in frame.depth.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.extend_from_slice(&(frame.expert.shape()[0] as u32).to_le_bytes());
    for v in [frame.ego_pose.x, frame.ego_pose.y, frame.ego_pose.heading] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&frame.images);
    frame.depth.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    out.extend_from_slice(&frame.semantics);
    frame.expert.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated { path: self.path.to_path_buf() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Truncated { path: self.path.to_path_buf() })?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_frame(bytes: &[u8], path: &Path) -> Result<FrameObservation> {
    let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != FRAME_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    let version = r.u32()?;
    if version != FRAME_VERSION {
        return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: FRAME_VERSION });
    }
    let t = r.u32()? as usize;
    let command = Command::from_index(r.u8()? as usize).ok_or_else(|| malformed("unknown command tag".into()))?;
    let dtype = r.u8()?;
    if dtype != 1 {
        return Err(malformed(format!("unsupported dtype tag {dtype}")));
    }
    let mut image_shape = [0usize; 4];
    for e in image_shape.iter_mut() {
        *e = r.u32()? as usize;
    }
    let depth_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let s = r.u32()? as usize;
    if image_shape.contains(&0) || depth_shape.contains(&0) || s == 0 || image_shape[3] != 3 || image_shape[0] != depth_shape[0] {
        return Err(malformed(format!("inconsistent extents {image_shape:?} / {depth_shape:?} / {s}")));
    }
    let pose = r.f64s(3)?;
    let n_img = image_shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).ok_or_else(|| malformed("image too large".into()))?;
    let cells = depth_shape.iter().product::<usize>();
    let images = r.take(n_img)?.to_vec();
    let depth = r.f64s(cells)?;
    let semantics = r.take(cells)?.to_vec();
    let expert = r.f64s(s * 2)?;
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(FrameObservation {
        t,
        image_shape,
        images,
        depth: Tensor::new(depth_shape, depth)?,
        semantics,
        command,
        expert: Tensor::new([s, 2], expert)?,
        ego_pose: Pose2::new(pose[0], pose[1], pose[2]),
    })
}

pub fn write_episode(dir: &Path, episode: &Episode) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let meta = EpisodeMeta {
        version: CORPUS_VERSION,
        seed: episode.seed,
        maneuver: episode.maneuver,
        profile_index: episode.profile_index,
        profile: episode.profile,
        dt: episode.dt,
        scene: episode.scene.clone(),
        rig: episode.rig.clone(),
        frames: episode.frames.len(),
    };
    write_json(&dir.join("episode.json"), &meta)?;
    for frame in &episode.frames {
        let path = frame_path(dir, frame.t);
        fs::write(&path, encode_frame(frame)).map_err(Error::io(&path))?;
    }
    Ok(())
}

pub fn read_episode(dir: &Path) -> Result<Episode> {
    let meta_path = dir.join("episode.json");
    let meta: EpisodeMeta = read_json(&meta_path)?;
    if meta.version != CORPUS_VERSION {
        return Err(Error::VersionMismatch { path: meta_path, found: meta.version, expected: CORPUS_VERSION });
    }
    let frames = (0..meta.frames)
        .map(|t| {
            let path = frame_path(dir, t);
            let bytes = fs::read(&path).map_err(Error::io(&path))?;
            let frame = decode_frame(&bytes, &path)?;
            if frame.t != t {
                return Err(Error::Malformed { path, reason: format!("frame index {} stored as {t}", frame.t) });
            }
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Episode {
        seed: meta.seed,
        maneuver: meta.maneuver,
        profile_index: meta.profile_index,
        profile: meta.profile,
        dt: meta.dt,
        scene: meta.scene,
        rig: meta.rig,
        frames,
    })
}

/// Writes every episode under `root` plus the index.
pub fn write_corpus(root: &Path, config: &GenConfig, episodes: &[Episode]) -> Result<CorpusIndex> {
    fs::create_dir_all(root).map_err(Error::io(root))?;
    let mut entries = Vec::with_capacity(episodes.len());
    for (i, ep) in episodes.iter().enumerate() {
        let name = episode_dir_name(i);
        write_episode(&root.join(&name), ep)?;
        entries.push(IndexEntry { dir: name, seed: ep.seed, maneuver: ep.maneuver, frames: ep.frames.len() });
    }
    let index = CorpusIndex::new(config.clone(), entries);
    write_json(&root.join("index.json"), &index)?;
    Ok(index)
}

pub fn read_index(root: &Path) -> Result<CorpusIndex> {
    let path = root.join("index.json");
    let index: CorpusIndex = read_json(&path)?;
    if index.version != CORPUS_VERSION {
        return Err(Error::VersionMismatch { path, found: index.version, expected: CORPUS_VERSION });
    }
    Ok(index)
}

/// Loads every indexed episode; an empty corpus is an error.
pub fn read_corpus(root: &Path) -> Result<(CorpusIndex, Vec<Episode>)> {
    if !root.join("index.json").is_file() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    let index = read_index(root)?;
    if index.episodes.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    let episodes = index.episodes.iter().map(|e| read_episode(&root.join(&e.dir))).collect::<Result<Vec<_>>>()?;
    Ok((index, episodes))
}
