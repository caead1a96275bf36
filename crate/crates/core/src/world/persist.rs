use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ply::{load_ply, save_ply};
use super::{Provenance, StageTiming, WorldBundle};
use crate::error::{Error, Result};
use crate::geom::Pose;

pub const WORLD_FILE: &str = "world.ply";
pub const POSES_FILE: &str = "poses.json";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub poses: Vec<Pose>,
    pub lambda: f64,
    pub direction: [f64; 3],
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: byte_offset(&text, e.line(), e.column()) as u64,
        message: format!("{}: {e}", path.display()),
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    start + column.saturating_sub(1)
}

/// Writes the cloud, poses, provenance and timings into `dir`, creating it
/// if needed.
pub fn save_world(bundle: &WorldBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_ply(&bundle.cloud, &dir.join(WORLD_FILE))?;
    let poses = PosesFile {
        poses: bundle.poses.clone(),
        lambda: bundle.provenance.lambda,
        direction: bundle.provenance.direction,
    };
    write_json(&poses, &dir.join(POSES_FILE))?;
    write_json(&bundle.provenance, &dir.join(PROVENANCE_FILE))?;
    write_json(&bundle.timings, &dir.join(TIMINGS_FILE))?;
    Ok(())
}

/// Reads a world written by [`save_world`]. Timings are optional.
pub fn load_world(dir: &Path) -> Result<WorldBundle> {
    let cloud = load_ply(&dir.join(WORLD_FILE))?;
    let poses: PosesFile = read_json(&dir.join(POSES_FILE))?;
    let provenance: Provenance = read_json(&dir.join(PROVENANCE_FILE))?;
    let timings_path = dir.join(TIMINGS_FILE);
    let timings: Vec<StageTiming> = if timings_path.exists() {
        read_json(&timings_path)?
    } else {
        Vec::new()
    };
    if provenance.total_points != cloud.len() {
        return Err(Error::invalid(format!(
            "provenance lists {} points but {WORLD_FILE} holds {}",
            provenance.total_points,
            cloud.len()
        )));
    }
    if poses.poses.len() != provenance.config.n {
        return Err(Error::invalid(format!(
            "{POSES_FILE} holds {} poses, configuration expects {}",
            poses.poses.len(),
            provenance.config.n
        )));
    }
    Ok(WorldBundle {
        cloud,
        poses: poses.poses,
        provenance,
        timings,
        artifacts: None,
    })
}
