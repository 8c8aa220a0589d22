//! On-disk dataset layout: `pcd/NNNNNN.pcd` frames plus `gt_cloud.pcd`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{LabeledCloud, Pose, ScanFrame};
use crate::pcd::{load_pcd, save_pcd, PcdData, PcdEncoding};

pub const FRAMES_DIR: &str = "pcd";
pub const GT_FILE: &str = "gt_cloud.pcd";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frames: Vec<ScanFrame>,
    pub gt: Option<LabeledCloud>,
}

impl Dataset {
    /// Concatenation of every frame's world points, in frame order.
    pub fn accumulated_points(&self) -> Vec<crate::geom::Point3> {
        self.frames.iter().flat_map(|f| f.world_points()).collect()
    }
}

pub fn frame_file_name(index: u64) -> String {
    format!("{index:06}.pcd")
}

/// Frame files in lexicographic order. Indices must come out strictly increasing.
pub fn list_frame_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let frames_dir = dir.as_ref().join(FRAMES_DIR);
    let mut files: Vec<PathBuf> = fs::read_dir(&frames_dir)
        .map_err(|e| Error::from(e).with_path(&frames_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pcd"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_frames(dir: impl AsRef<Path>) -> Result<Vec<ScanFrame>> {
    let files = list_frame_files(&dir)?;
    let frames: Vec<ScanFrame> = files
        .par_iter()
        .map(|path| match load_pcd(path)? {
            PcdData::Scan(frame) => Ok(frame),
            PcdData::Labeled(_) => Err(Error::InvalidInput(
                "frame file carries a label field".into(),
            )
            .with_path(path)),
        })
        .collect::<Result<_>>()?;
    for (pair, names) in frames.windows(2).zip(files.windows(2)) {
        if pair[1].index <= pair[0].index {
            return Err(Error::InvalidInput(format!(
                "frame indices not strictly increasing: {} ({}) follows {} ({})",
                pair[1].index,
                names[1].display(),
                pair[0].index,
                names[0].display()
            )));
        }
    }
    Ok(frames)
}

pub fn load_gt(dir: impl AsRef<Path>) -> Result<Option<LabeledCloud>> {
    let path = dir.as_ref().join(GT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    match load_pcd(&path)? {
        PcdData::Labeled(cloud) => Ok(Some(cloud)),
        PcdData::Scan(_) => Err(Error::InvalidInput("ground-truth cloud has no label field".into())
            .with_path(&path)),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    Ok(Dataset {
        frames: load_frames(dir)?,
        gt: load_gt(dir)?,
    })
}

pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset, encoding: PcdEncoding) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::from(e).with_path(&frames_dir))?;
    dataset.frames.par_iter().try_for_each(|f| {
        save_pcd(
            frames_dir.join(frame_file_name(f.index)),
            &f.points,
            None,
            &f.pose,
            encoding,
        )
    })?;
    if let Some(gt) = &dataset.gt {
        save_pcd(
            dir.join(GT_FILE),
            gt.points(),
            Some(gt.labels()),
            &Pose::identity(),
            encoding,
        )?;
    }
    Ok(())
}
