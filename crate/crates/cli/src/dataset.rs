use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use footprints::io::{read_flow, read_pfm, read_pgm, DatasetManifest, FrameEntry};
use footprints::scene::{Camera, Flow, FrameRender};
use footprints::{BinaryMask, DepthMap};

/// One scene directory and its parsed manifest.
pub struct SceneDir {
    /// Path relative to the data root; empty when the root is itself a scene.
    pub name: String,
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl SceneDir {
    pub fn camera(&self, frame: &FrameEntry) -> Camera {
        Camera::new(frame.intrinsics, frame.pose)
    }

    pub fn render(&self, frame: &FrameEntry) -> Result<FrameRender> {
        Ok(FrameRender {
            depth: read_pfm(&self.dir.join(&frame.files.depth))?,
            seg: read_pgm(&self.dir.join(&frame.files.seg))?,
            camera: self.camera(frame),
            frame_index: frame.frame_index,
        })
    }

    pub fn ground_truth(&self, frame: &FrameEntry) -> Result<(BinaryMask, DepthMap)> {
        Ok((
            read_pgm(&self.dir.join(&frame.files.gt_s_star))?,
            read_pfm(&self.dir.join(&frame.files.gt_d_star))?,
        ))
    }

    pub fn flow(&self, frame: &FrameEntry) -> Result<Option<Flow>> {
        match (&frame.files.flow, &frame.files.flow_valid) {
            (Some(f), Some(v)) => Ok(Some(Flow {
                flow: read_flow(&self.dir.join(f))?,
                valid: read_pgm(&self.dir.join(v))?,
            })),
            _ => Ok(None),
        }
    }

    /// Where this scene's per-frame outputs go under `root`.
    pub fn output_dir(&self, root: &Path, frame: &FrameEntry) -> PathBuf {
        root.join(&self.name).join(&frame.id)
    }

    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            "."
        } else {
            &self.name
        }
    }
}

/// A single scene directory, or every immediate subdirectory holding a manifest.
pub fn open_data(root: &Path) -> Result<Vec<SceneDir>> {
    let own = root.join(DatasetManifest::FILE_NAME);
    if own.is_file() {
        return Ok(vec![load_scene(String::new(), root.to_path_buf())?]);
    }
    let mut names: Vec<String> = fs::read_dir(root)
        .with_context(|| format!("reading data directory {}", root.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(DatasetManifest::FILE_NAME).is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no {} found in {} or its subdirectories", DatasetManifest::FILE_NAME, root.display());
    }
    names.into_iter().map(|n| load_scene(n.clone(), root.join(n))).collect()
}

fn load_scene(name: String, dir: PathBuf) -> Result<SceneDir> {
    let manifest = DatasetManifest::load(&dir.join(DatasetManifest::FILE_NAME))?;
    Ok(SceneDir { name, dir, manifest })
}
