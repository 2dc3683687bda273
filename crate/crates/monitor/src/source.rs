use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hkcd_core::ImageBuffer;
use image::codecs::gif::GifDecoder;
use image::{AnimationDecoder, DynamicImage};
use serde::{Deserialize, Serialize};

use crate::error::{MonitorError, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "webp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Still images in file-name order.
    Directory,
    /// An animated GIF, one frame per animation frame.
    VideoFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSource {
    pub kind: SourceKind,
    pub path: PathBuf,
    /// Every `k`-th frame is kept, starting with the first.
    pub sample_interval: usize,
}

impl FrameSource {
    pub fn new(kind: SourceKind, path: impl Into<PathBuf>, sample_interval: usize) -> Result<Self> {
        if sample_interval == 0 {
            return Err(MonitorError::InvalidInterval);
        }
        Ok(Self {
            kind,
            path: path.into(),
            sample_interval,
        })
    }

    /// Directory for a directory path, video file otherwise.
    pub fn detect(path: impl Into<PathBuf>, sample_interval: usize) -> Result<Self> {
        let path = path.into();
        let kind = if path.is_dir() { SourceKind::Directory } else { SourceKind::VideoFile };
        Self::new(kind, path, sample_interval)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Position in the unsampled source.
    pub index: usize,
    pub id: String,
    pub image: ImageBuffer,
    /// File the frame came from.
    pub origin: PathBuf,
}

pub type FrameStream = Box<dyn Iterator<Item = Result<Frame>>>;

fn unreadable(path: &Path, reason: impl ToString) -> MonitorError {
    MonitorError::UnreadableSource {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Frames `0, k, 2k, …` of the source in order, decoded lazily.
pub fn grab_frames(source: &FrameSource) -> Result<FrameStream> {
    if source.sample_interval == 0 {
        return Err(MonitorError::InvalidInterval);
    }
    let k = source.sample_interval;
    match source.kind {
        SourceKind::Directory => {
            let entries = std::fs::read_dir(&source.path).map_err(|e| unreadable(&source.path, e))?;
            let mut files = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| unreadable(&source.path, e))?.path();
                if path.is_file() && is_image(&path) {
                    files.push(path);
                }
            }
            files.sort();
            Ok(Box::new(files.into_iter().enumerate().step_by(k).map(|(index, path)| {
                let image = ImageBuffer::load(&path).map_err(|e| unreadable(&path, e))?;
                let id = path.file_stem().map_or_else(|| index.to_string(), |s| s.to_string_lossy().into_owned());
                Ok(Frame {
                    index,
                    id,
                    image,
                    origin: path,
                })
            })))
        }
        SourceKind::VideoFile => {
            let path = source.path.clone();
            let file = File::open(&path).map_err(|e| unreadable(&path, e))?;
            let decoder = GifDecoder::new(BufReader::new(file)).map_err(|e| unreadable(&path, e))?;
            let stem = path.file_stem().map_or_else(|| "frame".into(), |s| s.to_string_lossy().into_owned());
            Ok(Box::new(decoder.into_frames().enumerate().step_by(k).map(move |(index, frame)| {
                let frame = frame.map_err(|e| unreadable(&path, e))?;
                let image = ImageBuffer::from_dynamic(&DynamicImage::ImageRgba8(frame.into_buffer()))?;
                Ok(Frame {
                    index,
                    id: format!("{stem}_{index:06}"),
                    image,
                    origin: path.clone(),
                })
            })))
        }
    }
}
