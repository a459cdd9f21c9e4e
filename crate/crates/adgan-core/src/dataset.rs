//! Dataset directory conventions: a domain is a flat directory of
//! single-channel PNG/TIFF files, loaded fully into memory (desk-scale
//! datasets are small) and kept in filename order for determinism.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::image_io::{load_image, ImageIoError, ImageTensor};

#[derive(Debug)]
pub enum DatasetError {
    Io(std::io::Error),
    Image(ImageIoError),
    Empty(PathBuf),
    /// The trainer refuses paired ground-truth directories; the
    /// unsupervised protocol feeds it images/ and unpaired_masks/ only.
    QuarantinedGroundTruth(PathBuf),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io(e) => write!(f, "dataset i/o error: {e}"),
            DatasetError::Image(e) => write!(f, "dataset image error: {e}"),
            DatasetError::Empty(p) => write!(f, "no images found in {}", p.display()),
            DatasetError::QuarantinedGroundTruth(p) => write!(
                f,
                "{} looks like a paired ground-truth directory; training reads only images/ and unpaired_masks/",
                p.display()
            ),
        }
    }
}

impl std::error::Error for DatasetError {}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::Io(e)
    }
}
impl From<ImageIoError> for DatasetError {
    fn from(e: ImageIoError) -> Self {
        DatasetError::Image(e)
    }
}

pub struct ImageFolder {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub images: Vec<ImageTensor>,
}

pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref e) if e == "png" || e == "tif" || e == "tiff"
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DatasetError::Empty(dir.as_ref().to_path_buf()));
    }
    Ok(files)
}

/// Load every image in a directory, min-max normalized to [-1, 1].
pub fn load_folder(dir: impl AsRef<Path>) -> Result<ImageFolder, DatasetError> {
    let files = list_images(dir.as_ref())?;
    let mut images = Vec::with_capacity(files.len());
    for f in &files {
        images.push(load_image(f)?);
    }
    Ok(ImageFolder {
        dir: dir.as_ref().to_path_buf(),
        files,
        images,
    })
}

/// Same, but rejecting directories that hold paired ground truth.
pub fn load_training_folder(dir: impl AsRef<Path>) -> Result<ImageFolder, DatasetError> {
    let name = dir
        .as_ref()
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("");
    if name == "gt_masks" || name == "gt_labels" {
        return Err(DatasetError::QuarantinedGroundTruth(dir.as_ref().into()));
    }
    load_folder(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::save_image;

    #[test]
    fn folder_loads_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "c.png"] {
            save_image(&ImageTensor::filled(4, 4, 0.0), dir.path().join(name), 8).unwrap();
        }
        let folder = load_folder(dir.path()).unwrap();
        let names: Vec<_> = folder
            .files
            .iter()
            .map(|f| f.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["a.png", "b.png", "c.png"]);
    }

    #[test]
    fn empty_folder_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_folder(dir.path()), Err(DatasetError::Empty(_))));
    }

    #[test]
    fn ground_truth_directories_are_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let gt = dir.path().join("gt_masks");
        std::fs::create_dir(&gt).unwrap();
        save_image(&ImageTensor::filled(4, 4, 0.0), gt.join("a.png"), 8).unwrap();
        assert!(load_folder(&gt).is_ok());
        assert!(matches!(
            load_training_folder(&gt),
            Err(DatasetError::QuarantinedGroundTruth(_))
        ));
    }
}
