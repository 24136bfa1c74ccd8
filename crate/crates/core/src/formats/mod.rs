//! File formats. ASCII PLY carries clouds and meshes (with integer tissue
//! classes per vertex), ASCII PGM carries masks and quantized images
//! bit-exactly, PNG mirrors the image exports for viewing, and CSV carries
//! tool paths and correspondence sets. Floats are printed with Rust's
//! shortest round-trip formatting, so exports re-import losslessly.

mod csvio;
mod pgm;
mod ply;
mod pngio;

pub use csvio::{
    read_correspondences_csv, read_path_csv, write_correspondences_csv, write_path_csv,
};
pub use pgm::{read_image_pgm, read_mask_pgm, write_image_pgm, write_mask_pgm};
pub use ply::{
    read_labeled_cloud_ply, read_mesh_ply, write_labeled_cloud_ply, write_mesh_ply, MeshPayload,
};
pub use pngio::{read_image_png, write_image_png};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Structure { path: String, message: String },
    #[error(transparent)]
    Cloud(#[from] crate::cloud::CloudError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Image(#[from] crate::img::ImageError),
    #[error(transparent)]
    Seg(#[from] crate::seg::SegError),
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn structure(path: &std::path::Path, message: impl Into<String>) -> Self {
        FormatError::Structure {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}
