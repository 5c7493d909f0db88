use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the stitching library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file was readable but its contents are not a supported raster or flow file.
    #[error("format error: {0}")]
    Format(String),

    /// A caller broke an operation precondition (dimension mismatch, bad parameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The two images share no pixels on the canvas.
    #[error("no overlap{}", pair_suffix(.pair))]
    NoOverlap { pair: Option<(usize, usize)> },

    /// A mask passed to the distance transform has no set pixels.
    #[error("empty region: mask has no set pixels")]
    EmptyRegion,

    #[error("no texture: {0}")]
    NoTexture(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },
}

fn pair_suffix(pair: &Option<(usize, usize)>) -> String {
    match pair {
        Some((a, b)) => format!(" between layout entries {a} and {b}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for errors caused by the filesystem rather than by the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!(
            "{what}: dimension mismatch {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
