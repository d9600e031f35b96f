use thiserror::Error;

/// Errors produced by parsing, geometry and augmentation operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed point cloud: {0}")]
    MalformedCloud(String),

    #[error("malformed label at line {line}: {reason}")]
    MalformedLabel { line: usize, reason: String },

    #[error("calibration key missing: {0}")]
    MissingCalibKey(String),

    #[error("malformed calibration: {0}")]
    MalformedCalib(String),

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("no objects stored for class {0}")]
    EmptyClass(String),

    #[error("angle outside grid extents: theta={theta} rad, phi={phi} rad")]
    OutOfGrid { theta: f64, phi: f64 },

    #[error("degenerate location: horizontal distance from the sensor is zero")]
    DegenerateLocation,

    #[error("too few samples: {n} values cannot fill {bins} bins")]
    TooFewSamples { n: usize, bins: usize },

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid bin edges: {0}")]
    InvalidBinEdges(String),

    #[error("malformed ground-truth database: {0}")]
    MalformedDatabase(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Attaches a frame identifier to an error raised while processing
    /// one frame of a dataset.
    #[error("frame {frame}: {source}")]
    Frame {
        frame: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the frame identifier it occurred in.
    pub fn in_frame(self, frame: impl Into<String>) -> Self {
        Error::Frame {
            frame: frame.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
