use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The configuration document does not match the schema.
    #[error("config: {0}")]
    Config(String),
    /// Invalid box, polygon or layer description.
    #[error("geometry: {0}")]
    Geometry(String),
    /// A port violates its placement rules.
    #[error("port {id}: {msg}")]
    Port { id: u32, msg: String },
    /// The raster cannot resolve the aperture or the eigensolver failed.
    #[error("aperture: {0}")]
    Aperture(String),
    /// A coupling-matrix row lost too much energy to truncation.
    #[error("coupling row {row}: Parseval sum {sum:.5} below {min}")]
    Parseval { row: usize, sum: f64, min: f64 },
    /// A linear solve or network reduction failed.
    #[error("numerical failure{}: {msg}", freq_suffix(.freq_hz))]
    Numerical { freq_hz: Option<f64>, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn freq_suffix(f: &Option<f64>) -> String {
    match f {
        Some(f) => format!(" at {:.6} GHz", f * 1e-9),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical { freq_hz: None, msg: msg.into() }
    }

    /// Attaches a frequency to a numerical error.
    pub fn at_frequency(self, f: f64) -> Self {
        match self {
            Error::Numerical { msg, .. } => Error::Numerical { freq_hz: Some(f), msg },
            other => other,
        }
    }

    /// True for errors caused by the input description rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Geometry(_) | Error::Port { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
