use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no supervised nodes")]
    NoSupervisedNodes,

    #[error("scene {scene}: track {track}: {message}")]
    SceneValidation {
        scene: String,
        track: String,
        message: String,
    },

    #[error("scene {scene}: {message}")]
    Scene { scene: String, message: String },

    #[error("degenerate scene {0}: fewer than 2 tracks")]
    DegenerateScene(String),

    #[error("no ground intersection")]
    NoGroundIntersection,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}, seed {seed}")]
    Diverged { epoch: usize, seed: u64 },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
