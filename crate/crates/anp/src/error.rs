use std::path::PathBuf;

/// Error type for fallible library operations.
///
/// Shape mismatches in tensor arithmetic are programming errors and panic
/// with a message naming the operation and both shapes; everything that
/// depends on external input (files, configs, numerics) goes through here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing parameter `{0}` in parameter store")]
    MissingParam(String),

    #[error("Cholesky factorization failed at jitter {jitter:.1e} (diagonal ratio estimate {cond_estimate:.3e})")]
    Cholesky { jitter: f64, cond_estimate: f64 },

    #[error("non-finite loss at iteration {iteration} (train_loss={loss}, recon={recon}, kl={kl})")]
    NonFiniteLoss {
        iteration: u64,
        loss: f64,
        recon: f64,
        kl: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated IDX file at byte offset {offset}")]
    IdxTruncated { path: PathBuf, offset: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("episode spec requests up to {requested} points but the image has only {available} pixels")]
    SpecExceedsPixels { requested: usize, available: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
