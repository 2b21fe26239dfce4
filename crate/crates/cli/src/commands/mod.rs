pub mod eval;
pub mod gradcheck;
pub mod predict;
pub mod preprocess;
pub mod stats;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::anyhow;

/// Command-line path if given, else the config value.
pub(crate) fn pick<'a>(flag: &'a Option<PathBuf>, config: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    flag.as_deref()
        .or(config.as_deref())
        .ok_or_else(|| anyhow!("no {what} given (flag or config)"))
}
