//! File formats and the filesystem boundary.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub mod config;
pub mod report;
pub mod tally_file;

pub use config::RunConfig;
pub use tally_file::{parse_tally, parse_tally_str, tally_to_json, TallyFile, TallyMetadata};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Writes through a temporary file in the target directory, then renames it
/// into place so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(contents).map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(read_text(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_file_is_parse_class() {
        let err = read_text(Path::new("/nonexistent/tally.json")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit_code::PARSE);
    }
}
