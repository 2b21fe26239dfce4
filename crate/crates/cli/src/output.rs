use std::io::Write;
use std::path::Path;

use anyhow::Context;

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory followed by a rename, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .with_context(|| format!("writing {}", target.display()))?;
    tmp.persist(&target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replaces_existing_file_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("nested");
        write_atomic(&sub, "a.txt", b"one").unwrap();
        write_atomic(&sub, "a.txt", b"two").unwrap();
        assert_eq!(std::fs::read(sub.join("a.txt")).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(&sub).unwrap().count(), 1);
    }
}
