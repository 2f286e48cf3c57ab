use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use spa_core::randomfield::FieldSample;

use crate::error::{CliError, CliResult, Context};

/// Write through a sibling temporary file, then rename over `path`.
pub fn write_atomic<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> CliResult<()>,
{
    let name = path
        .file_name()
        .ok_or_else(|| CliError::config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result: CliResult<()> = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.context(path.display())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).context(dir.display())
}

pub fn read_field(path: &Path) -> CliResult<FieldSample> {
    let file = File::open(path).context(path.display())?;
    FieldSample::read_table(BufReader::new(file)).context(path.display())
}

/// Files in `dir` with one of `extensions` (lowercase), sorted by name.
pub fn list_files(dir: &Path, extensions: &[&str]) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).context(dir.display())?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.context(dir.display())?.path();
        let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase());
        if path.is_file() && ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_text(&p, "one\n").unwrap();
        write_text(&p, "two\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        let failed = write_atomic(&p, |_| Err(CliError::numerical("boom")));
        assert!(failed.is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn listing_filters_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.PNG", "a.png", "c.txt"] {
            fs::write(dir.path().join(n), b"").unwrap();
        }
        let got: Vec<String> =
            list_files(dir.path(), &["png"]).unwrap().iter().map(|p| stem(p)).collect();
        assert_eq!(got, ["a", "b"]);
        assert!(list_files(&dir.path().join("missing"), &["png"]).is_err());
    }
}
