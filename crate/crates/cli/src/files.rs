use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use satrace::aes::Block128;

/// Runs `fill` against a temporary file in the destination directory and
/// renames the result onto `path`.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn write_plaintexts(path: &Path, pts: &[Block128]) -> Result<()> {
    write_atomic(path, |w| {
        for p in pts {
            w.write_all(&p.0)?;
        }
        Ok(())
    })
}

pub fn read_plaintexts(path: &Path) -> Result<Vec<Block128>> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if bytes.len() % 16 != 0 {
        bail!(
            "{}: {} bytes is not a whole number of 16-byte plaintexts",
            path.display(),
            bytes.len()
        );
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| Block128(c.try_into().unwrap()))
        .collect())
}
