use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Writes through a temp file in the destination directory, then renames.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> normkit::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a A,
}

/// `<out>.manifest.json` echoing the fully resolved arguments.
pub fn write_manifest<A: Serialize>(out: &Path, command: &str, args: &A) -> Result<()> {
    write_json(
        &manifest_path(out),
        &Manifest {
            tool: "normkit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args,
        },
    )
}

/// The `args` object of a manifest next to `path`, if there is one.
pub fn read_manifest_args(path: &Path) -> Result<Option<serde_json::Value>> {
    let m = manifest_path(path);
    if !m.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&m).with_context(|| format!("reading {}", m.display()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", m.display()))?;
    Ok(v.get("args").cloned())
}
