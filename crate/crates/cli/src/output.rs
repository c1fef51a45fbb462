//! Output sinks: `--out` resolution against `$LBS_OUT_DIR` and the final
//! write. Rendering happens entirely in memory first, so a sink receives one
//! complete buffer and partial files never appear on disk after a late error.

use std::path::{Path, PathBuf};

use crate::Failure;

pub(crate) const OUT_DIR_ENV: &str = "LBS_OUT_DIR";

/// Where an `--out` path lands: `-` and absolute paths pass through,
/// relative paths are joined under `base` when one is set.
pub(crate) fn resolve(out: &Path, base: Option<&Path>) -> PathBuf {
    if out == Path::new("-") || out.is_absolute() {
        return out.to_path_buf();
    }
    match base {
        Some(dir) => dir.join(out),
        None => out.to_path_buf(),
    }
}

/// Writes the rendered text to `out` (stdout when `None` or `-`), creating
/// parent directories as needed.
pub(crate) fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    use std::io::Write as _;
    let target = match out {
        None => None,
        Some(p) if p == Path::new("-") => None,
        Some(p) => {
            let base = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
            Some(resolve(p, base.as_deref()))
        }
    };
    let Some(path) = target else {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes())?;
        return stdout.flush().map_err(Failure::from);
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Failure::input(format!("out {}: {e}", path.display())))?;
        }
    }
    std::fs::write(&path, text)
        .map_err(|e| Failure::input(format!("out {}: {e}", path.display())))
}
