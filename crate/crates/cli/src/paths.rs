//! Path checks run before any work starts.

use std::path::{Path, PathBuf};

use anyhow::Result;

use crate::usage;

fn non_empty(p: &Path) -> Result<()> {
    if p.as_os_str().is_empty() {
        return Err(usage("empty path"));
    }
    Ok(())
}

/// An existing, readable regular file.
pub fn input_file(p: &Path) -> Result<PathBuf> {
    non_empty(p)?;
    let meta = std::fs::metadata(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
    if !meta.is_file() {
        return Err(usage(format!("cannot read {}: not a regular file", p.display())));
    }
    Ok(p.to_path_buf())
}

pub fn input_dir(p: &Path) -> Result<PathBuf> {
    non_empty(p)?;
    let meta = std::fs::metadata(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
    if !meta.is_dir() {
        return Err(usage(format!("{} is not a directory", p.display())));
    }
    Ok(p.to_path_buf())
}

/// A file path whose parent exists or can be created, which is not a
/// directory and is none of `inputs`.
pub fn output_file(p: &Path, inputs: &[&Path]) -> Result<PathBuf> {
    non_empty(p)?;
    if p.is_dir() {
        return Err(usage(format!("{} is a directory", p.display())));
    }
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    for input in inputs {
        if same_file(p, input) {
            return Err(usage(format!("output {} would overwrite an input", p.display())));
        }
    }
    Ok(p.to_path_buf())
}

/// A directory that exists after the call.
pub fn output_dir(p: &Path) -> Result<PathBuf> {
    non_empty(p)?;
    if p.exists() && !p.is_dir() {
        return Err(usage(format!("{} exists and is not a directory", p.display())));
    }
    std::fs::create_dir_all(p).map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?;
    Ok(p.to_path_buf())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))
}
