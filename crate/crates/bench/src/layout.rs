use std::path::{Path, PathBuf};

pub const DONE: &str = "DONE";
pub const OUT_ENV: &str = "ASPACE_OUT";

/// Output root: the explicit flag, then `ASPACE_OUT`, then the config value.
pub fn output_root(flag: Option<&Path>, config: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config.to_path_buf(),
    }
}

pub fn space_dir(root: &Path, task: &str, space: &str) -> PathBuf {
    root.join(task).join(space)
}

pub fn cell_dir(root: &Path, task: &str, space: &str, seed: u64) -> PathBuf {
    space_dir(root, task, space).join(format!("seed{seed}"))
}

pub fn is_done(dir: &Path) -> bool {
    dir.join(DONE).is_file()
}

pub fn mark_done(dir: &Path) -> std::io::Result<()> {
    std::fs::write(dir.join(DONE), b"")
}

/// Seed directories under a space directory, sorted by seed.
pub fn seed_dirs(space_dir: &Path) -> Vec<(u64, PathBuf)> {
    let mut out: Vec<(u64, PathBuf)> = std::fs::read_dir(space_dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let seed = name.strip_prefix("seed")?.parse().ok()?;
            e.path().is_dir().then(|| (seed, e.path()))
        })
        .collect();
    out.sort();
    out
}

/// Sorted names of the subdirectories of `dir`.
pub fn subdirs(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    out.sort();
    out
}
