//! Atomic output handling: nothing becomes visible under the requested
//! name until every artifact has been written.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use tempfile::{NamedTempFile, TempDir};

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// A directory built under a temporary name next to its target and moved
/// into place by [`StagedDir::commit`]. Dropping it uncommitted removes it.
pub struct StagedDir {
    tmp: TempDir,
    target: PathBuf,
    replace: bool,
}

impl StagedDir {
    pub fn new(target: &Path, force: bool) -> Result<Self> {
        let replace = match fs::read_dir(target) {
            Ok(mut entries) => {
                if entries.next().is_some() && !force {
                    bail!(
                        "output directory {} exists and is not empty (use --force to replace it)",
                        target.display()
                    );
                }
                true
            }
            Err(_) if target.exists() => {
                bail!("{} exists and is not a directory", target.display())
            }
            Err(_) => false,
        };
        let parent = parent_of(target);
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = tempfile::Builder::new()
            .prefix(".windcorr-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(StagedDir {
            tmp,
            target: target.to_path_buf(),
            replace,
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.replace {
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing {}", self.target.display()))?;
        }
        let staged = self.tmp.keep();
        fs::rename(&staged, &self.target)
            .with_context(|| format!("moving output into {}", self.target.display()))?;
        Ok(self.target)
    }
}

/// A set of single files persisted together.
#[derive(Default)]
pub struct StagedFiles {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl StagedFiles {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(
        &mut self,
        target: &Path,
        f: impl FnOnce(&mut dyn Write) -> Result<()>,
    ) -> Result<()> {
        let parent = parent_of(target);
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let mut tmp = NamedTempFile::new_in(&parent)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            f(&mut w)?;
            w.flush()?;
        }
        self.files.push((tmp, target.to_path_buf()));
        Ok(())
    }

    /// `(file name, sha256)` of every staged file, in staging order.
    pub fn hashes(&self) -> Result<Vec<(String, String)>> {
        self.files
            .iter()
            .map(|(tmp, target)| {
                let name = target
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((name, sha256_file(tmp.path())?))
            })
            .collect()
    }

    pub fn commit(self) -> Result<()> {
        for (tmp, target) in self.files {
            tmp.persist(&target)
                .with_context(|| format!("writing {}", target.display()))?;
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `dir`, as sorted `/`-separated relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                out.push(
                    rel.components()
                        .map(|c| c.as_os_str().to_string_lossy())
                        .collect::<Vec<_>>()
                        .join("/"),
                );
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_dir_appears_only_on_commit() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        let staged = StagedDir::new(&target, false).unwrap();
        fs::write(staged.path().join("a.txt"), "x").unwrap();
        assert!(!target.exists());
        staged.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "x");
    }

    #[test]
    fn dropped_stage_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        {
            let staged = StagedDir::new(&target, false).unwrap();
            fs::write(staged.path().join("a.txt"), "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn non_empty_target_needs_force() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        fs::create_dir(&target).unwrap();
        fs::write(target.join("old"), "1").unwrap();
        assert!(StagedDir::new(&target, false).is_err());
        let staged = StagedDir::new(&target, true).unwrap();
        fs::write(staged.path().join("new"), "2").unwrap();
        staged.commit().unwrap();
        assert!(!target.join("old").exists() && target.join("new").exists());
    }

    #[test]
    fn listing_is_sorted_and_relative() {
        let root = tempfile::tempdir().unwrap();
        fs::create_dir(root.path().join("b")).unwrap();
        fs::write(root.path().join("b/z"), "").unwrap();
        fs::write(root.path().join("a"), "").unwrap();
        assert_eq!(list_files(root.path()).unwrap(), vec!["a", "b/z"]);
    }

    #[test]
    fn sha256_of_known_bytes() {
        let root = tempfile::tempdir().unwrap();
        let p = root.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
