use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use crate::assertlang::{clean_rel_path, SourceFiles};
use crate::taskspec::snapshot::{read_dir_tree, tree_digest, write_tree, FileTree};

use super::patch::{Patch, PatchError};

/// A private, writable copy of a repository snapshot.
#[derive(Debug)]
pub struct Workspace {
    dir: tempfile::TempDir,
    pub task_id: String,
    pub snapshot_digest: String,
    pub dirty: bool,
}

impl Workspace {
    /// Copy `files` into a fresh temporary directory.
    pub fn from_files(task_id: &str, files: &FileTree) -> io::Result<Workspace> {
        let dir = tempfile::Builder::new().prefix("refkit-ws-").tempdir()?;
        write_tree(files, dir.path())?;
        Ok(Workspace { dir, task_id: task_id.to_string(), snapshot_digest: tree_digest(files), dirty: false })
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn files(&self) -> io::Result<FileTree> {
        read_dir_tree(self.root())
    }

    pub fn digest(&self) -> io::Result<String> {
        Ok(tree_digest(&self.files()?))
    }

    /// Apply all hunks or none. Stacking patches is allowed.
    pub fn apply_patch(&mut self, patch: &Patch) -> Result<BTreeSet<String>, PatchError> {
        let root = self.root().to_path_buf();
        for f in &patch.files {
            for p in [&f.old_path, &f.new_path].into_iter().flatten() {
                if clean_rel_path(p).is_none() {
                    return Err(PatchError::FileState { file: p.clone(), reason: "path escapes the workspace".into() });
                }
            }
        }
        let io_err = |file: &str, e: io::Error| PatchError::FileState { file: file.to_string(), reason: e.to_string() };
        let plan = patch.plan(|p| {
            let full = root.join(p);
            if full.is_file() {
                std::fs::read(&full).map(Some).map_err(|e| io_err(p, e))
            } else if full.exists() {
                Err(PatchError::FileState { file: p.to_string(), reason: "not a regular file".into() })
            } else {
                Ok(None)
            }
        })?;
        // stage every new content first so a write failure cannot leave a half-applied patch
        let mut staged = Vec::new();
        for (path, content) in &plan {
            if let Some(bytes) = content {
                let target = root.join(path);
                let parent = target.parent().unwrap_or(&root).to_path_buf();
                std::fs::create_dir_all(&parent).map_err(|e| io_err(path, e))?;
                let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| io_err(path, e))?;
                io::Write::write_all(&mut tmp, bytes).map_err(|e| io_err(path, e))?;
                staged.push((tmp, target));
            }
        }
        for (tmp, target) in staged {
            tmp.persist(&target).map_err(|e| io_err(&target.display().to_string(), e.error))?;
        }
        for (path, content) in &plan {
            if content.is_none() {
                let full = root.join(path);
                if full.exists() {
                    std::fs::remove_file(&full).map_err(|e| io_err(path, e))?;
                }
            }
        }
        if !patch.is_empty() {
            self.dirty = true;
        }
        Ok(patch.touched_paths())
    }
}

impl SourceFiles for Workspace {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        self.root().read_file(rel)
    }
}
