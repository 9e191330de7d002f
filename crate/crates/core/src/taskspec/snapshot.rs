//! Repository snapshots: directory trees or tar archives, content-addressed by digest.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

/// File contents keyed by repo-relative, `/`-separated path.
pub type FileTree = BTreeMap<String, Vec<u8>>;

/// `sha256:` of a `sha256sum`-style listing (`<hex>  <path>\n` per file, sorted by path bytes).
pub fn tree_digest(files: &FileTree) -> String {
    let mut listing = Sha256::new();
    for (path, bytes) in files {
        listing.update(hex::encode(Sha256::digest(bytes)).as_bytes());
        listing.update(b"  ");
        listing.update(path.as_bytes());
        listing.update(b"\n");
    }
    format!("sha256:{}", hex::encode(listing.finalize()))
}

/// Regular files under `root` (symlinks skipped).
pub fn read_dir_tree(root: &Path) -> io::Result<FileTree> {
    if !root.is_dir() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} is not a directory", root.display())));
    }
    let mut out = FileTree::new();
    for entry in walkdir::WalkDir::new(root).follow_links(false) {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).map_err(io::Error::other)?;
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        out.insert(rel.join("/"), std::fs::read(entry.path())?);
    }
    Ok(out)
}

/// Regular-file members of a tar archive; a single leading `./` is dropped.
pub fn read_tar_tree(archive: &Path) -> io::Result<FileTree> {
    let mut ar = tar::Archive::new(std::fs::File::open(archive)?);
    let mut out = FileTree::new();
    for entry in ar.entries()? {
        let mut entry = entry?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let path = entry.path()?.to_string_lossy().into_owned();
        let path = path.strip_prefix("./").unwrap_or(&path).to_string();
        if crate::assertlang::clean_rel_path(&path).is_none() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unsafe archive member {path}")));
        }
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes)?;
        out.insert(path, bytes);
    }
    Ok(out)
}

/// Directory or `.tar` archive, by extension.
pub fn read_snapshot(path: &Path) -> io::Result<FileTree> {
    if path.extension().is_some_and(|e| e == "tar") {
        read_tar_tree(path)
    } else {
        read_dir_tree(path)
    }
}

/// Write a reproducible tar archive (zeroed mtimes and owners) plus a `<archive>.sha256` sidecar
/// holding the tree digest. Returns the digest.
pub fn write_tar_snapshot(files: &FileTree, archive: &Path) -> io::Result<String> {
    let mut builder = tar::Builder::new(std::fs::File::create(archive)?);
    for (path, bytes) in files {
        let mut header = tar::Header::new_gnu();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, path, bytes.as_slice())?;
    }
    builder.into_inner()?.sync_all()?;
    let digest = tree_digest(files);
    std::fs::write(sidecar_path(archive), format!("{digest}\n"))?;
    Ok(digest)
}

pub fn sidecar_path(archive: &Path) -> std::path::PathBuf {
    let mut name = archive.as_os_str().to_owned();
    name.push(".sha256");
    name.into()
}

/// Materialize a tree under `root`, creating parent directories.
pub fn write_tree(files: &FileTree, root: &Path) -> io::Result<()> {
    for (rel, bytes) in files {
        let target = root.join(rel);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(target, bytes)?;
    }
    Ok(())
}

/// Line count: newline bytes, plus one for a non-empty unterminated last line.
pub fn line_count(bytes: &[u8]) -> usize {
    let n = bytes.iter().filter(|b| **b == b'\n').count();
    n + usize::from(!bytes.is_empty() && !bytes.ends_with(b"\n"))
}
