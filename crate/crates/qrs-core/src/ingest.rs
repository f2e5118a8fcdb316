//! Package ingestion: archive extraction into an isolated workspace and the
//! structural profile used to cold-start the query agent.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("archive not found: {0}")]
    ArchiveNotFound(PathBuf),
    #[error("unsupported archive format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("archive entry '{0}' escapes the workspace")]
    PathEscape(String),
    #[error("workspace not found: {0}")]
    WorkspaceNotFound(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Reject absolute paths and any `..` component, returning the joined path.
pub fn safe_join(root: &Path, relative: &str) -> Result<PathBuf, IngestError> {
    let rel = Path::new(relative);
    if rel.as_os_str().is_empty() {
        return Err(IngestError::PathEscape(relative.to_string()));
    }
    let mut out = root.to_path_buf();
    for component in rel.components() {
        match component {
            Component::Normal(part) => out.push(part),
            Component::CurDir => {}
            _ => return Err(IngestError::PathEscape(relative.to_string())),
        }
    }
    Ok(out)
}

/// Symlink targets are checked lexically against the workspace root after
/// joining them to the link's parent directory.
fn symlink_target_escapes(root: &Path, link_rel: &str, target: &Path) -> bool {
    if target.is_absolute() {
        return true;
    }
    let link_parent = Path::new(link_rel).parent().unwrap_or(Path::new(""));
    let mut depth: i64 = link_parent.components().filter(|c| matches!(c, Component::Normal(_))).count() as i64;
    for component in target.components() {
        match component {
            Component::Normal(_) => depth += 1,
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return true;
                }
            }
            Component::CurDir => {}
            _ => return true,
        }
    }
    let _ = root;
    false
}

enum ArchiveKind {
    TarGz,
    Tar,
    Zip,
}

fn detect_kind(path: &Path) -> Result<ArchiveKind, IngestError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_ascii_lowercase();
    if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        return Ok(ArchiveKind::TarGz);
    }
    if name.ends_with(".tar") {
        return Ok(ArchiveKind::Tar);
    }
    if name.ends_with(".zip") || name.ends_with(".whl") {
        return Ok(ArchiveKind::Zip);
    }
    // Fall back to magic bytes.
    let mut magic = [0u8; 4];
    let mut file = File::open(path)?;
    let n = file.read(&mut magic)?;
    if n >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        return Ok(ArchiveKind::TarGz);
    }
    if n >= 4 && &magic[..4] == b"PK\x03\x04" {
        return Ok(ArchiveKind::Zip);
    }
    Err(IngestError::UnsupportedFormat(path.to_path_buf()))
}

fn extract_tar<R: Read>(reader: R, workspace: &Path) -> Result<(), IngestError> {
    let mut archive = tar::Archive::new(reader);
    for entry in archive.entries().map_err(|e| IngestError::Corrupt(e.to_string()))? {
        let mut entry = entry.map_err(|e| IngestError::Corrupt(e.to_string()))?;
        let rel = entry
            .path()
            .map_err(|e| IngestError::Corrupt(e.to_string()))?
            .to_string_lossy()
            .into_owned();
        let dest = safe_join(workspace, &rel)?;
        let kind = entry.header().entry_type();
        match kind {
            tar::EntryType::Directory => {
                fs::create_dir_all(&dest)?;
            }
            tar::EntryType::Regular | tar::EntryType::Continuous | tar::EntryType::GNUSparse => {
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent)?;
                }
                let mut out = File::create(&dest)?;
                std::io::copy(&mut entry, &mut out)?;
            }
            tar::EntryType::Symlink | tar::EntryType::Link => {
                let target = entry
                    .link_name()
                    .map_err(|e| IngestError::Corrupt(e.to_string()))?
                    .ok_or_else(|| IngestError::Corrupt(format!("link entry '{rel}' has no target")))?;
                if symlink_target_escapes(workspace, &rel, &target) {
                    return Err(IngestError::PathEscape(rel));
                }
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent)?;
                }
                #[cfg(unix)]
                {
                    let _ = std::os::unix::fs::symlink(&target, &dest);
                }
            }
            _ => {
                // Device nodes, fifos and friends have no business in a
                // source package.
                return Err(IngestError::Corrupt(format!("unsupported entry type for '{rel}'")));
            }
        }
    }
    Ok(())
}

fn extract_zip(path: &Path, workspace: &Path) -> Result<(), IngestError> {
    let file = File::open(path)?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| IngestError::Corrupt(e.to_string()))?;
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| IngestError::Corrupt(e.to_string()))?;
        let raw_name = entry.name().to_string();
        let dest = safe_join(workspace, &raw_name)?;
        if entry.is_dir() {
            fs::create_dir_all(&dest)?;
            continue;
        }
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = File::create(&dest)?;
        std::io::copy(&mut entry, &mut out)?;
    }
    Ok(())
}

/// Extract an archived source package into a fresh `pkg/` workspace under
/// `dest_parent`. Entries whose normalized path escapes the workspace are
/// rejected; the scanner must itself refuse zip-slip inputs.
pub fn extract_archive(archive: &Path, dest_parent: &Path) -> Result<PathBuf, IngestError> {
    if !archive.exists() {
        return Err(IngestError::ArchiveNotFound(archive.to_path_buf()));
    }
    let kind = detect_kind(archive)?;
    let workspace = dest_parent.join("pkg");
    if workspace.exists() {
        fs::remove_dir_all(&workspace)?;
    }
    fs::create_dir_all(&workspace)?;
    let result = match kind {
        ArchiveKind::TarGz => {
            let file = File::open(archive)?;
            extract_tar(flate2::read::GzDecoder::new(file), &workspace)
        }
        ArchiveKind::Tar => {
            let file = File::open(archive)?;
            extract_tar(file, &workspace)
        }
        ArchiveKind::Zip => extract_zip(archive, &workspace),
    };
    if let Err(e) = result {
        // Leave no partially extracted tree behind a rejected archive.
        let _ = fs::remove_dir_all(&workspace);
        return Err(e);
    }
    Ok(workspace)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub name: Option<String>,
    pub version: Option<String>,
    pub description: Option<String>,
    pub long_description: Option<String>,
    pub license: Option<String>,
    pub platforms: Option<String>,
    #[serde(default)]
    pub classifiers: Vec<String>,
    pub python_requires: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub lines: u64,
}

/// Structural snapshot of a target package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageProfile {
    pub metadata: ProfileMetadata,
    pub files: Vec<FileEntry>,
    pub total_files: u64,
    pub total_lines: u64,
    pub imports: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PackageProfile {
    /// Both summation invariants, plus import ordering.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.total_files != self.files.len() as u64 {
            return Err(format!("total_files {} != {} files", self.total_files, self.files.len()));
        }
        let sum: u64 = self.files.iter().map(|f| f.lines).sum();
        if self.total_lines != sum {
            return Err(format!("total_lines {} != sum {}", self.total_lines, sum));
        }
        for w in self.files.windows(2) {
            if w[0].path >= w[1].path {
                return Err("files are not sorted by path".into());
            }
        }
        for path in self.files.iter().map(|f| &f.path) {
            if path.starts_with('/') || path.split('/').any(|c| c == "..") {
                return Err(format!("path '{path}' is not workspace-relative"));
            }
        }
        for w in self.imports.windows(2) {
            if w[0] >= w[1] {
                return Err("imports are not sorted and duplicate-free".into());
            }
        }
        Ok(())
    }
}

/// Default source-extension allowlist for line accounting.
pub const DEFAULT_SOURCE_EXTENSIONS: &[&str] = &["py"];

fn count_lines(text: &str) -> u64 {
    text.lines().count() as u64
}

/// Statement-level lexical import scan; semantic resolution is CodeQL's job.
fn scan_imports(text: &str, imports: &mut BTreeSet<String>) {
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("import ") {
            for part in rest.split(',') {
                let module = part.trim().split_whitespace().next().unwrap_or("");
                let top = module.split('.').next().unwrap_or("");
                if !top.is_empty() && top.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    imports.insert(top.to_string());
                }
            }
        } else if let Some(rest) = trimmed.strip_prefix("from ") {
            let module = rest.split_whitespace().next().unwrap_or("");
            let top = module.split('.').next().unwrap_or("");
            if !top.is_empty() && top.chars().all(|c| c.is_alphanumeric() || c == '_') {
                imports.insert(top.to_string());
            }
        }
    }
}

/// RFC 822-style packaging descriptor (PKG-INFO / METADATA).
fn parse_pkg_info(text: &str) -> ProfileMetadata {
    let mut meta = ProfileMetadata::default();
    let mut body = Vec::new();
    let mut in_body = false;
    for line in text.lines() {
        if in_body {
            body.push(line);
            continue;
        }
        if line.trim().is_empty() {
            in_body = true;
            continue;
        }
        let Some((key, value)) = line.split_once(':') else { continue };
        let value = value.trim().to_string();
        if value.is_empty() || value == "UNKNOWN" {
            continue;
        }
        match key.trim() {
            "Name" => meta.name = Some(value),
            "Version" => meta.version = Some(value),
            "Summary" => meta.description = Some(value),
            "License" => meta.license = Some(value),
            "Platform" => meta.platforms = Some(value),
            "Classifier" => meta.classifiers.push(value),
            "Requires-Python" => meta.python_requires = Some(value),
            "Description" => meta.long_description = Some(value),
            _ => {}
        }
    }
    let body_text = body.join("\n").trim().to_string();
    if !body_text.is_empty() && meta.long_description.is_none() {
        meta.long_description = Some(body_text);
    }
    meta
}

fn find_metadata(workspace: &Path) -> ProfileMetadata {
    let mut candidates: Vec<PathBuf> = walkdir::WalkDir::new(workspace)
        .max_depth(3)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            let name = e.file_name().to_string_lossy();
            name == "PKG-INFO" || name == "METADATA"
        })
        .map(|e| e.into_path())
        .collect();
    candidates.sort_by_key(|p| p.components().count());
    for path in candidates {
        if let Ok(text) = fs::read_to_string(&path) {
            let meta = parse_pkg_info(&text);
            if meta.name.is_some() || meta.version.is_some() {
                return meta;
            }
        }
    }
    ProfileMetadata::default()
}

/// Produce the structural profile of an extracted workspace.
///
/// Idempotent: re-running on an unchanged workspace yields an identical
/// profile. Unreadable files are skipped and recorded in `warnings`.
pub fn profile_package(workspace: &Path, extensions: &[&str]) -> Result<PackageProfile, IngestError> {
    if !workspace.is_dir() {
        return Err(IngestError::WorkspaceNotFound(workspace.to_path_buf()));
    }
    let mut files = Vec::new();
    let mut imports = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut total_lines = 0u64;

    for entry in walkdir::WalkDir::new(workspace).follow_links(false).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                warnings.push(format!("skipped unreadable entry: {e}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if !extensions.iter().any(|allowed| allowed.eq_ignore_ascii_case(ext)) {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(workspace)
            .expect("walkdir stays under its root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let text = match fs::read(entry.path()) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => {
                warnings.push(format!("skipped unreadable file '{rel}': {e}"));
                continue;
            }
        };
        let lines = count_lines(&text);
        scan_imports(&text, &mut imports);
        total_lines += lines;
        files.push(FileEntry { path: rel, lines });
    }

    files.sort_by(|a, b| a.path.cmp(&b.path));
    let profile = PackageProfile {
        metadata: find_metadata(workspace),
        total_files: files.len() as u64,
        total_lines,
        files,
        imports: imports.into_iter().collect(),
        warnings,
    };
    debug_assert!(profile.check_invariants().is_ok());
    Ok(profile)
}

/// Persist the profile artifact under the scan's report directory.
pub fn write_profile(profile: &PackageProfile, report_dir: &Path) -> Result<PathBuf, IngestError> {
    fs::create_dir_all(report_dir)?;
    let path = report_dir.join("package_profile.json");
    let json = serde_json::to_string_pretty(profile)
        .map_err(|e| IngestError::Corrupt(format!("profile serialization: {e}")))?;
    fs::write(&path, json)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }

    fn tar_gz_with(entries: &[(&str, &str)]) -> tempfile::NamedTempFile {
        let file = tempfile::Builder::new().suffix(".tar.gz").tempfile().unwrap();
        let gz = flate2::write::GzEncoder::new(file.reopen().unwrap(), flate2::Compression::default());
        let mut builder = tar::Builder::new(gz);
        for (name, content) in entries {
            // Write the name bytes straight into the header: the builder's
            // own path APIs refuse the escape sequences these tests need.
            let mut header = tar::Header::new_gnu();
            header.as_old_mut().name[..name.len()].copy_from_slice(name.as_bytes());
            header.set_size(content.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append(&header, content.as_bytes()).unwrap();
        }
        builder.into_inner().unwrap().finish().unwrap();
        file
    }

    #[test]
    fn extracts_well_formed_tarball() {
        let archive = tar_gz_with(&[
            ("demo/a.py", "import os\n"),
            ("demo/b.py", "x = 1\n"),
            ("demo/c.py", "y = 2\n"),
        ]);
        let dest = tempfile::tempdir().unwrap();
        let ws = extract_archive(archive.path(), dest.path()).unwrap();
        let count = walkdir::WalkDir::new(&ws)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .count();
        assert_eq!(count, 3);
    }

    #[test]
    fn rejects_parent_directory_entries() {
        let archive = tar_gz_with(&[("../evil.py", "import os\n")]);
        let dest = tempfile::tempdir().unwrap();
        let err = extract_archive(archive.path(), dest.path()).unwrap_err();
        assert!(matches!(err, IngestError::PathEscape(_)));
        // Nothing may have been written outside or left behind.
        assert!(!dest.path().join("pkg").exists());
        assert!(!dest.path().parent().unwrap().join("evil.py").exists());
    }

    #[test]
    fn empty_archive_yields_empty_workspace() {
        let archive = tar_gz_with(&[]);
        let dest = tempfile::tempdir().unwrap();
        let ws = extract_archive(archive.path(), dest.path()).unwrap();
        assert!(fs::read_dir(&ws).unwrap().next().is_none());
    }

    #[test]
    fn rejects_zip_slip_entries() {
        let file = tempfile::Builder::new().suffix(".zip").tempfile().unwrap();
        let mut zip = zip::ZipWriter::new(file.reopen().unwrap());
        let options = zip::write::SimpleFileOptions::default();
        zip.start_file("../escape.py", options).unwrap();
        zip.write_all(b"print('hi')\n").unwrap();
        zip.finish().unwrap();
        let dest = tempfile::tempdir().unwrap();
        let err = extract_archive(file.path(), dest.path()).unwrap_err();
        assert!(matches!(err, IngestError::PathEscape(_)));
    }

    #[test]
    fn unsupported_format_is_reported() {
        let file = tempfile::Builder::new().suffix(".rar").tempfile().unwrap();
        fs::write(file.path(), b"not an archive").unwrap();
        let dest = tempfile::tempdir().unwrap();
        let err = extract_archive(file.path(), dest.path()).unwrap_err();
        assert!(matches!(err, IngestError::UnsupportedFormat(_)));
    }

    #[test]
    fn profile_counts_lines_and_imports() {
        let ws = tempfile::tempdir().unwrap();
        write_file(
            ws.path(),
            "m.py",
            "import os\nimport sys, types\nfrom reader import Reader\nx = 1\ny = 2\nz = 3\nq = 4\nw = 5\ne = 6\nr = 7\n",
        );
        let profile = profile_package(ws.path(), DEFAULT_SOURCE_EXTENSIONS).unwrap();
        assert_eq!(profile.files, vec![FileEntry { path: "m.py".into(), lines: 10 }]);
        assert_eq!(profile.total_lines, 10);
        assert_eq!(profile.total_files, 1);
        assert_eq!(profile.imports, vec!["os", "reader", "sys", "types"]);
        profile.check_invariants().unwrap();
    }

    #[test]
    fn empty_workspace_profiles_to_zeroes() {
        let ws = tempfile::tempdir().unwrap();
        let profile = profile_package(ws.path(), DEFAULT_SOURCE_EXTENSIONS).unwrap();
        assert_eq!(profile.total_files, 0);
        assert_eq!(profile.total_lines, 0);
        assert!(profile.imports.is_empty());
    }

    #[test]
    fn profile_is_idempotent() {
        let ws = tempfile::tempdir().unwrap();
        write_file(ws.path(), "pkg/a.py", "import os\n");
        write_file(ws.path(), "pkg/b.py", "import re\nimport os\n");
        write_file(ws.path(), "PKG-INFO", "Name: demo\nVersion: 1.0\nSummary: demo pkg\n");
        let first = profile_package(ws.path(), DEFAULT_SOURCE_EXTENSIONS).unwrap();
        let second = profile_package(ws.path(), DEFAULT_SOURCE_EXTENSIONS).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.metadata.name.as_deref(), Some("demo"));
        assert_eq!(first.metadata.description.as_deref(), Some("demo pkg"));
    }

    #[test]
    fn pkg_info_parses_classifiers_and_body() {
        let meta = parse_pkg_info(
            "Name: PyYAML\nVersion: 5.3\nLicense: MIT\nPlatform: Any\nClassifier: A\nClassifier: B\nRequires-Python: >=2.7\n\nYAML parser body text\n",
        );
        assert_eq!(meta.name.as_deref(), Some("PyYAML"));
        assert_eq!(meta.classifiers, vec!["A", "B"]);
        assert_eq!(meta.python_requires.as_deref(), Some(">=2.7"));
        assert_eq!(meta.long_description.as_deref(), Some("YAML parser body text"));
        assert_eq!(meta.platforms.as_deref(), Some("Any"));
    }

    #[test]
    fn safe_join_refuses_escape_components() {
        let root = Path::new("/ws");
        assert!(safe_join(root, "a/b.py").is_ok());
        assert!(safe_join(root, "./a.py").is_ok());
        assert!(safe_join(root, "../evil").is_err());
        assert!(safe_join(root, "a/../../evil").is_err());
        assert!(safe_join(root, "/abs").is_err());
        assert!(safe_join(root, "").is_err());
    }
}
