//! Domain records and corpus ingestion.
//!
//! A corpus manifest is newline-delimited JSON, one app per line. Labelled
//! ground-truth groups arrive as a JSON array. Both loaders are strict about
//! identity (duplicate app ids are rejected) and order-preserving.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BitVector1024, HashKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Play-store style descriptions cap out at 4000 characters; longer input is
/// silently truncated at ingestion.
pub const MAX_DESCRIPTION_CHARS: usize = 4000;

/// Labelled similarity groups never exceed 20 members.
pub const MAX_GROUP_SIZE: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub developer_id: String,
    /// Path to the icon image, or to a precomputed feature-map tensor.
    pub icon_ref: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub permissions: BTreeSet<String>,
    #[serde(default)]
    pub ad_libraries: BTreeSet<String>,
    #[serde(default)]
    pub downloads: Option<u64>,
}

/// One ground-truth group of visually similar apps with a designated base app.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelledGroup {
    pub group_id: String,
    pub base_app_id: String,
    pub member_app_ids: Vec<String>,
}

impl LabelledGroup {
    /// Members minus the base app: the relevant set when the base queries.
    pub fn relevant(&self) -> Vec<&str> {
        self.member_app_ids
            .iter()
            .filter(|m| **m != self.base_app_id)
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelledSet {
    pub groups: Vec<LabelledGroup>,
}

/// Per-app embedding bundle. Any modality may be absent; the search index
/// records absence per row instead of failing.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    pub app_id: String,
    /// Content embedding (CNN fully-connected activations), default 4096-d.
    pub content: Option<Tensor>,
    /// Projected style embedding, default 4096-d.
    pub style: Option<Tensor>,
    /// Paragraph-vector text embedding, default 100-d.
    pub text: Option<Tensor>,
    /// 1024-bit baseline hashes keyed by kind.
    pub hashes: BTreeMap<HashKind, BitVector1024>,
    /// 32x32 grayscale pixels (row-major, 1024 values) for SSIM retrieval.
    pub gray: Option<Tensor>,
}

impl EmbeddingSet {
    pub fn new(app_id: impl Into<String>) -> Self {
        EmbeddingSet { app_id: app_id.into(), ..Default::default() }
    }

    pub fn with_content(mut self, t: Tensor) -> Self {
        self.content = Some(t);
        self
    }

    pub fn with_style(mut self, t: Tensor) -> Self {
        self.style = Some(t);
        self
    }

    pub fn with_text(mut self, t: Tensor) -> Self {
        self.text = Some(t);
        self
    }

    pub fn with_hash(mut self, kind: HashKind, bits: BitVector1024) -> Self {
        self.hashes.insert(kind, bits);
        self
    }

    pub fn with_gray(mut self, t: Tensor) -> Self {
        self.gray = Some(t);
        self
    }

    /// Every present embedding must be finite-valued.
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("content", &self.content), ("style", &self.style), ("text", &self.text)]
        {
            if let Some(t) = t {
                if !t.is_finite() {
                    return Err(Error::Validation(format!(
                        "app {}: {name} embedding contains NaN/Inf",
                        self.app_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Truncate to the description cap, preserving whole characters.
pub fn truncate_description(s: &str) -> String {
    match s.char_indices().nth(MAX_DESCRIPTION_CHARS) {
        Some((byte_idx, _)) => s[..byte_idx].to_string(),
        None => s.to_string(),
    }
}

/// Load a corpus manifest (NDJSON, one record per line, file order kept).
pub fn load_corpus(manifest: impl AsRef<Path>) -> Result<Vec<AppRecord>> {
    let path = manifest.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: AppRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if record.app_id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: "empty app_id".into(),
            });
        }
        if !seen.insert(record.app_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate app_id {:?} at line {}",
                record.app_id,
                idx + 1
            )));
        }
        record.description = truncate_description(&record.description);
        records.push(record);
    }
    Ok(records)
}

/// Load and validate a labelled set (JSON array of groups).
///
/// Unknown app ids are permitted here; they surface later as skipped groups
/// during evaluation.
pub fn load_labelled_set(path: impl AsRef<Path>) -> Result<LabelledSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let groups: Vec<LabelledGroup> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let set = LabelledSet { groups };
    validate_labelled_set(&set)?;
    Ok(set)
}

pub fn validate_labelled_set(set: &LabelledSet) -> Result<()> {
    let mut seen = HashSet::new();
    for g in &set.groups {
        if !seen.insert(&g.group_id) {
            return Err(Error::Validation(format!("duplicate group_id {:?}", g.group_id)));
        }
        let size = g.member_app_ids.len();
        if size < 2 || size > MAX_GROUP_SIZE {
            return Err(Error::Validation(format!(
                "group {:?} has {size} members, want 2..={MAX_GROUP_SIZE}",
                g.group_id
            )));
        }
        if !g.member_app_ids.contains(&g.base_app_id) {
            return Err(Error::Validation(format!(
                "group {:?}: base app {:?} is not a member",
                g.group_id, g.base_app_id
            )));
        }
        let distinct: HashSet<_> = g.member_app_ids.iter().collect();
        if distinct.len() != size {
            return Err(Error::Validation(format!(
                "group {:?} lists duplicate members",
                g.group_id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_lines(&[]);
        assert!(load_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn three_lines_in_order() {
        let f = write_lines(&[
            r#"{"app_id":"a","developer_id":"d1","icon_ref":"a.png"}"#,
            r#"{"app_id":"b","developer_id":"d1","icon_ref":"b.png","downloads":100}"#,
            r#"{"app_id":"c","developer_id":"d2","icon_ref":"c.png","permissions":["android.permission.CAMERA"]}"#,
        ]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus[0].app_id, "a");
        assert_eq!(corpus[1].downloads, Some(100));
        assert_eq!(corpus[2].permissions.len(), 1);
    }

    #[test]
    fn long_description_truncated_to_4000_chars() {
        let desc = "x".repeat(5000);
        let line = format!(
            r#"{{"app_id":"a","developer_id":"d","icon_ref":"a.png","description":"{desc}"}}"#
        );
        let f = write_lines(&[&line]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus[0].description.chars().count(), 4000);
    }

    #[test]
    fn multibyte_truncation_keeps_whole_chars() {
        let s = "é".repeat(4100);
        let out = truncate_description(&s);
        assert_eq!(out.chars().count(), 4000);
    }

    #[test]
    fn duplicate_app_id_rejected() {
        let f = write_lines(&[
            r#"{"app_id":"a","developer_id":"d","icon_ref":"a.png"}"#,
            r#"{"app_id":"a","developer_id":"d","icon_ref":"a.png"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"app_id":"a","developer_id":"d","icon_ref":"a.png"}"#,
            r#"not json"#,
        ]);
        match load_corpus(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn group(id: &str, base: &str, members: &[&str]) -> LabelledGroup {
        LabelledGroup {
            group_id: id.into(),
            base_app_id: base.into(),
            member_app_ids: members.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn valid_group_of_three() {
        let f = tempfile::NamedTempFile::new().unwrap();
        serde_json::to_writer(&f, &[group("g1", "a", &["a", "b", "c"])]).unwrap();
        let set = load_labelled_set(f.path()).unwrap();
        assert_eq!(set.groups.len(), 1);
        assert_eq!(set.groups[0].member_app_ids.len(), 3);
        assert_eq!(set.groups[0].relevant(), vec!["b", "c"]);
    }

    #[test]
    fn group_of_21_rejected() {
        let members: Vec<String> = (0..21).map(|i| format!("m{i}")).collect();
        let refs: Vec<&str> = members.iter().map(String::as_str).collect();
        let set = LabelledSet { groups: vec![group("g", "m0", &refs)] };
        assert!(matches!(validate_labelled_set(&set), Err(Error::Validation(_))));
    }

    #[test]
    fn base_outside_members_rejected() {
        let set = LabelledSet { groups: vec![group("g", "zz", &["a", "b"])] };
        assert!(matches!(validate_labelled_set(&set), Err(Error::Validation(_))));
    }

    #[test]
    fn singleton_group_rejected() {
        let set = LabelledSet { groups: vec![group("g", "a", &["a"])] };
        assert!(validate_labelled_set(&set).is_err());
    }
}
