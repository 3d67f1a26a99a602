//! Partial copies of shared confidential files.
//!
//! `pcopy <shared_path> <copy_path>`, copies under `/.stbac/`.

use std::collections::BTreeMap;

use crate::world::validate_path;

use super::ListError;

pub const COPY_ROOT: &str = "/.stbac";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialCopyMap {
    entries: BTreeMap<String, String>,
}

impl PartialCopyMap {
    pub fn parse(text: &str) -> Result<PartialCopyMap, ListError> {
        let mut map = PartialCopyMap::default();
        for (idx, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            match words.as_slice() {
                ["pcopy", shared, copy] => map
                    .insert(shared, copy)
                    .map_err(|m| ListError::new(idx + 1, m))?,
                _ => return Err(ListError::new(idx + 1, "expected `pcopy <shared> <copy>`")),
            }
        }
        Ok(map)
    }

    pub fn insert(&mut self, shared: &str, copy: &str) -> Result<(), String> {
        validate_path(shared)?;
        validate_path(copy)?;
        if !copy.starts_with(&format!("{COPY_ROOT}/")) {
            return Err(format!("copy `{copy}` must live under {COPY_ROOT}/"));
        }
        if shared.starts_with(&format!("{COPY_ROOT}/")) {
            return Err(format!("shared path `{shared}` is itself a copy location"));
        }
        if self.entries.contains_key(shared) {
            return Err(format!("`{shared}` is already mapped"));
        }
        if self.entries.values().any(|c| c == copy) {
            return Err(format!("copy `{copy}` is already used"));
        }
        self.entries.insert(shared.to_string(), copy.to_string());
        Ok(())
    }

    pub fn remove(&mut self, shared: &str) -> Option<String> {
        self.entries.remove(shared)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(s, c)| (s.as_str(), c.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_copy(&self, path: &str) -> bool {
        self.entries.values().any(|c| c == path)
    }

    pub fn to_text(&self) -> String {
        self.iter()
            .map(|(s, c)| format!("pcopy {s} {c}\n"))
            .collect()
    }
}

/// The copy path for `path`, if it is a mapped shared file.
pub fn redirect_partial<'a>(map: &'a PartialCopyMap, path: &str) -> Option<&'a str> {
    map.entries.get(path).map(String::as_str)
}
