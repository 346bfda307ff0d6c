use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

/// One raw story: `{"story_id", "sentences": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryLine {
    pub story_id: String,
    pub sentences: Vec<String>,
}

/// One generated story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedLine {
    pub story_id: String,
    pub text: String,
    #[serde(default)]
    pub hit_eos: bool,
    /// Set when the model had never been trained.
    #[serde(default)]
    pub untrained: bool,
}

pub trait HasId {
    fn id(&self) -> &str;
}

impl HasId for StoryLine {
    fn id(&self) -> &str {
        &self.story_id
    }
}

impl HasId for GeneratedLine {
    fn id(&self) -> &str {
        &self.story_id
    }
}

impl HasId for super::RecordLine {
    fn id(&self) -> &str {
        &self.story_id
    }
}

/// Reads JSON lines, skipping blank ones. Duplicate story ids are errors.
pub fn read_jsonl<T: DeserializeOwned + HasId>(path: &Path) -> Result<Vec<T>> {
    let text = error::read_to_string(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: T =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if !seen.insert(item.id().to_string()) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate story_id {}", item.id()),
            ));
        }
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("plain data serialises"));
        s.push('\n');
    }
    error::write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stories_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let items = vec![
            StoryLine {
                story_id: "a".into(),
                sentences: vec!["x.".into(), "y.".into()],
            },
            StoryLine {
                story_id: "b".into(),
                sentences: vec![],
            },
        ];
        write_jsonl(&p, &items).unwrap();
        assert_eq!(read_jsonl::<StoryLine>(&p).unwrap(), items);

        std::fs::write(
            &p,
            "{\"story_id\":\"a\",\"sentences\":[]}\n\n{\"story_id\":\"a\",\"sentences\":[]}\n",
        )
        .unwrap();
        let e = read_jsonl::<StoryLine>(&p).unwrap_err().to_string();
        assert!(e.ends_with(":3: duplicate story_id a"), "{e}");
        std::fs::write(&p, "{\"story_id\":\"a\"}\n").unwrap();
        assert!(matches!(
            read_jsonl::<StoryLine>(&p),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
