use std::fmt::Write as _;
use std::path::Path;

use storyline_core::events::{parse_serialized, EventGraph};

use crate::error::{self, Error, Result};

/// `story_id<TAB>serialised events` per line.
pub fn write_events(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (id, ev) in rows {
        writeln!(s, "{id}\t{ev}").unwrap();
    }
    error::write(path, s)
}

pub fn read_events(path: &Path) -> Result<Vec<(String, Vec<Option<String>>)>> {
    let text = error::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, ev) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected story_id<TAB>events"))?;
        let slots = parse_serialized(ev)
            .ok_or_else(|| Error::parse(path, i + 1, "not a serialised event sequence"))?;
        out.push((id.to_string(), slots));
    }
    Ok(out)
}

/// `head<TAB>relation<TAB>tail<TAB>count`, sorted by head then tail.
pub fn write_graph(path: &Path, graph: &EventGraph) -> Result<()> {
    let mut s = String::new();
    for (h, r, t, c) in graph.triples() {
        writeln!(s, "{h}\t{r}\t{t}\t{c}").unwrap();
    }
    error::write(path, s)
}
