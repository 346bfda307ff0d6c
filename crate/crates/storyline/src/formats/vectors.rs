//! Word vectors (`word f1 … fd` per line, optional `count dim` header) and
//! sentence embeddings (header `story_id<TAB>index<TAB>dim`, then
//! `story_id<TAB>index<TAB>f1 … fd` per sentence; index 0 is the leading
//! context). The header's third field may be the literal `dim` or the
//! dimension itself.

use std::fmt::Write as _;
use std::path::Path;

use storyline_core::corpus::EmbeddingTable;

use crate::error::{self, Error, Result};

fn floats(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("`{f}` is not a finite number")))
        })
        .collect()
}

pub fn read_word_vectors(path: &Path) -> Result<EmbeddingTable> {
    let text = error::read_to_string(path)?;
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::parse(
                path,
                i + 1,
                "expected a word and at least one value",
            ));
        }
        let v = floats(path, i + 1, &fields[1..])?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(v.len()));
        if v.len() != t.dim() {
            return Err(Error::parse(
                path,
                i + 1,
                format!("{} values, expected {}", v.len(), t.dim()),
            ));
        }
        t.insert_word(fields[0], v)?;
    }
    table.ok_or_else(|| Error::format(path, "no vectors"))
}

pub fn read_sentence_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = error::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let h: Vec<&str> = header.split('\t').map(str::trim).collect();
    if h.len() != 3 || h[0] != "story_id" || h[1] != "index" {
        return Err(Error::parse(
            path,
            1,
            "header must be `story_id<TAB>index<TAB>dim`",
        ));
    }
    let mut dim: Option<usize> = if h[2] == "dim" {
        None
    } else {
        Some(
            h[2].parse()
                .map_err(|_| Error::parse(path, 1, "bad dimension in header"))?,
        )
    };
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in lines {
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(idx), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                path,
                i + 1,
                "expected story_id, index and values",
            ));
        };
        let index: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad sentence index `{idx}`")))?;
        let v = floats(path, i + 1, &rest.split_whitespace().collect::<Vec<_>>())?;
        let want = *dim.get_or_insert(v.len());
        if v.len() != want || want == 0 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("{} values, expected {want}", v.len()),
            ));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(want));
        if t.sentence(id, index).is_some() {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate embedding for {id} sentence {index}"),
            ));
        }
        t.insert_sentence(id, index, v)?;
    }
    table.ok_or_else(|| Error::format(path, "no embeddings"))
}

pub fn write_sentence_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut s = format!("story_id\tindex\t{}\n", table.dim());
    for (id, index, v) in table.sentences() {
        let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        writeln!(s, "{id}\t{index}\t{}", vals.join(" ")).unwrap();
    }
    error::write(path, s)
}
