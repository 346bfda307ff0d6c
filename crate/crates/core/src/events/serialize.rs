use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::EventSequence;

pub const EVENT_START: &str = "<e_s>";
pub const EVENT_SEP: &str = "<e_sep>";
pub const EVENT_END: &str = "<e_e>";
pub const EVENT_NONE: &str = "<e_none>";

/// `<e_s> a <e_sep> b <e_e>`, with `<e_none>` standing in for empty slots.
pub fn serialize_events(seq: &EventSequence) -> String {
    serialize_surfaces(&seq.surfaces())
}

pub fn serialize_surfaces<S: AsRef<str>>(surfaces: &[Option<S>]) -> String {
    if surfaces.is_empty() {
        return alloc::format!("{EVENT_START} {EVENT_END}");
    }
    let body: Vec<&str> = surfaces
        .iter()
        .map(|s| s.as_ref().map_or(EVENT_NONE, |s| s.as_ref()))
        .collect();
    alloc::format!(
        "{EVENT_START} {} {EVENT_END}",
        body.join(&alloc::format!(" {EVENT_SEP} "))
    )
}

/// Inverse of [`serialize_surfaces`]. Returns `None` when the string is not
/// framed by the start and end markers.
pub fn parse_serialized(text: &str) -> Option<Vec<Option<String>>> {
    let inner = text
        .trim()
        .strip_prefix(EVENT_START)?
        .strip_suffix(EVENT_END)?
        .trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    Some(
        inner
            .split(EVENT_SEP)
            .map(|part| {
                let part = part.trim();
                (part != EVENT_NONE).then(|| part.to_string())
            })
            .collect(),
    )
}
