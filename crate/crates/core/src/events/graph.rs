use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// The single relation type linking adjacent events.
pub const TEMPORAL_NEXT: &str = "temporal-next";

/// Counted `(head, next, tail)` triples over a corpus of event plans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventGraph {
    triples: BTreeMap<(String, String), u64>,
}

impl EventGraph {
    pub fn count(&self, head: &str, tail: &str) -> u64 {
        self.triples
            .get(&(head.into(), tail.into()))
            .copied()
            .unwrap_or(0)
    }

    /// Number of distinct triples.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.triples.values().sum()
    }

    /// `(head, relation, tail, count)` in key order.
    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str, u64)> {
        self.triples
            .iter()
            .map(|((h, t), c)| (h.as_str(), TEMPORAL_NEXT, t.as_str(), *c))
    }

    pub fn add_sequence<S: AsRef<str>>(&mut self, surfaces: &[Option<S>]) {
        for pair in surfaces.windows(2) {
            if let (Some(h), Some(t)) = (&pair[0], &pair[1]) {
                *self
                    .triples
                    .entry((h.as_ref().into(), t.as_ref().into()))
                    .or_insert(0) += 1;
            }
        }
    }
}

/// One triple per adjacent pair of non-empty events.
pub fn build_event_graph<S: AsRef<str>>(corpus: &[Vec<Option<S>>]) -> EventGraph {
    let mut g = EventGraph::default();
    for seq in corpus {
        g.add_sequence(seq);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn chain_and_duplicates() {
        let g = build_event_graph(&[vec![Some("a"), Some("b"), Some("c")]]);
        assert_eq!(g.len(), 2);
        assert_eq!(g.count("a", "b"), 1);
        assert_eq!(g.count("b", "c"), 1);

        let g = build_event_graph(&[vec![Some("a"), Some("b")], vec![Some("a"), Some("b")]]);
        assert_eq!(g.len(), 1);
        assert_eq!(g.count("a", "b"), 2);
    }

    #[test]
    fn empty_slot_breaks_adjacency() {
        let g = build_event_graph(&[vec![Some("a"), None, Some("c")]]);
        assert!(g.is_empty());
    }
}
