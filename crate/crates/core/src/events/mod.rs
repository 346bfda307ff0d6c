//! Event schema, extraction from dependency parses, serialisation and the
//! temporal event graph.

mod conllu;
mod extract;
mod graph;
mod serialize;

pub use conllu::{
    parse_conllu, parse_conllu_documents, parse_sentences, ConlluDocument, ConlluError,
    ConlluSentence, DepToken,
};
pub use extract::{extract_event, extract_sequence, Event, EventSequence, RoleFiller, RoleMap};
pub use graph::{build_event_graph, EventGraph, TEMPORAL_NEXT};
pub use serialize::{
    parse_serialized, serialize_events, serialize_surfaces, EVENT_END, EVENT_NONE, EVENT_SEP,
    EVENT_START,
};
