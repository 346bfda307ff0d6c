//! On-disk formats of every pipeline stage.

mod events;
mod jsonl;
mod records;
mod report;
mod vectors;

pub use events::{read_events, write_events, write_graph};
pub use jsonl::{read_jsonl, write_jsonl, GeneratedLine, HasId, StoryLine};
pub use records::{decode_sim, encode_sim, RecordLine};
pub use report::{metrics_row, repetition_tsv, TableRow, TABLE_COLUMNS};
pub use vectors::{read_sentence_embeddings, read_word_vectors, write_sentence_embeddings};
