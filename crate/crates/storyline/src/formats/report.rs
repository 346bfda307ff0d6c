use std::fmt::Write as _;

use storyline_core::metrics::MetricReport;

/// Header of the summary table; one row per (model, ablation).
pub const TABLE_COLUMNS: [&str; 12] = [
    "model",
    "PPL",
    "R-1",
    "R-2",
    "R-L",
    "B-1",
    "B-2",
    "LR-2",
    "D-4",
    "IR-agg",
    "coherence",
    "relevance",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub report: MetricReport,
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt)
}

/// One tab-separated row in `TABLE_COLUMNS` order. ROUGE columns hold F1;
/// coherence and relevance come from the first embedding table.
pub fn metrics_row(model: &str, r: &MetricReport) -> String {
    let first = |m: &std::collections::BTreeMap<
        String,
        storyline_core::metrics::EmbeddingScore,
    >| { opt(m.values().next().and_then(|s| s.value)) };
    [
        model.to_string(),
        opt(r.ppl),
        fmt(r.rouge_1.f1),
        fmt(r.rouge_2.f1),
        fmt(r.rouge_l.f1),
        fmt(r.bleu_1),
        fmt(r.bleu_2),
        fmt(r.lr_2),
        fmt(r.d_4),
        fmt(r.intra_repetition_aggregate),
        first(&r.intra_coherence),
        first(&r.intra_relevance),
    ]
    .join("\t")
}

/// Mean intra-story repetition per sentence index (1-based).
pub fn repetition_tsv(r: &MetricReport) -> String {
    let mut s = String::from("index\trepetition\n");
    for (i, v) in r.intra_repetition.iter().enumerate() {
        writeln!(s, "{}\t{}", i + 1, fmt(*v)).unwrap();
    }
    s
}
