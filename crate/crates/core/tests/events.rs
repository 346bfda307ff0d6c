use std::collections::BTreeMap;

use proptest::prelude::*;
use storyline_core::events::{
    build_event_graph, extract_sequence, parse_conllu, parse_conllu_documents, parse_serialized,
    serialize_events, DepToken, RoleMap,
};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/events");

fn read(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()
}

fn render(conllu: &str) -> String {
    let roles = RoleMap::default();
    parse_conllu_documents(conllu)
        .unwrap()
        .iter()
        .map(|d| {
            let seq = extract_sequence(&d.sentences, &roles);
            format!("{}\t{}\n", d.story_id, serialize_events(&seq))
        })
        .collect()
}

#[test]
fn lost_dog_story() {
    let docs = parse_conllu_documents(&read("lost_dog.conllu")).unwrap();
    let seq = extract_sequence(&docs[0].sentences, &RoleMap::default());
    let surfaces: Vec<String> = seq.surfaces().into_iter().map(Option::unwrap).collect();
    assert_eq!(
        surfaces.join(" → "),
        "missed dog → notices something → sees dog → turns out be"
    );
    assert_eq!(render(&read("lost_dog.conllu")), read("lost_dog.events.tsv"));
}

#[test]
fn hand_traced_fixture_matches_golden() {
    let text = read("hand_traced.conllu");
    assert_eq!(parse_conllu(&text).unwrap().len(), 20);
    assert_eq!(render(&text), read("hand_traced.events.tsv"));
}

#[test]
fn graph_matches_brute_force_scan() {
    let roles = RoleMap::default();
    let docs = parse_conllu_documents(&read("hand_traced.conllu")).unwrap();
    let corpus: Vec<Vec<Option<String>>> = docs
        .iter()
        .map(|d| extract_sequence(&d.sentences, &roles).surfaces())
        .collect();
    let graph = build_event_graph(&corpus);

    let mut oracle: BTreeMap<(String, String), u64> = BTreeMap::new();
    for seq in &corpus {
        for i in 0..seq.len().saturating_sub(1) {
            if let (Some(h), Some(t)) = (&seq[i], &seq[i + 1]) {
                *oracle.entry((h.clone(), t.clone())).or_default() += 1;
            }
        }
    }
    let got: BTreeMap<(String, String), u64> = graph
        .triples()
        .map(|(h, _, t, c)| ((h.to_string(), t.to_string()), c))
        .collect();
    assert_eq!(got, oracle);
    assert_eq!(graph.total_count(), oracle.values().sum::<u64>());
}

const UPOS: &[&str] = &[
    "VERB", "AUX", "NOUN", "PRON", "ADJ", "ADP", "PART", "ADV", "DET",
];
const DEPRELS: &[&str] = &[
    "nsubj",
    "nsubj:pass",
    "csubj",
    "expl",
    "obj",
    "xcomp",
    "ccomp",
    "attr",
    "acomp",
    "advmod",
    "compound:prt",
    "neg",
    "obl:agent",
    "agent",
    "cop",
    "det",
    "amod",
    "obl",
    "conj",
    "aux",
];

/// Random well-formed trees: token i attaches to some earlier token, then a
/// random token is promoted to root by rotating indices.
fn arb_sentence() -> impl Strategy<Value = Vec<DepToken>> {
    (2usize..12).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<prop::sample::Index>(), n),
            proptest::collection::vec(0..UPOS.len(), n),
            proptest::collection::vec(0..DEPRELS.len(), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(heads, upos, rels, neg)| {
                (0..n)
                    .map(|i| {
                        let head = if i == 0 { 0 } else { heads[i].index(i) + 1 };
                        let lemma = if neg[i] && rels[i] == 9 {
                            "not".to_string()
                        } else {
                            format!("w{}", i + 1)
                        };
                        DepToken {
                            index: i + 1,
                            form: format!("w{}", i + 1),
                            lemma,
                            upos: UPOS[upos[i]].to_string(),
                            head,
                            deprel: if i == 0 {
                                "root".into()
                            } else {
                                DEPRELS[rels[i]].into()
                            },
                        }
                    })
                    .collect()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn surfaces_never_contain_subjects(sentence in arb_sentence()) {
        let roles = RoleMap::default();
        let seq = extract_sequence(std::slice::from_ref(&sentence), &roles);
        prop_assert_eq!(seq.len(), 1);
        if let Some(ev) = &seq.slots[0] {
            let positions = ev.positions();
            prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
            for p in positions {
                let deprel = &sentence[p - 1].deprel;
                prop_assert!(!roles.is_excluded(deprel), "{} in {:?}", deprel, ev);
            }
            for word in ev.surface.split(' ') {
                for t in sentence.iter().filter(|t| roles.is_excluded(&t.deprel)) {
                    prop_assert_ne!(word, t.form.as_str());
                }
            }
        }
    }

    #[test]
    fn length_and_round_trip(story in proptest::collection::vec(arb_sentence(), 0..6)) {
        let seq = extract_sequence(&story, &RoleMap::default());
        prop_assert_eq!(seq.len(), story.len());
        let back = parse_serialized(&serialize_events(&seq)).unwrap();
        prop_assert_eq!(back, seq.surfaces());
    }
}
