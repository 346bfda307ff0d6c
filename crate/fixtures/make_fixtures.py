"""Regenerates the toy story and book fixtures.

Each sentence comes from a template together with its dependency tree, so
the CoNLL-U needs no external parser. The expected event of every sentence
is written alongside for cross-checking the extractor.
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent
MALE = ["Tom", "Ben", "Adam", "Jack", "Sam", "Peter", "Mark", "Paul"]
FEMALE = ["Anna", "Lucy", "Emma", "Kate", "Mary", "Alice", "Sarah", "Jane"]
OBJ_VERBS = [("found", "find"), ("bought", "buy"), ("lost", "lose"), ("painted", "paint"),
             ("fixed", "fix"), ("washed", "wash"), ("sold", "sell"), ("cooked", "cook")]
OBJECTS = ["dog", "cat", "bike", "kite", "boat", "cake", "hat", "ball", "lamp", "chair"]
ADJS = ["small", "red", "old", "new", "big", "blue"]
PLACES = ["park", "lake", "shop", "beach", "farm", "school"]
CARRY = [("took", "take"), ("brought", "bring"), ("carried", "carry")]
PRT = [("woke", "wake", "up"), ("gave", "give", "up"), ("sat", "sit", "down"),
       ("ran", "run", "away"), ("came", "come", "back")]
ADVS = ["early", "again", "quickly", "slowly"]
BARE = [("like", "like"), ("want", "want"), ("need", "need"), ("see", "see")]
XCOMP = [("play", "play"), ("swim", "swim"), ("read", "read"), ("sing", "sing")]


def tok(form, lemma, upos, head, deprel):
    return (form, lemma, upos, head, deprel)


def subject(s):
    """Subject tokens (form, upos) for a name such as 'Mr. Brown' or 'She'."""
    parts = s.split(" ")
    if len(parts) == 2:
        return [(parts[0], "PROPN", "compound"), (parts[1], "PROPN", "nsubj")]
    return [(s, "PRON" if s in ("He", "She") else "PROPN", "nsubj")]


def with_subject(subj, rest, root_offset):
    """Prepends subject tokens; `rest` heads are relative to the rest, 0 = root."""
    subj_toks = subject(subj)
    k = len(subj_toks)
    root = k + root_offset
    toks = []
    for i, (form, upos, rel) in enumerate(subj_toks):
        head = root if rel == "nsubj" else k
        toks.append(tok(form, form.lower() if upos == "PRON" else form, upos, head, rel))
    for form, lemma, upos, head, rel in rest:
        toks.append(tok(form, lemma, upos, 0 if head == 0 else head + k, rel))
    return toks


def s_obj_place(rng, subj):
    v, vl = rng.choice(OBJ_VERBS)
    adj, obj, place = rng.choice(ADJS), rng.choice(OBJECTS), rng.choice(PLACES)
    rest = [("%s" % v, vl, "VERB", 0, "root"), ("a", "a", "DET", 4, "det"), (adj, adj, "ADJ", 4, "amod"),
            (obj, obj, "NOUN", 1, "obj"), ("at", "at", "ADP", 7, "case"), ("the", "the", "DET", 7, "det"),
            (place, place, "NOUN", 1, "obl"), (".", ".", "PUNCT", 1, "punct")]
    return with_subject(subj, rest, 1), "%s %s" % (v, obj)


def s_obj(rng, subj):
    v, vl = rng.choice(OBJ_VERBS)
    adj, obj = rng.choice(ADJS), rng.choice(OBJECTS)
    rest = [(v, vl, "VERB", 0, "root"), ("the", "the", "DET", 4, "det"), (adj, adj, "ADJ", 4, "amod"),
            (obj, obj, "NOUN", 1, "obj"), (".", ".", "PUNCT", 1, "punct")]
    return with_subject(subj, rest, 1), "%s %s" % (v, obj)


def s_carry(rng, subj):
    v, vl = rng.choice(CARRY)
    place = rng.choice(PLACES)
    rest = [(v, vl, "VERB", 0, "root"), ("it", "it", "PRON", 1, "obj"), ("to", "to", "ADP", 5, "case"),
            ("the", "the", "DET", 5, "det"), (place, place, "NOUN", 1, "obl"), (".", ".", "PUNCT", 1, "punct")]
    return with_subject(subj, rest, 1), "%s it" % v


def s_neg(rng, subj):
    v, vl = rng.choice(BARE)
    obj = rng.choice(OBJECTS)
    rest = [("did", "do", "AUX", 3, "aux"), ("not", "not", "PART", 3, "advmod"), (v, vl, "VERB", 0, "root"),
            ("the", "the", "DET", 5, "det"), (obj, obj, "NOUN", 3, "obj"), (".", ".", "PUNCT", 3, "punct")]
    return with_subject(subj, rest, 3), "not %s %s" % (v, obj)


def s_prt(rng, subj):
    v, vl, p = rng.choice(PRT)
    adv = rng.choice(ADVS)
    rest = [(v, vl, "VERB", 0, "root"), (p, p, "ADP", 1, "compound:prt"), (adv, adv, "ADV", 1, "advmod"),
            (".", ".", "PUNCT", 1, "punct")]
    return with_subject(subj, rest, 1), "%s %s" % (v, p)


def s_xcomp(rng, subj):
    v, vl = rng.choice(XCOMP)
    place = rng.choice(PLACES)
    rest = [("wanted", "want", "VERB", 0, "root"), ("to", "to", "PART", 3, "mark"), (v, vl, "VERB", 1, "xcomp"),
            ("at", "at", "ADP", 6, "case"), ("the", "the", "DET", 6, "det"), (place, place, "NOUN", 3, "obl"),
            (".", ".", "PUNCT", 1, "punct")]
    return with_subject(subj, rest, 1), "wanted %s" % v


TARGETS = [s_obj, s_carry, s_neg, s_prt, s_xcomp]


def text_of(toks):
    out = ""
    for form, *_ in toks:
        out += form if form == "." or not out else " " + form
    return out


def conllu_sentence(toks, story_id=None):
    lines = []
    if story_id:
        lines.append("# story_id = %s" % story_id)
    lines.append("# text = %s" % " ".join(t[0] for t in toks))
    for i, (form, lemma, upos, head, rel) in enumerate(toks, 1):
        lines.append("\t".join([str(i), form, lemma, upos, "_", "_", str(head), rel, "_", "_"]))
    return "\n".join(lines) + "\n\n"


def story(rng, n_targets):
    male = rng.random() < 0.5
    name = rng.choice(MALE if male else FEMALE)
    pron = "He" if male else "She"
    sents = [s_obj_place(rng, name)]
    for k in range(n_targets):
        subj = name if k == 2 else pron
        sents.append(rng.choice(TARGETS)(rng, subj))
    return sents


def serialize(events):
    return "<e_s> " + " <e_sep> ".join(events) + " <e_e>"


def write_toy(rng):
    stories, conllu, events = [], [], []
    seen = set()
    while len(stories) < 32:
        sents = story(rng, 4)
        key = text_of(sents[0][0])
        if key in seen:
            continue
        seen.add(key)
        sid = "toy%02d" % (len(stories) + 1)
        stories.append({"story_id": sid, "sentences": [text_of(t) for t, _ in sents]})
        for i, (t, _) in enumerate(sents):
            conllu.append(conllu_sentence(t, sid if i == 0 else None))
        events.append("%s\t%s\n" % (sid, serialize([e for _, e in sents])))
    (ROOT / "toy" / "stories.jsonl").write_text("".join(json.dumps(s) + "\n" for s in stories))
    (ROOT / "toy" / "stories.conllu").write_text("".join(conllu))
    (ROOT / "toy" / "events.expected.tsv").write_text("".join(events))
    return stories


def write_vectors(rng, stories, book):
    words = set()
    for s in stories:
        for sent in s["sentences"]:
            words.update(w.strip(".").lower() for w in sent.split())
    words.update(w.strip(".").lower() for w in book.split())
    words.discard("")
    lines = []
    for w in sorted(words):
        lines.append(w + " " + " ".join("%.4f" % rng.uniform(-1, 1) for _ in range(16)))
    (ROOT / "toy" / "word_vectors.txt").write_text("\n".join(lines) + "\n")


def write_book(rng):
    cast = ["Mr. Brown", "Lucy", "Ben", "She", "He"]
    sents = []
    for i in range(60):
        subj = cast[i % len(cast)]
        maker = s_obj_place if i % 7 == 0 else rng.choice(TARGETS)
        sents.append(maker(rng, subj))
    conllu = "".join(conllu_sentence(t, "book" if i == 0 else None) for i, (t, _) in enumerate(sents))
    paragraphs = []
    for p in range(0, 60, 6):
        paragraphs.append(" ".join(text_of(t) for t, _ in sents[p:p + 6]))
    text = "\n\n".join(paragraphs) + "\n"
    (ROOT / "book" / "book.txt").write_text(text)
    (ROOT / "book" / "book.conllu").write_text(conllu)
    (ROOT / "book" / "events.expected.tsv").write_text("book\t%s\n" % serialize([e for _, e in sents]))
    return text


if __name__ == "__main__":
    rng = random.Random(7)
    stories = write_toy(rng)
    book = write_book(rng)
    write_vectors(rng, stories, book)
