use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

/// One word line of a CoNLL-U sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Governor position; 0 marks the root.
    pub head: usize,
    pub deprel: String,
}

impl DepToken {
    /// Lowercased lemma, falling back to the form when the lemma is blank.
    pub fn lemma_lower(&self) -> String {
        if self.lemma.is_empty() || self.lemma == "_" {
            self.form.to_lowercase()
        } else {
            self.lemma.to_lowercase()
        }
    }

    /// Deprel without a language-specific subtype.
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConlluError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: head {head} out of range for a {len}-token sentence")]
    HeadOutOfRange {
        line: usize,
        head: usize,
        len: usize,
    },
    #[error("sentence ending at line {line}: expected exactly one root, found {count}")]
    RootCount { line: usize, count: usize },
    #[error("line {line}: first sentence of a story has no `# story_id` comment")]
    MissingStoryId { line: usize },
}

/// A parsed sentence plus the metadata comments that precede it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConlluSentence {
    pub story_id: Option<String>,
    pub tokens: Vec<DepToken>,
}

/// All sentences of one story, grouped by the `# story_id = ...` comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluDocument {
    pub story_id: String,
    pub sentences: Vec<Vec<DepToken>>,
}

/// Parses CoNLL-U text into token lists, one per sentence.
pub fn parse_conllu(text: &str) -> Result<Vec<Vec<DepToken>>, ConlluError> {
    Ok(parse_sentences(text)?
        .into_iter()
        .map(|s| s.tokens)
        .collect())
}

/// Parses CoNLL-U text into stories. A sentence carrying a `story_id`
/// comment starts a new story; every following sentence belongs to it.
pub fn parse_conllu_documents(text: &str) -> Result<Vec<ConlluDocument>, ConlluError> {
    let mut docs: Vec<ConlluDocument> = Vec::new();
    for (line, sentence) in parse_sentences_with_lines(text)? {
        match sentence.story_id {
            Some(id) => docs.push(ConlluDocument {
                story_id: id,
                sentences: alloc::vec![sentence.tokens],
            }),
            None => match docs.last_mut() {
                Some(doc) => doc.sentences.push(sentence.tokens),
                None => return Err(ConlluError::MissingStoryId { line }),
            },
        }
    }
    Ok(docs)
}

pub fn parse_sentences(text: &str) -> Result<Vec<ConlluSentence>, ConlluError> {
    Ok(parse_sentences_with_lines(text)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

fn parse_sentences_with_lines(text: &str) -> Result<Vec<(usize, ConlluSentence)>, ConlluError> {
    let mut out = Vec::new();
    let mut current = ConlluSentence::default();
    let mut start_line = 0;
    let mut token_lines: Vec<usize> = Vec::new();
    let mut saw_anything = false;

    let finish = |current: &mut ConlluSentence,
                  token_lines: &mut Vec<usize>,
                  start_line: usize,
                  end_line: usize,
                  out: &mut Vec<(usize, ConlluSentence)>|
     -> Result<(), ConlluError> {
        let sentence = core::mem::take(current);
        let lines = core::mem::take(token_lines);
        if sentence.tokens.is_empty() {
            return Ok(());
        }
        validate(&sentence.tokens, &lines, end_line)?;
        out.push((start_line, sentence));
        Ok(())
    };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(
                &mut current,
                &mut token_lines,
                start_line,
                line_no,
                &mut out,
            )?;
            saw_anything = false;
            continue;
        }
        if !saw_anything {
            start_line = line_no;
            saw_anything = true;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "story_id" {
                    current.story_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::Malformed {
                line: line_no,
                msg: alloc::format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        // multiword ranges (3-4) and empty nodes (5.1) carry no basic tree
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = parse_num(cols[0], line_no, "ID")?;
        let head: usize = parse_num(cols[6], line_no, "HEAD")?;
        if index != current.tokens.len() + 1 {
            return Err(ConlluError::Malformed {
                line: line_no,
                msg: alloc::format!(
                    "token id {index} out of sequence (expected {})",
                    current.tokens.len() + 1
                ),
            });
        }
        if head == index {
            return Err(ConlluError::Malformed {
                line: line_no,
                msg: alloc::format!("token {index} is its own head"),
            });
        }
        current.tokens.push(DepToken {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
        token_lines.push(line_no);
    }
    finish(
        &mut current,
        &mut token_lines,
        start_line,
        last_line,
        &mut out,
    )?;
    Ok(out)
}

fn parse_num(field: &str, line: usize, name: &str) -> Result<usize, ConlluError> {
    field.parse().map_err(|_| ConlluError::Malformed {
        line,
        msg: alloc::format!("{name} column `{field}` is not an integer"),
    })
}

fn validate(tokens: &[DepToken], lines: &[usize], end_line: usize) -> Result<(), ConlluError> {
    let len = tokens.len();
    for (t, &line) in tokens.iter().zip(lines) {
        if t.head > len {
            return Err(ConlluError::HeadOutOfRange {
                line,
                head: t.head,
                len,
            });
        }
    }
    let roots = tokens.iter().filter(|t| t.head == 0).count();
    if roots != 1 {
        return Err(ConlluError::RootCount {
            line: end_line,
            count: roots,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOG: &str = "# story_id = s1\n\
# text = He missed his dog .\n\
1\tHe\the\tPRON\tPRP\t_\t2\tnsubj\t_\t_\n\
2\tmissed\tmiss\tVERB\tVBD\t_\t0\troot\t_\t_\n\
3\this\the\tPRON\tPRP$\t_\t4\tnmod:poss\t_\t_\n\
4\tdog\tdog\tNOUN\tNN\t_\t2\tobj\t_\t_\n\
5\t.\t.\tPUNCT\t.\t_\t2\tpunct\t_\t_\n";

    #[test]
    fn empty_input_has_no_sentences() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_sentence_fixture() {
        let s = parse_conllu(DOG).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 5);
        assert_eq!(s[0][1].form, "missed");
        assert_eq!(s[0][1].head, 0);
        assert_eq!(s[0][3].deprel, "obj");
        assert_eq!(s[0][3].head, 2);
    }

    #[test]
    fn nine_columns_is_an_error_naming_the_line() {
        let bad = "1\tHe\the\tPRON\tPRP\t_\t0\troot\t_\n";
        let err = parse_conllu(bad).unwrap_err();
        assert!(
            matches!(err, ConlluError::Malformed { line: 1, .. }),
            "{err:?}"
        );
        assert!(alloc::format!("{err}").starts_with("line 1:"));
    }

    #[test]
    fn head_out_of_range() {
        let bad =
            "1\tGo\tgo\tVERB\tVB\t_\t0\troot\t_\t_\n2\tnow\tnow\tADV\tRB\t_\t7\tadvmod\t_\t_\n";
        assert_eq!(
            parse_conllu(bad).unwrap_err(),
            ConlluError::HeadOutOfRange {
                line: 2,
                head: 7,
                len: 2
            }
        );
    }

    #[test]
    fn multiword_and_empty_nodes_are_skipped() {
        let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\tdo\tAUX\t_\t_\t3\taux\t_\t_\n\
2\tn't\tnot\tPART\t_\t_\t3\tadvmod\t_\t_\n\
2.1\tgo\tgo\tVERB\t_\t_\t_\t_\t3:conj\t_\n\
3\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        let s = parse_conllu(text).unwrap();
        assert_eq!(s[0].len(), 3);
    }

    #[test]
    fn two_roots_rejected() {
        let bad =
            "1\tGo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n2\tstop\tstop\tVERB\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(bad).unwrap_err(),
            ConlluError::RootCount { count: 2, .. }
        ));
    }

    #[test]
    fn documents_group_by_story_id() {
        let body = DOG.split_once('\n').unwrap().1;
        let text = alloc::format!("{DOG}\n{body}\n# story_id = s2\n{body}");
        let docs = parse_conllu_documents(&text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].story_id, "s1");
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(docs[1].sentences.len(), 1);

        let err = parse_conllu_documents(body).unwrap_err();
        assert_eq!(err, ConlluError::MissingStoryId { line: 1 });
    }
}
