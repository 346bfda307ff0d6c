use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DepToken;

/// Which dependency labels fill which event role.
///
/// The trigger is never configured here; it is the sentence's predicate.
/// Labels in `excluded` are never taken into an event, whatever the other
/// sets say.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub modifier: Vec<String>,
    /// `advmod` dependents whose lemma is listed here count as modifiers.
    pub negators: Vec<String>,
    pub agent: Vec<String>,
    pub complement: Vec<String>,
    pub excluded: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for RoleMap {
    fn default() -> Self {
        RoleMap {
            modifier: strings(&["neg", "compound:prt", "prt"]),
            negators: strings(&["not", "n't"]),
            agent: strings(&["agent", "obl:agent"]),
            complement: strings(&["obj", "dobj", "xcomp", "ccomp", "acomp", "attr"]),
            excluded: strings(&[
                "nsubj",
                "nsubj:pass",
                "nsubjpass",
                "csubj",
                "csubj:pass",
                "csubjpass",
                "expl",
            ]),
        }
    }
}

impl RoleMap {
    pub fn is_excluded(&self, deprel: &str) -> bool {
        self.excluded.iter().any(|d| d == deprel)
    }

    fn is_modifier(&self, tok: &DepToken) -> bool {
        self.modifier.contains(&tok.deprel)
            || (tok.base_deprel() == "advmod"
                && self
                    .negators
                    .iter()
                    .any(|n| *n == tok.lemma_lower() || *n == tok.form.to_lowercase()))
    }
}

/// A role filler: its text and its 1-based sentence position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleFiller {
    pub text: String,
    pub position: usize,
}

/// A verb-anchored event: trigger plus optional modifier, agent and
/// complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub trigger: RoleFiller,
    pub modifier: Option<RoleFiller>,
    pub agent: Option<RoleFiller>,
    pub complement: Option<RoleFiller>,
    /// Present role texts joined in ascending sentence position.
    pub surface: String,
}

impl Event {
    fn assemble(
        trigger: RoleFiller,
        modifier: Option<RoleFiller>,
        agent: Option<RoleFiller>,
        complement: Option<RoleFiller>,
    ) -> Self {
        let mut parts: Vec<&RoleFiller> = vec![&trigger];
        parts.extend(modifier.iter());
        parts.extend(agent.iter());
        parts.extend(complement.iter());
        parts.sort_by_key(|r| r.position);
        let surface = parts
            .iter()
            .map(|r| r.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Event {
            trigger,
            modifier,
            agent,
            complement,
            surface,
        }
    }

    /// Sentence positions of every filled role, trigger included.
    pub fn positions(&self) -> Vec<usize> {
        let mut p = vec![self.trigger.position];
        for r in [&self.modifier, &self.agent, &self.complement]
            .into_iter()
            .flatten()
        {
            p.push(r.position);
        }
        p.sort_unstable();
        p
    }
}

/// One event slot per story sentence; `None` where no predicate was found.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventSequence {
    pub slots: Vec<Option<Event>>,
}

impl EventSequence {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn surfaces(&self) -> Vec<Option<String>> {
        self.slots
            .iter()
            .map(|s| s.as_ref().map(|e| e.surface.clone()))
            .collect()
    }
}

fn children(sentence: &[DepToken], head: usize) -> impl Iterator<Item = &DepToken> {
    sentence.iter().filter(move |t| t.head == head)
}

fn is_verbal(tok: &DepToken) -> bool {
    tok.upos == "VERB" || tok.upos == "AUX"
}

/// The dependent of `trigger` closest to it that satisfies `pred`; ties go
/// to the earlier position.
fn nearest<'a>(
    sentence: &'a [DepToken],
    trigger: usize,
    roles: &RoleMap,
    pred: impl Fn(&DepToken) -> bool,
) -> Option<&'a DepToken> {
    children(sentence, trigger)
        .filter(|t| !roles.is_excluded(&t.deprel) && pred(t))
        .min_by_key(|t| (t.index.abs_diff(trigger), t.index))
}

/// Finds the predicate token, and the copula when the root is nominal.
fn find_trigger<'a>(
    sentence: &'a [DepToken],
    roles: &RoleMap,
) -> Option<(&'a DepToken, Option<&'a DepToken>)> {
    let root = sentence.iter().find(|t| t.head == 0)?;
    if root.upos == "VERB" {
        return Some((root, None));
    }
    if let Some(cop) = nearest(sentence, root.index, roles, |t| t.base_deprel() == "cop") {
        return Some((root, Some(cop)));
    }
    if root.upos == "AUX" {
        return Some((root, None));
    }
    // shallowest verb below the root, never entering subject subtrees
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    queue.push_back((root.index, 0));
    let mut best: Option<(usize, usize, &DepToken)> = None;
    while let Some((idx, depth)) = queue.pop_front() {
        for child in children(sentence, idx) {
            if roles.is_excluded(&child.deprel) {
                continue;
            }
            if is_verbal(child) {
                let key = (depth + 1, child.index);
                if best.is_none_or(|(d, i, _)| key < (d, i)) {
                    best = Some((key.0, key.1, child));
                }
            }
            queue.push_back((child.index, depth + 1));
        }
    }
    best.map(|(_, _, t)| (t, None))
}

/// Extracts the event of one sentence, or `None` when it has no predicate.
pub fn extract_event(sentence: &[DepToken], roles: &RoleMap) -> Option<Event> {
    let (trig, copula) = find_trigger(sentence, roles)?;
    let filler = |t: &DepToken, text: String| RoleFiller {
        text,
        position: t.index,
    };
    let (trigger, modifier) = match copula {
        Some(cop) => (
            filler(trig, trig.lemma_lower()),
            Some(filler(cop, cop.lemma_lower())),
        ),
        None => (
            filler(trig, trig.form.to_lowercase()),
            nearest(sentence, trig.index, roles, |t| roles.is_modifier(t))
                .map(|t| filler(t, t.lemma_lower())),
        ),
    };
    let agent = nearest(sentence, trig.index, roles, |t| {
        roles.agent.contains(&t.deprel)
    })
    .map(|t| filler(t, t.lemma_lower()));
    let complement = nearest(sentence, trig.index, roles, |t| {
        roles.complement.contains(&t.deprel)
    })
    .map(|t| filler(t, t.lemma_lower()));
    Some(Event::assemble(trigger, modifier, agent, complement))
}

/// One slot per sentence, in story order.
pub fn extract_sequence(story: &[Vec<DepToken>], roles: &RoleMap) -> EventSequence {
    EventSequence {
        slots: story.iter().map(|s| extract_event(s, roles)).collect(),
    }
}
