use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::morphology::inflect;
use super::VerdataError;
use crate::factmodels::{DepTree, SentenceInput};

/// Placeholder for the embedding verb in frame templates.
const VERB: &str = "<V>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// Sum code: positive 1, negative -1.
    pub fn code(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    fn short(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        })
    }
}

impl FromStr for Polarity {
    type Err = VerdataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" | "pos" => Ok(Polarity::Positive),
            "negative" | "neg" => Ok(Polarity::Negative),
            other => Err(VerdataError::Invalid(format!("unknown polarity '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eventivity {
    Finite,
    ForTo,
    Eventive,
    Stative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voice {
    Active,
    Passive,
}

/// One syntactic context with a fixed token template and dependency skeleton.
///
/// `heads` are CoNLL-style (1-based, 0 for the root) over the positive
/// template; the verb slot is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSpec {
    pub id: &'static str,
    pub key: &'static str,
    pub voice: Voice,
    pub eventivity: Eventivity,
    pub question: &'static str,
    pub template: &'static [&'static str],
    pub heads: &'static [usize],
    pub target_index: usize,
}

const HAPPENED: &str = "did that thing happen?";
const DO: &str = "did that person do that thing?";
const HAVE: &str = "did that person have that thing?";

static FRAMES: [FrameSpec; 9] = [
    FrameSpec {
        id: "NP _ed that S",
        key: "that_s",
        voice: Voice::Active,
        eventivity: Eventivity::Finite,
        question: HAPPENED,
        template: &["Someone", VERB, "that", "a", "particular", "thing", "happened", "."],
        heads: &[2, 0, 7, 6, 6, 7, 2, 2],
        target_index: 6,
    },
    FrameSpec {
        id: "NP was _ed that S",
        key: "was_that_s",
        voice: Voice::Passive,
        eventivity: Eventivity::Finite,
        question: HAPPENED,
        template: &["Someone", "was", VERB, "that", "a", "particular", "thing", "happened", "."],
        heads: &[3, 3, 0, 8, 7, 7, 8, 3, 3],
        target_index: 7,
    },
    FrameSpec {
        id: "NP _ed for NP to VP",
        key: "for_to",
        voice: Voice::Active,
        eventivity: Eventivity::ForTo,
        question: HAPPENED,
        template: &["Someone", VERB, "for", "a", "particular", "thing", "to", "happen", "."],
        heads: &[2, 0, 8, 6, 6, 8, 8, 2, 2],
        target_index: 7,
    },
    FrameSpec {
        id: "NP _ed NP to VP[+ev]",
        key: "np_to_ev",
        voice: Voice::Active,
        eventivity: Eventivity::Eventive,
        question: DO,
        template: &[
            "Someone", VERB, "a", "particular", "person", "to", "do", "a", "particular", "thing", ".",
        ],
        heads: &[2, 0, 5, 5, 2, 7, 2, 10, 10, 7, 2],
        target_index: 6,
    },
    FrameSpec {
        id: "NP _ed NP to VP[-ev]",
        key: "np_to_st",
        voice: Voice::Active,
        eventivity: Eventivity::Stative,
        question: HAVE,
        template: &[
            "Someone", VERB, "a", "particular", "person", "to", "have", "a", "particular", "thing", ".",
        ],
        heads: &[2, 0, 5, 5, 2, 7, 2, 10, 10, 7, 2],
        target_index: 6,
    },
    FrameSpec {
        id: "NP was _ed to VP[+ev]",
        key: "was_to_ev",
        voice: Voice::Passive,
        eventivity: Eventivity::Eventive,
        question: DO,
        template: &["A", "particular", "person", "was", VERB, "to", "do", "a", "particular", "thing", "."],
        heads: &[3, 3, 5, 5, 0, 7, 5, 10, 10, 7, 5],
        target_index: 6,
    },
    FrameSpec {
        id: "NP was _ed to VP[-ev]",
        key: "was_to_st",
        voice: Voice::Passive,
        eventivity: Eventivity::Stative,
        question: HAVE,
        template: &["A", "particular", "person", "was", VERB, "to", "have", "a", "particular", "thing", "."],
        heads: &[3, 3, 5, 5, 0, 7, 5, 10, 10, 7, 5],
        target_index: 6,
    },
    FrameSpec {
        id: "NP _ed to VP[+ev]",
        key: "to_ev",
        voice: Voice::Active,
        eventivity: Eventivity::Eventive,
        question: DO,
        template: &["A", "particular", "person", VERB, "to", "do", "a", "particular", "thing", "."],
        heads: &[3, 3, 4, 0, 6, 4, 9, 9, 6, 4],
        target_index: 5,
    },
    FrameSpec {
        id: "NP _ed to VP[-ev]",
        key: "to_st",
        voice: Voice::Active,
        eventivity: Eventivity::Stative,
        question: HAVE,
        template: &["A", "particular", "person", VERB, "to", "have", "a", "particular", "thing", "."],
        heads: &[3, 3, 4, 0, 6, 4, 9, 9, 6, 4],
        target_index: 5,
    },
];

/// The nine contexts in canonical order.
pub fn enumerate_frames() -> &'static [FrameSpec] {
    &FRAMES
}

/// Looks a frame up by its display id or its short key.
pub fn frame_by_id(id: &str) -> Result<&'static FrameSpec, VerdataError> {
    FRAMES
        .iter()
        .find(|f| f.id == id || f.key == id)
        .ok_or_else(|| VerdataError::Invalid(format!("unknown frame '{id}'")))
}

impl FrameSpec {
    pub fn verb_slot(&self) -> usize {
        self.template.iter().position(|t| *t == VERB).expect("template has a verb slot")
    }

    pub fn embedded_predicate(&self) -> &'static str {
        self.template[self.target_index]
    }

    /// Renders the frame with `verb` already inflected as `form`.
    fn instantiate(&self, verb: &str, form: &str, polarity: Polarity) -> RenderedSentence {
        let slot = self.verb_slot();
        let mut tokens: Vec<String> = self.template.iter().map(|t| t.to_string()).collect();
        tokens[slot] = form.to_string();
        let mut heads = self.heads.to_vec();
        let mut verb_index = slot;
        let mut target_index = self.target_index;
        if polarity == Polarity::Negative {
            // active: V.ed -> did n't V ; passive: was V.en -> was n't V.en
            let (at, inserted): (usize, &[&str]) = match self.voice {
                Voice::Active => (slot, &["did", "n't"]),
                Voice::Passive => (slot, &["n't"]),
            };
            let shift = inserted.len();
            for h in heads.iter_mut() {
                if *h > at {
                    *h += shift;
                }
            }
            verb_index += shift;
            if target_index >= at {
                target_index += shift;
            }
            for (k, tok) in inserted.iter().enumerate() {
                tokens.insert(at + k, tok.to_string());
                heads.insert(at + k, verb_index + 1);
            }
        }
        RenderedSentence {
            id: format!("{verb}-{}-{}", self.key, polarity.short()),
            verb: verb.to_string(),
            frame_id: self.id.to_string(),
            polarity,
            tokens,
            heads,
            verb_index,
            target_index,
            question: self.question.to_string(),
        }
    }

    /// Expected heads and indices for a sentence of this frame, with or
    /// without indefinite substitution.
    pub fn skeleton(&self, polarity: Polarity, substituted: bool) -> RenderedSentence {
        let s = self.instantiate("<verb>", VERB, polarity);
        if substituted {
            substitute_indefinites(&s)
        } else {
            s
        }
    }
}

/// A frame instantiated with one verb at one polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSentence {
    pub id: String,
    pub verb: String,
    pub frame_id: String,
    pub polarity: Polarity,
    pub tokens: Vec<String>,
    /// CoNLL-style heads, 1-based with 0 for the root.
    pub heads: Vec<usize>,
    pub verb_index: usize,
    pub target_index: usize,
    pub question: String,
}

impl RenderedSentence {
    /// Space-separated tokens with clitics split ("did n't").
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Orthographic form with clitics reattached ("didn't").
    pub fn surface(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 && tok != "n't" {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }

    pub fn tree(&self) -> DepTree {
        DepTree::from_conll_heads(&self.heads).expect("frame skeletons are valid trees")
    }

    pub fn to_input(&self) -> SentenceInput {
        SentenceInput::new(self.tokens.clone(), self.tree(), self.target_index)
            .expect("frame skeletons index inside the sentence")
    }
}

/// Renders `verb` (a lemma) into `frame` at the given polarity.
pub fn render_sentence(
    verb: &str,
    frame: &FrameSpec,
    polarity: Polarity,
) -> Result<RenderedSentence, VerdataError> {
    let forms = inflect(verb)?;
    let form = match (frame.voice, polarity) {
        (Voice::Active, Polarity::Positive) => &forms.past,
        (Voice::Active, Polarity::Negative) => &forms.lemma,
        (Voice::Passive, _) => &forms.participle,
    };
    Ok(frame.instantiate(verb, form, polarity))
}

/// Replaces "a particular person/thing" with "someone/something",
/// reattaching dependents and remapping indices.
pub fn substitute_indefinites(s: &RenderedSentence) -> RenderedSentence {
    let n = s.tokens.len();
    // new position of each old token; dropped determiners map to their noun
    let mut keep = vec![true; n];
    let mut replacement: Vec<Option<&str>> = vec![None; n];
    let mut t = 0;
    while t + 2 < n {
        let det = s.tokens[t].as_str();
        if (det == "a" || det == "A") && s.tokens[t + 1] == "particular" {
            let word = match s.tokens[t + 2].as_str() {
                "person" => Some(if det == "A" { "Someone" } else { "someone" }),
                "thing" => Some(if det == "A" { "Something" } else { "something" }),
                _ => None,
            };
            if let Some(word) = word {
                keep[t] = false;
                keep[t + 1] = false;
                replacement[t + 2] = Some(word);
                t += 3;
                continue;
            }
        }
        t += 1;
    }
    let mut new_pos = vec![0usize; n];
    let mut next = 0;
    for i in 0..n {
        if keep[i] {
            new_pos[i] = next;
            next += 1;
        }
    }
    // determiners collapse onto their head noun
    for i in 0..n {
        if !keep[i] {
            new_pos[i] = new_pos[s.heads[i] - 1];
        }
    }
    let mut tokens = Vec::with_capacity(next);
    let mut heads = Vec::with_capacity(next);
    for i in (0..n).filter(|&i| keep[i]) {
        tokens.push(replacement[i].map_or_else(|| s.tokens[i].clone(), str::to_string));
        heads.push(if s.heads[i] == 0 { 0 } else { new_pos[s.heads[i] - 1] + 1 });
    }
    RenderedSentence {
        tokens,
        heads,
        verb_index: new_pos[s.verb_index],
        target_index: new_pos[s.target_index],
        ..s.clone()
    }
}
