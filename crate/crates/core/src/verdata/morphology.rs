use super::VerdataError;

/// Irregular and consonant-doubling verbs: (lemma, past, past participle).
const EXCEPTIONS: &[(&str, &str, &str)] = &[
    ("abet", "abetted", "abetted"),
    ("abhor", "abhorred", "abhorred"),
    ("acquit", "acquitted", "acquitted"),
    ("admit", "admitted", "admitted"),
    ("allot", "allotted", "allotted"),
    ("aver", "averred", "averred"),
    ("ban", "banned", "banned"),
    ("bar", "barred", "barred"),
    ("beg", "begged", "begged"),
    ("begin", "began", "begun"),
    ("bet", "bet", "bet"),
    ("bid", "bid", "bid"),
    ("bleed", "bled", "bled"),
    ("blog", "blogged", "blogged"),
    ("brag", "bragged", "bragged"),
    ("bring", "brought", "brought"),
    ("broadcast", "broadcast", "broadcast"),
    ("buy", "bought", "bought"),
    ("cast", "cast", "cast"),
    ("catch", "caught", "caught"),
    ("chat", "chatted", "chatted"),
    ("choose", "chose", "chosen"),
    ("come", "came", "come"),
    ("commit", "committed", "committed"),
    ("compel", "compelled", "compelled"),
    ("concur", "concurred", "concurred"),
    ("confer", "conferred", "conferred"),
    ("control", "controlled", "controlled"),
    ("defer", "deferred", "deferred"),
    ("deter", "deterred", "deterred"),
    ("dispel", "dispelled", "dispelled"),
    ("do", "did", "done"),
    ("drive", "drove", "driven"),
    ("emit", "emitted", "emitted"),
    ("equip", "equipped", "equipped"),
    ("expel", "expelled", "expelled"),
    ("feel", "felt", "felt"),
    ("fight", "fought", "fought"),
    ("find", "found", "found"),
    ("forbear", "forbore", "forborne"),
    ("forbid", "forbade", "forbidden"),
    ("forecast", "forecast", "forecast"),
    ("foresee", "foresaw", "foreseen"),
    ("foretell", "foretold", "foretold"),
    ("forget", "forgot", "forgotten"),
    ("forgive", "forgave", "forgiven"),
    ("forsake", "forsook", "forsaken"),
    ("fret", "fretted", "fretted"),
    ("get", "got", "gotten"),
    ("give", "gave", "given"),
    ("go", "went", "gone"),
    ("hang", "hung", "hung"),
    ("have", "had", "had"),
    ("hear", "heard", "heard"),
    ("hold", "held", "held"),
    ("hurt", "hurt", "hurt"),
    ("impel", "impelled", "impelled"),
    ("incur", "incurred", "incurred"),
    ("infer", "inferred", "inferred"),
    ("keep", "kept", "kept"),
    ("know", "knew", "known"),
    ("lead", "led", "led"),
    ("leave", "left", "left"),
    ("let", "let", "let"),
    ("log", "logged", "logged"),
    ("make", "made", "made"),
    ("mean", "meant", "meant"),
    ("mishear", "misheard", "misheard"),
    ("mislead", "misled", "misled"),
    ("misread", "misread", "misread"),
    ("misspeak", "misspoke", "misspoken"),
    ("mistake", "mistook", "mistaken"),
    ("misunderstand", "misunderstood", "misunderstood"),
    ("nag", "nagged", "nagged"),
    ("omit", "omitted", "omitted"),
    ("outwit", "outwitted", "outwitted"),
    ("overhear", "overheard", "overheard"),
    ("panic", "panicked", "panicked"),
    ("patrol", "patrolled", "patrolled"),
    ("pay", "paid", "paid"),
    ("permit", "permitted", "permitted"),
    ("plan", "planned", "planned"),
    ("plot", "plotted", "plotted"),
    ("prefer", "preferred", "preferred"),
    ("prod", "prodded", "prodded"),
    ("program", "programmed", "programmed"),
    ("propel", "propelled", "propelled"),
    ("put", "put", "put"),
    ("quit", "quit", "quit"),
    ("read", "read", "read"),
    ("rebel", "rebelled", "rebelled"),
    ("rebut", "rebutted", "rebutted"),
    ("refer", "referred", "referred"),
    ("regret", "regretted", "regretted"),
    ("repel", "repelled", "repelled"),
    ("rethink", "rethought", "rethought"),
    ("rig", "rigged", "rigged"),
    ("run", "ran", "run"),
    ("say", "said", "said"),
    ("see", "saw", "seen"),
    ("seek", "sought", "sought"),
    ("sell", "sold", "sold"),
    ("send", "sent", "sent"),
    ("set", "set", "set"),
    ("show", "showed", "shown"),
    ("shrink", "shrank", "shrunk"),
    ("shun", "shunned", "shunned"),
    ("sit", "sat", "sat"),
    ("snap", "snapped", "snapped"),
    ("sob", "sobbed", "sobbed"),
    ("speak", "spoke", "spoken"),
    ("spot", "spotted", "spotted"),
    ("spread", "spread", "spread"),
    ("spur", "spurred", "spurred"),
    ("stand", "stood", "stood"),
    ("stop", "stopped", "stopped"),
    ("strive", "strove", "striven"),
    ("stun", "stunned", "stunned"),
    ("submit", "submitted", "submitted"),
    ("swear", "swore", "sworn"),
    ("take", "took", "taken"),
    ("teach", "taught", "taught"),
    ("tell", "told", "told"),
    ("think", "thought", "thought"),
    ("tip", "tipped", "tipped"),
    ("transfer", "transferred", "transferred"),
    ("transmit", "transmitted", "transmitted"),
    ("understand", "understood", "understood"),
    ("undertake", "undertook", "undertaken"),
    ("upset", "upset", "upset"),
    ("vet", "vetted", "vetted"),
    ("weep", "wept", "wept"),
    ("win", "won", "won"),
    ("withhold", "withheld", "withheld"),
    ("write", "wrote", "written"),
];

/// Prefixes that form compounds of irregular bases (foresee, overhear, ...).
const COMPOUND_PREFIXES: &[&str] = &[
    "be", "fore", "for", "mis", "out", "over", "re", "un", "under", "up", "with",
];

fn exception(lemma: &str) -> Option<(&'static str, &'static str, &'static str)> {
    EXCEPTIONS
        .binary_search_by(|(l, _, _)| l.cmp(&lemma))
        .ok()
        .map(|i| EXCEPTIONS[i])
}

fn is_irregular_base(base: &str) -> bool {
    exception(base).is_some_and(|(l, past, _)| *past != regular_past(l))
}

fn regular_past(lemma: &str) -> String {
    if lemma.ends_with('e') {
        return format!("{lemma}d");
    }
    let bytes = lemma.as_bytes();
    if bytes.len() >= 2 && bytes[bytes.len() - 1] == b'y' && !b"aeiou".contains(&bytes[bytes.len() - 2]) {
        return format!("{}ied", &lemma[..lemma.len() - 1]);
    }
    format!("{lemma}ed")
}

/// Inflected forms of one verb.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbForms {
    pub lemma: String,
    pub past: String,
    pub participle: String,
}

/// Past tense and participle of `lemma` from the exception table or the
/// regular rule. A prefixed compound of an irregular base that is missing
/// from the table is an error rather than a guess.
pub fn inflect(lemma: &str) -> Result<VerbForms, VerdataError> {
    if lemma.is_empty() || !lemma.chars().all(|c| c.is_ascii_lowercase() || c == '-') {
        return Err(VerdataError::Morphology {
            lemma: lemma.to_string(),
            reason: "lemma must be lowercase ASCII".into(),
        });
    }
    if let Some((_, past, participle)) = exception(lemma) {
        return Ok(VerbForms {
            lemma: lemma.to_string(),
            past: past.to_string(),
            participle: participle.to_string(),
        });
    }
    for prefix in COMPOUND_PREFIXES {
        if let Some(base) = lemma.strip_prefix(prefix) {
            if is_irregular_base(base) {
                return Err(VerdataError::Morphology {
                    lemma: lemma.to_string(),
                    reason: format!("compound of irregular '{base}' has no listed forms"),
                });
            }
        }
    }
    let past = regular_past(lemma);
    Ok(VerbForms {
        lemma: lemma.to_string(),
        participle: past.clone(),
        past,
    })
}
