#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

/// A small tagged corpus from a fixed grammar, with ambiguous words so the
/// lexical tagger makes mistakes.
pub fn toy_corpus(n_sentences: usize, seed: u64) -> String {
    let det = [("the", "AT"), ("a", "AT"), ("this", "DT"), ("that", "CS")];
    let adj = [("big", "JJ"), ("old", "JJ"), ("red", "JJ"), ("fast", "RB")];
    let noun = [
        ("dog", "NN"),
        ("cat", "NN"),
        ("run", "NN"),
        ("can", "NN"),
        ("meeting", "NN"),
        ("Congress", "NP-TL"),
        ("garçon", "FW-NN"),
        ("community", "NN"),
    ];
    let verb = [
        ("run", "VB"),
        ("can", "MD"),
        ("sees", "VBZ"),
        ("likes", "VBZ"),
        ("saw", "VBD"),
        ("meeting", "VBG"),
        ("it's", "PPS+BEZ"),
    ];
    let mut rng = cptag::rng::stream(seed);
    let mut out = String::new();
    for _ in 0..n_sentences {
        let mut toks: Vec<(&str, &str)> = Vec::new();
        toks.push(*det.choose(&mut rng).unwrap());
        if rng.random_bool(0.5) {
            toks.push(*adj.choose(&mut rng).unwrap());
        }
        toks.push(*noun.choose(&mut rng).unwrap());
        toks.push(*verb.choose(&mut rng).unwrap());
        if rng.random_bool(0.7) {
            toks.push(*det.choose(&mut rng).unwrap());
            toks.push(*noun.choose(&mut rng).unwrap());
        }
        toks.push((".", "."));
        let line: Vec<String> = toks.iter().map(|(w, t)| format!("{w}/{t}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
