//! Small synthetic NLI corpus built from templates. Used for smoke tests,
//! overfitting checks and demo checkpoints when no real corpus is at hand.

use crate::data::NliExample;
use crate::models::Label;
use crate::nn::SeededRng;

const SUBJECTS: &[&str] = &["user", "data subject", "customer", "member", "visitor", "child", "parent", "employee"];
const VERBS: &[&str] = &["withdraw", "delete", "access", "correct", "export", "share", "sell", "request"];
const OBJECTS: &[&str] = &["consent", "data", "information", "account", "records", "profile", "history", "cookies"];
const TAILS: &[&str] = &["at any time", "without delay", "free of charge", "on request", "by email", "online"];

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

/// `n` examples with labels cycling contradiction, neutral, entailment.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<NliExample> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let label = Label::from_index(i % 3).unwrap();
            let subj = pick(&mut rng, SUBJECTS);
            let verb = pick(&mut rng, VERBS);
            let obj = pick(&mut rng, OBJECTS);
            let tail = pick(&mut rng, TAILS);
            let premise = format!("The {subj} shall have the right to {verb} the {obj} {tail}.");
            let hypothesis = match label {
                Label::Entailment => match rng.below(2) {
                    0 => format!("The {subj} can {verb} the {obj}."),
                    _ => format!("The {subj} may {verb} the {obj} {tail}."),
                },
                Label::Contradiction => match rng.below(3) {
                    0 => format!("The {subj} cannot {verb} the {obj}."),
                    1 => format!("The {subj} has no right to {verb} the {obj}."),
                    _ => format!("The {subj} is never allowed to {verb} the {obj}."),
                },
                Label::Neutral => {
                    let mut other = pick(&mut rng, VERBS);
                    while other == verb {
                        other = pick(&mut rng, VERBS);
                    }
                    let mut thing = pick(&mut rng, OBJECTS);
                    while thing == obj {
                        thing = pick(&mut rng, OBJECTS);
                    }
                    format!("The {subj} can {other} the {thing}.")
                }
            };
            NliExample::new(&premise, &hypothesis, label, Some("toy".into()))
        })
        .collect()
}
