//! Exercise-prescription vignettes: the question content served to live
//! participants, and a seeded generator for synthetic packs.
//!
//! A vignette describes a client along six factors (intensity limit, goal,
//! preference, available resources, medical condition, susceptibility to
//! adverse events) and offers two exercise sets. Each set has a key
//! exercise. The correct set's key exercise suits the client on the
//! vignette's decisive concept; the other set's key exercise is better on a
//! second concept, which is what the misleading explanation highlights.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::Concept;
use crate::seeds::rng_for;

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed content pack: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pack needs at least {need} vignettes per concept; {concept} has {got}")]
    TooFew { concept: Concept, need: usize, got: usize },
    #[error("vignette {question_id}: {message}")]
    Invalid { question_id: String, message: String },
    #[error("duplicate question id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionLabel {
    A,
    B,
}

impl OptionLabel {
    pub fn other(self) -> OptionLabel {
        match self {
            OptionLabel::A => OptionLabel::B,
            OptionLabel::B => OptionLabel::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptionLabel::A => "a",
            OptionLabel::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vignette {
    pub question_id: String,
    /// The decisive concept.
    pub concept: Concept,
    pub vignette_text: String,
    pub option_a: Vec<String>,
    pub option_b: Vec<String>,
    pub correct_option: OptionLabel,
    pub explanation_correct: String,
    pub explanation_misleading: String,
    /// The concept the misleading explanation argues from.
    pub misleading_concept: Concept,
}

impl Vignette {
    pub fn option(&self, label: OptionLabel) -> &[String] {
        match label {
            OptionLabel::A => &self.option_a,
            OptionLabel::B => &self.option_b,
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.misleading_concept == self.concept {
            return Err("misleading explanation argues from the decisive concept".into());
        }
        for opt in [&self.option_a, &self.option_b] {
            if opt.is_empty() {
                return Err("empty exercise set".into());
            }
        }
        // An explanation argues for the set whose exercise it names first.
        let argues_for = |text: &str| {
            [OptionLabel::A, OptionLabel::B]
                .into_iter()
                .flat_map(|l| self.option(l).iter().filter_map(move |ex| text.find(ex.as_str()).map(|at| (at, l))))
                .min_by_key(|(at, _)| *at)
                .map(|(_, l)| l)
        };
        if argues_for(&self.explanation_correct) != Some(self.correct_option) {
            return Err("correct explanation does not argue for the correct set".into());
        }
        if argues_for(&self.explanation_misleading) != Some(self.correct_option.other()) {
            return Err("misleading explanation does not argue for the other set".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentPack {
    pub pack_id: String,
    pub vignettes: Vec<Vignette>,
}

impl ContentPack {
    pub fn per_concept(&self) -> BTreeMap<Concept, Vec<&Vignette>> {
        let mut map: BTreeMap<Concept, Vec<&Vignette>> = Concept::ALL.iter().map(|c| (*c, Vec::new())).collect();
        for v in &self.vignettes {
            map.entry(v.concept).or_default().push(v);
        }
        map
    }

    pub fn get(&self, question_id: &str) -> Option<&Vignette> {
        self.vignettes.iter().find(|v| v.question_id == question_id)
    }

    /// Check every vignette and require `min_per_concept` vignettes for each
    /// of the four concepts.
    pub fn validate(&self, min_per_concept: usize) -> Result<(), ContentError> {
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.vignettes {
            if !seen.insert(v.question_id.as_str()) {
                return Err(ContentError::DuplicateId(v.question_id.clone()));
            }
            v.check().map_err(|message| ContentError::Invalid {
                question_id: v.question_id.clone(),
                message,
            })?;
        }
        for (concept, vs) in self.per_concept() {
            if vs.len() < min_per_concept {
                return Err(ContentError::TooFew {
                    concept,
                    need: min_per_concept,
                    got: vs.len(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<ContentPack, ContentError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ContentPack, ContentError> {
        ContentPack::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("content pack serializes");
        s.push('\n');
        s
    }
}

// ── Factor tables ───────────────────────────────────────────────────────

const INTENSITIES: [&str; 3] = ["low", "moderate", "vigorous"];
const GOALS: [&str; 4] = [
    "cardiovascular endurance",
    "muscular strength",
    "flexibility",
    "weight management",
];
const PREFERENCES: [&str; 4] = ["outdoors", "indoors", "in a group", "alone"];
const RESOURCES: [&str; 4] = [
    "a fully equipped gym",
    "a park nearby",
    "a public pool",
    "no equipment at home",
];
const CONDITIONS: [&str; 4] = [
    "knee osteoarthritis",
    "asthma",
    "hypertension",
    "lower back pain",
];

struct Exercise {
    name: &'static str,
    /// Index into `INTENSITIES`.
    intensity: usize,
    /// Index into `GOALS`.
    goal: usize,
    risky: bool,
    /// Index into `CONDITIONS`.
    aggravates: Option<usize>,
}

const fn ex(name: &'static str, intensity: usize, goal: usize, risky: bool, aggravates: Option<usize>) -> Exercise {
    Exercise {
        name,
        intensity,
        goal,
        risky,
        aggravates,
    }
}

const EXERCISES: [Exercise; 20] = [
    ex("brisk walking", 1, 0, false, None),
    ex("jogging", 2, 0, false, Some(0)),
    ex("hill sprints", 2, 0, true, Some(2)),
    ex("stationary cycling", 1, 0, false, None),
    ex("lap swimming", 1, 0, false, None),
    ex("cold-air running", 2, 0, false, Some(1)),
    ex("resistance band rows", 0, 1, false, None),
    ex("bodyweight squats", 1, 1, false, Some(0)),
    ex("heavy deadlifts", 2, 1, true, Some(3)),
    ex("kettlebell swings", 2, 1, true, Some(3)),
    ex("box jumps", 2, 1, true, Some(0)),
    ex("gentle yoga", 0, 2, false, None),
    ex("static stretching", 0, 2, false, None),
    ex("mat pilates", 0, 2, false, None),
    ex("hot yoga", 1, 2, true, Some(2)),
    ex("aqua aerobics", 0, 3, false, None),
    ex("rowing machine intervals", 1, 3, false, Some(3)),
    ex("circuit training", 2, 3, true, Some(2)),
    ex("trail hiking", 1, 3, true, None),
    ex("dance cardio class", 1, 3, false, Some(1)),
];

struct Client {
    age: u32,
    intensity: usize,
    goal: usize,
    preference: usize,
    resources: usize,
    condition: usize,
    susceptible: bool,
}

fn fits(e: &Exercise, c: &Client, concept: Concept) -> bool {
    match concept {
        Concept::Intensity => e.intensity <= c.intensity,
        Concept::Goal => e.goal == c.goal,
        Concept::Safety => !(c.susceptible && e.risky),
        Concept::Condition => e.aggravates != Some(c.condition),
    }
}

/// Sentence arguing that `winner` beats `loser` on `concept`.
fn argue(concept: Concept, winner: &str, loser: &str, c: &Client) -> String {
    match concept {
        Concept::Intensity => format!(
            "{winner} keeps the client within their {} intensity limit, while {loser} pushes past it.",
            INTENSITIES[c.intensity]
        ),
        Concept::Goal => format!(
            "{winner} directly builds {}, the client's goal, which {loser} does little for.",
            GOALS[c.goal]
        ),
        Concept::Safety => format!(
            "{winner} carries a low risk of injury or falls for a client who is {} susceptible to adverse events, unlike {loser}.",
            if c.susceptible { "highly" } else { "somewhat" }
        ),
        Concept::Condition => format!(
            "{winner} is well tolerated with {}, whereas {loser} tends to aggravate it.",
            CONDITIONS[c.condition]
        ),
    }
}

fn sample_client<R: Rng + ?Sized>(rng: &mut R) -> Client {
    Client {
        age: rng.random_range(22..=74),
        intensity: rng.random_range(0..INTENSITIES.len()),
        goal: rng.random_range(0..GOALS.len()),
        preference: rng.random_range(0..PREFERENCES.len()),
        resources: rng.random_range(0..RESOURCES.len()),
        condition: rng.random_range(0..CONDITIONS.len()),
        susceptible: rng.random_bool(0.5),
    }
}

/// Exercises that suit the client on every concept.
fn fillers<'a>(c: &Client, exclude: [&str; 2]) -> Vec<&'a Exercise> {
    EXERCISES
        .iter()
        .filter(|e| Concept::ALL.iter().all(|k| fits(e, c, *k)) && !exclude.contains(&e.name))
        .collect()
}

fn generate_vignette<R: Rng + ?Sized>(question_id: String, concept: Concept, rng: &mut R) -> Vignette {
    loop {
        let c = sample_client(rng);
        let candidates: Vec<Concept> = Concept::ALL.into_iter().filter(|k| *k != concept).collect();
        let misleading = *candidates.choose(rng).expect("three other concepts");
        let others: Vec<Concept> = Concept::ALL
            .into_iter()
            .filter(|k| *k != concept && *k != misleading)
            .collect();
        let ok_on_others = |e: &Exercise| others.iter().all(|k| fits(e, &c, *k));
        let good: Vec<&Exercise> = EXERCISES
            .iter()
            .filter(|e| fits(e, &c, concept) && !fits(e, &c, misleading) && ok_on_others(e))
            .collect();
        let bad: Vec<&Exercise> = EXERCISES
            .iter()
            .filter(|e| !fits(e, &c, concept) && fits(e, &c, misleading) && ok_on_others(e))
            .collect();
        let (Some(good), Some(bad)) = (good.choose(rng), bad.choose(rng)) else {
            continue;
        };
        let pool = fillers(&c, [good.name, bad.name]);
        if pool.len() < 2 {
            continue;
        }
        let extra: Vec<&str> = pool.choose_multiple(rng, 2).map(|e| e.name).collect();
        let mut correct = vec![good.name.to_string(), extra[0].to_string()];
        let mut wrong = vec![bad.name.to_string(), extra[1].to_string()];
        correct.shuffle(rng);
        wrong.shuffle(rng);
        let correct_option = if rng.random_bool(0.5) { OptionLabel::A } else { OptionLabel::B };
        let (option_a, option_b) = match correct_option {
            OptionLabel::A => (correct, wrong),
            OptionLabel::B => (wrong, correct),
        };
        let vignette_text = format!(
            "A {}-year-old client with {} wants to work on {}. They should exercise at no more than {} intensity, \
             are {} susceptible to adverse events such as falls, prefer to exercise {}, and have access to {}. \
             Which exercise set suits them better?",
            c.age,
            CONDITIONS[c.condition],
            GOALS[c.goal],
            INTENSITIES[c.intensity],
            if c.susceptible { "highly" } else { "not particularly" },
            PREFERENCES[c.preference],
            RESOURCES[c.resources],
        );
        return Vignette {
            question_id,
            concept,
            vignette_text,
            option_a,
            option_b,
            correct_option,
            explanation_correct: argue(concept, good.name, bad.name, &c),
            explanation_misleading: argue(misleading, bad.name, good.name, &c),
            misleading_concept: misleading,
        };
    }
}

/// A synthetic pack of `size` vignettes, concepts assigned round-robin.
/// Fails when `size` leaves some concept with fewer than `min_per_concept`.
pub fn generate_content_pack(seed: u64, size: usize, min_per_concept: usize) -> Result<ContentPack, ContentError> {
    let pack_id = format!("generated-{seed}");
    let mut rng = rng_for(seed, "content", 0);
    let vignettes = (0..size)
        .map(|i| generate_vignette(format!("{pack_id}-{i:03}"), Concept::ALL[i % 4], &mut rng))
        .collect();
    let pack = ContentPack { pack_id, vignettes };
    pack.validate(min_per_concept)?;
    Ok(pack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{Design, DesignId};

    #[test]
    fn generated_packs_validate() {
        let need = Design::new(DesignId::Eval1).questions_per_concept();
        for seed in 0..20 {
            let pack = generate_content_pack(seed, 48, need).unwrap();
            assert_eq!(pack.vignettes.len(), 48);
            assert_eq!(pack, generate_content_pack(seed, 48, need).unwrap());
        }
    }

    #[test]
    fn undersized_pack_rejected() {
        assert!(matches!(
            generate_content_pack(1, 40, 11),
            Err(ContentError::TooFew { got: 10, .. })
        ));
    }

    #[test]
    fn misleading_explanation_must_name_the_other_set() {
        let mut pack = generate_content_pack(3, 44, 11).unwrap();
        let v = &mut pack.vignettes[0];
        v.explanation_misleading = v.explanation_correct.clone();
        assert!(matches!(pack.validate(11), Err(ContentError::Invalid { .. })));
    }

    #[test]
    fn sample_pack_is_well_formed() {
        let pack = ContentPack::from_json(include_str!("../../../content/sample_pack.json")).unwrap();
        assert_eq!(pack.vignettes.len(), 12);
        pack.validate(3).unwrap();
    }
}
