//! Synthetic requirement corpus generated from the three pattern grammars.
//!
//! Class 0 states an invariant ("the horn shall always be off", "the window
//! roll down time is 2 seconds"), class 1 a plain conditional ("if ignition is on, then fuel indicator is
//! active") and class 2 a conditional with a response bound ("... within 0.2
//! seconds"). Sentences get light lexical noise: filler words, dropped
//! articles, doubled letters, random casing and irregular spacing.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabeledDataset, PatternClass, Requirement};

/// 600 items split in the proportions 424 : 795 : 1879.
pub const DEFAULT_SIZES: [usize; 3] = [82, 154, 364];

const SIGNALS: &[&str] = &[
    "ignition",
    "fuel indicator",
    "wiper movement mode",
    "headlight",
    "door lock",
    "window lift",
    "brake pedal",
    "seat heater",
    "rear defogger",
    "turn indicator",
    "cruise control",
    "parking brake",
    "horn",
    "air conditioning",
    "oil pressure warning",
    "trunk latch",
    "hazard light",
    "lane assist",
    "fog lamp",
    "sunroof",
];

const STATES: &[&str] = &[
    "on", "off", "active", "inactive", "enabled", "disabled", "locked", "unlocked", "open",
    "closed", "pressed", "released", "engaged", "set",
];

const QUANTITIES: &[&str] = &[
    "engine speed",
    "vehicle speed",
    "battery voltage",
    "coolant temperature",
    "cabin temperature",
    "tank level",
];

const NUMBERS: &[&str] = &[
    "0.2", "0.5", "1", "2", "5", "10", "30", "100", "150", "250", "1.5", "3",
];
const TIME_UNITS: &[&str] = &["seconds", "ms", "milliseconds", "s", "minutes"];
const VALUE_UNITS: &[&str] = &["rpm", "km/h", "volts", "degrees", "percent"];
const TIMINGS: &[&str] = &[
    "roll down time",
    "debounce time",
    "response time",
    "activation delay",
    "cycle time",
];
const BOUNDS: &[&str] = &["within", "after at most"];
const FILLERS: &[&str] = &["system", "shall", "the", "signal", "also", "immediately"];

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

fn condition<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..4) {
        0 => format!("{} is {}", pick(rng, SIGNALS), pick(rng, STATES)),
        1 => format!("the {} is {}", pick(rng, SIGNALS), pick(rng, STATES)),
        2 => format!(
            "{} is greater than {} {}",
            pick(rng, QUANTITIES),
            pick(rng, NUMBERS),
            pick(rng, VALUE_UNITS)
        ),
        _ => format!("the driver presses the {} switch", pick(rng, SIGNALS)),
    }
}

fn effect<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..3) {
        0 => format!("{} is {}", pick(rng, SIGNALS), pick(rng, STATES)),
        1 => format!("the {} shall be {}", pick(rng, SIGNALS), pick(rng, STATES)),
        _ => format!("the {} is set to {}", pick(rng, SIGNALS), pick(rng, STATES)),
    }
}

fn invariant<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..5) {
        0 => format!(
            "the {} {} is {} {}",
            pick(rng, SIGNALS),
            pick(rng, TIMINGS),
            pick(rng, NUMBERS),
            pick(rng, TIME_UNITS)
        ),
        1 => format!(
            "the {} shall always be {}",
            pick(rng, SIGNALS),
            pick(rng, STATES)
        ),
        2 => format!(
            "the maximum {} is {} {}",
            pick(rng, QUANTITIES),
            pick(rng, NUMBERS),
            pick(rng, VALUE_UNITS)
        ),
        3 => format!("{} is always {}", pick(rng, SIGNALS), pick(rng, STATES)),
        _ => format!(
            "the {} of the {} is {} {}",
            pick(rng, TIMINGS),
            pick(rng, SIGNALS),
            pick(rng, NUMBERS),
            pick(rng, TIME_UNITS)
        ),
    }
}

fn conditional<R: Rng>(rng: &mut R) -> String {
    let (c, e) = (condition(rng), effect(rng));
    match rng.random_range(0..4) {
        0 => format!("if {c}, then {e}"),
        1 => format!("if {c} then {e}"),
        2 => format!("when {c}, then {e}"),
        _ => format!("if {c}, {e}"),
    }
}

fn bounded<R: Rng>(rng: &mut R) -> String {
    let base = conditional(rng);
    format!(
        "{base} {} {} {}",
        pick(rng, BOUNDS),
        pick(rng, NUMBERS),
        pick(rng, TIME_UNITS)
    )
}

fn add_noise<R: Rng>(rng: &mut R, sentence: &str) -> String {
    let mut words: Vec<String> = sentence.split(' ').map(String::from).collect();
    for _ in 0..rng.random_range(0..3) {
        match rng.random_range(0..4) {
            0 => {
                let at = rng.random_range(0..=words.len());
                words.insert(at, String::from(pick(rng, FILLERS)));
            }
            1 => {
                if let Some(i) = words.iter().position(|w| w == "the") {
                    words.remove(i);
                }
            }
            2 => {
                let i = rng.random_range(0..words.len());
                let w = &words[i];
                if let Some(c) = w.chars().last().filter(|c| c.is_alphabetic()) {
                    words[i] = format!("{w}{c}");
                }
            }
            _ => {
                let i = rng.random_range(0..words.len());
                words[i] = words[i].to_uppercase();
            }
        }
    }
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push_str(if rng.random_bool(0.1) { "  " } else { " " });
        }
        out.push_str(w);
    }
    let mut chars = out.chars();
    match chars.next() {
        Some(first) if rng.random_bool(0.5) => first.to_uppercase().chain(chars).collect(),
        _ => out,
    }
}

/// Requirements with ids `syn-0000`, `syn-0001`, …, grouped by class. Texts
/// are stored normalized.
pub fn synthetic_corpus(sizes: [usize; 3], seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requirements = Vec::with_capacity(sizes.iter().sum());
    for (label, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            let sentence = match label {
                0 => invariant(&mut rng),
                1 => conditional(&mut rng),
                _ => bounded(&mut rng),
            };
            let text = add_noise(&mut rng, &sentence);
            requirements.push(Requirement::seed(
                format!("syn-{:04}", requirements.len()),
                &text,
                label,
            ));
        }
    }
    LabeledDataset::new(PatternClass::defaults(), requirements).expect("generated corpus is valid")
}
