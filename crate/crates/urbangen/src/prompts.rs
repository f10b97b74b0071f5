//! Text description generation.
//!
//! Three styles describe the same tile facts: `minimal` is a fixed
//! bullet-point layout, `structured` instantiates one seeded phrase variant
//! per component from fixed template lists, and `elaborate` is produced by
//! an external language model (see [`crate::llm`]) and must preserve every
//! number verbatim.
//!
//! Numeric rules shared by all styles: percentages are displayed as
//! integers (rounded half-up), a land-use category is mentioned iff its
//! share is at least 5%, and the residential-type sentence appears only
//! when residential land is present and building types are known.

use serde::{Deserialize, Serialize};

use crate::ingest::{Category, TileFeatures};
use crate::rng::Pcg32;
use crate::tiles::TileId;

/// Land-use shares below this fraction are never mentioned.
pub const MENTION_THRESHOLD: f64 = 0.05;

pub const SETTLEMENT_TEMPLATES: [&str; 3] = [
    "The area shown in the satellite image of {city} falls within a {type}",
    "This is a satellite image of {type} in {city}",
    "This is a satellite image of {city} where a {type} forms the core",
];

pub const SETTLEMENT_CONNECTORS: [&str; 4] = [
    ", with some {types} mixed in",
    ", alongside portions of {types}",
    ", blending into {types} areas",
    ", adjacent to {types} zones",
];

pub const LANDUSE_TEMPLATES: [&str; 4] = [
    "This area is dominated by {name} ({pct}%)",
    "The landscape is primarily {name} ({pct}%)",
    "{name} areas ({pct}%) prevail here",
    "You'll find mostly {name} ({pct}%) in this zone",
];

pub const LANDUSE_CONNECTORS: [&str; 4] = [
    ", complemented by {rest}",
    ", with pockets of {rest}",
    ", alongside some {rest}",
    ", interspersed with {rest}",
];

pub const RESIDENTIAL_TEMPLATES: [&str; 4] = [
    "The residential buildings are mainly {type}",
    "Housing consists primarily of {type}",
    "{type} structures dominate the residential areas",
    "You'll find mostly {type} here",
];

pub const RESIDENTIAL_CONNECTORS: [&str; 4] = [
    ", with some {types} interspersed",
    ", complemented by {types}",
    ", alongside {types} dwellings",
    ", mixed with {types} residences",
];

pub const DENSITY_TEMPLATES: [&str; 2] = [
    "Building density is {level} in this area",
    "This area has a {level} building density",
];

pub const DESIGNATION_TEMPLATES: [&str; 4] = [
    "The {landuse} area is concentrated in the {position} of the image in shaded {color}",
    "A {landuse} patch appears in the {position} region of the image in shaded {color}",
    "{landuse} areas cluster in the {position} portion of the image in shaded {color}",
    "The main {landuse} zone is located toward the {position} in shaded {color}",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Minimal,
    Structured,
    Elaborate,
}

impl PromptStyle {
    pub fn name(&self) -> &'static str {
        match self {
            PromptStyle::Minimal => "minimal",
            PromptStyle::Structured => "structured",
            PromptStyle::Elaborate => "elaborate",
        }
    }
}

/// A generated description and the numbers it must carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub style: PromptStyle,
    pub text: String,
    /// Percent values in order of appearance.
    pub numbers: Vec<u32>,
    pub seed: u64,
    pub tile: TileId,
    /// Set when elaborate generation failed and structured text was used.
    #[serde(default)]
    pub fallback: bool,
}

/// Display percentage: rounded half-up to an integer.
pub fn display_pct(share: f64) -> u32 {
    (share * 100.0 + 0.5).floor() as u32
}

fn capitalize(sentence: &str) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut done = false;
    for ch in sentence.chars() {
        if !done && ch.is_alphabetic() {
            out.extend(ch.to_uppercase());
            done = true;
        } else {
            out.push(ch);
        }
    }
    out
}

fn mentioned(f: &TileFeatures) -> Vec<(Category, u32)> {
    f.composition
        .ranked(MENTION_THRESHOLD)
        .into_iter()
        .map(|(c, share)| (c, display_pct(share)))
        .collect()
}

fn residential_sentence_applies(f: &TileFeatures) -> bool {
    f.composition.share(Category::Residential) >= MENTION_THRESHOLD
        && !f.residential_types.is_empty()
}

/// Fixed bullet-point description.
pub fn generate_minimal(f: &TileFeatures) -> PromptRecord {
    let mut sentences: Vec<String> = Vec::new();
    let mut numbers = Vec::new();

    sentences.push(format!(
        "Satellite image in a {} in {}.",
        f.settlement_primary.name(),
        f.city.to_lowercase()
    ));

    let ranked = mentioned(f);
    if !ranked.is_empty() {
        let mut parts = Vec::new();
        for (i, (cat, pct)) in ranked.iter().enumerate() {
            numbers.push(*pct);
            if i == 0 {
                parts.push(format!("{}% {}", pct, cat.name()));
            } else {
                parts.push(format!("{} ({}%)", cat.name(), pct));
            }
        }
        sentences.push(format!("Landuse include: {}.", parts.join(", ")));
    }

    if let Some(word) = f.density_bin.word() {
        sentences.push(capitalize(&format!("{word} building density.")));
    }

    if residential_sentence_applies(f) {
        let names: Vec<&str> = f.residential_types.iter().map(|t| t.name()).collect();
        let mut s = format!("Residential type is mainly {}", names[0]);
        if names.len() > 1 {
            s.push_str(&format!(", with {}", names[1..].join(", ")));
        }
        s.push('.');
        sentences.push(s);
    }

    if let Some(d) = &f.designation {
        sentences.push(format!(
            "The {} area is concentrated in the {} of the image in shaded {}.",
            d.category.name(),
            d.position(),
            d.color
        ));
    }

    PromptRecord {
        style: PromptStyle::Minimal,
        text: sentences.join(" "),
        numbers,
        seed: 0,
        tile: f.tile,
        fallback: false,
    }
}

/// Templated natural-language description with seeded phrase variation.
///
/// One uniform template draw per component, in a fixed order (settlement,
/// its connector, land use, residential, density, designation); components
/// that do not apply consume no draws.
pub fn generate_structured(f: &TileFeatures, seed: u64) -> PromptRecord {
    let mut rng = Pcg32::new(seed);
    let mut pick = |n: usize| -> usize { rng.gen_range(n) };
    let mut sentences: Vec<String> = Vec::new();
    let mut numbers = Vec::new();

    let city = f.city.to_lowercase();
    let mut settlement = SETTLEMENT_TEMPLATES[pick(SETTLEMENT_TEMPLATES.len())]
        .replace("{city}", &city)
        .replace("{type}", f.settlement_primary.name());
    if !f.settlement_secondary.is_empty() {
        let names: Vec<&str> = f.settlement_secondary.iter().map(|k| k.name()).collect();
        let connector = SETTLEMENT_CONNECTORS[pick(SETTLEMENT_CONNECTORS.len())]
            .replace("{types}", &names.join(", "));
        settlement.push_str(&connector);
    }
    settlement.push('.');
    sentences.push(capitalize(&settlement));

    let ranked = mentioned(f);
    if !ranked.is_empty() {
        let (first_cat, first_pct) = ranked[0];
        numbers.push(first_pct);
        let mut landuse = LANDUSE_TEMPLATES[pick(LANDUSE_TEMPLATES.len())]
            .replace("{name}", first_cat.name())
            .replace("{pct}", &first_pct.to_string());
        if ranked.len() > 1 {
            let rest: Vec<String> = ranked[1..]
                .iter()
                .map(|(c, p)| {
                    numbers.push(*p);
                    format!("{} ({}%)", c.name(), p)
                })
                .collect();
            let connector = LANDUSE_CONNECTORS[pick(LANDUSE_CONNECTORS.len())]
                .replace("{rest}", &rest.join(", "));
            landuse.push_str(&connector);
        }
        landuse.push('.');
        sentences.push(capitalize(&landuse));
    }

    if let Some(word) = f.density_bin.word() {
        let density =
            DENSITY_TEMPLATES[pick(DENSITY_TEMPLATES.len())].replace("{level}", word);
        sentences.push(capitalize(&format!("{density}.")));
    }

    if residential_sentence_applies(f) {
        let names: Vec<&str> = f.residential_types.iter().map(|t| t.name()).collect();
        let mut res = RESIDENTIAL_TEMPLATES[pick(RESIDENTIAL_TEMPLATES.len())]
            .replace("{type}", names[0]);
        if names.len() > 1 {
            let connector = RESIDENTIAL_CONNECTORS[pick(RESIDENTIAL_CONNECTORS.len())]
                .replace("{types}", &names[1..].join(", "));
            res.push_str(&connector);
        }
        res.push('.');
        sentences.push(capitalize(&res));
    }

    if let Some(d) = &f.designation {
        let desig = DESIGNATION_TEMPLATES[pick(DESIGNATION_TEMPLATES.len())]
            .replace("{landuse}", d.category.name())
            .replace("{position}", &d.position())
            .replace("{color}", &d.color);
        sentences.push(capitalize(&format!("{desig}.")));
    }

    PromptRecord {
        style: PromptStyle::Structured,
        text: sentences.join(" "),
        numbers,
        seed,
        tile: f.tile,
        fallback: false,
    }
}

/// Outcome of checking a prompt's numbers against tile features.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NumberReport {
    /// Expected percentages absent from the text.
    pub missing: Vec<u32>,
    /// Percentages present in the text but not expected.
    pub extraneous: Vec<u32>,
}

impl NumberReport {
    pub fn pass(&self) -> bool {
        self.missing.is_empty() && self.extraneous.is_empty()
    }
}

/// Percent tokens (`NN%`) appearing in a text, in order.
pub fn extract_percentages(text: &str) -> Vec<u32> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'%' {
                if let Ok(v) = text[start..i].parse::<u32>() {
                    out.push(v);
                }
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Checks that every mentionable land-use percentage appears verbatim and
/// that no foreign percentage was introduced. Multiset comparison, so
/// repeated values must appear the right number of times.
pub fn validate_numbers(p: &PromptRecord, f: &TileFeatures) -> NumberReport {
    let mut expected: Vec<u32> = mentioned(f).iter().map(|(_, pct)| *pct).collect();
    let mut found = extract_percentages(&p.text);
    expected.sort_unstable();
    found.sort_unstable();

    let mut report = NumberReport::default();
    let (mut i, mut j) = (0, 0);
    while i < expected.len() || j < found.len() {
        match (expected.get(i), found.get(j)) {
            (Some(&e), Some(&g)) if e == g => {
                i += 1;
                j += 1;
            }
            (Some(&e), Some(&g)) if e < g => {
                report.missing.push(e);
                i += 1;
            }
            (Some(_), Some(&g)) => {
                report.extraneous.push(g);
                j += 1;
            }
            (Some(&e), None) => {
                report.missing.push(e);
                i += 1;
            }
            (None, Some(&g)) => {
                report.extraneous.push(g);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    report
}
