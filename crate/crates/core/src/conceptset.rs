//! The categorised concept vocabulary used to label neurons.
//!
//! Concepts are read from a CSV file with the header
//! `concept,subcategory,broad_category,task_tags`. Row order defines the concept
//! index used by every downstream matrix, so the text-embedding file of a bundle
//! must list concepts in exactly the same order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The concept file shipped with the crate (763 concepts).
pub const SHIPPED_CONCEPTS_CSV: &str = include_str!("../data/concepts.csv");

const HEADER: [&str; 4] = ["concept", "subcategory", "broad_category", "task_tags"];

#[derive(Debug, Error)]
pub enum ConceptSetError {
    #[error("cannot read concept file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("concept file is not valid CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("concept file has no concepts")]
    EmptyFile,
    #[error("concept file header must be `{}`, found `{found}`", HEADER.join(","))]
    BadHeader { found: String },
    #[error("line {line}: empty concept text")]
    EmptyConcept { line: u64 },
    #[error("line {line}: duplicate concept '{text}' (first seen as concept {first})")]
    DuplicateConcept { line: u64, text: String, first: usize },
    #[error("line {line}: unknown broad category '{name}'")]
    UnknownBroadCategory { line: u64, name: String },
    #[error("subcategory '{subcategory}' is assigned to both '{first}' and '{second}'")]
    InconsistentCategory {
        subcategory: String,
        first: BroadCategory,
        second: BroadCategory,
    },
    #[error("unknown task '{0}' (expected mass, calcification or density)")]
    UnknownTask(String),
}

/// The six broad categories. Declaration order is the display order: the five
/// mammography categories by increasing complexity, then the non-mammography one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BroadCategory {
    #[serde(rename = "Breast anatomy or structures")]
    BreastAnatomy,
    #[serde(rename = "Breast locations")]
    BreastLocations,
    #[serde(rename = "Findings and characterizations")]
    Findings,
    #[serde(rename = "Interpretations")]
    Interpretations,
    #[serde(rename = "Action or follow up")]
    ActionFollowUp,
    #[serde(rename = "Environmental and natural")]
    EnvironmentalNatural,
}

impl BroadCategory {
    pub const ALL: [BroadCategory; 6] = [
        BroadCategory::BreastAnatomy,
        BroadCategory::BreastLocations,
        BroadCategory::Findings,
        BroadCategory::Interpretations,
        BroadCategory::ActionFollowUp,
        BroadCategory::EnvironmentalNatural,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BroadCategory::BreastAnatomy => "Breast anatomy or structures",
            BroadCategory::BreastLocations => "Breast locations",
            BroadCategory::Findings => "Findings and characterizations",
            BroadCategory::Interpretations => "Interpretations",
            BroadCategory::ActionFollowUp => "Action or follow up",
            BroadCategory::EnvironmentalNatural => "Environmental and natural",
        }
    }

    pub fn is_mammography(self) -> bool {
        self != BroadCategory::EnvironmentalNatural
    }
}

impl fmt::Display for BroadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BroadCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let key = normalize(s);
        BroadCategory::ALL
            .into_iter()
            .find(|c| normalize(c.name()) == key)
            .ok_or(())
    }
}

/// Fine-tuning task a concept is relevant to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mass,
    Calcification,
    Density,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Mass, Task::Calcification, Task::Density];

    pub fn name(self) -> &'static str {
        match self {
            Task::Mass => "mass",
            Task::Calcification => "calcification",
            Task::Density => "density",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ConceptSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize(s).as_str() {
            "mass" => Ok(Task::Mass),
            "calcification" => Ok(Task::Calcification),
            "density" => Ok(Task::Density),
            _ => Err(ConceptSetError::UnknownTask(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub index: usize,
    pub text: String,
    pub subcategory: String,
    pub broad_category: BroadCategory,
    pub task_tags: Vec<Task>,
}

impl ConceptEntry {
    pub fn is_mammography(&self) -> bool {
        self.broad_category.is_mammography()
    }

    pub fn has_task(&self, task: Task) -> bool {
        self.task_tags.contains(&task)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptSet {
    entries: Vec<ConceptEntry>,
    category_table: BTreeMap<String, BroadCategory>,
}

/// Lowercases and collapses runs of whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Case-insensitive containment of `needle` in `haystack` where the match is
/// delimited by string ends or non-alphanumeric characters.
pub fn contains_word(haystack: &str, needle: &str) -> bool {
    let haystack = normalize(haystack);
    let needle = normalize(needle);
    if needle.is_empty() {
        return false;
    }
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(&needle) {
        let begin = start + pos;
        let end = begin + needle.len();
        let before_ok = haystack[..begin].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        start = begin + haystack[begin..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn token_counts(text: &str) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for tok in text.split_whitespace() {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

fn multiset_includes(small: &HashMap<&str, usize>, large: &HashMap<&str, usize>) -> bool {
    small.iter().all(|(tok, n)| large.get(tok).is_some_and(|m| m >= n))
}

/// Whether two concepts are the same idea in a slightly different form: the
/// tokens of one are a sub-multiset of the other's, or one occurs inside the
/// other at word boundaries (this catches hyphenated variants).
pub fn textual_overlap(a: &str, b: &str) -> bool {
    let a = normalize(a);
    let b = normalize(b);
    let (ta, tb) = (token_counts(&a), token_counts(&b));
    multiset_includes(&ta, &tb) || multiset_includes(&tb, &ta) || contains_word(&a, &b) || contains_word(&b, &a)
}

#[derive(Debug, Deserialize)]
struct Row {
    concept: String,
    subcategory: String,
    broad_category: String,
    #[serde(default)]
    task_tags: String,
}

impl ConceptSet {
    /// Builds a set from entries, re-indexing them in the given order and
    /// validating uniqueness and category consistency.
    pub fn from_entries(entries: Vec<ConceptEntry>) -> Result<Self, ConceptSetError> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut category_table: BTreeMap<String, BroadCategory> = BTreeMap::new();
        let mut out = Vec::with_capacity(entries.len());
        for (index, mut entry) in entries.into_iter().enumerate() {
            let line = index as u64 + 1;
            let key = normalize(&entry.text);
            if key.is_empty() {
                return Err(ConceptSetError::EmptyConcept { line });
            }
            if let Some(&first) = seen.get(&key) {
                return Err(ConceptSetError::DuplicateConcept {
                    line,
                    text: entry.text,
                    first,
                });
            }
            seen.insert(key, index);
            match category_table.get(&entry.subcategory) {
                Some(&existing) if existing != entry.broad_category => {
                    return Err(ConceptSetError::InconsistentCategory {
                        subcategory: entry.subcategory,
                        first: existing,
                        second: entry.broad_category,
                    });
                }
                Some(_) => {}
                None => {
                    category_table.insert(entry.subcategory.clone(), entry.broad_category);
                }
            }
            entry.index = index;
            entry.task_tags.sort();
            entry.task_tags.dedup();
            out.push(entry);
        }
        if out.is_empty() {
            return Err(ConceptSetError::EmptyFile);
        }
        Ok(ConceptSet {
            entries: out,
            category_table,
        })
    }

    /// Parses concept CSV text. Lines starting with '#' are ignored.
    pub fn parse_csv(text: &str) -> Result<Self, ConceptSetError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(ConceptSetError::BadHeader {
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut entries = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row: Row = record.deserialize(Some(&headers))?;
            let broad_category =
                row.broad_category
                    .parse::<BroadCategory>()
                    .map_err(|()| ConceptSetError::UnknownBroadCategory {
                        line,
                        name: row.broad_category.clone(),
                    })?;
            let task_tags = row
                .task_tags
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(Task::from_str)
                .collect::<Result<Vec<_>, _>>()?;
            let key = normalize(&row.concept);
            if key.is_empty() {
                return Err(ConceptSetError::EmptyConcept { line });
            }
            if let Some(&first) = seen.get(&key) {
                return Err(ConceptSetError::DuplicateConcept {
                    line,
                    text: row.concept,
                    first,
                });
            }
            seen.insert(key, entries.len());
            entries.push(ConceptEntry {
                index: entries.len(),
                text: row.concept,
                subcategory: row.subcategory,
                broad_category,
                task_tags,
            });
        }
        ConceptSet::from_entries(entries)
    }

    /// Loads and validates a concept CSV file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConceptSetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConceptSetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ConceptSet::parse_csv(&text)
    }

    /// The concept set shipped with the crate.
    pub fn shipped() -> Self {
        ConceptSet::parse_csv(SHIPPED_CONCEPTS_CSV).expect("shipped concept file is valid")
    }

    /// A deterministic stand-in vocabulary of `n` concepts whose categories
    /// cycle through the shipped subcategories.
    pub fn synthetic(n: usize) -> Result<Self, ConceptSetError> {
        let shipped = ConceptSet::shipped();
        let mut subs: Vec<(&String, BroadCategory)> = shipped.category_table.iter().map(|(s, b)| (s, *b)).collect();
        subs.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let entries = (0..n)
            .map(|i| {
                let (sub, broad) = subs[i % subs.len()];
                let tags = match sub.as_str() {
                    "Mass shape" | "Mass margin" | "Mass density" => vec![Task::Mass],
                    "Calcifications morphology" | "Calcifications distribution" | "Suspicious calcifications" => {
                        vec![Task::Calcification]
                    }
                    "Breast density" => vec![Task::Density],
                    _ => vec![],
                };
                ConceptEntry {
                    index: i,
                    text: format!("synthetic concept {i:04}"),
                    subcategory: sub.clone(),
                    broad_category: broad,
                    task_tags: tags,
                }
            })
            .collect();
        ConceptSet::from_entries(entries)
    }

    /// Serialises back to the CSV interchange format.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for e in &self.entries {
            let tags = e.task_tags.iter().map(|t| t.name()).collect::<Vec<_>>().join(";");
            w.write_record([e.text.as_str(), &e.subcategory, e.broad_category.name(), &tags])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&ConceptEntry> {
        self.entries.get(index)
    }

    pub fn text(&self, index: usize) -> &str {
        &self.entries[index].text
    }

    pub fn category_table(&self) -> &BTreeMap<String, BroadCategory> {
        &self.category_table
    }

    /// Index of a concept by (normalised) text.
    pub fn index_of(&self, text: &str) -> Option<usize> {
        let key = normalize(text);
        self.entries.iter().position(|e| normalize(&e.text) == key)
    }

    /// Splits concept indices into (mammography, non-mammography).
    pub fn partition_by_mammo(&self) -> (Vec<usize>, Vec<usize>) {
        self.entries
            .iter()
            .map(|e| e.index)
            .partition(|&i| self.entries[i].is_mammography())
    }

    pub fn subcategory_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.subcategory.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn broad_category_counts(&self) -> BTreeMap<BroadCategory, usize> {
        let mut counts: BTreeMap<BroadCategory, usize> = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.broad_category).or_insert(0) += 1;
        }
        counts
    }

    pub fn task_indices(&self, task: Task) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.has_task(task))
            .map(|e| e.index)
            .collect()
    }
}
