//! Name matching over unsegmented Japanese text.

use std::collections::{BTreeMap, HashSet};

/// Lookup key for names and aliases: trimmed, ASCII lowercased.
pub fn name_key(name: &str) -> String {
    name.trim().to_ascii_lowercase()
}

/// Longest-match substring search for a fixed set of names.
///
/// Each name maps to a target id. Scanning goes left to right; at each
/// position the longest name starting there wins and the scan resumes after
/// it.
#[derive(Debug, Clone, Default)]
pub struct NameMatcher {
    // Keyed by first character, longest name first.
    by_first: BTreeMap<char, Vec<(Vec<char>, usize)>>,
}

impl NameMatcher {
    pub fn new<'a>(names: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut by_first: BTreeMap<char, Vec<(Vec<char>, usize)>> = BTreeMap::new();
        for (name, id) in names {
            let chars: Vec<char> = name_key(name).chars().collect();
            if let Some(&first) = chars.first() {
                by_first.entry(first).or_default().push((chars, id));
            }
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        Self { by_first }
    }

    /// Every match in scan order, repeats included.
    pub fn scan(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = name_key(text).chars().collect();
        let mut hits = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let found = self.by_first.get(&chars[i]).and_then(|candidates| {
                candidates.iter().find(|(name, _)| chars[i..].starts_with(name))
            });
            match found {
                Some((name, id)) => {
                    hits.push(*id);
                    i += name.len();
                }
                None => i += 1,
            }
        }
        hits
    }

    /// Distinct matches in first-occurrence order.
    pub fn find_distinct(&self, text: &str) -> Vec<usize> {
        let mut seen = HashSet::new();
        self.scan(text).into_iter().filter(|id| seen.insert(*id)).collect()
    }
}
