//! SQuAD-style answer normalization and string metrics.

use std::collections::HashMap;

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the as whole
/// words, collapse whitespace. Same order as the reference SQuAD script.
pub fn squad_normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(s: &str) -> Vec<String> {
    squad_normalize(s)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Multiset token F1 of the normalized strings.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = tokens(pred);
    let g = tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    squad_normalize(pred) == squad_normalize(gold)
}

/// Best F1 over all gold aliases.
pub fn max_f1(pred: &str, golds: &[String]) -> f64 {
    golds.iter().map(|g| token_f1(pred, g)).fold(0.0, f64::max)
}

pub fn any_exact_match(pred: &str, golds: &[String]) -> bool {
    golds.iter().any(|g| exact_match(pred, g))
}

/// Normalized equality, containment in either direction, or equal last
/// tokens. The last-token rule accepts answers that share only a surname.
pub fn heuristic_match(pred: &str, golds: &[String]) -> bool {
    let p = squad_normalize(pred);
    if p.is_empty() {
        return false;
    }
    golds.iter().any(|gold| {
        let g = squad_normalize(gold);
        if g.is_empty() {
            return false;
        }
        p == g
            || p.contains(&g)
            || g.contains(&p)
            || p.split_whitespace().last() == g.split_whitespace().last()
    })
}

/// Whether any normalized gold answer occurs in the normalized context.
pub fn coverage(context: &str, golds: &[String]) -> bool {
    let ctx = squad_normalize(context);
    golds.iter().any(|gold| {
        let g = squad_normalize(gold);
        !g.is_empty() && ctx.contains(&g)
    })
}
