//! Consignee name generation and spelling-variant emission.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::linkage::{profile_similarity, TrigramProfile};

const ONSETS: &[&str] = &[
    "B", "C", "D", "F", "G", "K", "L", "M", "N", "P", "R", "S", "T", "V", "Z", "BR", "TR", "GR",
    "PR", "ST", "QU", "H", "J", "W",
];
const VOWELS: &[&str] = &["A", "E", "I", "O", "U", "IA", "IO", "AU"];
const CODAS: &[&str] = &["", "", "", "N", "R", "S", "L", "X", "M"];
const DOMAIN_WORDS: &[&str] = &[
    "LOGISTICS", "TRADING", "IMPORTS", "INDUSTRIAL", "DISTRIBUTION", "FOODS", "TEXTILES",
    "ELECTRONICS", "MINING", "AGROINDUSTRIAL", "PHARMACEUTICALS", "MARITIME", "COMMERCIAL",
    "HOLDINGS", "SUPPLY", "ENTERPRISES", "INTERNATIONAL", "RETAIL", "MACHINERY", "CHEMICALS",
    "FORESTRY", "AUTOMOTIVE", "BEVERAGES", "HARDWARE", "SEAFOOD", "PACKAGING",
];
const LEGAL_SUFFIXES: &[&str] = &["S.A.", "SPA", "LTDA", "LIMITADA", "CORP", "INC"];

/// Names shorter than this would let a single edit fall below a 0.8 trigram match.
pub const MIN_NAME_LEN: usize = 36;
/// Names without a legal suffix must absorb an appended one.
const MIN_BARE_NAME_LEN: usize = 44;
/// Canonical names sharing a first letter stay below this similarity.
pub const MAX_CANONICAL_SIMILARITY: f64 = 0.5;

fn brand_word<R: Rng + ?Sized>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    w
}

fn candidate_name<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut words = vec![brand_word(rng)];
    if rng.random_bool(0.5) {
        words.push(brand_word(rng));
    }
    let mut domains: Vec<&str> = DOMAIN_WORDS.choose_multiple(rng, 2).copied().collect();
    if rng.random_bool(0.3) {
        domains.insert(1, "AND");
    }
    words.extend(domains.iter().map(|s| s.to_string()));
    let suffix = rng.random_bool(0.7).then(|| *LEGAL_SUFFIXES.choose(rng).unwrap());
    let min_len = if suffix.is_some() { MIN_NAME_LEN } else { MIN_BARE_NAME_LEN };
    words.extend(suffix.map(str::to_string));
    while words.join(" ").len() < min_len {
        words.insert(1, brand_word(rng));
    }
    words.join(" ")
}

/// `n` distinct canonical consignee names, pairwise dissimilar within each
/// first-letter block.
pub fn generate_canonical_names<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(n);
    let mut profiles: Vec<(char, TrigramProfile)> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while names.len() < n {
        attempts += 1;
        assert!(attempts < 1000 * n + 10_000, "name space exhausted");
        let cand = candidate_name(rng);
        let first = cand.chars().next().unwrap();
        let p = TrigramProfile::new(&cand);
        let clash = profiles
            .iter()
            .any(|(c, q)| *c == first && profile_similarity(&p, q) >= MAX_CANONICAL_SIMILARITY);
        if !clash {
            profiles.push((first, p));
            names.push(cand);
        }
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantClass {
    /// Title case; the first character is unchanged.
    Case,
    /// Doubled or padded whitespace.
    Whitespace,
    /// Inserted comma or period at a word boundary.
    Punctuation,
    /// Short forms and dotted abbreviations: `AND` to `&`, `S.A.` to `SA`, `CORP` to `CORP.`.
    Abbreviation,
    /// One character replaced (never the first).
    Substitution,
    /// One character removed (never the first).
    Deletion,
    /// Appended legal suffix.
    Suffix,
    /// First character altered; defeats first-letter blocking.
    FirstCharBreak,
}

impl VariantClass {
    /// Classes that keep the first character.
    pub const BLOCKING_SAFE: [VariantClass; 7] = [
        VariantClass::Case,
        VariantClass::Whitespace,
        VariantClass::Punctuation,
        VariantClass::Abbreviation,
        VariantClass::Substitution,
        VariantClass::Deletion,
        VariantClass::Suffix,
    ];
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs.flat_map(char::to_lowercase)).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Positions after the first character that hold an ASCII letter.
fn inner_letters(s: &str) -> Vec<usize> {
    s.char_indices()
        .skip(1)
        .filter(|(_, c)| c.is_ascii_alphabetic())
        .map(|(i, _)| i)
        .collect()
}

/// Applies one perturbation of `class`. Returns `None` when the class does
/// not apply or would leave the text unchanged.
pub fn perturb<R: Rng + ?Sized>(canonical: &str, class: VariantClass, rng: &mut R) -> Option<String> {
    let out = match class {
        VariantClass::Case => title_case(canonical),
        VariantClass::Whitespace => {
            let spaces: Vec<usize> = canonical.match_indices(' ').map(|(i, _)| i).collect();
            match spaces.choose(rng) {
                Some(&i) if rng.random_bool(0.7) => format!("{}  {}", &canonical[..i], &canonical[i + 1..]),
                _ => format!("{canonical} "),
            }
        }
        VariantClass::Punctuation => {
            let spaces: Vec<usize> = canonical.match_indices(' ').map(|(i, _)| i).collect();
            let &i = spaces.choose(rng)?;
            let mark = if rng.random_bool(0.5) { "," } else { "." };
            format!("{}{}{}", &canonical[..i], mark, &canonical[i..])
        }
        VariantClass::Abbreviation => {
            let rules = [(" AND ", " & "), ("S.A.", "SA"), ("CORP", "CORP."), ("LTDA", "LTDA.")];
            let applicable: Vec<_> = rules.iter().filter(|(from, _)| canonical.contains(from)).collect();
            let (from, to) = applicable.choose(rng)?;
            canonical.replacen(from, to, 1)
        }
        VariantClass::Substitution => {
            let positions = inner_letters(canonical);
            let &i = positions.choose(rng)?;
            let old = canonical.as_bytes()[i];
            let mut new = old;
            while new == old {
                new = b'A' + rng.random_range(0..26u8);
            }
            let mut s = canonical.to_string();
            s.replace_range(i..i + 1, &(new as char).to_string());
            s
        }
        VariantClass::Deletion => {
            let positions = inner_letters(canonical);
            let &i = positions.choose(rng)?;
            let mut s = canonical.to_string();
            s.remove(i);
            s
        }
        VariantClass::Suffix => {
            if LEGAL_SUFFIXES.iter().any(|suf| canonical.ends_with(suf)) {
                return None;
            }
            format!("{canonical} S.A.")
        }
        VariantClass::FirstCharBreak => {
            let first = canonical.chars().next()?;
            let rest: String = canonical.chars().skip(1).collect();
            let mut new = first;
            while new == first {
                new = (b'A' + rng.random_range(0..26u8)) as char;
            }
            format!("{new}{rest}")
        }
    };
    (out != canonical).then_some(out)
}

/// With probability `variant_rate` returns a blocking-safe perturbation of
/// `canonical`, otherwise `canonical` itself.
pub fn emit_name_variant<R: Rng + ?Sized>(canonical: &str, variant_rate: f64, rng: &mut R) -> String {
    assert!(!canonical.is_empty(), "canonical name must be non-empty");
    if !rng.random_bool(variant_rate.clamp(0.0, 1.0)) {
        return canonical.to_string();
    }
    loop {
        let class = *VariantClass::BLOCKING_SAFE.choose(rng).unwrap();
        if let Some(v) = perturb(canonical, class, rng) {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::trigram_similarity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn suffix_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            perturb("ACME LOGISTICS", VariantClass::Suffix, &mut rng).as_deref(),
            Some("ACME LOGISTICS S.A.")
        );
    }

    #[test]
    fn variants_keep_first_character() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let v = emit_name_variant("ACME LOGISTICS", 1.0, &mut rng);
            assert!(v.starts_with('A'), "{v}");
            assert_ne!(v, "ACME LOGISTICS");
        }
    }

    #[test]
    fn variant_rate_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let changed = (0..n)
            .filter(|_| emit_name_variant("ACME LOGISTICS AND TRADING", 0.3, &mut rng) != "ACME LOGISTICS AND TRADING")
            .count();
        let frac = changed as f64 / n as f64;
        assert!((0.27..=0.33).contains(&frac), "{frac}");
    }

    #[test]
    fn canonical_names_are_long_and_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let names = generate_canonical_names(300, &mut rng);
        for (i, a) in names.iter().enumerate() {
            assert!(a.len() >= MIN_NAME_LEN, "{a}");
            for b in &names[i + 1..] {
                if a.chars().next() == b.chars().next() {
                    assert!(trigram_similarity(a, b) < MAX_CANONICAL_SIMILARITY);
                }
            }
        }
    }

    #[test]
    fn most_variants_stay_above_link_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let names = generate_canonical_names(200, &mut rng);
        let mut above = 0;
        let mut total = 0;
        for n in &names {
            for _ in 0..10 {
                let v = emit_name_variant(n, 1.0, &mut rng);
                total += 1;
                above += (trigram_similarity(n, &v) >= 0.8) as usize;
            }
        }
        assert!(above as f64 / total as f64 > 0.99, "{above}/{total}");
    }

    #[test]
    fn first_char_break_changes_first_character() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = perturb("ACME", VariantClass::FirstCharBreak, &mut rng).unwrap();
        assert_ne!(v.chars().next(), Some('A'));
    }
}
