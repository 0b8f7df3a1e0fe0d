//! Merchandise classification into HS chapters: explicit code extraction,
//! then TF-IDF nearest-chapter matching against chapter definitions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const CHAPTER_COUNT: usize = 97;
pub const SECTION_COUNT: usize = 21;
pub const DEFAULT_FLOOR: f64 = 0.05;

const BUNDLED_CATALOG: &str = include_str!("../../resources/hs_chapters.csv");

#[derive(Debug, thiserror::Error)]
pub enum HsError {
    #[error("catalog io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("invalid catalog: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsChapter {
    pub chapter: u8,
    pub section: u8,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsCatalog {
    chapters: Vec<HsChapter>,
    section_map: BTreeMap<u8, u8>,
}

impl HsCatalog {
    /// Validates chapter numbers (1–97, unique), sections (1–21) and non-empty definitions.
    pub fn new(mut chapters: Vec<HsChapter>) -> Result<Self, HsError> {
        if chapters.is_empty() {
            return Err(HsError::Invalid("catalog has no chapters".into()));
        }
        chapters.sort_by_key(|c| c.chapter);
        let mut section_map = BTreeMap::new();
        for c in &chapters {
            if !(1..=CHAPTER_COUNT as u8).contains(&c.chapter) {
                return Err(HsError::Invalid(format!("chapter {} out of range", c.chapter)));
            }
            if !(1..=SECTION_COUNT as u8).contains(&c.section) {
                return Err(HsError::Invalid(format!(
                    "chapter {}: section {} out of range",
                    c.chapter, c.section
                )));
            }
            if tokenize(&c.definition).is_empty() {
                return Err(HsError::Invalid(format!("chapter {} has an empty definition", c.chapter)));
            }
            if section_map.insert(c.chapter, c.section).is_some() {
                return Err(HsError::Invalid(format!("duplicate chapter {}", c.chapter)));
            }
        }
        Ok(Self {
            chapters,
            section_map,
        })
    }

    /// The 97-chapter catalog shipped with the crate.
    pub fn bundled() -> Self {
        let cat = Self::from_reader(BUNDLED_CATALOG.as_bytes()).expect("bundled catalog parses");
        cat.check_complete().expect("bundled catalog is complete");
        cat
    }

    pub fn from_csv(path: &Path) -> Result<Self, HsError> {
        let file = std::fs::File::open(path).map_err(|source| HsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, HsError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| HsError::Parse(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["chapter", "section", "definition"] {
            return Err(HsError::Parse(format!(
                "expected header chapter,section,definition, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut chapters = Vec::new();
        for rec in rdr.deserialize::<HsChapter>() {
            chapters.push(rec.map_err(|e| HsError::Parse(e.to_string()))?);
        }
        Self::new(chapters)
    }

    /// Full-catalog check: exactly 97 chapters spanning 21 sections.
    pub fn check_complete(&self) -> Result<(), HsError> {
        if self.chapters.len() != CHAPTER_COUNT {
            return Err(HsError::Invalid(format!(
                "expected {CHAPTER_COUNT} chapters, found {}",
                self.chapters.len()
            )));
        }
        let mut sections: Vec<u8> = self.section_map.values().copied().collect();
        sections.sort_unstable();
        sections.dedup();
        if sections.len() != SECTION_COUNT {
            return Err(HsError::Invalid(format!(
                "expected {SECTION_COUNT} sections, found {}",
                sections.len()
            )));
        }
        Ok(())
    }

    pub fn chapters(&self) -> &[HsChapter] {
        &self.chapters
    }

    pub fn section_of(&self, chapter: u8) -> Option<u8> {
        self.section_map.get(&chapter).copied()
    }
}

/// Splits on non-alphanumerics, uppercases, drops tokens shorter than 2.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_uppercase())
        .collect()
}

/// First 4- or 6-digit HS code token (`8471`, `847130`, `8471.30`) whose
/// chapter prefix lies in 1–97.
pub fn parse_explicit_code(description: &str) -> Option<u8> {
    description
        .split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .map(|t| t.trim_matches('.'))
        .filter(|t| is_code_token(t))
        .find_map(|t| {
            let ch: u8 = t[..2].parse().ok()?;
            (1..=CHAPTER_COUNT as u8).contains(&ch).then_some(ch)
        })
}

fn is_code_token(t: &str) -> bool {
    let b = t.as_bytes();
    let digits = |s: &[u8]| s.iter().all(u8::is_ascii_digit);
    match b.len() {
        4 | 6 => digits(b),
        7 => b[4] == b'.' && digits(&b[..4]) && digits(&b[5..]),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExplicitCode,
    Tfidf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ExplicitCode => "explicit_code",
            Method::Tfidf => "tfidf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// `None` means Unclassified.
    pub chapter: Option<u8>,
    pub section: Option<u8>,
    pub method: Method,
    pub score: f64,
}

/// Sparse L2-normalized TF-IDF vectors, one per catalog chapter.
#[derive(Debug, Clone)]
pub struct ChapterVectorIndex {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    chapters: Vec<u8>,
    sections: BTreeMap<u8, u8>,
    vectors: Vec<Vec<(usize, f64)>>,
}

pub fn build_index(catalog: &HsCatalog) -> Result<ChapterVectorIndex, HsError> {
    let docs: Vec<Vec<String>> = catalog
        .chapters
        .iter()
        .map(|c| tokenize(&c.definition))
        .collect();
    if let Some(pos) = docs.iter().position(Vec::is_empty) {
        return Err(HsError::Invalid(format!(
            "chapter {} has an empty definition",
            catalog.chapters[pos].chapter
        )));
    }
    let mut terms: Vec<&str> = docs.iter().flatten().map(String::as_str).collect();
    terms.sort_unstable();
    terms.dedup();
    let vocabulary: HashMap<String, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i))
        .collect();

    let mut df = vec![0usize; terms.len()];
    let counts: Vec<BTreeMap<usize, f64>> = docs
        .iter()
        .map(|doc| {
            let mut tf = BTreeMap::new();
            for t in doc {
                *tf.entry(vocabulary[t]).or_insert(0.0) += 1.0;
            }
            for &i in tf.keys() {
                df[i] += 1;
            }
            tf
        })
        .collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let vectors = counts
        .into_iter()
        .map(|tf| normalize(tf.into_iter().map(|(i, c)| (i, c * idf[i])).collect()))
        .collect();
    Ok(ChapterVectorIndex {
        vocabulary,
        idf,
        chapters: catalog.chapters.iter().map(|c| c.chapter).collect(),
        sections: catalog.section_map.clone(),
        vectors,
    })
}

fn normalize(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|(_, x)| *x /= norm);
    }
    v
}

impl ChapterVectorIndex {
    pub fn vocabulary_size(&self) -> usize {
        self.idf.len()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&i| self.idf[i])
    }

    pub fn chapters(&self) -> &[u8] {
        &self.chapters
    }

    pub fn section_of(&self, chapter: u8) -> Option<u8> {
        self.sections.get(&chapter).copied()
    }

    /// Dense copy of one chapter's vector, indexed by vocabulary position.
    pub fn dense_vector(&self, chapter: u8) -> Option<Vec<f64>> {
        let pos = self.chapters.iter().position(|&c| c == chapter)?;
        let mut out = vec![0.0; self.idf.len()];
        for &(i, x) in &self.vectors[pos] {
            out[i] = x;
        }
        Some(out)
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    /// Normalized query vector of a free-text description.
    pub fn query_vector(&self, description: &str) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(description) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        normalize(tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect())
    }

    /// Cosine similarity of the description against every chapter, in chapter order.
    pub fn similarities(&self, description: &str) -> Vec<(u8, f64)> {
        let q: HashMap<usize, f64> = self.query_vector(description).into_iter().collect();
        self.chapters
            .iter()
            .zip(&self.vectors)
            .map(|(&ch, v)| {
                let dot = v.iter().filter_map(|(i, x)| q.get(i).map(|y| x * y)).sum::<f64>();
                (ch, dot)
            })
            .collect()
    }
}

pub fn classify(description: &str, index: &ChapterVectorIndex, floor: f64) -> Classification {
    if let Some(ch) = parse_explicit_code(description) {
        return Classification {
            chapter: Some(ch),
            section: index.section_of(ch),
            method: Method::ExplicitCode,
            score: 1.0,
        };
    }
    // Strict `>` keeps the lowest chapter on ties.
    let (best_ch, best) = index
        .similarities(description)
        .into_iter()
        .fold((0u8, f64::NEG_INFINITY), |acc, (ch, s)| if s > acc.1 { (ch, s) } else { acc });
    let score = best.max(0.0);
    if score < floor || best_ch == 0 {
        return Classification {
            chapter: None,
            section: None,
            method: Method::Tfidf,
            score,
        };
    }
    Classification {
        chapter: Some(best_ch),
        section: index.section_of(best_ch),
        method: Method::Tfidf,
        score,
    }
}

/// Classified fraction split by method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    pub explicit: usize,
    pub tfidf: usize,
    pub unclassified: usize,
}

impl CoverageReport {
    pub fn from_classifications<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = &'a Classification>,
    {
        let mut r = Self::default();
        for c in items {
            r.total += 1;
            match (c.chapter, c.method) {
                (None, _) => r.unclassified += 1,
                (Some(_), Method::ExplicitCode) => r.explicit += 1,
                (Some(_), Method::Tfidf) => r.tfidf += 1,
            }
        }
        r
    }

    fn frac(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            n as f64 / self.total as f64
        }
    }

    pub fn explicit_fraction(&self) -> f64 {
        self.frac(self.explicit)
    }

    pub fn tfidf_fraction(&self) -> f64 {
        self.frac(self.tfidf)
    }

    pub fn coverage(&self) -> f64 {
        self.frac(self.explicit + self.tfidf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> HsCatalog {
        HsCatalog::new(vec![
            HsChapter { chapter: 1, section: 1, definition: "live animals horses".into() },
            HsChapter { chapter: 2, section: 1, definition: "meat animals meat".into() },
            HsChapter { chapter: 3, section: 2, definition: "fish animals".into() },
        ])
        .unwrap()
    }

    #[test]
    fn explicit_codes() {
        assert_eq!(parse_explicit_code("HS 847130 LAPTOPS"), Some(84));
        assert_eq!(parse_explicit_code("FROZEN SHRIMP NO CODE"), None);
        assert_eq!(parse_explicit_code("9901.00 SPECIAL"), None);
        assert_eq!(parse_explicit_code("parts 8471.30"), Some(84));
        assert_eq!(parse_explicit_code("code 0101"), Some(1));
        assert_eq!(parse_explicit_code("0012 widgets"), None);
        assert_eq!(parse_explicit_code("12345 units"), None);
    }

    #[test]
    fn bundled_catalog_is_complete() {
        let cat = HsCatalog::bundled();
        assert_eq!(cat.chapters().len(), 97);
        assert_eq!(cat.section_of(84), Some(16));
        assert_eq!(cat.section_of(97), Some(21));
        assert_eq!(cat.section_of(15), Some(3));
    }

    #[test]
    fn incomplete_catalog_fails_full_check_but_builds() {
        let cat = toy();
        assert!(cat.check_complete().is_err());
        assert!(build_index(&cat).is_ok());
    }

    #[test]
    fn empty_definition_rejected() {
        let err = HsCatalog::new(vec![HsChapter { chapter: 1, section: 1, definition: " ; ".into() }]);
        assert!(err.is_err());
    }

    #[test]
    fn toy_tfidf_matches_hand_computation() {
        let idx = build_index(&toy()).unwrap();
        // N = 3; ANIMALS df 3, others df 1.
        let common = 1.0;
        let rare = (4.0f64 / 2.0).ln() + 1.0;
        assert!((idx.idf("ANIMALS").unwrap() - common).abs() < 1e-12);
        assert!((idx.idf("MEAT").unwrap() - rare).abs() < 1e-12);

        // Chapter 2: MEAT tf 2, ANIMALS tf 1.
        let (m, a) = (2.0 * rare, common);
        let norm = (m * m + a * a).sqrt();
        let v = idx.dense_vector(2).unwrap();
        assert!((v[idx.token_index("MEAT").unwrap()] - m / norm).abs() < 1e-12);
        assert!((v[idx.token_index("ANIMALS").unwrap()] - a / norm).abs() < 1e-12);
        assert_eq!(v[idx.token_index("FISH").unwrap()], 0.0);
    }

    #[test]
    fn token_in_every_chapter_has_unit_idf() {
        let cat = HsCatalog::new(
            (1..=97)
                .map(|c| HsChapter { chapter: c, section: 1 + (c - 1) / 5, definition: format!("goods item{c}") })
                .collect(),
        )
        .unwrap();
        let idx = build_index(&cat).unwrap();
        assert_eq!(idx.idf("GOODS"), Some(1.0));
    }

    #[test]
    fn chapter_vectors_have_unit_norm() {
        let idx = build_index(&HsCatalog::bundled()).unwrap();
        for &ch in idx.chapters() {
            let v = idx.dense_vector(ch).unwrap();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12, "chapter {ch} norm {n}");
        }
    }

    #[test]
    fn explicit_code_short_circuits() {
        let idx = build_index(&HsCatalog::bundled()).unwrap();
        let c = classify("LIVE HORSES 847130", &idx, DEFAULT_FLOOR);
        assert_eq!(c.chapter, Some(84));
        assert_eq!(c.section, Some(16));
        assert_eq!(c.method, Method::ExplicitCode);
        assert_eq!(c.score, 1.0);
    }

    #[test]
    fn verbatim_definition_classifies_to_itself() {
        let cat = HsCatalog::bundled();
        let idx = build_index(&cat).unwrap();
        for ch in cat.chapters() {
            let c = classify(&ch.definition, &idx, DEFAULT_FLOOR);
            assert_eq!(c.chapter, Some(ch.chapter));
            assert!((c.score - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_matches_exhaustive_cosine_on_toy() {
        let idx = build_index(&toy()).unwrap();
        for desc in ["meat", "animals", "horses fish", "fish fish meat", "nothing here"] {
            let q = idx.query_vector(desc);
            let mut best = (None, 0.0);
            for &ch in idx.chapters() {
                let v = idx.dense_vector(ch).unwrap();
                let s: f64 = q.iter().map(|&(i, x)| x * v[i]).sum();
                if s > best.1 + 1e-15 {
                    best = (Some(ch), s);
                }
            }
            let c = classify(desc, &idx, DEFAULT_FLOOR);
            assert_eq!(c.chapter, best.0, "{desc}");
        }
        // Shared token: shortest definition weighs it most.
        assert_eq!(classify("animals", &idx, 0.0).chapter, Some(3));
        // Exact tie goes to the lower chapter.
        let twin = HsCatalog::new(vec![
            HsChapter { chapter: 5, section: 1, definition: "alpha beta".into() },
            HsChapter { chapter: 9, section: 2, definition: "alpha gamma".into() },
        ])
        .unwrap();
        let idx = build_index(&twin).unwrap();
        assert_eq!(classify("alpha", &idx, 0.0).chapter, Some(5));
    }

    #[test]
    fn unknown_words_are_unclassified() {
        let idx = build_index(&HsCatalog::bundled()).unwrap();
        let c = classify("XYZZY QWERTY", &idx, DEFAULT_FLOOR);
        assert_eq!(c.chapter, None);
        assert_eq!(c.section, None);
        assert!(c.score < DEFAULT_FLOOR);
    }

    #[test]
    fn coverage_report_sums() {
        let idx = build_index(&HsCatalog::bundled()).unwrap();
        let cs: Vec<_> = ["HS 0101", "frozen shrimp", "zzz"]
            .iter()
            .map(|d| classify(d, &idx, DEFAULT_FLOOR))
            .collect();
        let r = CoverageReport::from_classifications(&cs);
        assert_eq!((r.explicit, r.tfidf, r.unclassified), (1, 1, 1));
        assert!((r.coverage() - (r.explicit_fraction() + r.tfidf_fraction())).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn idf_scaling_preserves_argmax(scale in 0.01f64..100.0, words in proptest::collection::vec("[a-z]{2,8}", 1..6)) {
            let cat = HsCatalog::bundled();
            let idx = build_index(&cat).unwrap();
            let mut scaled = idx.clone();
            scaled.idf.iter_mut().for_each(|x| *x *= scale);
            for v in &mut scaled.vectors {
                *v = normalize(v.iter().map(|&(i, x)| (i, x * scale)).collect());
            }
            let desc = words.join(" ") + " frozen fish cotton";
            prop_assert_eq!(classify(&desc, &idx, 0.0).chapter, classify(&desc, &scaled, 0.0).chapter);
        }
    }
}
