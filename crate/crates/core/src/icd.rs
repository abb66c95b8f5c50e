//! ICD-10-GM diagnosis codes and their chapter grouping.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A normalized ICD-10-GM code: letter, two-digit category, optional
/// subcode characters. Stored without the dot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IcdCode(String);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed ICD-10 code `{0}`")]
pub struct MalformedCode(pub String);

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("code {0} belongs to no ICD-10-GM chapter")]
pub struct UnknownCode(pub Category);

const MAX_SUBCODE_LEN: usize = 4;

impl IcdCode {
    /// Normalizes (drops dots and whitespace, upper-cases) and checks the
    /// `letter digit digit [subcode]` shape.
    pub fn parse(text: &str) -> Result<IcdCode, MalformedCode> {
        let normalized: String =
            text.chars().filter(|c| *c != '.' && !c.is_whitespace()).map(|c| c.to_ascii_uppercase()).collect();
        let b = normalized.as_bytes();
        let well_formed = b.len() >= 3
            && b.len() <= 3 + MAX_SUBCODE_LEN
            && b[0].is_ascii_uppercase()
            && b[1].is_ascii_digit()
            && b[2].is_ascii_digit()
            && b[3..].iter().all(|c| c.is_ascii_alphanumeric() || *c == b'-');
        if well_formed {
            Ok(IcdCode(normalized))
        } else {
            Err(MalformedCode(text.to_string()))
        }
    }

    pub fn letter(&self) -> char {
        self.0.as_bytes()[0] as char
    }

    pub fn category(&self) -> Category {
        let b = self.0.as_bytes();
        Category { letter: b[0], number: (b[1] - b'0') * 10 + (b[2] - b'0') }
    }

    pub fn subcode(&self) -> &str {
        &self.0[3..]
    }

    /// Normalized form without the dot, e.g. `I210`.
    pub fn as_normalized(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.subcode().is_empty() {
            f.write_str(&self.0)
        } else {
            write!(f, "{}.{}", &self.0[..3], self.subcode())
        }
    }
}

/// Three-character category such as `I21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category {
    pub letter: u8,
    pub number: u8,
}

impl Category {
    pub fn new(letter: char, number: u8) -> Option<Category> {
        (letter.is_ascii_uppercase() && number < 100).then_some(Category { letter: letter as u8, number })
    }

    fn ordinal(self) -> u32 {
        u32::from(self.letter - b'A') * 100 + u32::from(self.number)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.letter as char, self.number)
    }
}

/// ICD-10-GM chapter, 1..=22.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Chapter(u8);

impl Chapter {
    pub fn new(index: u8) -> Option<Chapter> {
        (1..=22).contains(&index).then_some(Chapter(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Chapter {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Chapter::new(v).ok_or_else(|| format!("chapter {v} outside 1..=22"))
    }
}

impl From<Chapter> for u8 {
    fn from(c: Chapter) -> u8 {
        c.0
    }
}

impl fmt::Display for Chapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// First and last category of each chapter (ICD-10-GM 2019 chapter index).
/// Gaps between ranges (D49, D91-D99, E91-E99, ...) belong to no chapter.
pub const CHAPTER_RANGES: [(&str, &str, u8); 22] = [
    ("A00", "B99", 1),
    ("C00", "D48", 2),
    ("D50", "D90", 3),
    ("E00", "E90", 4),
    ("F00", "F99", 5),
    ("G00", "G99", 6),
    ("H00", "H59", 7),
    ("H60", "H95", 8),
    ("I00", "I99", 9),
    ("J00", "J99", 10),
    ("K00", "K93", 11),
    ("L00", "L99", 12),
    ("M00", "M99", 13),
    ("N00", "N99", 14),
    ("O00", "O99", 15),
    ("P00", "P96", 16),
    ("Q00", "Q99", 17),
    ("R00", "R99", 18),
    ("S00", "T98", 19),
    ("U00", "U99", 22),
    ("V01", "Y84", 20),
    ("Z00", "Z99", 21),
];

fn ordinal_of(category: &str) -> u32 {
    let b = category.as_bytes();
    Category { letter: b[0], number: (b[1] - b'0') * 10 + (b[2] - b'0') }.ordinal()
}

/// Lookup from category ordinal (letter * 100 + number) to chapter; 0 = none.
fn chapter_lookup() -> &'static [u8; 2600] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[u8; 2600]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u8; 2600];
        for (first, last, chapter) in CHAPTER_RANGES {
            for slot in &mut t[ordinal_of(first) as usize..=ordinal_of(last) as usize] {
                *slot = chapter;
            }
        }
        t
    })
}

pub fn chapter_of_category(category: Category) -> Result<Chapter, UnknownCode> {
    match chapter_lookup()[category.ordinal() as usize] {
        0 => Err(UnknownCode(category)),
        c => Ok(Chapter(c)),
    }
}

pub fn chapter_of(code: &IcdCode) -> Result<Chapter, UnknownCode> {
    chapter_of_category(code.category())
}

/// Unordered chapter pair, stored sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChapterPair {
    pub low: Chapter,
    pub high: Chapter,
}

impl fmt::Display for ChapterPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.low, self.high)
    }
}

pub fn pair_key(a: Chapter, b: Chapter) -> ChapterPair {
    ChapterPair { low: a.min(b), high: a.max(b) }
}

/// The chapter table as CSV (`range_start,range_end,chapter`), in chapter order.
pub fn chapter_table_csv() -> String {
    let mut rows: Vec<_> = CHAPTER_RANGES.to_vec();
    rows.sort_by_key(|r| r.2);
    let mut out = String::from("range_start,range_end,chapter\n");
    for (first, last, chapter) in rows {
        out.push_str(&format!("{first},{last},{chapter}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chapter(code: &str) -> Result<Chapter, UnknownCode> {
        chapter_of(&IcdCode::parse(code).unwrap())
    }

    #[test]
    fn circulatory_and_mental_chapters() {
        assert_eq!(chapter("I21").unwrap().index(), 9);
        assert_eq!(chapter("F10").unwrap().index(), 5);
        assert_eq!(chapter("S72.01").unwrap().index(), 19);
        assert_eq!(chapter("T98").unwrap().index(), 19);
        assert_eq!(chapter("U07.1").unwrap().index(), 22);
    }

    #[test]
    fn gaps_are_unknown() {
        for code in ["D49", "D91", "E99", "H99", "K95", "P97", "T99", "V00", "Y85"] {
            assert!(chapter(code).is_err(), "{code} should be unknown");
        }
        assert_eq!(chapter("D90").unwrap().index(), 3);
    }

    #[test]
    fn normalization_strips_dots_and_whitespace() {
        let a = IcdCode::parse(" i21.0 ").unwrap();
        let b = IcdCode::parse("I210").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "I21.0");
        assert_eq!(a.as_normalized(), "I210");
        assert!(IcdCode::parse("I2").is_err());
        assert!(IcdCode::parse("121").is_err());
        assert!(IcdCode::parse("I21.01234").is_err());
        assert!(IcdCode::parse("").is_err());
    }

    #[test]
    fn pair_key_sorts() {
        let c = |i| Chapter::new(i).unwrap();
        assert_eq!(pair_key(c(19), c(5)).to_string(), "[5, 19]");
        assert_eq!(pair_key(c(9), c(9)).to_string(), "[9, 9]");
        assert_eq!(pair_key(c(2), c(21)), ChapterPair { low: c(2), high: c(21) });
    }

    #[test]
    fn ranges_are_disjoint() {
        let mut covered = [0u8; 2600];
        for (first, last, _) in CHAPTER_RANGES {
            for o in ordinal_of(first)..=ordinal_of(last) {
                covered[o as usize] += 1;
            }
        }
        assert!(covered.iter().all(|&n| n <= 1));
        let chapters: std::collections::BTreeSet<u8> = CHAPTER_RANGES.iter().map(|r| r.2).collect();
        assert_eq!(chapters.len(), 22);
    }

    #[test]
    fn table_csv_lists_all_chapters_in_order() {
        let csv = chapter_table_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 23);
        assert_eq!(lines[1], "A00,B99,1");
        assert_eq!(lines[22], "U00,U99,22");
    }

    proptest! {
        #[test]
        fn pair_key_commutative_and_idempotent(a in 1u8..=22, b in 1u8..=22) {
            let (a, b) = (Chapter::new(a).unwrap(), Chapter::new(b).unwrap());
            let k = pair_key(a, b);
            prop_assert_eq!(k, pair_key(b, a));
            prop_assert_eq!(pair_key(k.low, k.high), k);
            prop_assert!(k.low <= k.high);
        }
    }
}
