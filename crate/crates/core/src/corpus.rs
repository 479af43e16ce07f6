//! UniMorph-style corpus handling: parsing inflection triples, building
//! symbol vocabularies, and encoding samples for the models.
//!
//! Source sequences interleave two symbol kinds: the characters of the lemma
//! followed by the tags of the morphosyntactic description (MSD). Target
//! sequences contain character symbols only. Tag symbols never collide with
//! character symbols even when their spellings overlap (the tag `GEN` is a
//! different symbol from the character sequence `G`, `E`, `N`).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Dense symbol identifier into a [`Vocabulary`].
pub type SymbolId = u32;

/// Beginning-of-sequence marker, fixed id.
pub const BOS: SymbolId = 0;
/// End-of-sequence marker, fixed id.
pub const EOS: SymbolId = 1;
/// Unknown-symbol fallback, fixed id.
pub const UNK: SymbolId = 2;
/// Padding symbol, fixed id.
pub const PAD: SymbolId = 3;

const RESERVED_SPELLINGS: [&str; 4] = ["<bos>", "<eos>", "<unk>", "<pad>"];

/// What a symbol stands for. Lookup is injective per kind, not globally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Reserved,
    Character,
    Tag,
}

impl SymbolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::Reserved => "reserved",
            SymbolKind::Character => "char",
            SymbolKind::Tag => "tag",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "reserved" => Some(SymbolKind::Reserved),
            "char" => Some(SymbolKind::Character),
            "tag" => Some(SymbolKind::Tag),
            _ => None,
        }
    }
}

/// A vocabulary entry: dense id plus kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub id: SymbolId,
    pub kind: SymbolKind,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected at least 3 tab-separated fields, found {fields}")]
    MalformedLine { line: usize, fields: usize },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("cannot build a vocabulary from an empty sample list")]
    EmptyCorpus,
    #[error("vocabulary file line {line}: {msg}")]
    VocabFormat { line: usize, msg: String },
}

/// One parsed inflection triple: lemma, inflected form, MSD features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub lemma: String,
    pub target: String,
    pub msd: Vec<String>,
}

/// A sample encoded against a vocabulary. `x` is the lemma characters
/// followed by the MSD tags; `y` is the target characters. Neither carries
/// BOS or EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub x: Vec<SymbolId>,
    pub y: Vec<SymbolId>,
}

/// Training-set size bucket. `low` is under 1000 samples, `high` is 10000 or
/// more, `mid` covers the gap between the two published cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceClass {
    Low,
    Mid,
    High,
}

impl ResourceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceClass::Low => "low",
            ResourceClass::Mid => "mid",
            ResourceClass::High => "high",
        }
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classify a training-set size into a [`ResourceClass`].
pub fn classify_resource(train_size: usize) -> ResourceClass {
    if train_size < 1000 {
        ResourceClass::Low
    } else if train_size >= 10000 {
        ResourceClass::High
    } else {
        ResourceClass::Mid
    }
}

/// Symbol table over characters, MSD tags, and the four reserved markers.
///
/// Ids are dense in `[0, len)`. BOS, EOS, UNK, PAD occupy ids 0 through 3 in
/// that order. The remaining order is deterministic: characters in first-seen
/// order, then tags in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, SymbolKind)>,
    index: HashMap<(String, SymbolKind), SymbolId>,
}

impl Vocabulary {
    fn with_reserved() -> Self {
        let mut v = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for spelling in RESERVED_SPELLINGS {
            v.insert(spelling.to_string(), SymbolKind::Reserved);
        }
        v
    }

    fn insert(&mut self, spelling: String, kind: SymbolKind) -> SymbolId {
        if let Some(&id) = self.index.get(&(spelling.clone(), kind)) {
            return id;
        }
        let id = self.entries.len() as SymbolId;
        self.entries.push((spelling.clone(), kind));
        self.index.insert((spelling, kind), id);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Id for a spelling of the given kind, if present.
    pub fn lookup(&self, spelling: &str, kind: SymbolKind) -> Option<SymbolId> {
        self.index.get(&(spelling.to_string(), kind)).copied()
    }

    /// Id for a character, falling back to [`UNK`].
    pub fn char_id(&self, c: char) -> SymbolId {
        self.lookup(&c.to_string(), SymbolKind::Character)
            .unwrap_or(UNK)
    }

    /// Id for an MSD tag, falling back to [`UNK`].
    pub fn tag_id(&self, tag: &str) -> SymbolId {
        self.lookup(tag, SymbolKind::Tag).unwrap_or(UNK)
    }

    pub fn spelling(&self, id: SymbolId) -> Option<&str> {
        self.entries.get(id as usize).map(|(s, _)| s.as_str())
    }

    pub fn kind(&self, id: SymbolId) -> Option<SymbolKind> {
        self.entries.get(id as usize).map(|&(_, k)| k)
    }

    pub fn symbol(&self, id: SymbolId) -> Option<Symbol> {
        self.kind(id).map(|kind| Symbol { id, kind })
    }

    /// Render a target symbol sequence back to text. Reserved symbols render
    /// as their angle-bracket spellings.
    pub fn render(&self, ids: &[SymbolId]) -> String {
        ids.iter()
            .map(|&id| self.spelling(id).unwrap_or("<bad>"))
            .collect()
    }

    /// Serialize in the versioned `vocab v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("vocab v1\n");
        for (id, (spelling, kind)) in self.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", id, kind.as_str(), spelling));
        }
        out
    }

    /// Parse the `vocab v1` text format, validating id density and the
    /// reserved block.
    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "vocab v1")) => {}
            other => {
                return Err(CorpusError::VocabFormat {
                    line: 1,
                    msg: format!(
                        "expected header `vocab v1`, found {:?}",
                        other.map(|(_, l)| l)
                    ),
                })
            }
        }
        let mut v = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (id, kind, spelling) = match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(kind), Some(spelling)) => (id, kind, spelling),
                _ => {
                    return Err(CorpusError::VocabFormat {
                        line: line_no,
                        msg: "expected `id\\tkind\\tspelling`".into(),
                    })
                }
            };
            let id: usize = id.parse().map_err(|_| CorpusError::VocabFormat {
                line: line_no,
                msg: format!("bad id {:?}", id),
            })?;
            if id != v.entries.len() {
                return Err(CorpusError::VocabFormat {
                    line: line_no,
                    msg: format!("non-dense id {} (expected {})", id, v.entries.len()),
                });
            }
            let kind = SymbolKind::parse(kind).ok_or_else(|| CorpusError::VocabFormat {
                line: line_no,
                msg: format!("unknown kind {:?}", kind),
            })?;
            v.insert(spelling.to_string(), kind);
        }
        for (i, expect) in RESERVED_SPELLINGS.iter().enumerate() {
            if v.entries.get(i).map(|(s, k)| (s.as_str(), *k))
                != Some((*expect, SymbolKind::Reserved))
            {
                return Err(CorpusError::VocabFormat {
                    line: i + 2,
                    msg: format!("reserved symbol {} must be {:?}", i, expect),
                });
            }
        }
        Ok(v)
    }
}

/// Parse a line-oriented UniMorph document: `lemma TAB form TAB feat1;feat2`.
///
/// Blank lines are skipped, fields are trimmed and NFC-normalized, extra
/// columns past the third are ignored. Errors carry 1-based line numbers.
pub fn parse_unimorph(text: &str) -> Result<Vec<RawSample>, CorpusError> {
    let mut samples = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw_line.split('\t').collect();
        if fields.len() < 3 {
            return Err(CorpusError::MalformedLine {
                line,
                fields: fields.len(),
            });
        }
        let lemma: String = fields[0].trim().nfc().collect();
        let target: String = fields[1].trim().nfc().collect();
        if lemma.is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                field: "lemma",
            });
        }
        if target.is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                field: "form",
            });
        }
        let msd: Vec<String> = fields[2]
            .split(';')
            .map(|f| f.trim().nfc().collect::<String>())
            .filter(|f| !f.is_empty())
            .collect();
        samples.push(RawSample { lemma, target, msd });
    }
    Ok(samples)
}

/// Build a vocabulary covering every character and MSD feature in `samples`.
///
/// Ordering is deterministic: the reserved block, then characters in
/// first-seen order (lemma before target within each sample), then tags in
/// first-seen order.
pub fn build_vocabulary(samples: &[RawSample]) -> Result<Vocabulary, CorpusError> {
    if samples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut v = Vocabulary::with_reserved();
    for s in samples {
        for c in s.lemma.chars().chain(s.target.chars()) {
            v.insert(c.to_string(), SymbolKind::Character);
        }
    }
    for s in samples {
        for tag in &s.msd {
            v.insert(tag.clone(), SymbolKind::Tag);
        }
    }
    Ok(v)
}

/// Encode one sample: `x` is lemma characters then MSD tags, `y` is target
/// characters. Symbols absent from the vocabulary map to [`UNK`]; the second
/// return value counts UNK substitutions in the target.
pub fn encode_sample(v: &Vocabulary, s: &RawSample) -> (EncodedSample, usize) {
    let mut x = Vec::with_capacity(s.lemma.chars().count() + s.msd.len());
    for c in s.lemma.chars() {
        x.push(v.char_id(c));
    }
    for tag in &s.msd {
        x.push(v.tag_id(tag));
    }
    let mut unknown_targets = 0;
    let y: Vec<SymbolId> = s
        .target
        .chars()
        .map(|c| {
            let id = v.char_id(c);
            if id == UNK {
                unknown_targets += 1;
            }
            id
        })
        .collect();
    (EncodedSample { x, y }, unknown_targets)
}

/// Encode a whole sample list, summing target-side UNK substitutions.
pub fn encode_all(v: &Vocabulary, samples: &[RawSample]) -> (Vec<EncodedSample>, usize) {
    let mut total_unknown = 0;
    let encoded = samples
        .iter()
        .map(|s| {
            let (e, unk) = encode_sample(v, s);
            total_unknown += unk;
            e
        })
        .collect();
    (encoded, total_unknown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bruder() -> &'static str {
        "Bruder\tBrüder\tGEN;PL"
    }

    #[test]
    fn parses_the_inflection_triple() {
        let samples = parse_unimorph(bruder()).unwrap();
        assert_eq!(
            samples,
            vec![RawSample {
                lemma: "Bruder".into(),
                target: "Brüder".into(),
                msd: vec!["GEN".into(), "PL".into()],
            }]
        );
    }

    #[test]
    fn empty_features_give_empty_msd() {
        let samples = parse_unimorph("a\ta\t").unwrap();
        assert_eq!(
            samples,
            vec![RawSample {
                lemma: "a".into(),
                target: "a".into(),
                msd: vec![],
            }]
        );
    }

    #[test]
    fn two_fields_is_a_parse_error_with_line_number() {
        let text = "good\tgood\tN\nbad\tline\n";
        match parse_unimorph(text) {
            Err(CorpusError::MalformedLine { line: 2, fields: 2 }) => {}
            other => panic!("unexpected: {:?}", other),
        }
    }

    #[test]
    fn empty_lemma_is_an_error() {
        match parse_unimorph(" \tform\tN") {
            Err(CorpusError::EmptyField {
                line: 1,
                field: "lemma",
            }) => {}
            other => panic!("unexpected: {:?}", other),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let text = "\na\ta\tN\n\n\nb\tb\tN\n";
        assert_eq!(parse_unimorph(text).unwrap().len(), 2);
    }

    #[test]
    fn nfc_applies_on_ingest() {
        // u + combining diaeresis normalizes to a single code point.
        let decomposed = "Bruder\tBru\u{0308}der\tGEN;PL";
        let samples = parse_unimorph(decomposed).unwrap();
        assert_eq!(samples[0].target, "Brüder");
        assert_eq!(samples[0].target.chars().count(), 6);
    }

    #[test]
    fn bruder_vocabulary_has_twelve_symbols() {
        // 4 reserved + characters {B,r,u,d,e,ü} + tags {GEN,PL}.
        let samples = parse_unimorph(bruder()).unwrap();
        let v = build_vocabulary(&samples).unwrap();
        assert_eq!(v.len(), 12);
        for c in ['B', 'r', 'u', 'd', 'e', 'ü'] {
            assert!(v.lookup(&c.to_string(), SymbolKind::Character).is_some());
        }
        for t in ["GEN", "PL"] {
            assert!(v.lookup(t, SymbolKind::Tag).is_some());
        }
    }

    #[test]
    fn single_identity_sample_gives_five_symbols() {
        let samples = parse_unimorph("a\ta\t").unwrap();
        let v = build_vocabulary(&samples).unwrap();
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn vocabulary_order_is_deterministic() {
        let text = "Bruder\tBrüder\tGEN;PL\nKind\tKinder\tNOM;PL\n";
        let a = build_vocabulary(&parse_unimorph(text).unwrap()).unwrap();
        let b = build_vocabulary(&parse_unimorph(text).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_vocabulary(&[]),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn tag_and_character_spellings_do_not_collide() {
        let text = "GEN\tGEN\tGEN";
        let samples = parse_unimorph(text).unwrap();
        let v = build_vocabulary(&samples).unwrap();
        let tag = v.lookup("GEN", SymbolKind::Tag).unwrap();
        assert!(v.lookup("GEN", SymbolKind::Character).is_none());
        let (enc, _) = encode_sample(&v, &samples[0]);
        assert_eq!(enc.x.len(), 4); // G, E, N characters plus the GEN tag
        assert_eq!(enc.x[3], tag);
        assert!(!enc.y.contains(&tag));
    }

    #[test]
    fn bruder_encodes_to_eight_and_six() {
        let samples = parse_unimorph(bruder()).unwrap();
        let v = build_vocabulary(&samples).unwrap();
        let (enc, unk) = encode_sample(&v, &samples[0]);
        assert_eq!(enc.x.len(), 8);
        assert_eq!(enc.y.len(), 6);
        assert_eq!(unk, 0);
        assert_eq!(v.render(&enc.y), "Brüder");
    }

    #[test]
    fn identity_sample_encodes_to_single_ids() {
        let samples = parse_unimorph("a\ta\t").unwrap();
        let v = build_vocabulary(&samples).unwrap();
        let (enc, _) = encode_sample(&v, &samples[0]);
        let a = v.lookup("a", SymbolKind::Character).unwrap();
        assert_eq!(enc.x, vec![a]);
        assert_eq!(enc.y, vec![a]);
    }

    #[test]
    fn unseen_characters_map_to_unk() {
        let train = parse_unimorph("a\ta\tN").unwrap();
        let v = build_vocabulary(&train).unwrap();
        let test = RawSample {
            lemma: "az".into(),
            target: "z".into(),
            msd: vec!["N".into()],
        };
        let (enc, unk) = encode_sample(&v, &test);
        assert_eq!(enc.x[1], UNK);
        assert_eq!(enc.y, vec![UNK]);
        assert_eq!(unk, 1);
    }

    #[test]
    fn resource_classes_follow_the_thresholds() {
        assert_eq!(classify_resource(56), ResourceClass::Low);
        assert_eq!(classify_resource(999), ResourceClass::Low);
        assert_eq!(classify_resource(1000), ResourceClass::Mid);
        assert_eq!(classify_resource(5000), ResourceClass::Mid);
        assert_eq!(classify_resource(9999), ResourceClass::Mid);
        assert_eq!(classify_resource(10000), ResourceClass::High);
    }

    #[test]
    fn vocab_text_round_trips() {
        let samples = parse_unimorph(bruder()).unwrap();
        let v = build_vocabulary(&samples).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("vocab v1\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn vocab_text_rejects_bad_header_and_sparse_ids() {
        assert!(Vocabulary::from_text("vocab v2\n").is_err());
        let bad = "vocab v1\n0\treserved\t<bos>\n2\treserved\t<eos>\n";
        assert!(Vocabulary::from_text(bad).is_err());
    }
}
