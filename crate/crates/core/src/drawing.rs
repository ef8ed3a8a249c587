//! Strokes, drawings and ingestion of simplified-drawing NDJSON files.
//!
//! Each input line holds one drawing:
//! `{"key_id": "...", "word": "cat", "recognized": true, "drawing": [[[x...], [y...]], ...]}`.
//! Coordinates live in the 0..=255 canvas space, so points are stored as bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrawingError {
    #[error("malformed record: field `{field}`: {reason}")]
    Parse { field: String, reason: String },
    #[error("invalid drawing: {0}")]
    Validation(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DrawingError>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn parse_err(field: impl Into<String>, reason: impl Into<String>) -> DrawingError {
    DrawingError::Parse {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u8,
    pub y: u8,
}

impl Point {
    pub const fn new(x: u8, y: u8) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A continuous pen movement with at least two points. Ingested strokes never
/// hold two equal consecutive points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    /// Builds a stroke, collapsing consecutive duplicate points first.
    pub fn new(points: Vec<Point>) -> Result<Self, DrawingError> {
        let mut points = points;
        points.dedup();
        if points.len() < 2 {
            return Err(DrawingError::Validation(format!(
                "stroke has {} distinct point(s), need at least 2",
                points.len()
            )));
        }
        Ok(Self { points })
    }

    /// Output of the simplifier: a subsequence of an existing stroke that keeps
    /// both endpoints. A closed stroke may collapse to `[a, a]`.
    pub(crate) fn from_kept(points: Vec<Point>) -> Self {
        debug_assert!(points.len() >= 2);
        Self { points }
    }

    pub fn from_coords(coords: &[(u8, u8)]) -> Result<Self, DrawingError> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }
}

impl TryFrom<Vec<Point>> for Stroke {
    type Error = DrawingError;

    fn try_from(points: Vec<Point>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<Stroke> for Vec<Point> {
    fn from(s: Stroke) -> Self {
        s.points
    }
}

/// Lowercase concept label, e.g. `cat` or `the great wall of china`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptName(String);

impl ConceptName {
    pub fn new(name: &str) -> Self {
        Self(name.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConceptName {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drawing {
    pub id: String,
    pub concept: ConceptName,
    pub recognized: bool,
    strokes: Vec<Stroke>,
}

impl Drawing {
    pub fn new(
        id: impl Into<String>,
        concept: ConceptName,
        recognized: bool,
        strokes: Vec<Stroke>,
    ) -> Result<Self, DrawingError> {
        if strokes.is_empty() {
            return Err(DrawingError::Validation("drawing has no strokes".into()));
        }
        Ok(Self {
            id: id.into(),
            concept,
            recognized,
            strokes,
        })
    }

    /// Builds a drawing whose id is derived from its content.
    pub fn with_content_id(
        concept: ConceptName,
        recognized: bool,
        strokes: Vec<Stroke>,
    ) -> Result<Self, DrawingError> {
        let id = content_id(&concept, &strokes);
        Self::new(id, concept, recognized, strokes)
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn segment_count(&self) -> usize {
        segment_count(self)
    }

    /// Same drawing with different strokes (used by the simplifier).
    pub fn with_strokes(&self, strokes: Vec<Stroke>) -> Self {
        Self {
            id: self.id.clone(),
            concept: self.concept.clone(),
            recognized: self.recognized,
            strokes,
        }
    }

    /// Stable hash of the stroke geometry only.
    pub fn geometry_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.strokes {
            for p in s.points() {
                hasher.update([p.x, p.y]);
            }
            hasher.update(b";");
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Serializes back to one line of the dataset format.
    pub fn to_dataset_line(&self) -> String {
        let drawing: Vec<[Vec<u8>; 2]> = self
            .strokes
            .iter()
            .map(|s| {
                [
                    s.points().iter().map(|p| p.x).collect(),
                    s.points().iter().map(|p| p.y).collect(),
                ]
            })
            .collect();
        serde_json::json!({
            "key_id": self.id,
            "word": self.concept.as_str(),
            "recognized": self.recognized,
            "drawing": drawing,
        })
        .to_string()
    }
}

fn content_id(concept: &ConceptName, strokes: &[Stroke]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(concept.as_str().as_bytes());
    hasher.update(b"\n");
    for s in strokes {
        for p in s.points() {
            hasher.update([p.x, p.y]);
        }
        hasher.update(b";");
    }
    format!("h{}", hex::encode(&hasher.finalize()[..8]))
}

/// Number of straight segments across all strokes.
pub fn segment_count(d: &Drawing) -> usize {
    d.strokes.iter().map(Stroke::segment_count).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptCorpus {
    pub concept: ConceptName,
    pub drawings: Vec<Drawing>,
}

fn parse_coord(v: &Value, field: &str) -> Result<u8, DrawingError> {
    let n = v
        .as_i64()
        .ok_or_else(|| parse_err(field, format!("expected integer, got {v}")))?;
    u8::try_from(n).map_err(|_| {
        DrawingError::Validation(format!("{field}: coordinate {n} outside 0..=255"))
    })
}

/// Parses one NDJSON record into a normalized drawing.
pub fn parse_dataset_line(line: &str) -> Result<Drawing, DrawingError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| parse_err("<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("<record>", "expected a JSON object"))?;

    let word = obj
        .get("word")
        .ok_or_else(|| parse_err("word", "missing"))?
        .as_str()
        .ok_or_else(|| parse_err("word", "expected string"))?;
    if word.trim().is_empty() {
        return Err(parse_err("word", "empty concept name"));
    }
    let concept = ConceptName::new(word);

    let recognized = match obj.get("recognized") {
        Some(Value::Bool(b)) => *b,
        Some(other) => return Err(parse_err("recognized", format!("expected boolean, got {other}"))),
        None => return Err(parse_err("recognized", "missing")),
    };

    let raw = obj
        .get("drawing")
        .ok_or_else(|| parse_err("drawing", "missing"))?
        .as_array()
        .ok_or_else(|| parse_err("drawing", "expected list of strokes"))?;
    let mut strokes = Vec::with_capacity(raw.len());
    for (i, stroke) in raw.iter().enumerate() {
        let field = format!("drawing[{i}]");
        let pair = stroke
            .as_array()
            .filter(|a| a.len() >= 2)
            .ok_or_else(|| parse_err(&field, "expected [xs, ys]"))?;
        let xs = pair[0]
            .as_array()
            .ok_or_else(|| parse_err(format!("{field}[0]"), "expected integer list"))?;
        let ys = pair[1]
            .as_array()
            .ok_or_else(|| parse_err(format!("{field}[1]"), "expected integer list"))?;
        if xs.len() != ys.len() {
            return Err(parse_err(
                &field,
                format!("x/y length mismatch ({} vs {})", xs.len(), ys.len()),
            ));
        }
        let points = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                Ok(Point::new(
                    parse_coord(x, &format!("{field}[0]"))?,
                    parse_coord(y, &format!("{field}[1]"))?,
                ))
            })
            .collect::<Result<Vec<_>, DrawingError>>()?;
        let stroke = Stroke::new(points)
            .map_err(|e| DrawingError::Validation(format!("{field}: {e}")))?;
        strokes.push(stroke);
    }

    let id = match obj.get("key_id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Null) | None => content_id(&concept, &strokes),
        Some(Value::String(_)) => content_id(&concept, &strokes),
        Some(other) => return Err(parse_err("key_id", format!("expected string, got {other}"))),
    };
    Drawing::new(id, concept, recognized, strokes)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub records: usize,
    pub skipped_unknown_concept: usize,
    pub skipped_unrecognized: usize,
}

/// Reads a dataset file and groups drawings by concept (alphabetical order).
///
/// An empty `concept_filter` accepts every concept. Records of other concepts
/// are counted in [`LoadStats::skipped_unknown_concept`].
pub fn load_corpus(
    path: &Path,
    concept_filter: &BTreeSet<ConceptName>,
    recognized_only: bool,
) -> Result<Vec<ConceptCorpus>, DrawingError> {
    load_corpus_with_stats(path, concept_filter, recognized_only).map(|(c, _)| c)
}

pub fn load_corpus_with_stats(
    path: &Path,
    concept_filter: &BTreeSet<ConceptName>,
    recognized_only: bool,
) -> Result<(Vec<ConceptCorpus>, LoadStats), DrawingError> {
    let reader = BufReader::new(File::open(path)?);
    let mut groups: BTreeMap<ConceptName, Vec<Drawing>> = BTreeMap::new();
    let mut stats = LoadStats::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let drawing = parse_dataset_line(&line).map_err(|e| DrawingError::AtLine {
            line: n + 1,
            source: Box::new(e),
        })?;
        stats.records += 1;
        if !concept_filter.is_empty() && !concept_filter.contains(&drawing.concept) {
            stats.skipped_unknown_concept += 1;
            continue;
        }
        if recognized_only && !drawing.recognized {
            stats.skipped_unrecognized += 1;
            continue;
        }
        groups.entry(drawing.concept.clone()).or_default().push(drawing);
    }
    if stats.skipped_unknown_concept > 0 {
        log::warn!(
            "{}: skipped {} record(s) of concepts outside the configured set",
            path.display(),
            stats.skipped_unknown_concept
        );
    }
    let corpora = groups
        .into_iter()
        .map(|(concept, drawings)| ConceptCorpus { concept, drawings })
        .collect();
    Ok((corpora, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const CAT: &str = r#"{"key_id":"cat-a","word":"cat","recognized":true,"drawing":[[[181,121,14,0,42,73,136,236,242,255,218,161,141],[30,12,95,161,255,213,226,194,230,156,38,2,15]],[[118,76],[92,118]],[[119,87],[81,76]],[[112,102],[70,57]],[[146,192],[98,107]],[[151,203],[76,86]],[[154,175],[53,51]],[[135,137,123],[138,71,81]]]}"#;

    #[test]
    fn minimal_record() {
        let d = parse_dataset_line(
            r#"{"key_id":"1","word":"line","recognized":true,"drawing":[[[0,10],[0,0]]]}"#,
        )
        .unwrap();
        assert_eq!(d.strokes().len(), 1);
        assert_eq!(segment_count(&d), 1);
        assert_eq!(d.id, "1");
    }

    #[test]
    fn cat_listing_counts() {
        let d = parse_dataset_line(CAT).unwrap();
        let lens: Vec<usize> = d.strokes().iter().map(Stroke::len).collect();
        assert_eq!(lens, vec![13, 2, 2, 2, 2, 2, 2, 3]);
        assert_eq!(segment_count(&d), 20);
    }

    #[test]
    fn single_point_stroke_rejected() {
        let err = parse_dataset_line(
            r#"{"word":"cat","recognized":true,"drawing":[[[5],[5]]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, DrawingError::Validation(_)), "{err}");
    }

    #[test]
    fn duplicate_points_collapse() {
        let d = parse_dataset_line(
            r#"{"word":"cat","recognized":true,"drawing":[[[1,1,5,5,9],[1,1,2,2,3]]]}"#,
        )
        .unwrap();
        assert_eq!(d.strokes()[0].len(), 3);
        // a stroke of only repeated points has nothing left to draw
        assert!(parse_dataset_line(
            r#"{"word":"cat","recognized":true,"drawing":[[[4,4],[7,7]]]}"#
        )
        .is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (r#"{"recognized":true,"drawing":[]}"#, "word"),
            (r#"{"word":"cat","drawing":[]}"#, "recognized"),
            (r#"{"word":"cat","recognized":"yes","drawing":[]}"#, "recognized"),
            (r#"{"word":"cat","recognized":true}"#, "drawing"),
            (r#"{"word":"cat","recognized":true,"drawing":[[[1,2],[1]]]}"#, "drawing[0]"),
            (r#"{"word":"cat","recognized":true,"drawing":[[[1,"a"],[1,2]]]}"#, "drawing[0][0]"),
        ];
        for (line, field) in cases {
            match parse_dataset_line(line) {
                Err(DrawingError::Parse { field: f, .. }) => assert_eq!(f, field, "{line}"),
                other => panic!("{line}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn out_of_range_rejected_not_clamped() {
        let err = parse_dataset_line(
            r#"{"word":"cat","recognized":true,"drawing":[[[0,256],[0,0]]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, DrawingError::Validation(_)));
        assert!(parse_dataset_line(
            r#"{"word":"cat","recognized":true,"drawing":[[[0,-1],[0,0]]]}"#
        )
        .is_err());
    }

    #[test]
    fn empty_drawing_rejected() {
        assert!(parse_dataset_line(r#"{"word":"cat","recognized":true,"drawing":[]}"#).is_err());
    }

    #[test]
    fn missing_key_uses_content_hash() {
        let line = r#"{"word":"Cat","recognized":true,"drawing":[[[0,10],[0,0]]]}"#;
        let a = parse_dataset_line(line).unwrap();
        let b = parse_dataset_line(line).unwrap();
        assert_eq!(a.id, b.id);
        assert!(a.id.starts_with('h'));
        assert_eq!(a.concept.as_str(), "cat");
    }

    #[test]
    fn serialize_roundtrip() {
        let d = parse_dataset_line(CAT).unwrap();
        let again = parse_dataset_line(&d.to_dataset_line()).unwrap();
        assert_eq!(d, again);
    }

    fn write_file(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_filters_recognized() {
        let f = write_file(&[
            r#"{"key_id":"a","word":"cat","recognized":true,"drawing":[[[0,10],[0,0]]]}"#,
            r#"{"key_id":"b","word":"cat","recognized":false,"drawing":[[[0,10],[0,0]]]}"#,
            r#"{"key_id":"c","word":"cat","recognized":true,"drawing":[[[0,10],[0,5]]]}"#,
        ]);
        let all = load_corpus(f.path(), &BTreeSet::new(), true).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].drawings.len(), 2);
        assert!(all[0].drawings.iter().all(|d| d.recognized));
    }

    #[test]
    fn load_empty_file() {
        let f = write_file(&[]);
        assert!(load_corpus(f.path(), &BTreeSet::new(), false).unwrap().is_empty());
    }

    #[test]
    fn load_concept_filter() {
        let f = write_file(&[
            r#"{"key_id":"a","word":"cat","recognized":true,"drawing":[[[0,10],[0,0]]]}"#,
            r#"{"key_id":"b","word":"house","recognized":true,"drawing":[[[0,10],[0,0]]]}"#,
        ]);
        let filter: BTreeSet<_> = [ConceptName::new("cat")].into();
        let (c, stats) = load_corpus_with_stats(f.path(), &filter, false).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].concept.as_str(), "cat");
        assert_eq!(stats.skipped_unknown_concept, 1);
    }

    #[test]
    fn load_reports_line_number() {
        let f = write_file(&[
            r#"{"key_id":"a","word":"cat","recognized":true,"drawing":[[[0,10],[0,0]]]}"#,
            "not json",
        ]);
        match load_corpus(f.path(), &BTreeSet::new(), false) {
            Err(DrawingError::AtLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
