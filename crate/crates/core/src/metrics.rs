//! Bias identification statistics over an annotated manifest: artifact
//! cardinality, per-class artifact ratio, and the class ratio between the two
//! classes' artifact ratios.
//!
//! Tags are counted independently per record (a record may carry several), so
//! rows are not a partition of a class. The synthetic `none` row counts
//! records with an empty tag set.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

pub const NONE_TAG: &str = "none";

/// Normalizes a tag or class name: trimmed, lowercased.
pub fn normalize(tag: &str) -> String {
    tag.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub class_label: String,
    pub artifacts: BTreeSet<String>,
}

impl AnnotationRecord {
    pub fn new<I, S>(sample_id: impl Into<String>, class_label: &str, artifacts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            sample_id: sample_id.into(),
            class_label: normalize(class_label),
            artifacts: artifacts
                .into_iter()
                .map(|t| normalize(t.as_ref()))
                .filter(|t| !t.is_empty() && t != NONE_TAG)
                .collect(),
        }
    }

    /// True when the record carries `tag`; `none` matches the empty set.
    pub fn has(&self, tag: &str) -> bool {
        if tag == NONE_TAG {
            self.artifacts.is_empty()
        } else {
            self.artifacts.contains(tag)
        }
    }
}

/// Annotated dataset with its declared class list (in column order) and an
/// optional declared tag vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    classes: Vec<String>,
    vocabulary: Option<Vec<String>>,
    records: Vec<AnnotationRecord>,
}

impl Manifest {
    /// Validates sample-id uniqueness, class membership and (when a
    /// vocabulary is declared) tag membership.
    pub fn new(
        classes: Vec<String>,
        vocabulary: Option<Vec<String>>,
        records: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        let classes: Vec<String> = classes.iter().map(|c| normalize(c)).collect();
        let vocabulary: Option<Vec<String>> = vocabulary.map(|v| v.iter().map(|t| normalize(t)).collect());
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(TdaError::DuplicateSample(r.sample_id.clone()));
            }
            if !classes.contains(&r.class_label) {
                return Err(TdaError::UnknownClass {
                    label: r.class_label.clone(),
                    declared: classes.clone(),
                });
            }
            if let Some(vocab) = &vocabulary {
                if let Some(tag) = r.artifacts.iter().find(|t| !vocab.contains(t)) {
                    return Err(TdaError::UnknownArtifact {
                        tag: tag.clone(),
                        vocabulary: vocab.clone(),
                    });
                }
            }
        }
        Ok(Self {
            classes,
            vocabulary,
            records,
        })
    }

    /// Builds a manifest whose classes are taken in order of first appearance.
    pub fn from_records(records: Vec<AnnotationRecord>) -> Result<Self> {
        let mut classes: Vec<String> = Vec::new();
        for r in &records {
            if !classes.contains(&r.class_label) {
                classes.push(r.class_label.clone());
            }
        }
        Self::new(classes, None, records)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        self.vocabulary.as_deref()
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_class(&self, class: &str) -> Result<String> {
        let class = normalize(class);
        if !self.classes.contains(&class) {
            return Err(TdaError::UnknownClass {
                label: class,
                declared: self.classes.clone(),
            });
        }
        Ok(class)
    }

    pub fn class_total(&self, class: &str) -> Result<usize> {
        let class = self.check_class(class)?;
        Ok(self.records.iter().filter(|r| r.class_label == class).count())
    }

    /// Distinct tags, in declared-vocabulary order or else sorted.
    pub fn tags(&self) -> Vec<String> {
        if let Some(v) = &self.vocabulary {
            return v.iter().filter(|t| t.as_str() != NONE_TAG).cloned().collect();
        }
        let set: BTreeSet<&String> = self.records.iter().flat_map(|r| r.artifacts.iter()).collect();
        set.into_iter().cloned().collect()
    }

    /// Reads the CSV manifest format:
    ///
    /// ```text
    /// # classes: malignant,benign        (optional; fixes column order)
    /// # artifacts: frame,hair,ruler      (optional; validated vocabulary)
    /// sample_id,class_label,artifacts
    /// isic_0001,malignant,frame;ruler
    /// isic_0002,benign,
    /// ```
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| TdaError::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv(mut reader: impl Read, origin: &str) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| TdaError::io(origin, e))?;
        let mut classes: Option<Vec<String>> = None;
        let mut vocabulary: Option<Vec<String>> = None;
        for line in text.lines() {
            let Some(directive) = line.trim_start().strip_prefix('#') else {
                continue;
            };
            let list = |rest: &str| -> Vec<String> {
                rest.split([',', ';'])
                    .map(normalize)
                    .filter(|s| !s.is_empty())
                    .collect()
            };
            let directive = directive.trim();
            if let Some(rest) = directive.strip_prefix("classes:") {
                classes = Some(list(rest));
            } else if let Some(rest) = directive.strip_prefix("artifacts:") {
                vocabulary = Some(list(rest));
            }
        }

        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = csv.headers()?.clone();
        let expected = ["sample_id", "class_label", "artifacts"];
        if headers.len() < 3 || headers.iter().take(3).zip(expected).any(|(h, e)| h != e) {
            return Err(TdaError::MalformedRow {
                path: origin.to_string(),
                line: 1,
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        let mut records = Vec::new();
        for row in csv.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let malformed = |message: String| TdaError::MalformedRow {
                path: origin.to_string(),
                line,
                message,
            };
            if row.len() < 2 || row.len() > 3 {
                return Err(malformed(format!("expected 3 fields, found {}", row.len())));
            }
            let sample_id = row[0].to_string();
            if sample_id.is_empty() {
                return Err(malformed("empty sample_id".into()));
            }
            if row[1].is_empty() {
                return Err(malformed("empty class_label".into()));
            }
            let tags = row.get(2).unwrap_or("");
            records.push(AnnotationRecord::new(sample_id, &row[1], tags.split(';')));
        }
        match classes {
            Some(classes) => Self::new(classes, vocabulary, records),
            None => {
                let m = Self::from_records(records)?;
                Self::new(m.classes, vocabulary, m.records)
            }
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let _ = writeln!(out, "# classes: {}", self.classes.join(","));
        if let Some(v) = &self.vocabulary {
            let _ = writeln!(out, "# artifacts: {}", v.join(","));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "class_label", "artifacts"])?;
        for r in &self.records {
            let tags: Vec<&str> = r.artifacts.iter().map(String::as_str).collect();
            w.write_record([r.sample_id.as_str(), r.class_label.as_str(), &tags.join(";")])?;
        }
        let body = w.into_inner().map_err(|e| TdaError::io(path, e.into_error()))?;
        out.push_str(&String::from_utf8_lossy(&body));
        std::fs::write(path, out).map_err(|e| TdaError::io(path, e))
    }
}

/// Number of records of `class` carrying `artifact` (`none` = empty tag set).
pub fn artifact_cardinality(manifest: &Manifest, class: &str, artifact: &str) -> Result<usize> {
    let class = manifest.check_class(class)?;
    let artifact = normalize(artifact);
    Ok(manifest
        .records
        .iter()
        .filter(|r| r.class_label == class && r.has(&artifact))
        .count())
}

/// `artifact_cardinality / |class|`.
pub fn artifact_ratio(manifest: &Manifest, class: &str, artifact: &str) -> Result<f64> {
    let total = manifest.class_total(class)?;
    if total == 0 {
        return Err(TdaError::EmptyClass {
            class: normalize(class),
        });
    }
    Ok(artifact_cardinality(manifest, class, artifact)? as f64 / total as f64)
}

/// Ratio of two artifact ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassRatio {
    Finite(f64),
    /// Numerator positive, denominator zero.
    Infinite,
    /// Both ratios zero.
    Undefined,
}

impl ClassRatio {
    pub fn value(self) -> Option<f64> {
        match self {
            ClassRatio::Finite(v) => Some(v),
            ClassRatio::Infinite => Some(f64::INFINITY),
            ClassRatio::Undefined => None,
        }
    }

    pub fn display(self) -> String {
        match self {
            ClassRatio::Finite(v) => format!("{v:.2}"),
            ClassRatio::Infinite => "inf".into(),
            ClassRatio::Undefined => "n/a".into(),
        }
    }
}

impl Serialize for ClassRatio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClassRatio::Finite(v) => s.serialize_f64(*v),
            ClassRatio::Infinite => s.serialize_str("inf"),
            ClassRatio::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for ClassRatio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
            Null(()),
        }
        Ok(match Option::<Repr>::deserialize(d)? {
            Some(Repr::Num(v)) => ClassRatio::Finite(v),
            Some(Repr::Text(t)) if t == "inf" => ClassRatio::Infinite,
            Some(Repr::Text(t)) => {
                return Err(serde::de::Error::custom(format!("bad class ratio `{t}`")))
            }
            Some(Repr::Null(())) | None => ClassRatio::Undefined,
        })
    }
}

pub fn class_ratio(ratio_c1: f64, ratio_c2: f64) -> Result<ClassRatio> {
    for r in [ratio_c1, ratio_c2] {
        if !(0.0..=1.0).contains(&r) {
            return Err(TdaError::Parameter(format!("artifact ratio {r} outside [0, 1]")));
        }
    }
    Ok(if ratio_c2 > 0.0 {
        ClassRatio::Finite(ratio_c1 / ratio_c2)
    } else if ratio_c1 > 0.0 {
        ClassRatio::Infinite
    } else {
        ClassRatio::Undefined
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStatsRow {
    pub artifact: String,
    pub count_c1: usize,
    pub ratio_c1: f64,
    pub count_c2: usize,
    pub ratio_c2: f64,
    pub class_ratio: ClassRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub classes: Vec<String>,
    pub total_c1: usize,
    pub total_c2: usize,
    pub rows: Vec<BiasStatsRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// One row per tag plus the `none` row. Rows are independent, so they may be
/// computed in any order.
pub fn bias_report(manifest: &Manifest) -> Result<BiasReport> {
    if manifest.is_empty() {
        return Ok(BiasReport {
            classes: manifest.classes.clone(),
            total_c1: 0,
            total_c2: 0,
            rows: Vec::new(),
            warnings: vec!["empty manifest: no rows, totals 0/0".into()],
        });
    }
    if manifest.classes.len() != 2 {
        return Err(TdaError::UnsupportedClassCount {
            found: manifest.classes.clone(),
        });
    }
    let (c1, c2) = (&manifest.classes[0], &manifest.classes[1]);
    let total_c1 = manifest.class_total(c1)?;
    let total_c2 = manifest.class_total(c2)?;
    let mut tags = manifest.tags();
    tags.push(NONE_TAG.to_string());
    let rows = tags
        .into_iter()
        .map(|tag| {
            let ratio_c1 = artifact_ratio(manifest, c1, &tag)?;
            let ratio_c2 = artifact_ratio(manifest, c2, &tag)?;
            Ok(BiasStatsRow {
                count_c1: artifact_cardinality(manifest, c1, &tag)?,
                count_c2: artifact_cardinality(manifest, c2, &tag)?,
                class_ratio: class_ratio(ratio_c1, ratio_c2)?,
                artifact: tag,
                ratio_c1,
                ratio_c2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasReport {
        classes: manifest.classes.clone(),
        total_c1,
        total_c2,
        rows,
        warnings: Vec::new(),
    })
}

impl BiasReport {
    pub fn row(&self, artifact: &str) -> Option<&BiasStatsRow> {
        self.rows.iter().find(|r| r.artifact == artifact)
    }

    /// Aligned text table: percent ratios and class ratios to two decimals.
    pub fn render_text(&self) -> String {
        let c1 = self.classes.first().map_or("c1", String::as_str);
        let c2 = self.classes.get(1).map_or("c2", String::as_str);
        let header = [
            "type".to_string(),
            format!("|{c1}|"),
            "Q_artifact".into(),
            format!("|{c2}|"),
            "Q_artifact".into(),
            "Q_class".into(),
        ];
        let mut lines: Vec<[String; 6]> = vec![header];
        for r in &self.rows {
            lines.push([
                r.artifact.clone(),
                r.count_c1.to_string(),
                format!("{:.2}%", r.ratio_c1 * 100.0),
                r.count_c2.to_string(),
                format!("{:.2}%", r.ratio_c2 * 100.0),
                r.class_ratio.display(),
            ]);
        }
        lines.push([
            "total".into(),
            self.total_c1.to_string(),
            String::new(),
            self.total_c2.to_string(),
            String::new(),
            String::new(),
        ]);
        let widths: Vec<usize> = (0..6)
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if n == 0 || n == lines.len() - 2 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 10));
                out.push('\n');
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
