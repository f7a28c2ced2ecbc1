use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::info;

use crate::error::CsvError;
use crate::model::{normalize_features, BiRads, Label, Schema, ScreeningObservation, Test, TrainingRecord};

pub const CSV_HEADER: [&str; 14] = [
    "patient_id",
    "age",
    "breast_density",
    "ethnicity",
    "gender",
    "family_history",
    "age_menarche",
    "age_first_birth",
    "num_biopsies",
    "hormonal_history",
    "mg_birads",
    "mri_birads",
    "us_birads",
    "label",
];

const SCORE_COLUMNS: [(&str, Test); 3] = [("mg_birads", Test::Mammogram), ("mri_birads", Test::Mri), ("us_birads", Test::Ultrasound)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// One-based line number in the file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<TrainingRecord>,
    pub rejections: Vec<Rejection>,
}

pub fn write_csv(records: &[TrainingRecord], schema: &Schema, path: &Path) -> Result<(), CsvError> {
    let unwritable = |source| CsvError::UnwritableFile {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(unwritable)?;
    write_csv_to(records, schema, file)
}

/// Writes records under the fixed column layout; missing outcomes become
/// empty cells.
pub fn write_csv_to<W: Write>(records: &[TrainingRecord], schema: &Schema, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
        for col in CSV_HEADER {
            let cell = match col {
                "patient_id" => r.id.clone(),
                "label" => u8::from(r.label).to_string(),
                _ => {
                    if let Some((_, test)) = SCORE_COLUMNS.iter().find(|(c, _)| *c == col) {
                        r.screening.get(*test).map(|s| s.to_string()).unwrap_or_default()
                    } else if let Some(i) = schema.position(col) {
                        r.raw.get(i).cloned().unwrap_or_default()
                    } else if let Some(i) = schema.passthrough.iter().position(|p| p == col) {
                        r.passthrough.get(i).cloned().unwrap_or_default()
                    } else {
                        String::new()
                    }
                }
            };
            row.push(cell);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

fn parse_score(token: &str) -> Result<Option<BiRads>, String> {
    let t = token.trim();
    if t.is_empty() || t == "0" {
        return Ok(None);
    }
    t.parse::<BiRads>().map(Some).map_err(|e| e.to_string())
}

/// Parses records, collecting malformed rows as line-numbered rejections.
/// BI-RADS 0 and blank cells are read as missing outcomes.
pub fn read_csv<R: Read>(input: R, schema: &Schema) -> Result<Dataset, CsvError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let require = |name: &str| column(name).ok_or_else(|| CsvError::MissingHeader(name.to_string()));

    let id_col = require("patient_id")?;
    let label_col = require("label")?;
    let score_cols: Vec<(usize, Test, &str)> = SCORE_COLUMNS
        .iter()
        .map(|(name, test)| require(name).map(|c| (c, *test, *name)))
        .collect::<Result<_, _>>()?;
    let feature_cols: Vec<usize> = schema.names().iter().map(|n| require(n)).collect::<Result<_, _>>()?;
    let passthrough_cols: Vec<Option<usize>> = schema.passthrough.iter().map(|p| column(p)).collect();

    let mut out = Dataset::default();
    let mut zero_scores = 0usize;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let reject = |reason: String| Rejection { line, reason };
        if row.len() != header.len() {
            out.rejections.push(reject(format!("expected {} fields, found {}", header.len(), row.len())));
            continue;
        }
        let label = match row[label_col].trim() {
            "0" => Label::Negative,
            "1" => Label::Positive,
            "" => {
                out.rejections.push(reject("missing label".into()));
                continue;
            }
            _ => {
                out.rejections.push(reject("label outside {0,1}".into()));
                continue;
            }
        };
        let mut screening = ScreeningObservation::empty();
        let mut bad = None;
        for (col, test, name) in &score_cols {
            if row[*col].trim() == "0" {
                zero_scores += 1;
            }
            match parse_score(&row[*col]) {
                Ok(Some(score)) => {
                    screening.observe(*test, score);
                }
                Ok(None) => {}
                Err(e) => {
                    bad = Some(format!("{name}: {e}"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            out.rejections.push(reject(reason));
            continue;
        }
        let names = schema.names();
        let raw: Vec<String> = feature_cols.iter().map(|&c| row[c].trim().to_string()).collect();
        let personal = match normalize_features(names.iter().copied().zip(raw.iter().map(String::as_str)), schema) {
            Ok(p) => p,
            Err(e) => {
                out.rejections.push(reject(e.to_string()));
                continue;
            }
        };
        let passthrough = passthrough_cols
            .iter()
            .map(|c| c.map(|c| row[c].trim().to_string()).unwrap_or_default())
            .collect();
        out.records.push(TrainingRecord {
            id: row[id_col].trim().to_string(),
            raw,
            passthrough,
            personal,
            screening,
            label,
        });
    }
    if zero_scores > 0 {
        info!("{zero_scores} BI-RADS 0 entries read as missing outcomes");
    }
    Ok(out)
}
