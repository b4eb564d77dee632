//! Tab-separated pair file parsing.

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{DataError, RawInteraction, RawTagging};

/// Column layout of a user-item interaction file.
///
/// Lines are tab-separated. Declared columns are required; surplus columns
/// are rejected unless `allow_extra` is set (useful for raw dumps that carry
/// fields this pipeline ignores).
#[derive(Debug, Clone)]
pub struct UiSchema {
    pub has_rating: bool,
    pub has_timestamp: bool,
    pub allow_extra: bool,
    pub has_header: bool,
    pub rating_range: (f64, f64),
}

impl Default for UiSchema {
    fn default() -> Self {
        Self {
            has_rating: false,
            has_timestamp: false,
            allow_extra: false,
            has_header: false,
            rating_range: (0.0, 5.0),
        }
    }
}

impl UiSchema {
    pub fn with_rating(mut self) -> Self {
        self.has_rating = true;
        self
    }

    pub fn with_timestamp(mut self) -> Self {
        self.has_rating = true;
        self.has_timestamp = true;
        self
    }

    fn expected_cols(&self) -> usize {
        2 + usize::from(self.has_rating) + usize::from(self.has_timestamp)
    }
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    let f = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufReader::new(f))
}

fn check_width(fields: &[&str], expected: usize, allow_extra: bool, line: usize) -> Result<(), DataError> {
    if fields.len() < expected {
        return Err(DataError::Parse {
            line,
            reason: format!("expected {} tab-separated columns, found {}", expected, fields.len()),
        });
    }
    if fields.len() > expected && !allow_extra {
        return Err(DataError::Parse {
            line,
            reason: format!("unexpected extra columns ({} found, {} declared)", fields.len(), expected),
        });
    }
    Ok(())
}

/// Parse a user-item interaction file. Line numbers in errors are 1-based.
pub fn load_interactions(path: &Path, schema: &UiSchema) -> Result<Vec<RawInteraction>, DataError> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if idx == 0 && schema.has_header {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        check_width(&fields, schema.expected_cols(), schema.allow_extra, line_no)?;
        let rating = if schema.has_rating {
            let raw: f64 = fields[2].parse().map_err(|_| DataError::Parse {
                line: line_no,
                reason: format!("rating `{}` is not a number", fields[2]),
            })?;
            let (lo, hi) = schema.rating_range;
            if !raw.is_finite() || raw < lo || raw > hi {
                return Err(DataError::Parse {
                    line: line_no,
                    reason: format!("rating {raw} outside declared range [{lo}, {hi}]"),
                });
            }
            Some(raw)
        } else {
            None
        };
        let timestamp = if schema.has_timestamp {
            Some(fields[3].parse().map_err(|_| DataError::Parse {
                line: line_no,
                reason: format!("timestamp `{}` is not an integer", fields[3]),
            })?)
        } else {
            None
        };
        out.push(RawInteraction {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Parse an item-tag label file (columns: item, tag).
pub fn load_taggings(path: &Path, allow_extra: bool, has_header: bool) -> Result<Vec<RawTagging>, DataError> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if idx == 0 && has_header {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        check_width(&fields, 2, allow_extra, line_no)?;
        out.push(RawTagging {
            item: fields[0].to_string(),
            tag: fields[1].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_user_item_rating_line() {
        let f = write_tmp("u1\ti7\t5\n");
        let rows = load_interactions(f.path(), &UiSchema::default().with_rating()).unwrap();
        assert_eq!(
            rows,
            vec![RawInteraction {
                user: "u1".into(),
                item: "i7".into(),
                rating: Some(5.0),
                timestamp: None
            }]
        );
    }

    #[test]
    fn missing_required_rating_column_is_a_parse_error() {
        let f = write_tmp("u1\ti7\n");
        let err = load_interactions(f.path(), &UiSchema::default().with_rating()).unwrap_err();
        match err {
            DataError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_yields_empty_list() {
        let f = write_tmp("");
        let rows = load_interactions(f.path(), &UiSchema::default()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_interactions(Path::new("/nonexistent/ui.tsv"), &UiSchema::default()).unwrap_err();
        assert!(matches!(err, DataError::MissingFile(_)));
    }

    #[test]
    fn rating_out_of_declared_range_is_rejected() {
        let f = write_tmp("u1\ti7\t9.5\n");
        assert!(load_interactions(f.path(), &UiSchema::default().with_rating()).is_err());
    }

    #[test]
    fn extra_columns_rejected_unless_allowed() {
        let f = write_tmp("u1\ti7\t3\n");
        assert!(load_interactions(f.path(), &UiSchema::default()).is_err());
        let mut schema = UiSchema::default();
        schema.allow_extra = true;
        let rows = load_interactions(f.path(), &schema).unwrap();
        assert_eq!(rows[0].rating, None);
    }

    #[test]
    fn header_line_is_skipped_when_declared() {
        let f = write_tmp("userID\titemID\nu1\ti1\n");
        let mut schema = UiSchema::default();
        schema.has_header = true;
        let rows = load_interactions(f.path(), &schema).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].user, "u1");
    }

    #[test]
    fn taggings_parse_and_report_line_numbers() {
        let f = write_tmp("i1\tt1\ni2\n");
        let err = load_taggings(f.path(), false, false).unwrap_err();
        match err {
            DataError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }
}
