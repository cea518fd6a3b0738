use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const NATIVE_PARSER: &str = "iod-native";
pub const EXTERNAL_PARSER: &str = "external-hook";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryKind {
    Image,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedEntity {
    pub media_type: String,
    pub text: String,
    pub tables: Vec<Table>,
    pub binary_kind: Option<BinaryKind>,
    pub parser_id: String,
}

/// MIME type from a file extension; `application/octet-stream` when unknown.
pub fn media_type_for_path(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "txt" | "text" => "text/plain",
        "md" | "markdown" => "text/markdown",
        "csv" => "text/csv",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "wav" => "audio/wav",
        "mp3" => "audio/mpeg",
        "flac" => "audio/flac",
        "ogg" => "audio/ogg",
        "pdf" => "application/pdf",
        "docx" => "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
        "html" | "htm" => "text/html",
        _ => "application/octet-stream",
    }
}

/// Rows rendered as `column: value` pairs joined by ` | `, one line per row.
pub fn textualize_tables(tables: &[Table]) -> String {
    let mut out = String::new();
    for t in tables {
        for row in &t.rows {
            let line: Vec<String> = t.header.iter().zip(row).map(|(h, v)| format!("{h}: {v}")).collect();
            out.push_str(&line.join(" | "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_csv(bytes: &[u8]) -> Result<Table, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
    }
    Ok(Table { header, rows })
}

fn run_hook(template: &str, path: &Path) -> Result<String, IngestError> {
    let quoted = format!("'{}'", path.display().to_string().replace('\'', r"'\''"));
    let cmd = template.replace("{input}", &quoted);
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| IngestError::ExternalParser(format!("{cmd}: {e}")))?;
    if !out.status.success() {
        return Err(IngestError::ExternalParser(format!(
            "{cmd} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Extract text and structure from raw bytes. `source_path` is handed to
/// the external hook for media types without a native parser.
pub fn parse_entity(
    bytes: &[u8],
    media_type: &str,
    external_parser: Option<&str>,
    source_path: Option<&Path>,
) -> Result<ParsedEntity, IngestError> {
    let native = |text: String, tables: Vec<Table>, binary_kind| ParsedEntity {
        media_type: media_type.to_string(),
        text,
        tables,
        binary_kind,
        parser_id: NATIVE_PARSER.into(),
    };
    match media_type {
        "text/plain" | "text/markdown" => Ok(native(String::from_utf8_lossy(bytes).into_owned(), vec![], None)),
        "text/csv" => {
            let table = parse_csv(bytes)?;
            let tables = vec![table];
            Ok(native(textualize_tables(&tables), tables, None))
        }
        m if m.starts_with("image/") => Ok(native(String::new(), vec![], Some(BinaryKind::Image))),
        m if m.starts_with("audio/") => Ok(native(String::new(), vec![], Some(BinaryKind::Audio))),
        other => {
            let Some(template) = external_parser else {
                return Err(IngestError::UnsupportedMediaType(other.into()));
            };
            let text = match source_path {
                Some(p) => run_hook(template, p)?,
                None => {
                    let tmp = std::env::temp_dir().join(format!(
                        "iod-hook-{}-{}",
                        std::process::id(),
                        crate::digest::sha256_hex(bytes)
                    ));
                    std::fs::write(&tmp, bytes).map_err(|e| IngestError::Io {
                        path: tmp.display().to_string(),
                        source: e,
                    })?;
                    let r = run_hook(template, &tmp);
                    let _ = std::fs::remove_file(&tmp);
                    r?
                }
            };
            Ok(ParsedEntity {
                media_type: other.into(),
                text,
                tables: vec![],
                binary_kind: None,
                parser_id: EXTERNAL_PARSER.into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_text() {
        let p = parse_entity(b"hello world", "text/plain", None, None).unwrap();
        assert_eq!(p.text, "hello world");
        assert!(p.binary_kind.is_none());
    }

    #[test]
    fn csv_table() {
        let p = parse_entity(b"name,value\na,1\nb,2\n", "text/csv", None, None).unwrap();
        assert_eq!(p.tables.len(), 1);
        assert_eq!(p.tables[0].rows.len(), 2);
        assert_eq!(p.text, "name: a | value: 1\nname: b | value: 2\n");
    }

    #[test]
    fn ragged_csv_is_malformed() {
        assert!(matches!(
            parse_entity(b"a,b\n1,2,3\n", "text/csv", None, None),
            Err(IngestError::Csv(_))
        ));
    }

    #[test]
    fn image_has_no_text() {
        let p = parse_entity(b"\x89PNG\r\n\x1a\n", "image/png", None, None).unwrap();
        assert_eq!(p.binary_kind, Some(BinaryKind::Image));
        assert!(p.text.is_empty());
    }

    #[test]
    fn unsupported_without_hook() {
        assert!(matches!(
            parse_entity(b"%PDF", "application/pdf", None, None),
            Err(IngestError::UnsupportedMediaType(_))
        ));
    }

    #[test]
    fn external_hook_output_becomes_text() {
        let p = parse_entity(b"# Title\nbody", "application/pdf", Some("cat {input}"), None).unwrap();
        assert_eq!(p.text, "# Title\nbody");
        assert_eq!(p.parser_id, EXTERNAL_PARSER);
        assert!(matches!(
            parse_entity(b"x", "application/pdf", Some("false {input}"), None),
            Err(IngestError::ExternalParser(_))
        ));
    }
}
