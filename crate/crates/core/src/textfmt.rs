//! Line-oriented section format shared by the grid case, fleet, and scenario files.
//!
//! The format is deliberately small: `#` starts a comment, `[name]` opens a
//! section, `key = value` sets a scalar, and any other non-empty line is a
//! whitespace-separated data row. Double quotes group a field containing
//! spaces. Keys before the first section header belong to the preamble.

use std::fmt;

#[derive(Debug, Clone)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub line: usize,
    pub name: String,
    pub keys: Vec<KeyValue>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    pub preamble: Vec<KeyValue>,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for TextError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for TextError {}

impl Document {
    pub fn parse(text: &str) -> Result<Document, TextError> {
        let mut doc = Document::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| TextError {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                doc.sections.push(Section {
                    line: line_no,
                    name: name.trim().to_string(),
                    keys: Vec::new(),
                    rows: Vec::new(),
                });
                continue;
            }
            if let Some((key, value)) = split_key_value(line) {
                let kv = KeyValue {
                    line: line_no,
                    key,
                    value,
                };
                match doc.sections.last_mut() {
                    Some(section) => section.keys.push(kv),
                    None => doc.preamble.push(kv),
                }
                continue;
            }
            let fields = split_fields(line, line_no)?;
            let row = Row {
                line: line_no,
                fields,
            };
            match doc.sections.last_mut() {
                Some(section) => section.rows.push(row),
                None => {
                    return Err(TextError {
                        line: line_no,
                        message: "data row before any section header".to_string(),
                    })
                }
            }
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn preamble_value(&self, key: &str) -> Option<&str> {
        self.preamble
            .iter()
            .find(|kv| kv.key == key)
            .map(|kv| kv.value.as_str())
    }
}

impl Section {
    pub fn value(&self, key: &str) -> Option<&KeyValue> {
        self.keys.iter().find(|kv| kv.key == key)
    }
}

/// Cuts an end-of-line comment. A `#` inside double quotes does not count.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (pos, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..pos],
            _ => {}
        }
    }
    line
}

/// Splits `key = value` lines; returns None when the line has no top-level `=`.
fn split_key_value(line: &str) -> Option<(String, String)> {
    let mut in_quotes = false;
    for (pos, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '=' if !in_quotes => {
                let key = line[..pos].trim();
                let value = unquote(line[pos + 1..].trim());
                if key.is_empty() || key.contains(char::is_whitespace) {
                    return None;
                }
                return Some((key.to_string(), value));
            }
            _ => {}
        }
    }
    None
}

fn unquote(field: &str) -> String {
    let trimmed = field.trim();
    if trimmed.len() >= 2 && trimmed.starts_with('"') && trimmed.ends_with('"') {
        trimmed[1..trimmed.len() - 1].to_string()
    } else {
        trimmed.to_string()
    }
}

fn split_fields(line: &str, line_no: usize) -> Result<Vec<String>, TextError> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for ch in line.chars() {
        match ch {
            '"' => in_quotes = !in_quotes,
            c if c.is_whitespace() && !in_quotes => {
                if !current.is_empty() {
                    fields.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if in_quotes {
        return Err(TextError {
            line: line_no,
            message: "unterminated quoted field".to_string(),
        });
    }
    if !current.is_empty() {
        fields.push(current);
    }
    Ok(fields)
}

/// Quotes a field for serialization when it contains whitespace.
pub fn quote_field(field: &str) -> String {
    if field.is_empty() || field.contains(char::is_whitespace) {
        format!("\"{field}\"")
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_keys_and_rows() {
        let text = "\
name = demo   # trailing comment
[bus]
speed = 4.2
1 \"two words\" 3.0
[empty]
";
        let doc = Document::parse(text).unwrap();
        assert_eq!(doc.preamble_value("name"), Some("demo"));
        let bus = doc.section("bus").unwrap();
        assert_eq!(bus.value("speed").unwrap().value, "4.2");
        assert_eq!(bus.rows.len(), 1);
        assert_eq!(bus.rows[0].fields, vec!["1", "two words", "3.0"]);
        assert!(doc.section("empty").unwrap().rows.is_empty());
    }

    #[test]
    fn rejects_row_outside_section() {
        let err = Document::parse("1 2 3\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn rejects_unterminated_quote() {
        let err = Document::parse("[s]\n1 \"open\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn hash_inside_quotes_is_literal() {
        let doc = Document::parse("[s]\nop \"number #4\"\n").unwrap();
        assert_eq!(doc.section("s").unwrap().rows[0].fields[1], "number #4");
    }
}
