//! CSV emission and parsing.
//!
//! Numbers are written with 17 significant digits so every value survives a
//! write/parse round trip bit-exactly. Data rows come first; metadata lines
//! prefixed with `#` form the footer.

use std::fmt::Write as _;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "" => Err("empty numeric field".into()),
        _ => s.parse::<f64>().map_err(|e| format!("bad number '{s}': {e}")),
    }
}

/// A CSV document: one header, data rows, `#`-prefixed footer metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvDoc {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Footer key/value pairs, serialized as `# key=value`.
    pub meta: Vec<(String, String)>,
}

impl CsvDoc {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push_row(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.header.len(), "row arity mismatch");
        self.rows.push(fields);
    }

    pub fn push_meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<CsvDoc, String> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or("empty document")?;
        let header: Vec<String> = header_line.split(',').map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        let mut meta = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| format!("bad metadata line '{line}'"))?;
                meta.push((k.to_string(), v.to_string()));
            } else {
                let fields: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
                if fields.len() != header.len() {
                    return Err(format!(
                        "row has {} fields, header has {}",
                        fields.len(),
                        header.len()
                    ));
                }
                rows.push(fields);
            }
        }
        Ok(CsvDoc { header, rows, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [
            0.0,
            1.0,
            0.1,
            8.46793368e-3,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -7.25e-31,
        ] {
            let s = fmt_f64(x);
            let y = parse_f64(&s).unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{x} -> {s} -> {y}");
        }
        assert!(parse_f64(&fmt_f64(f64::INFINITY)).unwrap().is_infinite());
    }

    #[test]
    fn doc_round_trip() {
        let mut doc = CsvDoc::new(&["a", "b"]);
        doc.push_row(vec![fmt_f64(1.5), "x".into()]);
        doc.push_row(vec![fmt_f64(-2.0), "y".into()]);
        doc.push_meta("seed", 7u64);
        doc.push_meta("log_base", "bits");
        let text = doc.render();
        let back = CsvDoc::parse(&text).unwrap();
        assert_eq!(doc, back);
    }
}
