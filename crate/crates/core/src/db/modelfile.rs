use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{io_err, names::validate_name, write_atomic, DbError};
use crate::lbph::{FaceTemplate, LbpParams, RecognizerModel};

const MAGIC: &str = "LBPHDB";
const VERSION: &str = "1";

/// Text form of a model. The threshold uses the shortest decimal that
/// parses back to the same `f64`, or `inf`.
pub fn serialize_model(m: &RecognizerModel) -> String {
    let p = &m.params;
    let mut out = String::new();
    // writing to a String cannot fail
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(
        out,
        "params P={} R={} mode={} grid={}x{} chip={}",
        p.neighbors,
        p.radius,
        p.mode.as_str(),
        p.grid_x,
        p.grid_y,
        m.chip_size
    );
    let _ = writeln!(out, "threshold {}", m.threshold);
    let _ = writeln!(out, "names {}", m.names.len());
    for (id, name) in &m.names {
        let _ = writeln!(out, "{id} {name}");
    }
    let _ = writeln!(out, "templates {}", m.templates.len());
    for t in &m.templates {
        out.push_str(&t.subject.to_string());
        for c in &t.histogram {
            out.push(' ');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out.push_str("END\n");
    out
}

pub fn save_model(m: &RecognizerModel, path: &Path) -> Result<(), DbError> {
    write_atomic(path, serialize_model(m).as_bytes())
}

pub fn load_model(path: &Path) -> Result<RecognizerModel, DbError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes).map_err(|_| DbError::Corrupt("not UTF-8".into()))?;
    parse_model(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Split<'a, char>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), DbError> {
        match self.inner.next() {
            Some((i, line)) if !(line.is_empty() && self.inner.clone().next().is_none()) => {
                Ok((i + 1, line))
            }
            _ => Err(DbError::Corrupt(format!("file ends before {what}"))),
        }
    }

    /// Reads `<keyword> <value>` and returns the value.
    fn keyed(&mut self, keyword: &str) -> Result<(usize, &'a str), DbError> {
        let (n, line) = self.next(keyword)?;
        match line.split_once(' ') {
            Some((k, v)) if k == keyword => Ok((n, v)),
            _ => Err(corrupt(
                n,
                &format!("expected `{keyword} ...`, found {line:?}"),
            )),
        }
    }
}

fn corrupt(line: usize, msg: &str) -> DbError {
    DbError::Corrupt(format!("line {line}: {msg}"))
}

fn number<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, DbError> {
    // reject signs and padding that FromStr would otherwise accept
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(corrupt(line, &format!("bad number {s:?}")));
    }
    s.parse()
        .map_err(|_| corrupt(line, &format!("number {s:?} out of range")))
}

fn parse_params(line: usize, s: &str) -> Result<(LbpParams, usize), DbError> {
    let fields: Vec<&str> = s.split(' ').collect();
    let [p, r, mode, grid, chip] = fields.as_slice() else {
        return Err(corrupt(line, "params needs five fields"));
    };
    let value = |field: &str, key: &str| -> Result<String, DbError> {
        field
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| corrupt(line, &format!("expected {key}=..., found {field:?}")))
    };
    let grid = value(grid, "grid")?;
    let (gx, gy) = grid
        .split_once('x')
        .ok_or_else(|| corrupt(line, &format!("bad grid {grid:?}")))?;
    let params = LbpParams {
        neighbors: number(line, &value(p, "P")?)?,
        radius: number(line, &value(r, "R")?)?,
        mode: value(mode, "mode")?
            .parse()
            .map_err(|e| corrupt(line, &format!("{e}")))?,
        grid_x: number(line, gx)?,
        grid_y: number(line, gy)?,
    };
    params
        .validate()
        .map_err(|e| corrupt(line, &e.to_string()))?;
    let chip = number(line, &value(chip, "chip")?)?;
    Ok((params, chip))
}

/// Inverse of [`serialize_model`]; validates the result.
pub fn parse_model(text: &str) -> Result<RecognizerModel, DbError> {
    let mut lines = Lines {
        inner: text.split('\n').enumerate(),
    };
    let (_, header) = lines
        .next("header")
        .map_err(|_| DbError::BadHeader(String::new()))?;
    match header.split_once(' ') {
        Some((MAGIC, VERSION)) => {}
        Some((MAGIC, v)) => return Err(DbError::VersionUnsupported(v.to_string())),
        _ => return Err(DbError::BadHeader(header.chars().take(40).collect())),
    }

    let (n, params) = lines.keyed("params")?;
    let (params, chip_size) = parse_params(n, params)?;

    let (n, t) = lines.keyed("threshold")?;
    let threshold: f64 = t
        .parse()
        .map_err(|_| corrupt(n, &format!("bad threshold {t:?}")))?;

    let (n, count) = lines.keyed("names")?;
    let count: usize = number(n, count)?;
    let mut names = BTreeMap::new();
    for _ in 0..count {
        let (n, line) = lines.next("end of names")?;
        let (id, name) = line
            .split_once(' ')
            .ok_or_else(|| corrupt(n, &format!("bad name entry {line:?}")))?;
        let id: u32 = number(n, id)?;
        validate_name(name).map_err(|e| corrupt(n, &e.to_string()))?;
        if names.last_key_value().is_some_and(|(&prev, _)| prev >= id) {
            return Err(corrupt(n, "name ids not ascending"));
        }
        names.insert(id, name.to_string());
    }

    let (n, count) = lines.keyed("templates")?;
    let count: usize = number(n, count)?;
    let len = params.histogram_len();
    let mut templates = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (n, line) = lines.next("end of templates")?;
        let mut fields = line.split(' ');
        let subject: u32 = number(n, fields.next().unwrap_or(""))?;
        let histogram = fields
            .map(|f| number::<u32>(n, f))
            .collect::<Result<Vec<_>, _>>()?;
        if histogram.len() != len {
            return Err(corrupt(
                n,
                &format!("template has {} counts, expected {len}", histogram.len()),
            ));
        }
        templates.push(FaceTemplate { subject, histogram });
    }

    let (n, end) = lines.next("END")?;
    if end != "END" {
        return Err(corrupt(n, &format!("expected END, found {end:?}")));
    }
    if let Ok((n, _)) = lines.next("") {
        return Err(corrupt(n, "trailing data after END"));
    }

    let model = RecognizerModel {
        params,
        chip_size,
        templates,
        threshold,
        names,
    };
    model
        .validate()
        .map_err(|e| DbError::Corrupt(e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbph::LbpMode;

    fn tiny() -> RecognizerModel {
        let params = LbpParams {
            grid_x: 1,
            grid_y: 1,
            mode: LbpMode::Basic,
            ..Default::default()
        };
        let mut h = vec![0u32; 256];
        h[255] = 64;
        h[3] = 7;
        RecognizerModel {
            params,
            chip_size: 10,
            templates: vec![
                FaceTemplate {
                    subject: 0,
                    histogram: h.clone(),
                },
                FaceTemplate {
                    subject: 1,
                    histogram: h,
                },
            ],
            threshold: 12.345678901234567,
            names: [(0, "alice".to_string()), (1, "bob".to_string())].into(),
        }
    }

    #[test]
    fn layout() {
        let text = serialize_model(&tiny());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "LBPHDB 1");
        assert_eq!(lines[1], "params P=8 R=1 mode=basic grid=1x1 chip=10");
        assert_eq!(lines[2], "threshold 12.345678901234567");
        assert_eq!(lines[3], "names 2");
        assert_eq!(lines[4], "0 alice");
        assert_eq!(lines[6], "templates 2");
        assert_eq!(lines[7].split(' ').count(), 257);
        assert_eq!(*lines.last().unwrap(), "END");
        assert!(text.ends_with("END\n"));
    }

    #[test]
    fn round_trip_including_infinity() {
        let mut m = tiny();
        assert_eq!(parse_model(&serialize_model(&m)).unwrap(), m);
        m.threshold = f64::INFINITY;
        let text = serialize_model(&m);
        assert!(text.contains("\nthreshold inf\n"));
        assert_eq!(parse_model(&text).unwrap(), m);
        m.threshold = 0.1 + 0.2;
        let back = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(back.threshold.to_bits(), m.threshold.to_bits());
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_model("LBPHXX 1\n"),
            Err(DbError::BadHeader(_))
        ));
        assert!(matches!(parse_model(""), Err(DbError::BadHeader(_))));
        assert!(matches!(
            parse_model("LBPHDB 2\n"),
            Err(DbError::VersionUnsupported(v)) if v == "2"
        ));
    }

    #[test]
    fn truncation_is_corrupt() {
        let text = serialize_model(&tiny());
        let last_template = text.rfind("\n1 ").unwrap();
        for cut in [text.len() - 4, last_template + 40, last_template + 1, 30] {
            assert!(
                matches!(parse_model(&text[..cut]), Err(DbError::Corrupt(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn inconsistent_content_is_corrupt() {
        let text = serialize_model(&tiny());
        for (from, to) in [
            ("names 2\n", "names 3\n"),
            ("templates 2\n", "templates 1\n"),
            ("\n1 bob\n", "\n5 bob\n"),
            ("grid=1x1", "grid=2x1"),
            ("END\n", "END\nextra\n"),
            (" 64", " -64"),
        ] {
            let broken = text.replacen(from, to, 1);
            assert!(
                matches!(parse_model(&broken), Err(DbError::Corrupt(_))),
                "{from:?} -> {to:?}"
            );
        }
    }
}
