use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comment lines identifying the tool, command, seed and resolved recipe.
#[derive(Debug, Clone)]
pub struct Header {
    lines: Vec<String>,
}

impl Header {
    pub fn new(command: &str, seed: u64, resolved: &impl Serialize) -> Result<Self> {
        Ok(Header {
            lines: vec![
                format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
                format!("command: {command}"),
                format!("seed: {seed}"),
                format!("recipe: {}", serde_json::to_string(resolved)?),
            ],
        })
    }

    pub fn with(&self, line: impl Into<String>) -> Self {
        let mut h = self.clone();
        h.lines.push(line.into());
        h
    }

    fn render(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

/// Accumulates a CSV body below a metadata header.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &Header, columns: &str) -> Self {
        let mut text = header.render();
        text.push_str(columns);
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn save(self, path: &Path) -> Result<PathBuf> {
        write_atomic(path, self.text.as_bytes())?;
        Ok(path.to_path_buf())
    }
}

pub fn save_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(path.to_path_buf())
}

/// A gnuplot script (data-only plotting aid) carrying the same header.
pub fn save_gnuplot(path: &Path, header: &Header, body: &str) -> Result<PathBuf> {
    let text = format!("{}set datafile separator ','\n{body}\n", header.render());
    write_atomic(path, text.as_bytes())?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lines_are_comments() {
        let dir = tempfile::tempdir().unwrap();
        let h = Header::new("test", 7, &serde_json::json!({"a": 1})).unwrap();
        let mut csv = Csv::new(&h, "x,y");
        csv.row(&[num(0.1), num(-2.0)]);
        let path = csv.save(&dir.path().join("sub/out.csv")).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["x,y", "1.0000000000000001e-1,-2.0000000000000000e0"]);
        assert!(text.contains("# seed: 7"));
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
