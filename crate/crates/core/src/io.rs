//! Artifact output: CSV tables, JSON, a small SVG line plotter, manifests and INI configs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Columns of doubles with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Shortest round-trip formatting, `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty csv".into()))?;
        let mut t = Table::new(header.split(','));
        for (i, l) in lines.enumerate() {
            let row: std::result::Result<Vec<f64>, _> = l.split(',').map(str::parse).collect();
            let row = row.map_err(|e| Error::Config(format!("csv row {}: {e}", i + 1)))?;
            if row.len() != t.header.len() {
                return Err(Error::Config(format!("csv row {} has {} cells", i + 1, row.len())));
            }
            t.rows.push(row);
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Write through a sibling temporary file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: resolved config, its hash, and the files written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Plot the command reproduces, if any.
    pub figure: Option<String>,
    pub config: serde_json::Value,
    pub input_hash: String,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(command: &str, figure: Option<&str>, config: serde_json::Value) -> Self {
        let input_hash = sha256_hex(config.to_string().as_bytes());
        Manifest {
            tool: "vss".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            figure: figure.map(Into::into),
            config,
            input_hash,
            outputs: Vec::new(),
        }
    }
}

/// Collects files under one directory and finishes with `manifest.json`.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    pub fn new(dir: impl Into<PathBuf>, manifest: Manifest) -> Self {
        OutputDir { dir: dir.into(), manifest }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.retain(|o| o.path != name);
        self.manifest.outputs.push(OutputFile { path: name.into(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write(name, table.to_csv().as_bytes())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, to_json(value)?.as_bytes())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        write_atomic(&path, to_json(&self.manifest)?.as_bytes())?;
        Ok(path)
    }
}

/// `[section]` / `key = value` file with `#` or `;` comments. Keys before any header land in "".
pub type IniMap = BTreeMap<String, BTreeMap<String, String>>;

pub fn parse_ini(text: &str) -> Result<IniMap> {
    let ini = ini::Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = IniMap::new();
    for (sec, props) in ini.iter() {
        if sec.is_none() && props.is_empty() {
            continue;
        }
        let entry = out.entry(sec.unwrap_or("").to_string()).or_default();
        for (k, v) in props.iter() {
            entry.insert(k.to_string(), v.to_string());
        }
    }
    Ok(out)
}

pub fn load_ini(path: &Path) -> Result<IniMap> {
    parse_ini(&fs::read_to_string(path)?)
}

/// Minimal SVG line plot.
#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    /// Vertical marker lines.
    pub markers: Vec<(f64, String)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|f| f * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LinePlot { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    pub fn line(mut self, name: &str, pts: Vec<(f64, f64)>) -> Self {
        self.series.push((name.into(), pts));
        self
    }

    pub fn marker(mut self, x: f64, label: &str) -> Self {
        self.markers.push((x, label.into()));
        self
    }

    pub fn to_svg(&self) -> String {
        let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 20.0, 40.0, 50.0);
        let pts = self.series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
        let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(&self.title));
        let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - ml - mr, h - mt - mb);
        for t in nice_ticks(x0, x1, 6) {
            let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"#, sx(t), h - mb, h - mb + 5.0, h - mb + 18.0, t);
        }
        for t in nice_ticks(y0, y1, 6) {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{2:.2}" x2="{1}" y2="{2:.2}" stroke="black"/><text x="{3}" y="{4:.2}" text-anchor="end">{5}</text>"#, ml - 5.0, ml, sy(t), ml - 8.0, sy(t) + 4.0, t);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ml + w - mr) / 2.0, h - 12.0, esc(&self.x_label));
        let _ = writeln!(s, r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#, (mt + h - mb) / 2.0, esc(&self.y_label));
        for (x, label) in &self.markers {
            if *x >= x0 && *x <= x1 {
                let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#888" stroke-dasharray="4 3"/><text x="{3:.2}" y="{4}">{5}</text>"##, sx(*x), mt, h - mb, sx(*x) + 3.0, mt + 14.0, esc(label));
            }
        }
        for (k, (name, pts)) in self.series.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            let path: Vec<String> = pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, ml + 8.0, mt + 16.0 + 14.0 * k as f64, esc(name));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new(["y", "v"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        t.push(vec![1e-300, -2.5e17]);
        let back = Table::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.to_csv().lines().next(), Some("y,v"));
    }

    #[test]
    fn ini_sections_and_comments() {
        let m = parse_ini("top = 1\n# note\n[params]\np = 1.5 \n; other\nalpha=7\n").unwrap();
        assert_eq!(m[""]["top"], "1");
        assert_eq!(m["params"]["p"], "1.5");
        assert_eq!(m["params"]["alpha"], "7");
    }

    #[test]
    fn sha_of_empty() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.3, 9.1, 6);
        assert_eq!(t, vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = LinePlot::new("a<b", "x", "y").line("s", vec![(0.0, 1.0), (1.0, 2.0)]).marker(0.5, "m").to_svg();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }
}
