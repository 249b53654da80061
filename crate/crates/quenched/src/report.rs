//! Result persistence: stable CSV tables, self-contained SVG line plots,
//! and run manifests with content digests.
//!
//! Output bytes are a pure function of the data — shortest round-trip float
//! formatting, `.` decimal separator, `\n` line endings — so digests are
//! comparable across runs, platforms, and parallelism degrees.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Value {
    fn render(&self, out: &mut String) {
        match self {
            Value::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Value::UInt(v) => {
                let _ = write!(out, "{v}");
            }
            Value::Float(v) => {
                if v.is_nan() {
                    out.push_str("nan");
                } else if v.is_infinite() {
                    out.push_str(if *v > 0.0 { "inf" } else { "-inf" });
                } else {
                    // Rust's float Display is the shortest string that
                    // round-trips, which is stable and locale-free.
                    let _ = write!(out, "{v}");
                }
            }
            Value::Bool(v) => {
                out.push_str(if *v { "true" } else { "false" });
            }
            Value::Text(v) => {
                if v.contains([',', '"', '\n']) {
                    out.push('"');
                    out.push_str(&v.replace('"', "\"\""));
                    out.push('"');
                } else {
                    out.push_str(v);
                }
            }
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::UInt(v)
    }
}
impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::UInt(v as u64)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}
impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// A column-named table rendered to CSV with a header row.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "row width {} does not match {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Render to CSV: UTF-8, header row, `\n` endings, `.` decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<String> {
        let csv = self.to_csv();
        std::fs::write(path, csv.as_bytes())?;
        Ok(sha256_hex(csv.as_bytes()))
    }
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// One plotted line.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// A line-plot description rendered to a self-contained SVG.
#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + 1e-9 * span {
        // Snap values that should be round numbers.
        ticks.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

impl Plot {
    /// Render the plot as a standalone SVG document.  Non-finite points are
    /// skipped (they break the polyline into segments).
    pub fn to_svg(&self) -> String {
        let finite: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .copied()
            .collect();
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &finite {
            x_lo = x_lo.min(*x);
            x_hi = x_hi.max(*x);
            y_lo = y_lo.min(*y);
            y_hi = y_hi.max(*y);
        }
        if finite.is_empty() {
            x_lo = 0.0;
            x_hi = 1.0;
            y_lo = 0.0;
            y_hi = 1.0;
        }
        if x_hi - x_lo < 1e-300 {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if y_hi - y_lo < 1e-300 {
            y_lo -= 0.5;
            y_hi += 0.5;
        }
        let pad_y = 0.06 * (y_hi - y_lo);
        y_lo -= pad_y;
        y_hi += pad_y;

        let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

        let mut svg = String::new();
        let _ = write!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             font-family=\"Helvetica,Arial,sans-serif\">\n"
        );
        let _ = write!(
            svg,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"28\" font-size=\"18\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            xml_escape(&self.title)
        );

        // Axes.
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R,
            HEIGHT - MARGIN_B
        );
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B
        );
        for t in nice_ticks(x_lo, x_hi) {
            let x = px(t);
            let _ = write!(
                svg,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 6.0,
                HEIGHT - MARGIN_B + 22.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y_lo, y_hi) {
            let y = py(t);
            let _ = write!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 6.0,
                MARGIN_L - 10.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 14.0,
            xml_escape(&self.x_label)
        );
        let _ = write!(
            svg,
            "<text x=\"18\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" \
             transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(&self.y_label)
        );

        // Series: polyline segments between finite points, plus markers.
        for (si, series) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, svg: &mut String| {
                if seg.len() >= 2 {
                    let _ = write!(
                        svg,
                        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                        seg.join(" ")
                    );
                }
                seg.clear();
            };
            for &(x, y) in &series.points {
                if x.is_finite() && y.is_finite() {
                    segment.push(format!("{:.2},{:.2}", px(x), py(y)));
                } else {
                    flush(&mut segment, &mut svg);
                }
            }
            flush(&mut segment, &mut svg);
            for &(x, y) in &series.points {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(
                        svg,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"{color}\"/>\n",
                        px(x),
                        py(y)
                    );
                }
            }
            // Legend.
            let ly = MARGIN_T + 16.0 + 20.0 * si as f64;
            let _ = write!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
                WIDTH - MARGIN_R + 12.0,
                WIDTH - MARGIN_R + 40.0,
                WIDTH - MARGIN_R + 46.0,
                ly + 4.0,
                xml_escape(&series.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write_svg(&self, path: &Path) -> Result<String> {
        let svg = self.to_svg();
        std::fs::write(path, svg.as_bytes())?;
        Ok(sha256_hex(svg.as_bytes()))
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reproducibility record for one experiment run: the command, the full
/// configuration, the master seed, and a digest of every output file.
/// Re-running with the same configuration and seed must reproduce the
/// digests byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Version of the library that produced the run.
    pub version: String,
    /// RFC 3339 start/end timestamps (informational; excluded from any
    /// determinism comparison).
    pub started: String,
    pub finished: String,
    /// Output file name -> SHA-256 hex digest, sorted by name.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: chrono::Utc::now().to_rfc3339(),
            finished: String::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Record an output file's digest under its file name.
    pub fn record(&mut self, name: &str, digest: String) {
        self.outputs.insert(name.to_string(), digest);
    }

    /// Stamp the end time and serialize to pretty JSON.
    pub fn finish(&mut self) -> Result<String> {
        self.finished = chrono::Utc::now().to_rfc3339();
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        let json = self.finish()?;
        std::fs::write(path, json.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering_is_stable_and_exact() {
        let mut t = Table::new(vec!["lambda", "alpha", "n", "flagged", "note"]);
        t.push(vec![
            Value::Float(0.1),
            Value::Float(1.0 / 3.0),
            Value::UInt(40),
            Value::Bool(false),
            Value::Text("plain".into()),
        ])
        .unwrap();
        t.push(vec![
            Value::Float(f64::INFINITY),
            Value::Float(-0.0),
            Value::UInt(0),
            Value::Bool(true),
            Value::Text("needs, quoting \"here\"".into()),
        ])
        .unwrap();
        let csv = t.to_csv();
        let expected = "lambda,alpha,n,flagged,note\n\
                        0.1,0.3333333333333333,40,false,plain\n\
                        inf,-0,0,true,\"needs, quoting \"\"here\"\"\"\n";
        assert_eq!(csv, expected);
        // Shortest round-trip: parsing back gives the identical float.
        assert_eq!("0.3333333333333333".parse::<f64>().unwrap(), 1.0 / 3.0);
        // Same table, same bytes, same digest.
        assert_eq!(sha256_hex(csv.as_bytes()), sha256_hex(t.to_csv().as_bytes()));
        // Mismatched row width is rejected.
        assert!(t.push(vec![Value::UInt(1)]).is_err());
    }

    #[test]
    fn digests_match_known_vectors() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn plots_are_self_contained_and_skip_infinities() {
        let plot = Plot {
            title: "rate curve <test>".into(),
            x_label: "speed".into(),
            y_label: "rate".into(),
            series: vec![
                Series {
                    name: "empirical".into(),
                    points: vec![(0.0, 0.01), (0.5, 0.17), (1.5, f64::INFINITY)],
                },
                Series {
                    name: "theory".into(),
                    points: vec![(0.0, 0.0), (0.5, 0.1308)],
                },
            ],
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("empirical"));
        assert!(svg.contains("theory"));
        assert!(svg.contains("&lt;test&gt;"));
        // The infinite point appears in no polyline: every plotted
        // coordinate stays inside the canvas.
        for cap in svg.split("points=\"").skip(1) {
            let coords = cap.split('"').next().unwrap();
            for pair in coords.split(' ') {
                let (x, y) = pair.split_once(',').unwrap();
                assert!(x.parse::<f64>().unwrap() <= WIDTH);
                assert!(y.parse::<f64>().unwrap() <= HEIGHT);
            }
        }
        // Deterministic rendering.
        assert_eq!(sha256_hex(svg.as_bytes()), sha256_hex(plot.to_svg().as_bytes()));
    }

    #[test]
    fn manifests_echo_config_and_collect_digests() {
        let config = serde_json::json!({"dimension": 1, "speeds": [0.1, 0.5]});
        let mut m = RunManifest::start("rate", config.clone(), 42);
        m.record("rate.csv", sha256_hex(b"v,I\n0.5,0.1308\n"));
        m.record("rate.svg", sha256_hex(b"<svg/>"));
        let json = m.finish().unwrap();
        let parsed: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.command, "rate");
        assert_eq!(parsed.seed, 42);
        assert_eq!(parsed.config, config);
        assert_eq!(parsed.outputs.len(), 2);
        assert_eq!(
            parsed.outputs["rate.csv"],
            sha256_hex(b"v,I\n0.5,0.1308\n")
        );
        assert!(!parsed.version.is_empty());
        assert!(!parsed.finished.is_empty());
    }
}
