//! Line charts of emitted CSV tables as standalone SVG.
//!
//! A plot spec is either a TOML file or an inline list such as
//! `x=epsilon,y=error,scale=loglog,group=k`. Rows sharing a group value and
//! an x value are averaged, which folds seeds into one line per group.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{LabError, LabResult};

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    LogLog,
    SemilogY,
    SemilogX,
    Linear,
}

impl Scale {
    fn log_x(self) -> bool {
        matches!(self, Scale::LogLog | Scale::SemilogX)
    }

    fn log_y(self) -> bool {
        matches!(self, Scale::LogLog | Scale::SemilogY)
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    /// Output path; defaults to the CSV path with an `.svg` extension.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl PlotSpec {
    /// Reads `spec` as a TOML file if such a file exists, otherwise as an
    /// inline `key=value,...` list.
    pub fn parse(spec: &str) -> LabResult<PlotSpec> {
        let path = Path::new(spec);
        let text = if path.is_file() {
            std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?
        } else {
            let mut table = toml::Table::new();
            for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
                let (k, v) = item.split_once('=').ok_or_else(|| LabError::validation(format!("plot spec item `{item}` is not key=value")))?;
                table.insert(k.trim().to_string(), toml::Value::String(v.trim().to_string()));
            }
            toml::to_string(&table).expect("string table serializes")
        };
        toml::from_str(&text).map_err(|e| LabError::validation(format!("plot spec: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope in the plotted coordinates.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PlotSummary {
    pub path: PathBuf,
    pub series: Vec<Series>,
}

fn parse_number(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" | "" => None,
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Reads the series a spec selects from a CSV file. Non-finite values, and
/// nonpositive ones on a log axis, are dropped.
pub fn read_series(csv_path: &Path, spec: &PlotSpec) -> LabResult<Vec<Series>> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::io(csv_path, io),
        other => LabError::validation(format!("{}: {other:?}", csv_path.display())),
    })?;
    let headers = reader.headers().map_err(|e| LabError::validation(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| LabError::validation(format!("{} has no column `{name}`", csv_path.display())));
    let (xi, yi) = (column(&spec.x)?, column(&spec.y)?);
    let gi = spec.group.as_deref().map(column).transpose()?;
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| LabError::validation(e.to_string()))?;
        let (Some(x), Some(y)) = (record.get(xi).and_then(parse_number), record.get(yi).and_then(parse_number)) else { continue };
        if !x.is_finite() || !y.is_finite() || (spec.scale.log_x() && x <= 0.0) || (spec.scale.log_y() && y <= 0.0) {
            continue;
        }
        let label = gi.map_or_else(|| spec.y.clone(), |g| format!("{}={}", spec.group.as_deref().unwrap_or(""), &record[g]));
        groups.entry(label).or_default().push((x, y));
    }
    let series: Vec<Series> = groups
        .into_iter()
        .map(|(label, mut raw)| {
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            let points: Vec<(f64, f64)> = raw
                .chunk_by(|a, b| a.0 == b.0)
                .map(|run| (run[0].0, run.iter().map(|p| p.1).sum::<f64>() / run.len() as f64))
                .collect();
            let transformed: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (if spec.scale.log_x() { x.ln() } else { x }, if spec.scale.log_y() { y.ln() } else { y })).collect();
            Series { label, slope: least_squares_slope(&transformed), points }
        })
        .collect();
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(LabError::validation(format!("{} has no plottable rows for {} against {}", csv_path.display(), spec.y, spec.x)));
    }
    Ok(series)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 60.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = values.map(|v| if log { v.log10() } else { v }).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Axis { log, lo, hi }
    }

    fn unit(&self, v: f64) -> f64 {
        ((if self.log { v.log10() } else { v }) - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0) as i32;
            (self.lo as i32..=self.hi as i32).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=5).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 5.0).map(|v| (v, format!("{v:.3}"))).collect()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(spec: &PlotSpec, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let xa = Axis::new(all().map(|p| p.0), spec.scale.log_x());
    let ya = Axis::new(all().map(|p| p.1), spec.scale.log_y());
    let (l, r, t, b) = MARGIN;
    let px = |x: f64| l + xa.unit(x) * (WIDTH - l - r);
    let py = |y: f64| HEIGHT - b - ya.unit(y) * (HEIGHT - t - b);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, WIDTH - l - r, HEIGHT - t - b);
    for (v, label) in xa.ticks() {
        let x = px(v);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, HEIGHT - b, HEIGHT - b + 5.0, HEIGHT - b + 20.0);
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, l - 5.0, l - 8.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, l + (WIDTH - l - r) / 2.0, HEIGHT - 15.0, escape(&spec.x));
    let _ = writeln!(svg, r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#, t + (HEIGHT - t - b) / 2.0, t + (HEIGHT - t - b) / 2.0, escape(&spec.y));
    if let Some(title) = &spec.title {
        let _ = writeln!(svg, r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, coords.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let slope = s.slope.map(|m| format!(" (slope {m:.3})")).unwrap_or_default();
        let _ = writeln!(svg, r#"<text x="{}" y="{}" fill="{color}">{}{slope}</text>"#, l + 10.0, t + 18.0 + 16.0 * i as f64, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the chart and returns where it went along with the series and
/// their slopes. Nothing is written when the spec does not match the file.
pub fn emit_plot(csv_path: &Path, spec: &PlotSpec) -> LabResult<PlotSummary> {
    let series = read_series(csv_path, spec)?;
    let path = spec.out.clone().unwrap_or_else(|| csv_path.with_extension("svg"));
    std::fs::write(&path, render(spec, &series)).map_err(|e| LabError::io(&path, e))?;
    Ok(PlotSummary { path, series })
}
