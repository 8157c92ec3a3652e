use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::record::{GateFlags, SweepRecord};
use super::report::{NamedFit, SuiteOutcome};
use crate::error::{Error, Result};

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 9] = [
    "scenario", "k", "quantity", "model_re", "model_im", "pred_re", "pred_im", "rel_err", "gate",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scenario: String,
    k: f64,
    quantity: String,
    model_re: f64,
    model_im: f64,
    pred_re: f64,
    pred_im: f64,
    rel_err: f64,
    gate: GateFlags,
}

impl From<&SweepRecord> for CsvRow {
    fn from(r: &SweepRecord) -> Self {
        CsvRow {
            scenario: r.scenario.clone(),
            k: r.k,
            quantity: r.quantity.clone(),
            model_re: r.model.re,
            model_im: r.model.im,
            pred_re: r.predicted.re,
            pred_im: r.predicted.im,
            rel_err: r.rel_err,
            gate: r.gate,
        }
    }
}

impl From<CsvRow> for SweepRecord {
    fn from(r: CsvRow) -> Self {
        SweepRecord {
            scenario: r.scenario,
            k: r.k,
            quantity: r.quantity,
            model: Complex64::new(r.model_re, r.model_im),
            predicted: Complex64::new(r.pred_re, r.pred_im),
            rel_err: r.rel_err,
            gate: r.gate,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// CSV bytes for the records. Floats use the shortest round-trip form, so
/// the output is deterministic and the loader recovers every value exactly.
pub fn csv_bytes(records: &[SweepRecord]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to emit".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow::from(r))
            .map_err(|e| csv_err(Path::new("<memory>"), e))?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let bytes = csv_bytes(records)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| row.map(SweepRecord::from).map_err(|e| csv_err(path, e)))
        .collect()
}

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 48.0;

/// One panel per fit with at least one point: the fitted points and the
/// least-squares line. Returns `None` when there is nothing to plot.
pub fn svg_plot(outcome: &SuiteOutcome) -> Option<String> {
    let fits: Vec<&NamedFit> = outcome
        .fits
        .iter()
        .filter(|f| !f.points.is_empty())
        .collect();
    if fits.is_empty() {
        return None;
    }
    let height = PANEL_H * fits.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" font-family="monospace" font-size="11">"#
    );
    for (i, f) in fits.iter().enumerate() {
        panel(&mut s, f, &outcome.scenario, PANEL_H * i as f64);
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn panel(s: &mut String, f: &NamedFit, scenario: &str, top: f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in &f.points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if let (Some(b), Some(a)) = (f.fit.slope, f.fit.intercept) {
        for x in [x0, x1] {
            y0 = y0.min(a + b * x);
            y1 = y1.max(a + b * x);
        }
    }
    let pad = |lo: f64, hi: f64| {
        if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (PANEL_W - 2.0 * MARGIN);
    let py = |y: f64| top + PANEL_H - MARGIN - (y - y0) / (y1 - y0) * (PANEL_H - 2.0 * MARGIN);
    let (xl, yl) = if f.loglog {
        ("ln k", "ln y")
    } else {
        ("k", "y")
    };
    let slope = f
        .fit
        .slope
        .map_or_else(|| "undefined".to_string(), |b| format!("{b:.4}"));
    let r2 = f
        .fit
        .r2
        .map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">{scenario} {}: slope {slope}, R2 {r2}, excluded {}</text>"#,
        MARGIN,
        top + 20.0,
        f.name,
        f.fit.excluded
    );
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        MARGIN,
        top + MARGIN,
        PANEL_W - 2.0 * MARGIN,
        PANEL_H - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">{xl} [{x0:.3}, {x1:.3}]</text><text x="4" y="{:.2}">{yl} [{y0:.3}, {y1:.3}]</text>"#,
        MARGIN,
        top + PANEL_H - 12.0,
        top + MARGIN - 6.0
    );
    for p in &f.points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#,
            px(p[0]),
            py(p[1])
        );
    }
    if let (Some(b), Some(a)) = (f.fit.slope, f.fit.intercept) {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red"/>"#,
            px(x0),
            py(a + b * x0),
            px(x1),
            py(a + b * x1)
        );
    }
}

pub fn summary_json(outcome: &SuiteOutcome) -> String {
    let mut s = serde_json::to_string_pretty(outcome).expect("outcome serializes");
    s.push('\n');
    s
}

/// Writes `<suite>-<scenario>.csv` and `.json` (and `.svg` when asked and
/// there is a fit to draw) into `dir`, creating it if needed.
pub fn emit_outputs(dir: &Path, outcome: &SuiteOutcome, svg: bool) -> Result<Vec<PathBuf>> {
    if outcome.records.is_empty() {
        return Err(Error::InvalidInput("no records to emit".into()));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = format!("{}-{}", outcome.suite, outcome.scenario);
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{stem}.csv"));
    write_csv(&csv_path, &outcome.records)?;
    written.push(csv_path);
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, summary_json(outcome)).map_err(io_err(&json_path))?;
    written.push(json_path);
    if svg {
        if let Some(text) = svg_plot(outcome) {
            let svg_path = dir.join(format!("{stem}.svg"));
            std::fs::write(&svg_path, text).map_err(io_err(&svg_path))?;
            written.push(svg_path);
        }
    }
    Ok(written)
}
