//! Artifact writers. Every file is written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use loha::model::FilterSnapshot;
use loha::spectral::filter_response;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Points on the eigenvalue axis for filter plots.
pub const RESPONSE_POINTS: usize = 101;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serializes `rows` as CSV with a header taken from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseRow {
    pub lambda: f64,
    pub low: f64,
    pub high: f64,
}

/// Low and high responses on an even grid over `[0, λ_max]`.
pub fn response_rows(s: &FilterSnapshot) -> Vec<ResponseRow> {
    let lambdas: Vec<f64> = (0..RESPONSE_POINTS)
        .map(|i| s.lambda_max * i as f64 / (RESPONSE_POINTS - 1) as f64)
        .collect();
    let low = filter_response(&s.low_w, &lambdas, s.lambda_max);
    let high = filter_response(&s.high_w, &lambdas, s.lambda_max);
    lambdas
        .iter()
        .zip(low.iter().zip(&high))
        .map(|(&lambda, (&low, &high))| ResponseRow { lambda, low, high })
        .collect()
}

/// Line chart of both responses.
pub fn response_svg(rows: &[ResponseRow], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x_max = rows.last().map_or(1.0, |r| r.lambda).max(f64::MIN_POSITIVE);
    let (mut y_min, mut y_max) = rows
        .iter()
        .flat_map(|r| [r.low, r.high])
        .fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if y_max - y_min < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let px = |x: f64| PAD + x / x_max * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y_min) / (y_max - y_min) * (H - 2.0 * PAD);
    let path = |f: &dyn Fn(&ResponseRow) -> f64| {
        rows.iter()
            .enumerate()
            .map(|(i, r)| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(r.lambda), py(f(r))))
            .collect::<String>()
    };
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    s.push_str(&format!("  <title>{}</title>\n", escape(title)));
    s.push_str(&format!("  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "  <line x1=\"{PAD}\" y1=\"{y0:.2}\" x2=\"{x1}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        y0 = py(0.0f64.clamp(y_min, y_max)),
        x1 = W - PAD
    ));
    s.push_str(&format!(
        "  <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - PAD
    ));
    for (label, x) in [("0", 0.0), (&*format!("{x_max}"), x_max)] {
        s.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            px(x),
            H - PAD + 18.0
        ));
    }
    for y in [y_min, y_max] {
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{y:.3}</text>\n",
            PAD - 6.0,
            py(y) + 4.0
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">eigenvalue</text>\n",
        W / 2.0,
        H - 10.0
    ));
    s.push_str(&format!(
        "  <path id=\"low\" d=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
        path(&|r| r.low)
    ));
    s.push_str(&format!(
        "  <path id=\"high\" d=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n",
        path(&|r| r.high)
    ));
    s.push_str(&format!(
        "  <text x=\"{x}\" y=\"{}\" font-size=\"12\" fill=\"#1f77b4\">low</text>\n",
        PAD,
        x = W - PAD - 40.0
    ));
    s.push_str(&format!(
        "  <text x=\"{x}\" y=\"{}\" font-size=\"12\" fill=\"#d62728\">high</text>\n",
        PAD + 16.0,
        x = W - PAD - 40.0
    ));
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `<stem>.csv` and `<stem>.svg` for a snapshot.
pub fn write_filter_plot(dir: &Path, stem: &str, s: &FilterSnapshot) -> Result<(), CliError> {
    let rows = response_rows(s);
    if rows.iter().any(|r| !r.low.is_finite() || !r.high.is_finite()) {
        return Err(CliError::Numeric("filter response is not finite".into()));
    }
    write_csv(&dir.join(format!("{stem}.csv")), &rows)?;
    write_atomic(&dir.join(format!("{stem}.svg")), response_svg(&rows, stem).as_bytes())
}

/// Renders rows as a Markdown table.
pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", header.join(" | "));
    s.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

/// Converts CSV text to a Markdown table.
pub fn csv_to_markdown(text: &str) -> Result<String, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(markdown_table(&header, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use loha::model::FilterKind;
    use loha::spectral::Orientation;

    fn snapshot() -> FilterSnapshot {
        FilterSnapshot {
            order: 2,
            lambda_max: 2.0,
            orientation: Orientation::Corrected,
            filter_kind: FilterKind::Sliding,
            low_gamma: vec![],
            high_gamma: vec![],
            low_w: vec![1.0, 1.0, 0.0],
            high_w: vec![1.0, -1.0, 0.0],
            low_params: None,
            high_params: None,
            alpha: 0.5,
            beta: 0.5,
        }
    }

    #[test]
    fn response_grid_endpoints() {
        let rows = response_rows(&snapshot());
        assert_eq!(rows.len(), RESPONSE_POINTS);
        assert_eq!(rows[0].lambda, 0.0);
        assert_eq!(rows[100].lambda, 2.0);
        // 1 + x with x = 1 − λ
        assert!((rows[0].low - 2.0).abs() < 1e-12);
        assert!(rows[100].low.abs() < 1e-12);
        assert!((rows[100].high - 2.0).abs() < 1e-12);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn markdown_from_csv() {
        let md = csv_to_markdown("a,b\n1,2\n").unwrap();
        assert_eq!(md, "| a | b |\n| --- | --- |\n| 1 | 2 |\n");
    }
}
