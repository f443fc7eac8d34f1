//! CSV tables, minimal SVG line charts and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{check_dim, Error, Result};

pub const CSV_HEADER: &str = "k,empirical_mean,empirical_stderr,bound";

/// One labelled curve: empirical mean and standard error per `k`, with an
/// optional bound (absent entries are written as empty fields).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub label: String,
    pub k: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub bound: Vec<Option<f64>>,
}

impl CurveTable {
    pub fn new(label: impl Into<String>, k: Vec<usize>, mean: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        check_dim(k.len(), mean.len())?;
        check_dim(k.len(), stderr.len())?;
        if k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("curve rows must be strictly increasing in k".into()));
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("standard errors must be >= 0".into()));
        }
        let bound = vec![None; k.len()];
        Ok(Self {
            label: label.into(),
            k,
            mean,
            stderr,
            bound,
        })
    }

    pub fn with_bound(mut self, bound: Vec<Option<f64>>) -> Result<Self> {
        check_dim(self.k.len(), bound.len())?;
        self.bound = bound;
        Ok(self)
    }

    /// Bound-only table (empirical columns empty).
    pub fn bound_only(label: impl Into<String>, k: Vec<usize>, bound: Vec<f64>) -> Result<Self> {
        check_dim(k.len(), bound.len())?;
        let n = k.len();
        Ok(Self {
            label: label.into(),
            k,
            mean: vec![f64::NAN; n],
            stderr: vec![f64::NAN; n],
            bound: bound.into_iter().map(Some).collect(),
        })
    }

    pub fn has_empirical(&self) -> bool {
        self.mean.iter().any(|m| !m.is_nan())
    }

    /// Shortest round-trip formatting, so identical runs give identical bytes.
    pub fn to_csv(&self) -> String {
        let field = |v: f64| if v.is_nan() { String::new() } else { format!("{v:e}") };
        let mut out = String::with_capacity(32 * self.k.len());
        out.push_str(CSV_HEADER);
        out.push('\n');
        for i in 0..self.k.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.k[i],
                field(self.mean[i]),
                field(self.stderr[i]),
                self.bound[i].map(field).unwrap_or_default()
            );
        }
        out
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart with a log-scaled y axis: empirical means with a shaded
/// `+- 2 SE` band, bounds dashed. Nonpositive values are clipped to the
/// smallest positive one on the chart.
pub fn render_svg(title: &str, curves: &[CurveTable], note: &str) -> String {
    let mut ys: Vec<f64> = Vec::new();
    let mut k_max = 1usize;
    for c in curves {
        k_max = k_max.max(*c.k.last().unwrap_or(&1));
        for i in 0..c.k.len() {
            if c.mean[i].is_finite() {
                ys.push(c.mean[i] + 2.0 * c.stderr[i]);
                ys.push(c.mean[i] - 2.0 * c.stderr[i]);
            }
            if let Some(b) = c.bound[i].filter(|b| b.is_finite()) {
                ys.push(b);
            }
        }
    }
    let positive: Vec<f64> = ys.iter().copied().filter(|y| *y > 0.0).collect();
    let (lo, hi) = if positive.is_empty() {
        (1e-3, 1.0)
    } else {
        let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().cloned().fold(0.0, f64::max);
        (lo, hi.max(lo * 10.0))
    };
    let (lo_exp, hi_exp) = (lo.log10().floor(), hi.log10().ceil());
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |k: usize| LEFT + plot_w * k as f64 / k_max as f64;
    let sy = |y: f64| {
        let t = (y.max(lo).log10() - lo_exp) / (hi_exp - lo_exp);
        TOP + plot_h * (1.0 - t)
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", escape(note));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    // axes and decade grid
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    let mut e = lo_exp;
    while e <= hi_exp {
        let y = sy(10f64.powf(e));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            e as i64
        );
        e += 1.0;
    }
    for i in 0..=5 {
        let k = k_max * i / 5;
        let x = sx(k);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{k}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">k</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );

    let mut legend_y = TOP + 10.0;
    for (ci, c) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let rows: Vec<usize> = (0..c.k.len()).filter(|i| c.mean[*i].is_finite()).collect();
        if !rows.is_empty() {
            let mut band = String::new();
            for &i in &rows {
                let _ = write!(band, "{:.2},{:.2} ", sx(c.k[i]), sy(c.mean[i] + 2.0 * c.stderr[i]));
            }
            for &i in rows.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(c.k[i]), sy(c.mean[i] - 2.0 * c.stderr[i]));
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = rows.iter().map(|&i| format!("{:.2},{:.2}", sx(c.k[i]), sy(c.mean[i]))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{} (mean, band 2 SE)</text>"#,
                WIDTH - RIGHT + 10.0,
                WIDTH - RIGHT + 30.0,
                WIDTH - RIGHT + 34.0,
                legend_y + 4.0,
                escape(&c.label)
            );
            legend_y += 16.0;
        }
        let bound: Vec<String> = (0..c.k.len())
            .filter_map(|i| c.bound[i].filter(|b| b.is_finite()).map(|b| format!("{:.2},{:.2}", sx(c.k[i]), sy(b))))
            .collect();
        if !bound.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2" stroke-dasharray="6 4"/>"#,
                bound.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-dasharray="6 4"/><text x="{:.2}" y="{:.2}">{} (bound)</text>"#,
                WIDTH - RIGHT + 10.0,
                WIDTH - RIGHT + 30.0,
                WIDTH - RIGHT + 34.0,
                legend_y + 4.0,
                escape(&c.label)
            );
            legend_y += 16.0;
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CurveTable {
        CurveTable::new("a<b", vec![0, 1, 2], vec![1.0, 0.5, 0.25], vec![0.0, 0.1, 0.05])
            .unwrap()
            .with_bound(vec![None, Some(2.0), Some(1.5)])
            .unwrap()
    }

    #[test]
    fn csv_schema() {
        let csv = table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,1e0,0e0,");
        assert_eq!(lines[2], "1,5e-1,1e-1,2e0");
        let only = CurveTable::bound_only("b", vec![0], vec![3.0]).unwrap().to_csv();
        assert_eq!(only.lines().nth(1).unwrap(), "0,,,3e0");
    }

    #[test]
    fn csv_values_round_trip() {
        let t = CurveTable::new("x", vec![0], vec![0.1 + 0.2], vec![1.0 / 3.0]).unwrap();
        let row = t.to_csv().lines().nth(1).unwrap().to_string();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(cols[2].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn rejects_unsorted_rows() {
        assert!(CurveTable::new("x", vec![1, 0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(CurveTable::new("x", vec![0], vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn svg_is_self_contained_and_escaped() {
        let svg = render_svg("t & u", &[table()], "sha256 abc");
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("t &amp; u"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("x.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
