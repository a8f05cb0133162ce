use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::RunResult;
use super::suite::DomainTag;
use crate::analysis::{linear_fit, pearson, Correlation};
use crate::error::{Error, Result};
use crate::optim::Algorithm;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const PRIOR_COLOR: &str = "#1f5fbf";
const TRAM_COLOR: &str = "#c0392b";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub x: f64,
    pub y: f64,
}

/// Least-squares line through a group of points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

impl Trend {
    pub fn fit(points: &[(f64, f64)]) -> Option<Trend> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let (slope, intercept) = linear_fit(&xs, &ys).ok()?;
        Some(Trend {
            slope,
            intercept,
            points: points.len(),
        })
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Data behind a scatter plot, also embedded in the SVG as metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPlot {
    pub x_domain: String,
    pub y_domains: Vec<String>,
    /// One per run: accuracy on `x_domain` against mean accuracy over
    /// `y_domains`.
    pub points: Vec<ScatterPoint>,
    /// Fitted to every algorithm that is not a TRAM variant.
    pub prior_trend: Option<Trend>,
    pub tram_trend: Option<Trend>,
    /// Over all points.
    pub correlation: Option<Correlation>,
}

/// Names of the domains carrying `tag`, in suite order.
pub fn domains_with_tag(result: &RunResult, tag: DomainTag) -> Vec<String> {
    result.domains.iter().filter(|d| d.tag == tag).map(|d| d.domain.clone()).collect()
}

pub fn scatter_data(results: &[RunResult], x_domain: &str, y_domains: &[String]) -> Result<ScatterPlot> {
    if y_domains.is_empty() {
        return Err(Error::InvalidConfig("scatter plot needs at least one y domain".into()));
    }
    let mut points = Vec::with_capacity(results.len());
    for r in results {
        let lookup = |name: &str| {
            r.metric(name)
                .map(|m| m.accuracy)
                .ok_or_else(|| Error::InvalidConfig(format!("{} seed {} has no domain `{name}`", r.algorithm, r.seed)))
        };
        let x = lookup(x_domain)?;
        let ys = y_domains.iter().map(|d| lookup(d)).collect::<Result<Vec<_>>>()?;
        points.push(ScatterPoint {
            algorithm: r.algorithm,
            seed: r.seed,
            x,
            y: ys.iter().sum::<f64>() / ys.len() as f64,
        });
    }
    let group = |tram: bool| -> Vec<(f64, f64)> {
        points.iter().filter(|p| p.algorithm.is_tram() == tram).map(|p| (p.x, p.y)).collect()
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.x, p.y)).unzip();
    Ok(ScatterPlot {
        x_domain: x_domain.to_string(),
        y_domains: y_domains.to_vec(),
        prior_trend: Trend::fit(&group(false)),
        tram_trend: Trend::fit(&group(true)),
        correlation: pearson(&xs, &ys).ok(),
        points,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    (lo - pad, hi + pad)
}

impl ScatterPlot {
    pub fn to_svg(&self) -> Result<String> {
        let (x0, x1) = padded_range(self.points.iter().map(|p| p.x));
        let (y0, y1) = padded_range(self.points.iter().map(|p| p.y));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, "<metadata>{}</metadata>", escape(&serde_json::to_string(self)?));
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            s,
            r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
                sx(xv),
                bottom + 18.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
                left - 6.0,
                sy(yv) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">accuracy: {}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_domain)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">mean accuracy: {}</text>"#,
            HEIGHT / 2.0,
            escape(&self.y_domains.join(", "))
        );
        for (trend, color, dash, tram) in [
            (&self.prior_trend, PRIOR_COLOR, r#" stroke-dasharray="4 4""#, false),
            (&self.tram_trend, TRAM_COLOR, "", true),
        ] {
            let Some(t) = trend else { continue };
            let (lo, hi) = padded_range(self.points.iter().filter(|p| p.algorithm.is_tram() == tram).map(|p| p.x));
            let _ = writeln!(
                s,
                r#"<line class="trend" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                sx(lo),
                sy(t.predict(lo)),
                sx(hi),
                sy(t.predict(hi))
            );
        }
        for p in &self.points {
            let color = if p.algorithm.is_tram() { TRAM_COLOR } else { PRIOR_COLOR };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" fill-opacity="0.7"><title>{} seed {}</title></circle>"#,
                sx(p.x),
                sy(p.y),
                p.algorithm,
                p.seed
            );
        }
        if let Some(c) = self.correlation {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">Pearson r = {:.3} (p = {:.3e})</text>"#,
                left + 8.0,
                top - 12.0,
                c.r,
                c.p_value
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    /// Recovers the plot data embedded by [`ScatterPlot::to_svg`].
    pub fn from_svg(svg: &str) -> Result<Self> {
        let start = svg.find("<metadata>").ok_or_else(|| Error::Table("SVG has no metadata".into()))? + "<metadata>".len();
        let end = svg[start..].find("</metadata>").ok_or_else(|| Error::Table("unterminated metadata".into()))? + start;
        let json = svg[start..end].replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&");
        Ok(serde_json::from_str(&json)?)
    }
}

/// Writes the scatter plot of `results` to `path` and returns its data.
pub fn emit_scatter_plot(results: &[RunResult], x_domain: &str, y_domains: &[String], path: &Path) -> Result<ScatterPlot> {
    let plot = scatter_data(results, x_domain, y_domains)?;
    super::write_atomic(path, plot.to_svg()?.as_bytes())?;
    Ok(plot)
}
