use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::experiment::RunResult;
use super::suite::DomainTag;
use crate::analysis::{pearson, significance, Correlation, SignificanceTest};
use crate::error::{Error, Result};
use crate::optim::Algorithm;

/// Per-domain quantity a table summarizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMetric {
    #[default]
    Accuracy,
    Nll,
    Perplexity,
}

impl TableMetric {
    fn of(self, m: &super::experiment::DomainMetrics) -> f64 {
        match self {
            TableMetric::Accuracy => m.accuracy,
            TableMetric::Nll => m.nll,
            TableMetric::Perplexity => m.perplexity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub tag: DomainTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub algorithm: Algorithm,
    pub runs: usize,
    /// One entry per column.
    pub mean: Vec<f64>,
    /// Sample standard deviation; 0 for a single run.
    pub std: Vec<f64>,
    /// Mean of the zero-shot column means.
    pub zs_avg: f64,
    /// Against the baseline on per-run zero-shot averages; absent for the
    /// baseline itself or when it has no runs.
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub metric: TableMetric,
    pub baseline: Algorithm,
    pub test: SignificanceTest,
    pub columns: Vec<Column>,
    /// In order of first appearance in the results.
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidConfig(format!("unknown table format `{other}`"))),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn zero_shot_of(columns: &[Column], values: &[f64]) -> f64 {
    let zs: Vec<f64> = columns
        .iter()
        .zip(values)
        .filter(|(c, _)| c.tag != DomainTag::Train)
        .map(|(_, v)| *v)
        .collect();
    if zs.is_empty() {
        f64::NAN
    } else {
        mean(&zs)
    }
}

/// Summarizes `results` per algorithm. Every run must cover the same
/// domains in the same order.
pub fn aggregate(
    results: &[RunResult],
    metric: TableMetric,
    baseline: Algorithm,
    test: SignificanceTest,
) -> Result<ResultsTable> {
    let columns: Vec<Column> = results
        .first()
        .map(|r| {
            r.domains
                .iter()
                .map(|d| Column {
                    name: d.domain.clone(),
                    tag: d.tag,
                })
                .collect()
        })
        .unwrap_or_default();
    for r in results {
        let same = r.domains.len() == columns.len()
            && r.domains.iter().zip(&columns).all(|(d, c)| d.domain == c.name && d.tag == c.tag);
        if !same {
            return Err(Error::Table(format!("{} seed {} covers different domains", r.algorithm, r.seed)));
        }
    }
    let mut groups: IndexMap<Algorithm, Vec<&RunResult>> = IndexMap::new();
    for r in results {
        groups.entry(r.algorithm).or_default().push(r);
    }
    let per_run_zs = |r: &RunResult| {
        let values: Vec<f64> = r.domains.iter().map(|d| metric.of(d)).collect();
        zero_shot_of(&columns, &values)
    };
    let base_runs: IndexMap<u64, f64> = groups
        .get(&baseline)
        .map(|rs| rs.iter().map(|r| (r.seed, per_run_zs(r))).collect())
        .unwrap_or_default();
    let mut rows = Vec::with_capacity(groups.len());
    for (&algorithm, runs) in &groups {
        let (mut means, mut stds) = (Vec::new(), Vec::new());
        for k in 0..columns.len() {
            let xs: Vec<f64> = runs.iter().map(|r| metric.of(&r.domains[k])).collect();
            means.push(mean(&xs));
            stds.push(sample_std(&xs));
        }
        let p_value = if algorithm == baseline || base_runs.is_empty() {
            None
        } else {
            match test {
                SignificanceTest::Wilcoxon => {
                    let (a, b): (Vec<f64>, Vec<f64>) = runs
                        .iter()
                        .filter_map(|r| base_runs.get(&r.seed).map(|&b| (per_run_zs(r), b)))
                        .unzip();
                    if a.is_empty() {
                        None
                    } else {
                        Some(significance(&a, &b, test)?)
                    }
                }
                SignificanceTest::Ks => {
                    let a: Vec<f64> = runs.iter().map(|r| per_run_zs(r)).collect();
                    let b: Vec<f64> = base_runs.values().copied().collect();
                    Some(significance(&a, &b, test)?)
                }
            }
        };
        rows.push(TableRow {
            algorithm,
            runs: runs.len(),
            zs_avg: zero_shot_of(&columns, &means),
            mean: means,
            std: stds,
            p_value,
        });
    }
    Ok(ResultsTable {
        metric,
        baseline,
        test,
        columns,
        rows,
    })
}

fn column_of(header: &str) -> Result<(&str, Column)> {
    let mut parts = header.splitn(3, ':');
    let kind = parts.next().unwrap_or_default();
    let (Some(name), Some(tag)) = (parts.next(), parts.next()) else {
        return Err(Error::Table(format!("unexpected column `{header}`")));
    };
    let tag: DomainTag = serde_json::from_value(serde_json::Value::String(tag.into()))
        .map_err(|_| Error::Table(format!("unknown domain tag in `{header}`")))?;
    Ok((
        kind,
        Column {
            name: name.to_string(),
            tag,
        },
    ))
}

fn tag_name(tag: DomainTag) -> String {
    match serde_json::to_value(tag) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("domain tags serialize as strings"),
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Table(format!("`{field}` is not a number")))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Table(e.to_string())
}

impl ResultsTable {
    /// Metadata line followed by one row per algorithm. Numbers are written
    /// in shortest round-trip form, so parsing and re-emitting is lossless.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["algorithm".to_string(), "runs".to_string()];
        for prefix in ["mean", "std"] {
            for c in &self.columns {
                header.push(format!("{prefix}:{}:{}", c.name, tag_name(c.tag)));
            }
        }
        header.push("zs_avg".into());
        header.push("p_value".into());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec = vec![row.algorithm.to_string(), row.runs.to_string()];
            rec.extend(row.mean.iter().chain(&row.std).map(|v| v.to_string()));
            rec.push(row.zs_avg.to_string());
            rec.push(row.p_value.map(|p| p.to_string()).unwrap_or_default());
            w.write_record(&rec).map_err(csv_error)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Table(e.to_string()))?)
            .map_err(|e| Error::Table(e.to_string()))?;
        let test = match self.test {
            SignificanceTest::Wilcoxon => "wilcoxon",
            SignificanceTest::Ks => "ks",
        };
        let metric = match self.metric {
            TableMetric::Accuracy => "accuracy",
            TableMetric::Nll => "nll",
            TableMetric::Perplexity => "perplexity",
        };
        Ok(format!("# metric={metric} baseline={} test={test}\n{body}", self.baseline))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (meta, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Table("missing metadata line".into()))?;
        let mut settings = IndexMap::new();
        for kv in meta
            .strip_prefix("# ")
            .ok_or_else(|| Error::Table("missing metadata line".into()))?
            .split_whitespace()
        {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Table(format!("bad metadata `{kv}`")))?;
            settings.insert(k, v);
        }
        let get = |k: &str| settings.get(k).copied().ok_or_else(|| Error::Table(format!("metadata lacks `{k}`")));
        let as_enum = |v: &str| serde_json::Value::String(v.to_string());
        let metric: TableMetric =
            serde_json::from_value(as_enum(get("metric")?)).map_err(|e| Error::Table(e.to_string()))?;
        let test: SignificanceTest =
            serde_json::from_value(as_enum(get("test")?)).map_err(|e| Error::Table(e.to_string()))?;
        let baseline: Algorithm = get("baseline")?.parse()?;

        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
        if header.len() < 4 || header[0] != "algorithm" || header[1] != "runs" || header[header.len() - 2] != "zs_avg" {
            return Err(Error::Table("unexpected header".into()));
        }
        let domain_fields = &header[2..header.len() - 2];
        if domain_fields.len() % 2 != 0 {
            return Err(Error::Table("unpaired mean/std columns".into()));
        }
        let k = domain_fields.len() / 2;
        let mut columns = Vec::with_capacity(k);
        for (i, h) in domain_fields.iter().enumerate() {
            let (kind, col) = column_of(h)?;
            let expected = if i < k { "mean" } else { "std" };
            if kind != expected || (i >= k && col != columns[i - k]) {
                return Err(Error::Table(format!("unexpected column `{h}`")));
            }
            if i < k {
                columns.push(col);
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_error)?;
            let f: Vec<&str> = rec.iter().collect();
            let nums = |range: std::ops::Range<usize>| f[range].iter().map(|s| parse_f64(s)).collect::<Result<Vec<_>>>();
            let p = f[f.len() - 1];
            rows.push(TableRow {
                algorithm: f[0].parse()?,
                runs: f[1].parse().map_err(|_| Error::Table(format!("`{}` is not a run count", f[1])))?,
                mean: nums(2..2 + k)?,
                std: nums(2 + k..2 + 2 * k)?,
                zs_avg: parse_f64(f[2 + 2 * k])?,
                p_value: if p.is_empty() { None } else { Some(parse_f64(p)?) },
            });
        }
        Ok(ResultsTable {
            metric,
            baseline,
            test,
            columns,
            rows,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Training column, zero-shot columns, then their average. Accuracies
    /// are shown in percent.
    pub fn to_markdown(&self) -> String {
        let scale = if self.metric == TableMetric::Accuracy { 100.0 } else { 1.0 };
        let mut out = String::new();
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(out, "| Algorithm | {} | ZS Avg | p |", names.join(" | "));
        let _ = writeln!(out, "|---|{}---:|---:|", "---:|".repeat(names.len()));
        for row in &self.rows {
            let cells: Vec<String> = row
                .mean
                .iter()
                .zip(&row.std)
                .map(|(m, s)| format!("{:.2} ± {:.2}", m * scale, s * scale))
                .collect();
            let p = match row.p_value {
                Some(p) => format!("{p:.4}"),
                None if row.algorithm == self.baseline => "baseline".into(),
                None => "n/a".into(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {p} |",
                row.algorithm,
                cells.join(" | "),
                row.zs_avg * scale
            );
        }
        out
    }

    pub fn render(&self, format: TableFormat) -> Result<String> {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Json => self.to_json(),
            TableFormat::Markdown => Ok(self.to_markdown()),
        }
    }

    pub fn row(&self, algorithm: Algorithm) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

/// Writes `table` in `format` to `path`, replacing it atomically.
pub fn emit_results(table: &ResultsTable, format: TableFormat, path: &Path) -> Result<()> {
    super::write_atomic(path, table.render(format)?.as_bytes())
}

/// Pearson correlation, across runs, between training-domain accuracy and
/// each evaluation domain's accuracy. `None` where fewer than three runs
/// exist or either side is constant.
pub fn domain_correlations(results: &[RunResult]) -> IndexMap<String, Option<Correlation>> {
    let mut out = IndexMap::new();
    let Some(first) = results.first() else {
        return out;
    };
    let train: Vec<f64> = results.iter().map(|r| r.domains[0].accuracy).collect();
    for (k, d) in first.domains.iter().enumerate().skip(1) {
        let ys: Vec<f64> = results.iter().map(|r| r.domains[k].accuracy).collect();
        out.insert(d.domain.clone(), pearson(&train, &ys).ok());
    }
    out
}

/// Pearson correlation, across runs, between in-domain sharpness and each
/// evaluation domain's sharpness.
pub fn sharpness_correlations(results: &[RunResult]) -> IndexMap<String, Option<Correlation>> {
    let mut out = IndexMap::new();
    let Some(first) = results.first() else {
        return out;
    };
    let base: Vec<f64> = results.iter().map(|r| r.sharpness.in_domain).collect();
    for name in first.sharpness.per_domain.keys().skip(1) {
        let ys: Option<Vec<f64>> = results.iter().map(|r| r.sharpness.per_domain.get(name).copied()).collect();
        out.insert(name.clone(), ys.and_then(|ys| pearson(&base, &ys).ok()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResultsTable {
        ResultsTable {
            metric: TableMetric::Accuracy,
            baseline: Algorithm::Adam,
            test: SignificanceTest::Wilcoxon,
            columns: vec![
                Column {
                    name: "train".into(),
                    tag: DomainTag::Train,
                },
                Column {
                    name: "corr_1".into(),
                    tag: DomainTag::Correlated,
                },
            ],
            rows: vec![
                TableRow {
                    algorithm: Algorithm::Adam,
                    runs: 2,
                    mean: vec![0.9, 0.1 + 0.2],
                    std: vec![0.0, 1.0 / 3.0],
                    zs_avg: 0.1 + 0.2,
                    p_value: None,
                },
                TableRow {
                    algorithm: Algorithm::TramX,
                    runs: 2,
                    mean: vec![0.8, 0.7],
                    std: vec![0.05, 0.0],
                    zs_avg: 0.7,
                    p_value: Some(0.5),
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let t = table();
        let text = t.to_csv().unwrap();
        let back = ResultsTable::from_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv().unwrap(), text);
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = aggregate(&[], TableMetric::Accuracy, Algorithm::Adam, SignificanceTest::Wilcoxon).unwrap();
        let text = t.to_csv().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(ResultsTable::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn markdown_has_one_line_per_row() {
        let md = table().to_markdown();
        assert_eq!(md.lines().count(), 4);
        assert!(md.contains("| adam | 90.00 ± 0.00 | 30.00 ± 33.33 | 30.00 | baseline |"));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(ResultsTable::from_csv("algorithm,runs\n").is_err());
        let bad = "# metric=accuracy baseline=adam test=wilcoxon\nalgorithm,runs,mean:a:train,zs_avg,p_value\n";
        assert!(ResultsTable::from_csv(bad).is_err());
    }
}
