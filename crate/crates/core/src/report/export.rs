use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{feature_distribution, render_bar_chart, ClusterReport, ReportError};

/// Chart category collecting whatever a truncated profile did not list.
pub const OTHER_CATEGORY: &str = "__other__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ExportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "svg" => Ok(ExportFormat::Svg),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(&path, bytes).map_err(io(&path))?;
    written.push(PathBuf::from(rel));
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

fn write_csv(report: &ClusterReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let mut totals: Vec<(u16, u64)> = report.status_histogram().into_iter().collect();
    totals.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let bytes = csv_bytes(
        &["statuscode", "count"],
        totals.into_iter().map(|(c, n)| vec![c.to_string(), n.to_string()]),
    )?;
    write_file(dir, "status_codes.csv", &bytes, written)?;

    let bytes = csv_bytes(
        &["cluster", "size", "client_errors", "server_errors"],
        report.summaries.iter().map(|s| {
            vec![
                s.cluster_id.to_string(),
                s.size.to_string(),
                s.error_class_split.client_error.to_string(),
                s.error_class_split.server_error.to_string(),
            ]
        }),
    )?;
    write_file(dir, "clusters.csv", &bytes, written)?;

    let bytes = csv_bytes(
        &["cluster", "statuscode", "count"],
        report.summaries.iter().flat_map(|s| {
            s.status_histogram
                .iter()
                .map(move |(c, n)| vec![s.cluster_id.to_string(), c.to_string(), n.to_string()])
        }),
    )?;
    write_file(dir, "status_histogram.csv", &bytes, written)?;

    let bytes = csv_bytes(
        &["cluster", "feature", "category", "count", "share", "distinct", "many"],
        report.summaries.iter().flat_map(|s| {
            s.attribute_profiles.iter().flat_map(move |p| {
                p.top.iter().map(move |c| {
                    vec![
                        s.cluster_id.to_string(),
                        p.feature.name().to_string(),
                        c.category.clone(),
                        c.count.to_string(),
                        c.share.to_string(),
                        p.distinct.to_string(),
                        p.many.to_string(),
                    ]
                })
            })
        }),
    )?;
    write_file(dir, "attributes.csv", &bytes, written)?;

    let mut rows = Vec::new();
    for &f in &report.features {
        let table = feature_distribution(report, f)?;
        rows.extend(table.rows.iter().map(|r| {
            vec![f.name().to_string(), r.cluster_id.to_string(), r.category.clone(), r.share.to_string()]
        }));
    }
    let bytes = csv_bytes(&["feature", "cluster", "category", "share"], rows)?;
    write_file(dir, "distributions.csv", &bytes, written)
}

fn write_svg(report: &ClusterReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    for s in report.summaries.iter().filter(|s| s.size > 0) {
        for p in &s.attribute_profiles {
            let mut bars: Vec<(String, f64)> = p.top.iter().map(|c| (c.category.clone(), c.share)).collect();
            if p.truncated {
                let listed: f64 = p.top.iter().map(|c| c.share).sum();
                bars.push((OTHER_CATEGORY.to_string(), (1.0 - listed).max(0.0)));
            }
            let title = format!(
                "{} cluster {} ({} rows): {}{}",
                report.host,
                s.cluster_id,
                s.size,
                p.feature.name(),
                if p.many { " (many)" } else { "" }
            );
            let rel = format!("svg/cluster{}_{}.svg", s.cluster_id, p.feature.name());
            write_file(dir, &rel, render_bar_chart(&title, &bars).as_bytes(), written)?;
        }
    }
    Ok(())
}

/// Write `report` into `dir` in each requested format and return the paths
/// written, relative to `dir`. JSON goes to `report.json`; CSV tables and
/// SVG charts (`svg/cluster{c}_{feature}.svg`) sit beside it.
pub fn export_report(report: &ClusterReport, formats: &[ExportFormat], dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        match f {
            ExportFormat::Json => {
                let mut text = serde_json::to_string_pretty(report)?;
                text.push('\n');
                write_file(dir, "report.json", text.as_bytes(), &mut written)?;
            }
            ExportFormat::Csv => write_csv(report, dir, &mut written)?,
            ExportFormat::Svg => write_svg(report, dir, &mut written)?,
        }
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<ClusterReport, ReportError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(serde_json::from_str(&text)?)
}
