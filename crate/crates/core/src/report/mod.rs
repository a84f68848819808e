//! Figure and table analogs: score histogram by ethnicity, marginal means,
//! per-name scores and invitation curves across cutoffs. Each is written as
//! CSV plus an SVG rendering of the same numbers.

mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{Ethnicity, Gender};
use crate::stats::{
    build_design, fit_ols, marginal_effects_at_mean, threshold_sweep, wild_cluster_bootstrap,
    BootstrapOptions, FitResult, MemPoint, ModelKind, ModelSpec, StatsError, SweepOptions,
    SweepResult,
};
use crate::table::AnalysisTable;
use svg::{color, padded, Canvas};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no scored observations to report")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Cutoff for the per-name invitation probability.
    pub cutoff: u8,
    /// Wild bootstrap replications behind the marginal-mean intervals; zero
    /// keeps the classical OLS covariance.
    pub replications: usize,
    pub seed: u64,
    pub sweep: SweepOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            cutoff: 60,
            replications: 2000,
            seed: 0,
            sweep: SweepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub ethnicity: Ethnicity,
    pub bin_lo: u8,
    pub bin_hi: u8,
    pub count: usize,
    pub relative_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameRow {
    pub first: String,
    pub last: String,
    pub ethnicity: Ethnicity,
    pub gender: Gender,
    pub count: usize,
    pub mean: f64,
    pub invitation_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemRow {
    ethnicity: String,
    estimate: f64,
    ci_lo: f64,
    ci_hi: f64,
    se: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub histogram: Vec<HistogramBin>,
    pub fit: FitResult,
    pub mem: Vec<MemPoint>,
    pub names: Vec<NameRow>,
    pub sweep: SweepResult,
}

/// Relative score frequencies in 5-point bins (1–5, …, 96–100) per ethnicity.
pub fn score_histogram(table: &AnalysisTable) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<Ethnicity, [usize; 20]> = BTreeMap::new();
    for r in &table.rows {
        if let Some(s) = r.score {
            counts.entry(r.ethnicity).or_insert([0; 20])[usize::from((s - 1) / 5)] += 1;
        }
    }
    let mut out = Vec::new();
    for e in Ethnicity::ALL {
        let Some(c) = counts.get(&e) else { continue };
        let total: usize = c.iter().sum();
        for (b, &count) in c.iter().enumerate() {
            out.push(HistogramBin {
                ethnicity: e,
                bin_lo: b as u8 * 5 + 1,
                bin_hi: b as u8 * 5 + 5,
                count,
                relative_frequency: count as f64 / total as f64,
            });
        }
    }
    out
}

/// Mean score and share at or above `cutoff` for every name, highest mean first.
pub fn name_scores(table: &AnalysisTable, cutoff: u8) -> Vec<NameRow> {
    let mut acc: BTreeMap<(String, String, Ethnicity, Gender), (usize, f64, usize)> = BTreeMap::new();
    for r in &table.rows {
        if let Some(s) = r.score {
            let e = acc
                .entry((r.first.clone(), r.last.clone(), r.ethnicity, r.gender))
                .or_default();
            e.0 += 1;
            e.1 += f64::from(s);
            e.2 += usize::from(s >= cutoff);
        }
    }
    let mut rows: Vec<NameRow> = acc
        .into_iter()
        .map(|((first, last, ethnicity, gender), (n, sum, hits))| NameRow {
            first,
            last,
            ethnicity,
            gender,
            count: n,
            mean: sum / n as f64,
            invitation_probability: hits as f64 / n as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then_with(|| (&a.last, &a.first).cmp(&(&b.last, &b.first)))
    });
    rows
}

/// Compute every figure from a scored table.
pub fn build_report(table: &AnalysisTable, options: &ReportOptions) -> Result<Report, ReportError> {
    if table.rows.iter().all(|r| r.score.is_none()) {
        return Err(ReportError::Empty);
    }
    let design = build_design(table, &ModelSpec::new(ModelKind::Eq1))?;
    let mut fit = fit_ols(&design)?;
    if options.replications > 0 {
        let boot = wild_cluster_bootstrap(
            &fit,
            &design,
            &BootstrapOptions::new(options.replications, options.seed),
        )?;
        fit.apply_bootstrap(&boot);
    }
    let mem = marginal_effects_at_mean(&fit, &design, "ethnicity", None)?;
    Ok(Report {
        histogram: score_histogram(table),
        fit,
        mem,
        names: name_scores(table, options.cutoff),
        sweep: threshold_sweep(table, &options.sweep)?,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Report {
    /// Write the CSV and SVG pairs into `dir`, returning the paths in order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let mut emit = |name: &str, csv: &dyn Fn(&Path) -> Result<(), ReportError>, svg: String| {
            let c = dir.join(format!("{name}.csv"));
            csv(&c)?;
            let s = dir.join(format!("{name}.svg"));
            write_text(&s, &svg)?;
            written.push(c);
            written.push(s);
            Ok::<_, ReportError>(())
        };
        emit("fig1_histogram", &|p| write_csv(p, &self.histogram), self.histogram_svg())?;
        let mem_rows: Vec<MemRow> = self
            .mem
            .iter()
            .map(|m| MemRow {
                ethnicity: m.level.clone(),
                estimate: m.estimate,
                ci_lo: m.ci_lo,
                ci_hi: m.ci_hi,
                se: m.se_link,
            })
            .collect();
        emit("fig2_mem", &|p| write_csv(p, &mem_rows), self.mem_svg())?;
        emit("fig3_names", &|p| write_csv(p, &self.names), self.names_svg())?;
        emit(
            "fig4_sweep",
            &|p| {
                self.sweep.write_csv(p).map_err(|source| ReportError::Csv {
                    path: p.to_path_buf(),
                    source,
                })
            },
            self.sweep_svg(),
        )?;
        let fit_path = dir.join("fit_eq1.json");
        let json = serde_json::to_string_pretty(&self.fit).expect("fit serializes");
        write_text(&fit_path, &(json + "\n"))?;
        written.push(fit_path);
        Ok(written)
    }

    fn histogram_svg(&self) -> String {
        let y = padded(self.histogram.iter().map(|b| b.relative_frequency).chain([0.0]));
        let mut c = Canvas::new(
            "Score distribution by ethnicity",
            "score (5-point bins)",
            "relative frequency",
            (0.0, 100.0),
            (0.0, y.1),
        );
        c.x_ticks(10);
        for (i, e) in Ethnicity::ALL.iter().enumerate() {
            let pts: Vec<(f64, f64)> = self
                .histogram
                .iter()
                .filter(|b| b.ethnicity == *e)
                .map(|b| ((f64::from(b.bin_lo) + f64::from(b.bin_hi)) / 2.0, b.relative_frequency))
                .collect();
            if !pts.is_empty() {
                c.polyline(&pts, color(i));
                c.legend(e.as_str(), color(i));
            }
        }
        c.finish()
    }

    fn mem_svg(&self) -> String {
        let y = padded(self.mem.iter().flat_map(|m| [m.ci_lo, m.ci_hi]));
        let mut c = Canvas::new(
            "Marginal mean score by ethnicity (95% CI)",
            "ethnicity",
            "score",
            (-0.5, self.mem.len() as f64 - 0.5),
            y,
        );
        for (i, m) in self.mem.iter().enumerate() {
            let x = i as f64;
            c.error_bar(x, m.ci_lo, m.ci_hi, color(i));
            c.point(x, m.estimate, color(i));
            c.x_label_at(x, &m.level);
        }
        c.finish()
    }

    fn names_svg(&self) -> String {
        let y = padded(self.names.iter().map(|n| n.mean));
        let mut c = Canvas::new(
            "Mean score per name",
            "name rank",
            "mean score",
            (0.0, self.names.len().max(1) as f64 + 1.0),
            y,
        );
        c.x_ticks(5);
        for (rank, n) in self.names.iter().enumerate() {
            let i = Ethnicity::ALL.iter().position(|e| *e == n.ethnicity).unwrap_or(0);
            c.point(rank as f64 + 1.0, n.mean, color(i));
        }
        for (i, e) in Ethnicity::ALL.iter().enumerate() {
            if self.names.iter().any(|n| n.ethnicity == *e) {
                c.legend(e.as_str(), color(i));
            }
        }
        c.finish()
    }

    fn sweep_svg(&self) -> String {
        let cut = |r: &crate::stats::SweepRow| f64::from(r.cutoff);
        let x = padded(self.sweep.rows.iter().map(cut));
        let mut c = Canvas::new(
            "Predicted invitation probability by cutoff (95% CI)",
            "cutoff",
            "probability",
            x,
            (0.0, 1.0),
        );
        c.x_ticks(10);
        for (i, g) in self.sweep.groups().iter().enumerate() {
            let rows: Vec<_> = self.sweep.rows.iter().filter(|r| &r.group == g).collect();
            let xs: Vec<f64> = rows.iter().map(|r| cut(r)).collect();
            let lo: Vec<f64> = rows.iter().map(|r| r.ci_lo).collect();
            let hi: Vec<f64> = rows.iter().map(|r| r.ci_hi).collect();
            c.band(&xs, &lo, &hi, color(i));
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (cut(r), r.probability)).collect();
            c.polyline(&pts, color(i));
            c.legend(g, color(i));
        }
        c.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::design::tests::synthetic_table;

    fn table() -> AnalysisTable {
        synthetic_table(30, 4, |t| 50 + (t.ethnicity as u8) * 4 + (t.temperature * 4.0) as u8)
    }

    #[test]
    fn histogram_frequencies_sum_to_one() {
        let h = score_histogram(&table());
        assert_eq!(h.len(), 9 * 20);
        for e in Ethnicity::ALL {
            let total: f64 = h.iter().filter(|b| b.ethnicity == e).map(|b| b.relative_frequency).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!((h[0].bin_lo, h[0].bin_hi, h[19].bin_lo, h[19].bin_hi), (1, 5, 96, 100));
    }

    #[test]
    fn name_rows_aggregate_observations() {
        let t = table();
        let names = name_scores(&t, 60);
        let total: usize = names.iter().map(|n| n.count).sum();
        assert_eq!(total, t.rows.len());
        assert!(names.windows(2).all(|w| w[0].mean >= w[1].mean));
        let top = &names[0];
        let direct: Vec<u8> = t
            .rows
            .iter()
            .filter(|r| r.first == top.first && r.last == top.last)
            .filter_map(|r| r.score)
            .collect();
        let share = direct.iter().filter(|&&s| s >= 60).count() as f64 / direct.len() as f64;
        assert!((share - top.invitation_probability).abs() < 1e-12);
    }

    #[test]
    fn writes_all_figures() {
        let opts = ReportOptions {
            replications: 200,
            seed: 1,
            sweep: SweepOptions {
                min_cutoff: 40,
                max_cutoff: 70,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = build_report(&table(), &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = report.write(dir.path()).unwrap();
        assert_eq!(files.len(), 9);
        for f in &files {
            let text = std::fs::read_to_string(f).unwrap();
            if f.extension().unwrap() == "svg" {
                assert!(text.starts_with("<svg") && text.contains("</svg>"));
            }
        }
        let mem = std::fs::read_to_string(dir.path().join("fig2_mem.csv")).unwrap();
        assert_eq!(mem.lines().count(), 10);
        assert!(mem.starts_with("ethnicity,estimate,ci_lo,ci_hi,se"));
        let names = std::fs::read_to_string(dir.path().join("fig3_names.csv")).unwrap();
        assert!(names.starts_with("first,last,ethnicity,gender,count,mean,invitation_probability"));
    }

    #[test]
    fn byte_identical_on_rerun() {
        let opts = ReportOptions {
            replications: 100,
            seed: 9,
            sweep: SweepOptions {
                min_cutoff: 50,
                max_cutoff: 60,
                ..Default::default()
            },
            ..Default::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_report(&table(), &opts).unwrap().write(a.path()).unwrap();
        build_report(&table(), &opts).unwrap().write(b.path()).unwrap();
        for name in ["fig1_histogram.svg", "fig2_mem.csv", "fig3_names.csv", "fig4_sweep.csv", "fit_eq1.json"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }
}
