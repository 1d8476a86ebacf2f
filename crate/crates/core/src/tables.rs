//! CSV output of experiment summaries.
//!
//! `table2.csv` holds allocations and surplus mean/std with standard errors
//! (true-model row first); `table3.csv` holds the percentile intervals of the
//! prior-set cells. Both start with a `# config_hash=…,seed=…` line. Floats
//! are written in shortest round-trip form, so parsing recovers them exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CellSummary, ExperimentReport, SweepRow, SweepTargets};
use crate::market::BondMode;
use crate::priors::Homogeneity;

pub const TABLE2: &str = "table2.csv";
pub const TABLE3: &str = "table3.csv";
pub const RUN_META: &str = "run_meta.json";

const TRUE_LABEL: &str = "true";

fn homogeneity_label(h: Option<Homogeneity>) -> &'static str {
    h.map_or(TRUE_LABEL, Homogeneity::as_str)
}

fn parse_homogeneity(s: &str) -> Result<Option<Homogeneity>> {
    Ok(match s {
        TRUE_LABEL => None,
        "high" => Some(Homogeneity::High),
        "medium" => Some(Homogeneity::Medium),
        "low" => Some(Homogeneity::Low),
        "custom" => Some(Homogeneity::Custom),
        other => {
            return Err(Error::Parse {
                context: "homogeneity".into(),
                message: format!("unknown label `{other}`"),
            })
        }
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_table(path: &Path, meta: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut file = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(file, "{meta}").map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io)
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// Writes `table2.csv` and `table3.csv` into `out_dir` (created if needed).
pub fn emit_tables(report: &ExperimentReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let summaries = report.summaries();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let meta = format!(
        "# config_hash={},seed={}",
        report.config_hash, report.rng_seed
    );
    let assets = summaries[0].mean_allocation_pct.len();

    let mut header: Vec<String> = ["homogeneity", "n_priors", "replications", "failures"]
        .map(String::from)
        .to_vec();
    header.extend((0..assets).map(|a| format!("alloc_pct_{a}")));
    header.extend((0..assets).map(|a| format!("se_alloc_pct_{a}")));
    header.extend(
        [
            "mean_expected_surplus",
            "se_expected_surplus",
            "rmse_expected_surplus",
            "mean_surplus_std",
            "se_surplus_std",
            "rmse_surplus_std",
        ]
        .map(String::from),
    );
    let rows2 = summaries
        .iter()
        .map(|s| {
            let mut r = vec![
                homogeneity_label(s.homogeneity).to_string(),
                s.n_priors.to_string(),
                s.replications.to_string(),
                s.failures.to_string(),
            ];
            r.extend(s.mean_allocation_pct.iter().map(|x| f(*x)));
            r.extend(s.se_allocation_pct.iter().map(|x| f(*x)));
            r.extend(
                [
                    s.mean_expected_surplus,
                    s.se_expected_surplus,
                    s.rmse_expected_surplus,
                    s.mean_surplus_std,
                    s.se_surplus_std,
                    s.rmse_surplus_std,
                ]
                .map(f),
            );
            r
        })
        .collect();

    let header3 = [
        "homogeneity",
        "n_priors",
        "surplus_ci_lower",
        "surplus_ci_upper",
        "mean_variance_ratio",
        "variance_ratio_ci_lower",
        "variance_ratio_ci_upper",
    ]
    .map(String::from)
    .to_vec();
    let rows3 = report
        .cells
        .iter()
        .map(|s| {
            let mut r = vec![
                homogeneity_label(s.homogeneity).to_string(),
                s.n_priors.to_string(),
            ];
            r.extend(
                [
                    s.surplus_ci.0,
                    s.surplus_ci.1,
                    s.mean_variance_ratio,
                    s.variance_ratio_ci.0,
                    s.variance_ratio_ci.1,
                ]
                .map(f),
            );
            r
        })
        .collect();

    let p2 = out_dir.join(TABLE2);
    let p3 = out_dir.join(TABLE3);
    write_table(&p2, &meta, header, rows2)?;
    write_table(&p3, &meta, header3, rows3)?;
    Ok((p2, p3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub failures: Vec<CellFailures>,
    pub total_failures: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailures {
    pub cell: String,
    pub failures: usize,
    pub replications: usize,
}

/// Writes `run_meta.json`. Kept apart from the tables because wall time is
/// the only non-deterministic output.
pub fn write_run_meta(
    report: &ExperimentReport,
    wall_time_secs: f64,
    out_dir: &Path,
) -> Result<PathBuf> {
    let meta = RunMeta {
        seed: report.rng_seed,
        config_hash: report.config_hash.clone(),
        failures: report
            .summaries()
            .iter()
            .map(|s| CellFailures {
                cell: s.label(),
                failures: s.failures,
                replications: s.replications,
            })
            .collect(),
        total_failures: report.total_failures(),
        wall_time_secs,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(RUN_META);
    let text = serde_json::to_string_pretty(&meta).expect("meta serialises");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn read_rows(path: &Path) -> Result<(String, Vec<csv::StringRecord>, csv::StringRecord)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = text.lines().next().unwrap_or_default().to_string();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok((meta, rows, header))
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let s = rec.get(i).unwrap_or_default();
    s.parse().map_err(|_| Error::Parse {
        context: path.display().to_string(),
        message: format!("column {i}: cannot parse `{s}`"),
    })
}

/// Reads both tables back into summaries (true-model row first). Returns the
/// metadata line of `table2.csv` alongside.
pub fn read_tables(dir: &Path) -> Result<(String, Vec<CellSummary>)> {
    let p2 = dir.join(TABLE2);
    let p3 = dir.join(TABLE3);
    let (meta, rows2, header2) = read_rows(&p2)?;
    let (_, rows3, _) = read_rows(&p3)?;
    let assets = header2
        .iter()
        .filter(|h| h.starts_with("alloc_pct_"))
        .count();
    let mut out = Vec::with_capacity(rows2.len());
    for rec in &rows2 {
        let homogeneity = parse_homogeneity(rec.get(0).unwrap_or_default())?;
        let n_priors: usize = num(rec, 1, &p2)?;
        let vals = |from: usize, k: usize| {
            (from..from + k)
                .map(|i| num::<f64>(rec, i, &p2))
                .collect::<Result<Vec<_>>>()
        };
        let tail = vals(4 + 2 * assets, 6)?;
        let mut s = CellSummary {
            homogeneity,
            n_priors,
            replications: num(rec, 2, &p2)?,
            failures: num(rec, 3, &p2)?,
            mean_allocation_pct: vals(4, assets)?,
            se_allocation_pct: vals(4 + assets, assets)?,
            mean_expected_surplus: tail[0],
            se_expected_surplus: tail[1],
            rmse_expected_surplus: tail[2],
            mean_surplus_std: tail[3],
            se_surplus_std: tail[4],
            rmse_surplus_std: tail[5],
            surplus_ci: (f64::NAN, f64::NAN),
            mean_variance_ratio: f64::NAN,
            variance_ratio_ci: (f64::NAN, f64::NAN),
        };
        if homogeneity.is_some() {
            let r3 = rows3
                .iter()
                .find(|r| r.get(0) == rec.get(0) && r.get(1) == rec.get(1))
                .ok_or_else(|| Error::Parse {
                    context: p3.display().to_string(),
                    message: format!("no row for {}", s.label()),
                })?;
            let v = (2..7)
                .map(|i| num::<f64>(r3, i, &p3))
                .collect::<Result<Vec<_>>>()?;
            s.surplus_ci = (v[0], v[1]);
            s.mean_variance_ratio = v[2];
            s.variance_ratio_ci = (v[3], v[4]);
        }
        out.push(s);
    }
    Ok((meta, out))
}

/// Markdown table of a true-model sensitivity sweep, hits marked with `*`.
pub fn sweep_markdown(rows: &[SweepRow], targets: &SweepTargets) -> String {
    let pct = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut out = format!(
        "Targets: allocation ({}) % within ±{} pp, surplus std {:.2} within ±{}%.\n\n",
        pct(&targets.allocation_pct),
        targets.allocation_tol_pp,
        targets.surplus_std,
        100.0 * targets.std_rel_tol
    );
    out.push_str("| bond law | Itô | T | ρ_B | allocation % | expected surplus | surplus std |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let bond = match r.bond_mode {
            BondMode::IntegratedOuExact => "integrated OU",
            BondMode::ShortRateProxy => "short-rate proxy",
        };
        let mark = |hit: bool| if hit { " *" } else { "" };
        out.push_str(&format!(
            "| {bond} | {} | {} | {} | {}{} | {:.2} | {:.2}{} |\n",
            if r.ito_correction { "yes" } else { "no" },
            r.horizon,
            r.rho_b,
            pct(&r.allocation_pct),
            mark(r.allocation_hit),
            r.expected_surplus,
            r.surplus_std,
            mark(r.std_hit)
        ));
    }
    let both = rows
        .iter()
        .filter(|r| r.allocation_hit && r.std_hit)
        .count();
    let alloc = rows.iter().filter(|r| r.allocation_hit).count();
    let std = rows.iter().filter(|r| r.std_hit).count();
    out.push_str(&format!(
        "\n{} of {} configurations hit both targets ({alloc} the allocation, {std} the std).\n",
        both,
        rows.len()
    ));
    out
}
