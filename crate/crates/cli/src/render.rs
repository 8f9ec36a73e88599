//! Text tables and CSV output.

use std::fmt::Write as _;

use twostep::estimators::CI_LEVELS;
use twostep::montecarlo::{Arm, McResult};

use crate::config::Format;
use crate::run::Outcome;

/// Column order of the Monte Carlo CSV.
pub const MC_CSV_HEADER: &str = "family,k,n,arm,metric,level,value,reps,seed";
/// Column order of the estimation CSV.
pub const ESTIMATE_CSV_HEADER: &str = "method,term,estimate,se,level,lower,upper";

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.999996 -> 10.00000).
    let carried = s.trim_start_matches('-').split('.').next().map(|p| p.len()).unwrap_or(0) as i32;
    if decimals > 0 && carried > magnitude.max(0) + 1 {
        return format!("{x:.prec$}", prec = decimals - 1);
    }
    s
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (c, cell) in r.iter().enumerate() {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, r: &[String]| {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = width[c])
                } else {
                    format!("{cell:>w$}", w = width[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header);
    let rule: usize = width.iter().sum::<usize>() + 2 * (cols - 1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        line(&mut out, r);
    }
    out
}

fn level_label(level: f64) -> String {
    format!("{:.2}", level)
}

/// Groups results by spec cell, keeping first-seen order; arms in run order.
fn cells(results: &[McResult]) -> (Vec<Arm>, Vec<Vec<&McResult>>) {
    let mut arms: Vec<Arm> = Vec::new();
    let mut groups: Vec<Vec<&McResult>> = Vec::new();
    for r in results {
        if !arms.contains(&r.arm) {
            arms.push(r.arm);
        }
        match groups.iter_mut().find(|g| g[0].spec == r.spec) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    (arms, groups)
}

fn failure_notes(results: &[McResult], out: &mut String) {
    for r in results.iter().filter(|r| r.failures > 0) {
        let _ = writeln!(
            out,
            "note: {} k={} n={} {}: {} of {} replications failed",
            r.spec.family, r.spec.k, r.spec.n, r.arm, r.failures, r.reps
        );
    }
}

fn mc_text(results: &[McResult], coverage: bool) -> String {
    let (arms, groups) = cells(results);
    let mut header = vec!["spec".to_string(), "k".into(), "n".into()];
    for a in &arms {
        if coverage {
            for l in CI_LEVELS {
                header.push(format!("{a} {:.0}%", 100.0 * l));
            }
        } else {
            for m in ["MAE", "MSE", "RMSE"] {
                header.push(format!("{a} {m}"));
            }
        }
    }
    let rows: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            let s = &g[0].spec;
            let mut row = vec![s.family.to_string(), s.k.to_string(), s.n.to_string()];
            for a in &arms {
                match g.iter().find(|r| r.arm == *a) {
                    Some(r) if coverage => row.extend(r.summary.coverage.iter().map(|v| sig6(*v))),
                    Some(r) => row.extend(
                        [r.summary.mae, r.summary.mse_total, r.summary.rmse].iter().map(|v| sig6(*v)),
                    ),
                    None => row.extend(std::iter::repeat_n("-".to_string(), 3)),
                }
            }
            row
        })
        .collect();
    let first = &results[0];
    let mut out = format!(
        "{} over {} replications, master seed {}\n",
        if coverage { "coverage of the first coefficient" } else { "estimation error" },
        first.reps,
        first.master_seed
    );
    out.push_str(&aligned(&header, &rows));
    failure_notes(results, &mut out);
    out
}

fn mc_csv(results: &[McResult], coverage: bool) -> String {
    let mut out = format!("{MC_CSV_HEADER}\n");
    for r in results {
        let s = &r.spec;
        let mut push = |metric: &str, level: &str, value: f64| {
            let _ = writeln!(
                out,
                "{},{},{},{},{metric},{level},{value},{},{}",
                s.family, s.k, s.n, r.arm, r.reps, r.master_seed
            );
        };
        if coverage {
            for (l, level) in CI_LEVELS.iter().enumerate() {
                push("coverage", &level_label(*level), r.summary.coverage[l]);
            }
        } else {
            push("mae", "", r.summary.mae);
            push("mse", "", r.summary.mse_total);
            push("rmse", "", r.summary.rmse);
        }
    }
    out
}

/// Renders an outcome in the requested format. CSV output uses LF line endings.
pub fn render(outcome: &Outcome, format: Format) -> String {
    match (outcome, format) {
        (Outcome::Table(r), Format::Text) => mc_text(r, false),
        (Outcome::Table(r), Format::Csv) => mc_csv(r, false),
        (Outcome::Coverage(r), Format::Text) => mc_text(r, true),
        (Outcome::Coverage(r), Format::Csv) => mc_csv(r, true),
        (Outcome::Gap { compare, seed, rows }, Format::Text) => {
            let header: Vec<String> = ["spec", "k", "n", "median sqrt(n) gap", "mean sqrt(n) gap", "failures"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let table: Vec<Vec<String>> = rows
                .iter()
                .flat_map(|(spec, rs)| {
                    rs.iter().map(move |r| {
                        vec![
                            spec.family.to_string(),
                            spec.k.to_string(),
                            r.n.to_string(),
                            sig6(r.median_scaled_gap),
                            sig6(r.mean_scaled_gap),
                            r.failures.to_string(),
                        ]
                    })
                })
                .collect();
            let reps = rows.first().and_then(|(_, r)| r.first()).map(|r| r.reps).unwrap_or(0);
            format!(
                "plug-in estimate at {compare} vs theta0, {reps} replications, master seed {seed}\n{}",
                aligned(&header, &table)
            )
        }
        (Outcome::Gap { compare, seed, rows }, Format::Csv) => {
            let mut out = format!("{MC_CSV_HEADER}\n");
            for (spec, rs) in rows {
                for r in rs {
                    for (metric, v) in [("median_scaled_gap", r.median_scaled_gap), ("mean_scaled_gap", r.mean_scaled_gap)] {
                        let _ = writeln!(
                            out,
                            "{},{},{},{compare},{metric},,{v},{},{seed}",
                            spec.family, spec.k, r.n, r.reps
                        );
                    }
                }
            }
            out
        }
        (Outcome::Bahadur { seed, rows }, Format::Text) => {
            let header: Vec<String> = ["n", "h", "radius", "mean sup gap", "median sup gap", "gap at theta0"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        sig6(r.h),
                        sig6(r.radius),
                        sig6(r.mean_sup_gap),
                        sig6(r.median_sup_gap),
                        sig6(r.mean_gap_at_theta0),
                    ]
                })
                .collect();
            let reps = rows.first().map(|r| r.reps).unwrap_or(0);
            format!(
                "linearization remainder, AN k=3, {reps} replications, master seed {seed}\n{}",
                aligned(&header, &table)
            )
        }
        (Outcome::Bahadur { seed, rows }, Format::Csv) => {
            let mut out = format!("{MC_CSV_HEADER}\n");
            for r in rows {
                for (metric, v) in [
                    ("h", r.h),
                    ("radius", r.radius),
                    ("mean_sup_gap", r.mean_sup_gap),
                    ("median_sup_gap", r.median_sup_gap),
                    ("gap_at_theta0", r.mean_gap_at_theta0),
                ] {
                    let _ = writeln!(out, "AN,3,{},,{metric},,{v},{},{seed}", r.n, r.reps);
                }
            }
            out
        }
        (Outcome::Estimates { .. }, Format::Text) => estimates_text(outcome),
        (Outcome::Estimates { terms, rows, .. }, Format::Csv) => {
            let mut out = format!("{ESTIMATE_CSV_HEADER}\n");
            for row in rows {
                let r = &row.report;
                for (j, term) in terms.iter().enumerate() {
                    for ci in &r.ci[j] {
                        let _ = writeln!(
                            out,
                            "{},{term},{},{},{},{},{}",
                            row.method,
                            r.beta[j],
                            r.se[j],
                            level_label(ci.level),
                            ci.lower,
                            ci.upper
                        );
                    }
                }
            }
            out
        }
        (Outcome::Generated { path, n, selected }, _) => {
            format!("wrote {n} rows ({selected} selected) to {}\n", path.display())
        }
    }
}

fn estimates_text(outcome: &Outcome) -> String {
    let Outcome::Estimates {
        matching,
        n,
        selected,
        terms,
        rows,
        ..
    } = outcome
    else {
        unreachable!()
    };
    let mut out = if *matching {
        format!("matching estimator of the effect on the treated, n = {n} ({selected} treated)\n")
    } else {
        format!("sample-selection estimator, n = {n} ({selected} selected)\n")
    };
    let mut header = vec!["method".to_string(), "term".into(), "estimate".into(), "se".into()];
    for l in CI_LEVELS {
        header.push(format!("{:.0}% CI", 100.0 * l));
    }
    let mut table = Vec::new();
    for row in rows {
        let r = &row.report;
        for (j, term) in terms.iter().enumerate() {
            let mut cells = vec![row.method.clone(), term.clone(), sig6(r.beta[j]), sig6(r.se[j])];
            for ci in &r.ci[j] {
                cells.push(format!("[{}, {}]", sig6(ci.lower), sig6(ci.upper)));
            }
            table.push(cells);
        }
    }
    out.push_str(&aligned(&header, &table));
    for row in rows {
        let r = &row.report;
        let Some(theta) = &r.theta_used else { continue };
        let _ = writeln!(
            out,
            "{}: theta = ({})  objective {}  bandwidths ({})  floor hits {}{}",
            row.method,
            theta.theta.iter().map(|t| sig6(*t)).collect::<Vec<_>>().join(", "),
            sig6(theta.objective_value),
            r.h_used.iter().map(|h| sig6(*h)).collect::<Vec<_>>().join(", "),
            r.diagnostics.denominator_floor_hits,
            if *matching {
                format!("  trimmed {}", r.diagnostics.trimmed)
            } else {
                String::new()
            }
        );
    }
    out
}
