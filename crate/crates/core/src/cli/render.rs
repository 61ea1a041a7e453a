use std::fmt::Write as _;

use crate::estimators::EstimatorId;
use crate::ingest::WindowReport;
use crate::reliability::{CoverageTable, SampleSizeRow};
use crate::sim::{JointMomentsCell, MomentsRow};

pub(crate) fn num(v: f64, precision: usize) -> String {
    format!("{v:.precision$}")
}

fn trim_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // Shortest representation after taking off float noise.
        format!("{}", (v * 1e9).round() / 1e9)
    }
}

pub(crate) fn percent(p: f64) -> String {
    format!("{}%", trim_label(p * 100.0))
}

pub(crate) fn minutes(w: f64) -> String {
    trim_label(w)
}

fn markdown_grid(corner: &str, columns: &[String], rows: &[(String, Vec<String>)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {corner} | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---:|{}", "---:|".repeat(columns.len()));
    for (label, cells) in rows {
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    }
    out
}

fn highlighted(text: String, bold: bool) -> String {
    if bold {
        format!("**{text}**")
    } else {
        text
    }
}

pub(crate) fn coverage_markdown(preamble: &[String], table: &CoverageTable, precision: usize) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(
        out,
        "Outside-interval probability, λ = {} vph, δ = {}, α = {}, method {}; bold cells are below α.\n",
        trim_label(table.lambda_vph),
        table.delta,
        table.alpha,
        table.method.as_str()
    );
    let columns: Vec<String> = table.p_grid.iter().map(|&p| percent(p)).collect();
    let rows: Vec<(String, Vec<String>)> = table
        .windows_min
        .iter()
        .zip(&table.rows)
        .map(|(&w, row)| {
            let cells = row
                .iter()
                .map(|c| highlighted(num(c.cell.outside_probability, precision), c.highlighted))
                .collect();
            (minutes(w), cells)
        })
        .collect();
    out.push_str(&markdown_grid("Δ (min)", &columns, &rows));
    out
}

pub(crate) fn coverage_csv(preamble: &[String], table: &CoverageTable, precision: usize) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("window_min,p,outside_probability,highlighted,mean_probe_count\n");
    for (&w, row) in table.windows_min.iter().zip(&table.rows) {
        for (&p, c) in table.p_grid.iter().zip(row) {
            let m = c.cell.mean_probe_count.map(|m| num(m, precision)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{w},{p},{},{},{m}",
                num(c.cell.outside_probability, precision),
                c.highlighted
            );
        }
    }
    out
}

pub(crate) fn sample_size_grid_markdown(rows: &[SampleSizeRow], precision: usize) -> String {
    let mut alphas: Vec<f64> = Vec::new();
    let mut deltas: Vec<f64> = Vec::new();
    for r in rows {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
        if !deltas.contains(&r.delta) {
            deltas.push(r.delta);
        }
    }
    let columns: Vec<String> = alphas.iter().map(|a| format!("α = {a}")).collect();
    let grid: Vec<(String, Vec<String>)> = deltas
        .iter()
        .map(|&d| {
            let cells = alphas
                .iter()
                .map(|&a| {
                    rows.iter()
                        .find(|r| r.alpha == a && r.delta == d)
                        .map(|r| num(r.required_probe_count, precision))
                        .unwrap_or_default()
                })
                .collect();
            (format!("{d}"), cells)
        })
        .collect();
    let mut out = String::from("Required expected probe count.\n\n");
    out.push_str(&markdown_grid("δ", &columns, &grid));
    out
}

pub(crate) fn sample_size_csv(rows: &[SampleSizeRow], precision: usize) -> String {
    let mut out = String::from("alpha,delta,required_probe_count,rounded_up\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.alpha,
            r.delta,
            num(r.required_probe_count, precision),
            r.required_probe_count.ceil()
        );
    }
    out
}

fn moments_label(id: EstimatorId) -> &'static str {
    match id {
        EstimatorId::Lambda1Naive => "λ̂₁ (veh/s)",
        EstimatorId::P1Naive => "p̂₁",
        EstimatorId::P2Corrected => "p̂₂",
        EstimatorId::LambdaJoint => "λ̂ (veh/s)",
        EstimatorId::LambdaKnownP => "λ̂ (known p)",
        EstimatorId::PKnownLambda => "p̂ (known λ)",
    }
}

pub(crate) fn moments_markdown(preamble: &[String], rows: &[MomentsRow], precision: usize) -> String {
    let mut ps: Vec<f64> = Vec::new();
    let mut ids: Vec<EstimatorId> = Vec::new();
    for r in rows {
        if !ps.contains(&r.p) {
            ps.push(r.p);
        }
        if !ids.contains(&r.estimator) {
            ids.push(r.estimator);
        }
    }
    let mut grid = Vec::new();
    for id in ids {
        let pick = |f: fn(&MomentsRow) -> f64| -> Vec<String> {
            ps.iter()
                .map(|&p| {
                    rows.iter()
                        .find(|r| r.p == p && r.estimator == id)
                        .map(|r| num(f(r), precision))
                        .unwrap_or_default()
                })
                .collect()
        };
        grid.push((format!("E[{}]", moments_label(id)), pick(|r| r.mean)));
        grid.push((format!("Var[{}]", moments_label(id)), pick(|r| r.variance)));
    }
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    let columns: Vec<String> = ps.iter().map(|&p| percent(p)).collect();
    out.push_str(&markdown_grid("", &columns, &grid));
    out
}

pub(crate) fn moments_csv(preamble: &[String], rows: &[MomentsRow], precision: usize) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("p,estimator,mean,variance,usable_replicas,skipped_replicas,zero_filled_replicas\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.p,
            r.estimator,
            num(r.mean, precision),
            num(r.variance, precision),
            r.usable_replicas,
            r.skipped_replicas,
            r.zero_filled_replicas
        );
    }
    out
}

/// Tables 7/8 style: window rows, probe-fraction columns, mean or variance of λ̂.
pub(crate) fn joint_markdown(
    preamble: &[String],
    cells: &[JointMomentsCell],
    windows_min: &[f64],
    p_grid: &[f64],
    variance: bool,
    precision: usize,
) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "{line}");
    }
    let what = if variance { "Variance" } else { "Expected value" };
    let _ = writeln!(out, "{what} of the flow estimate λ̂ (veh/s).\n");
    let columns: Vec<String> = p_grid.iter().map(|&p| percent(p)).collect();
    let rows: Vec<(String, Vec<String>)> = windows_min
        .iter()
        .zip(cells.chunks(p_grid.len()))
        .map(|(&w, row)| {
            let values = row
                .iter()
                .map(|c| num(if variance { c.lambda.variance } else { c.lambda.mean }, precision))
                .collect();
            (minutes(w), values)
        })
        .collect();
    out.push_str(&markdown_grid("Δ (min)", &columns, &rows));
    out
}

pub(crate) fn joint_csv(preamble: &[String], cells: &[JointMomentsCell], precision: usize) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(
        "window_min,cycles,p,lambda_mean,lambda_variance,p2_mean,p2_variance,usable_replicas,skipped_replicas,zero_filled_replicas\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.window_min,
            c.cycles,
            c.lambda.p,
            num(c.lambda.mean, precision),
            num(c.lambda.variance, precision),
            num(c.p2.mean, precision),
            num(c.p2.variance, precision),
            c.lambda.usable_replicas,
            c.lambda.skipped_replicas,
            c.lambda.zero_filled_replicas
        );
    }
    out
}

struct EstimateLine {
    estimator: String,
    point: String,
    point_vph: String,
    variance: String,
    cycles: String,
}

fn estimate_lines(w: &WindowReport, precision: usize) -> Vec<EstimateLine> {
    if w.estimates.is_empty() {
        return vec![EstimateLine {
            estimator: String::new(),
            point: String::new(),
            point_vph: String::new(),
            variance: String::new(),
            cycles: String::new(),
        }];
    }
    w.estimates
        .iter()
        .map(|e| EstimateLine {
            estimator: e.estimator.to_string(),
            point: num(e.point, precision),
            point_vph: if e.estimator.estimates_probe_fraction() {
                String::new()
            } else {
                num(e.point * 3600.0, precision)
            },
            variance: e.theoretical_variance.map(|v| num(v, precision)).unwrap_or_default(),
            cycles: if e.cycles_used + e.cycles_skipped > 0 {
                format!("{}/{}", e.cycles_used, e.cycles_used + e.cycles_skipped)
            } else {
                String::new()
            },
        })
        .collect()
}

pub(crate) fn estimate_csv(windows: &[WindowReport], precision: usize) -> String {
    let mut out = String::from(
        "window_index,start_s,end_s,n_probes,estimator,point,point_vph,theoretical_variance,cycles_used,meets_requirement,issues\n",
    );
    for w in windows {
        for line in estimate_lines(w, precision) {
            let issues = w.issues.join("; ").replace('"', "'");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},\"{issues}\"",
                w.window_index,
                w.start_s,
                w.end_s,
                w.n_probes,
                line.estimator,
                line.point,
                line.point_vph,
                line.variance,
                line.cycles,
                w.sufficiency.meets_requirement
            );
        }
    }
    out
}

pub(crate) fn estimate_markdown(preamble: &[String], windows: &[WindowReport], precision: usize) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    out.push_str("| window | start (s) | probes | estimator | estimate | vph | variance | cycles | sufficient | issues |\n");
    out.push_str("|---:|---:|---:|:---|---:|---:|---:|---:|:---:|:---|\n");
    for w in windows {
        for line in estimate_lines(w, precision) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                w.window_index,
                w.start_s,
                w.n_probes,
                line.estimator,
                line.point,
                line.point_vph,
                line.variance,
                line.cycles,
                if w.sufficiency.meets_requirement { "yes" } else { "no" },
                w.issues.join("; ")
            );
        }
    }
    out
}
