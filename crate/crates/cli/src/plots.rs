//! Plot-ready series from a metrics CSV.
//!
//! `loss_vs_z.csv` has one series per (scheme, λ); `loss_vs_lambda.csv`
//! one per (scheme, Z). Each file repeats the uncompressed row as a flat
//! `uncompressed` series over the same x values. Only the last step of
//! every trace is used.

use std::collections::BTreeMap;

use codesign_core::codesign::{fmt_f64, MetricsRow, Scheme};

use crate::error::CliError;

const REQUIRED: [&str; 7] = ["scheme", "z_dim", "lambda", "step", "task_loss", "recon_loss", "accuracy"];

pub const LOSS_VS_Z_FILE: &str = "loss_vs_z.csv";
pub const LOSS_VS_LAMBDA_FILE: &str = "loss_vs_lambda.csv";

/// Parses a metrics CSV. Columns may come in any order; extra columns are
/// ignored.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::EmptyInput("metrics CSV has no header".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| names.iter().position(|n| *n == name);
    let mut idx = BTreeMap::new();
    for name in REQUIRED {
        idx.insert(name, col(name).ok_or_else(|| CliError::MissingColumn(name.to_string()))?);
    }
    let weighted = col("weighted_loss");
    let ratio = col("compression_ratio");

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| CliError::Experiment(format!("metrics row {}: bad `{what}`", i + 1));
        let get = |name: &str| f.get(idx[name]).copied().ok_or_else(|| bad(name));
        let num = |name: &str| get(name)?.parse::<f64>().map_err(|_| bad(name));
        let opt = |c: Option<usize>| -> Result<Option<f64>, CliError> {
            match c.and_then(|c| f.get(c)) {
                Some(s) if !s.is_empty() => s.parse().map(Some).map_err(|_| bad("number")),
                _ => Ok(None),
            }
        };
        let task_loss = num("task_loss")?;
        let accuracy = match get("accuracy")? {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("accuracy"))?),
        };
        let z_dim: usize = get("z_dim")?.parse().map_err(|_| bad("z_dim"))?;
        rows.push(MetricsRow {
            scheme: get("scheme")?.parse().map_err(|_| bad("scheme"))?,
            z_dim,
            lambda: num("lambda")?,
            step: get("step")?.parse().map_err(|_| bad("step"))?,
            task_loss,
            recon_loss: num("recon_loss")?,
            weighted_loss: opt(weighted)?.unwrap_or(task_loss),
            accuracy,
            compression_ratio: opt(ratio)?.unwrap_or(f64::NAN),
        });
    }
    if rows.is_empty() {
        return Err(CliError::EmptyInput("metrics CSV has no rows".into()));
    }
    Ok(rows)
}

/// Last-step row for every (scheme, Z, λ), in first-seen order.
fn final_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut out: Vec<MetricsRow> = Vec::new();
    for r in rows {
        match out
            .iter_mut()
            .find(|o| o.scheme == r.scheme && o.z_dim == r.z_dim && o.lambda == r.lambda)
        {
            Some(o) if r.step >= o.step => *o = r.clone(),
            Some(_) => {}
            None => out.push(r.clone()),
        }
    }
    out
}

fn line(series: &str, x: impl std::fmt::Display, r: &MetricsRow) -> String {
    format!(
        "{series},{x},{},{},{}\n",
        fmt_f64(r.task_loss),
        fmt_f64(r.recon_loss),
        r.accuracy.map(fmt_f64).unwrap_or_default()
    )
}

pub struct PlotSeries {
    pub loss_vs_z: String,
    pub loss_vs_lambda: String,
}

pub fn build_series(rows: &[MetricsRow]) -> Result<PlotSeries, CliError> {
    let finals = final_rows(rows);
    let baseline = finals.iter().find(|r| r.scheme == Scheme::Uncompressed).cloned();
    let curves: Vec<&MetricsRow> = finals.iter().filter(|r| r.scheme != Scheme::Uncompressed).collect();

    let mut zs: Vec<usize> = curves.iter().map(|r| r.z_dim).collect();
    zs.sort_unstable();
    zs.dedup();
    let mut lambdas: Vec<f64> = curves.iter().map(|r| r.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();

    let mut by_lambda: Vec<&MetricsRow> = curves.clone();
    by_lambda.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.lambda.total_cmp(&b.lambda)).then(a.z_dim.cmp(&b.z_dim)));
    let mut z_csv = String::from("series,z_dim,task_loss,recon_loss,accuracy\n");
    for r in &by_lambda {
        z_csv.push_str(&line(&format!("{}@lambda={}", r.scheme, fmt_f64(r.lambda)), r.z_dim, r));
    }
    if let Some(b) = &baseline {
        for z in &zs {
            z_csv.push_str(&line("uncompressed", z, b));
        }
    }

    let mut by_z = curves;
    by_z.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.z_dim.cmp(&b.z_dim)).then(a.lambda.total_cmp(&b.lambda)));
    let mut l_csv = String::from("series,lambda,task_loss,recon_loss,accuracy\n");
    for r in &by_z {
        l_csv.push_str(&line(&format!("{}@z={}", r.scheme, r.z_dim), fmt_f64(r.lambda), r));
    }
    if let Some(b) = &baseline {
        for l in &lambdas {
            l_csv.push_str(&line("uncompressed", fmt_f64(*l), b));
        }
    }
    Ok(PlotSeries {
        loss_vs_z: z_csv,
        loss_vs_lambda: l_csv,
    })
}
