//! Delimited-text outputs. Every file starts with `#` comment lines; the
//! only line that changes between identical runs is `# created: …`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{io_at, Result};
use crate::experiment::{mean_std, RunSummary, SeedResult};

/// Prefix of the one header line allowed to differ between reruns.
pub const TIMESTAMP_PREFIX: &str = "# created: ";

fn created_line() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("{TIMESTAMP_PREFIX}{secs} (unix seconds)\n")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_at(path))
}

pub const METRICS_COLUMNS: &str =
    "round,train_loss,test_accuracy,grad_norm_sq,drift,drift_bound,uplink_per_client,uplink_total";

/// Per-seed metrics, one row per round.
pub fn metrics_text(summary: &RunSummary, run: &SeedResult) -> String {
    let mut s = String::new();
    s.push_str("# fedslop round metrics\n");
    let _ = writeln!(s, "# experiment: {}", summary.name);
    let _ = writeln!(s, "# method: {}", summary.method);
    let _ = writeln!(s, "# seed: {}", run.seed);
    let _ = writeln!(s, "# stepsize: {}", run.stepsize);
    s.push_str(&created_line());
    s.push_str("# round: 0-based index t\n");
    s.push_str("# train_loss: mean cross-entropy (or f for synthetic problems) at the model after round t\n");
    s.push_str("# test_accuracy: fraction correct on the test set after round t; empty when not evaluated\n");
    s.push_str("# grad_norm_sq: squared norm of the global gradient at the model entering round t\n");
    s.push_str("# drift: (1/N) sum_i sum_{s<tau} |theta_{i,s} - theta^t|^2; empty unless recorded\n");
    s.push_str("# drift_bound: 6 tau^4/(1-mu^2) eta^2 (delta grad_norm_sq + sigma_L^2 + sigma_G^2); empty if not applicable\n");
    let _ = writeln!(s, "# uplink_per_client: real numbers sent by one client; {}", summary.uplink_formula);
    s.push_str("# uplink_total: uplink_per_client times the number of clients\n");
    if let Some(th) = &run.theory {
        let c = &th.constants;
        let _ = writeln!(
            s,
            "# constants: L={} sigma_L={} sigma_G={} mu={} tau={} delta={} N={} T={} Delta0={}",
            c.l, c.sigma_l, c.sigma_g, c.mu, c.tau, c.delta, c.n, c.t, c.delta0
        );
        let _ = writeln!(s, "# theorem_bound: {}", opt(th.theorem_bound));
    }
    s.push_str(METRICS_COLUMNS);
    s.push('\n');
    for (k, m) in run.metrics.iter().enumerate() {
        let bound = run
            .theory
            .as_ref()
            .and_then(|t| t.drift_bounds.as_ref())
            .and_then(|b| b[k]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            m.round,
            m.train_loss,
            opt(m.test_accuracy),
            m.grad_norm_sq,
            opt(m.drift),
            opt(bound),
            m.uplink_per_client,
            m.uplink_total
        );
    }
    s
}

pub const SUMMARY_COLUMNS: &str =
    "seed,stepsize,final_accuracy,final_train_loss,mean_grad_norm_sq,uplink_total,theorem_bound";

/// Per-seed finals followed by `mean` and `std` rows.
pub fn summary_text(summary: &RunSummary) -> String {
    let mut s = String::new();
    s.push_str("# fedslop experiment summary\n");
    let _ = writeln!(s, "# experiment: {}", summary.name);
    let _ = writeln!(s, "# method: {}", summary.method);
    s.push_str(&created_line());
    s.push_str("# mean_grad_norm_sq: (1/T) sum_t grad_norm_sq\n");
    s.push_str("# uplink_total: sum over rounds of the per-round uplink_total\n");
    let _ = writeln!(s, "# uplink counting: {}", summary.uplink_formula);
    s.push_str("# std: sample standard deviation with n-1 denominator over the listed seeds\n");
    s.push_str(SUMMARY_COLUMNS);
    s.push('\n');
    for r in &summary.seeds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.stepsize,
            opt(r.final_accuracy()),
            r.final_loss(),
            r.mean_grad_norm_sq(),
            r.uplink_total(),
            opt(r.theory.as_ref().and_then(|t| t.theorem_bound))
        );
    }
    let acc = summary.final_accuracies();
    let loss: Vec<f64> = summary.seeds.iter().map(SeedResult::final_loss).collect();
    let gn: Vec<f64> = summary.seeds.iter().map(SeedResult::mean_grad_norm_sq).collect();
    let (acc_m, acc_s) = mean_std(&acc);
    let (loss_m, loss_s) = mean_std(&loss);
    let (gn_m, gn_s) = mean_std(&gn);
    let acc_present = !acc.is_empty();
    let _ = writeln!(
        s,
        "mean,,{},{},{},,",
        if acc_present { acc_m.to_string() } else { String::new() },
        loss_m,
        gn_m
    );
    let _ = writeln!(
        s,
        "std,,{},{},{},,",
        if acc_present { acc_s.to_string() } else { String::new() },
        loss_s,
        gn_s
    );
    s
}

pub const CURVE_COLUMNS: &str = "round,mean_test_accuracy,std_test_accuracy,mean_train_loss,mean_grad_norm_sq";

/// Seed-averaged per-round curves.
pub fn curve_text(summary: &RunSummary) -> String {
    let mut s = String::new();
    s.push_str("# fedslop per-round curves averaged over seeds (std: n-1)\n");
    let _ = writeln!(s, "# experiment: {}", summary.name);
    s.push_str(&created_line());
    s.push_str(CURVE_COLUMNS);
    s.push('\n');
    let rounds = summary.seeds.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    for t in 0..rounds {
        let acc: Vec<f64> = summary.seeds.iter().filter_map(|r| r.metrics[t].test_accuracy).collect();
        let loss: Vec<f64> = summary.seeds.iter().map(|r| r.metrics[t].train_loss).collect();
        let gn: Vec<f64> = summary.seeds.iter().map(|r| r.metrics[t].grad_norm_sq).collect();
        let (am, asd) = mean_std(&acc);
        let present = acc.len() == summary.seeds.len() && !acc.is_empty();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t,
            if present { am.to_string() } else { String::new() },
            if present { asd.to_string() } else { String::new() },
            mean_std(&loss).0,
            mean_std(&gn).0
        );
    }
    s
}

/// Writes `seed<k>.csv` per seed, `summary.csv` and `curve.csv` into `dir`.
pub fn write_run(summary: &RunSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    for run in &summary.seeds {
        write(&dir.join(format!("seed{}.csv", run.seed)), &metrics_text(summary, run))?;
    }
    write(&dir.join("summary.csv"), &summary_text(summary))?;
    write(&dir.join("curve.csv"), &curve_text(summary))
}

/// One point of a sweep: the axis values that produced `summary`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub values: Vec<String>,
    pub summary: RunSummary,
}

/// Rows `(axis values…, seed, finals…)`, one per seed and point.
pub fn sweep_text(axes: &[String], points: &[SweepPoint]) -> String {
    let mut s = String::new();
    s.push_str("# fedslop sweep, one row per (point, seed)\n");
    s.push_str(&created_line());
    for a in axes {
        s.push_str(a);
        s.push(',');
    }
    s.push_str("seed,final_accuracy,final_train_loss,mean_grad_norm_sq,uplink_per_round\n");
    for p in points {
        for r in &p.summary.seeds {
            for v in &p.values {
                s.push_str(v);
                s.push(',');
            }
            let rounds = r.metrics.len().max(1);
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.seed,
                opt(r.final_accuracy()),
                r.final_loss(),
                r.mean_grad_norm_sq(),
                r.uplink_total() as f64 / rounds as f64
            );
        }
    }
    s
}

fn headline(summary: &RunSummary) -> (f64, f64, &'static str) {
    if summary.final_accuracies().is_empty() {
        let (m, sd) = summary.grad_norm();
        (m, sd, "mean_grad_norm_sq")
    } else {
        let (m, sd) = summary.accuracy();
        (m, sd, "final_accuracy")
    }
}

/// Plot-ready grid. With one axis: `value, mean, std, uplink_per_round`.
/// With two: rows over the first axis, one mean column per value of the second.
pub fn grid_text(axes: &[String], points: &[SweepPoint]) -> String {
    let mut s = String::new();
    let metric = points.first().map_or("final_accuracy", |p| headline(&p.summary).2);
    let _ = writeln!(s, "# fedslop sweep grid of seed-mean {metric} (std: n-1)");
    s.push_str(&created_line());
    match axes.len() {
        2 => {
            let mut rows: Vec<&String> = Vec::new();
            let mut cols: Vec<&String> = Vec::new();
            for p in points {
                if !rows.contains(&&p.values[0]) {
                    rows.push(&p.values[0]);
                }
                if !cols.contains(&&p.values[1]) {
                    cols.push(&p.values[1]);
                }
            }
            s.push_str(&axes[0]);
            for c in &cols {
                let _ = write!(s, ",{}={}", axes[1], c);
            }
            s.push('\n');
            for r in &rows {
                s.push_str(r);
                for c in &cols {
                    let cell = points
                        .iter()
                        .find(|p| &&p.values[0] == r && &&p.values[1] == c)
                        .map(|p| headline(&p.summary).0.to_string())
                        .unwrap_or_default();
                    let _ = write!(s, ",{cell}");
                }
                s.push('\n');
            }
        }
        _ => {
            let label = if axes.is_empty() { "point".to_string() } else { axes.join("+") };
            let _ = writeln!(s, "{label},mean_{metric},std_{metric},uplink_per_round");
            for p in points {
                let (m, sd, _) = headline(&p.summary);
                let _ = writeln!(s, "{},{},{},{}", p.values.join("+"), m, sd, p.summary.uplink_per_round());
            }
        }
    }
    s
}

/// Writes `sweep.csv` and `grid.csv` for a finished sweep.
pub fn emit_plot_data(axes: &[String], points: &[SweepPoint], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    write(&dir.join("sweep.csv"), &sweep_text(axes, points))?;
    write(&dir.join("grid.csv"), &grid_text(axes, points))
}

/// Drops the timestamp line so two outputs can be compared.
pub fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with(TIMESTAMP_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect()
}
