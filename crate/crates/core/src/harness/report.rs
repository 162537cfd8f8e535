use super::sweep::MetricsRow;
use std::fmt::Write as _;

/// Seed-averaged metric per (controller, α).
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTable {
    /// Controllers in order of first appearance.
    pub controllers: Vec<String>,
    /// Ascending.
    pub alphas: Vec<f64>,
    /// `values[controller][alpha]`, `None` where no run succeeded.
    pub values: Vec<Vec<Option<f64>>>,
    /// Seeds averaged per cell.
    pub counts: Vec<Vec<usize>>,
}

impl PivotTable {
    pub fn get(&self, controller: &str, alpha: f64) -> Option<f64> {
        let i = self.controllers.iter().position(|c| c == controller)?;
        let j = self.alphas.iter().position(|a| *a == alpha)?;
        self.values[i][j]
    }
}

pub fn pivot(rows: &[MetricsRow], value: impl Fn(&MetricsRow) -> f64) -> PivotTable {
    let mut controllers: Vec<String> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        if !controllers.contains(&r.controller) {
            controllers.push(r.controller.clone());
        }
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    alphas.sort_by(f64::total_cmp);
    let mut sums = vec![vec![0.0; alphas.len()]; controllers.len()];
    let mut counts = vec![vec![0usize; alphas.len()]; controllers.len()];
    for r in rows {
        let i = controllers.iter().position(|c| *c == r.controller).expect("collected");
        let j = alphas.iter().position(|a| *a == r.alpha).expect("collected");
        sums[i][j] += value(r);
        counts[i][j] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| {
            s.iter()
                .zip(c)
                .map(|(v, n)| (*n > 0).then(|| v / *n as f64))
                .collect()
        })
        .collect();
    PivotTable {
        controllers,
        alphas,
        values,
        counts,
    }
}

fn render_table(out: &mut String, title: &str, table: &PivotTable, decimals: usize) {
    let width = table.controllers.iter().map(String::len).max().unwrap_or(0).max(10);
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<width$}", "controller");
    for a in &table.alphas {
        let _ = write!(out, " {:>12}", format!("alpha={a}"));
    }
    out.push('\n');
    for (i, c) in table.controllers.iter().enumerate() {
        let _ = write!(out, "{c:<width$}");
        for v in &table.values[i] {
            match v {
                Some(v) => {
                    let _ = write!(out, " {v:>12.decimals$}");
                }
                None => {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
        }
        out.push('\n');
    }
}

/// Total-cost and discomfort tables, means over seeds. Empty input gives an
/// empty report.
pub fn render_report(rows: &[MetricsRow]) -> String {
    if rows.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    render_table(&mut out, "Total closed-loop cost (mean over seeds)", &pivot(rows, |r| r.total_cost), 1);
    out.push('\n');
    render_table(&mut out, "Energy cost, EUR (mean over seeds)", &pivot(rows, |r| r.energy_cost), 1);
    out.push('\n');
    render_table(&mut out, "Discomfort, K*h (mean over seeds)", &pivot(rows, |r| r.discomfort_kh), 2);
    out
}

/// Plot-ready long table of discomfort against α per controller.
pub fn plot_csv(rows: &[MetricsRow]) -> String {
    let discomfort = pivot(rows, |r| r.discomfort_kh);
    let total = pivot(rows, |r| r.total_cost);
    let mut out = String::from("controller,alpha,discomfort_kh,total_cost,n_seeds\n");
    for (i, c) in discomfort.controllers.iter().enumerate() {
        for (j, a) in discomfort.alphas.iter().enumerate() {
            if let (Some(d), Some(t)) = (discomfort.values[i][j], total.values[i][j]) {
                let _ = writeln!(out, "{c},{a},{d},{t},{}", discomfort.counts[i][j]);
            }
        }
    }
    out
}
