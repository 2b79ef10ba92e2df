use sduda::metrics::{Metric, MetricRecord, Split};

pub type Series = Vec<((usize, usize), f64)>;

pub fn select(records: &[MetricRecord], split: Split, metric: Metric) -> Series {
    records
        .iter()
        .filter(|r| r.split == split && r.metric == metric)
        .map(|r| ((r.round, r.epoch), r.value))
        .collect()
}

fn grid(s: &Series) -> Vec<(usize, usize)> {
    s.iter().map(|(k, _)| *k).collect()
}

/// Linear interpolation of `values` at fraction `t` of the way through.
fn sample(values: &[f64], t: f64) -> f64 {
    if values.len() == 1 {
        return values[0];
    }
    let x = t * (values.len() - 1) as f64;
    let i = (x.floor() as usize).min(values.len() - 2);
    let w = x - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// One CSV with a column per run. Runs sharing the same (round, epoch) grid
/// are joined on it; otherwise every series is resampled onto a common
/// progress axis in [0, 1] and the header says so.
pub fn align(runs: &[(String, Series)]) -> String {
    let names: Vec<&str> = runs.iter().map(|(n, _)| n.as_str()).collect();
    let first = grid(&runs[0].1);
    let mut out = String::new();
    if runs.iter().all(|(_, s)| grid(s) == first) {
        out.push_str(&format!("round,epoch,{}\n", names.join(",")));
        for (i, (round, epoch)) in first.iter().enumerate() {
            let vals: Vec<String> = runs.iter().map(|(_, s)| s[i].1.to_string()).collect();
            out.push_str(&format!("{round},{epoch},{}\n", vals.join(",")));
        }
        return out;
    }
    let n = runs.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let lens: Vec<String> = runs.iter().map(|(name, s)| format!("{name}={}", s.len())).collect();
    out.push_str(&format!(
        "# resampled: epoch grids differ ({}); values linearly interpolated onto {n} evenly spaced progress points\n",
        lens.join(" ")
    ));
    out.push_str(&format!("progress,{}\n", names.join(",")));
    let values: Vec<Vec<f64>> = runs.iter().map(|(_, s)| s.iter().map(|(_, v)| *v).collect()).collect();
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let vals: Vec<String> = values.iter().map(|v| sample(v, t).to_string()).collect();
        out.push_str(&format!("{t},{}\n", vals.join(",")));
    }
    out
}
