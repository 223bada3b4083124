//! Series CSV and number formatting.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64` and reruns diff cleanly.

use std::fmt::Write as _;

use ousse_core::EnsembleEstimate;

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Column names: `t, mean_weight, mean_weight_stderr`, then the upper
/// triangle of `η` (`eta_re_i_j`, `eta_im_i_j` for `j ≥ i`), then
/// `<name>_mean, <name>_stderr` per observable.
pub fn series_header(dim: usize, observables: &[&str]) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "mean_weight".into(), "mean_weight_stderr".into()];
    for i in 0..dim {
        for j in i..dim {
            cols.push(format!("eta_re_{i}_{j}"));
            cols.push(format!("eta_im_{i}_{j}"));
        }
    }
    for name in observables {
        cols.push(format!("{name}_mean"));
        cols.push(format!("{name}_stderr"));
    }
    cols
}

pub fn series_csv(est: &EnsembleEstimate) -> String {
    let dim = est.dim();
    let names: Vec<&str> = est.observables.iter().map(|o| o.name.as_str()).collect();
    let mut out = series_header(dim, &names).join(",");
    out.push('\n');
    for (o, &t) in est.times.iter().enumerate() {
        let mut row = vec![num(t), num(est.mean_weight[o]), num(est.weight_stderr[o])];
        for i in 0..dim {
            for j in i..dim {
                let z = est.eta[o][(i, j)];
                row.push(num(z.re));
                row.push(num(z.im));
            }
        }
        for obs in &est.observables {
            row.push(num(obs.mean[o]));
            row.push(num(obs.stderr[o]));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
