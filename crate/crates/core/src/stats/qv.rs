//! Convergence of the conditional quadratic variation `Q_{n, floor(nt)}` to
//! `sigma^2 t`, with the charges integrated out.

use serde_json::json;

use super::{TestReport, Verdict};
use crate::error::{Error, Result};

/// Charge-averaged `Q_{n,m} = (I_m - m) / (2 s_n^2)`; zero when `m < 2`.
pub fn silt_q(silt: u64, m: u64, s_n2: f64) -> f64 {
    if m < 2 {
        return 0.0;
    }
    (silt as f64 - m as f64) / (2.0 * s_n2)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// `q[r][k]` is replica `r`'s `Q` at `t_grid[k]`. Reports the median of
/// `Q / t` at every grid point and passes iff the median at the largest
/// time is within `tolerance` (relative) of `sigma2`.
pub fn qv_convergence(
    q: &[Vec<f64>],
    t_grid: &[f64],
    sigma2: f64,
    tolerance: f64,
) -> Result<TestReport> {
    if q.is_empty() || t_grid.is_empty() {
        return Err(Error::EmptySample);
    }
    if q.iter().any(|r| r.len() != t_grid.len()) {
        return Err(Error::InvalidArgument(
            "replica rows must match t_grid".into(),
        ));
    }
    let medians: Vec<f64> = (0..t_grid.len())
        .map(|k| {
            let mut col: Vec<f64> = q.iter().map(|r| r[k] / t_grid[k]).collect();
            median(&mut col)
        })
        .collect();
    let last = *medians.last().unwrap();
    let dev = (last / sigma2 - 1.0).abs();
    Ok(TestReport::new(
        "qv_convergence",
        "relative deviation of median Q/t at the largest t",
        dev,
        Verdict::from_bool(dev <= tolerance),
        &format!("<= {tolerance}"),
        q.len(),
    )
    .with_details(json!({
        "t_grid": t_grid,
        "median_q_over_t": medians,
        "sigma2": sigma2,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_prefix_is_zero() {
        assert_eq!(silt_q(1, 1, 10.0), 0.0);
        assert_eq!(silt_q(0, 0, 10.0), 0.0);
        assert_eq!(silt_q(4, 2, 1.0), 1.0);
    }

    #[test]
    fn median_gate() {
        let q = vec![vec![0.5, 1.0], vec![0.6, 1.1], vec![0.4, 0.9]];
        let r = qv_convergence(&q, &[0.5, 1.0], 1.0, 0.05).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = qv_convergence(&q, &[0.5, 1.0], 1.2, 0.05).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(qv_convergence(&[], &[1.0], 1.0, 0.1).is_err());
    }
}
