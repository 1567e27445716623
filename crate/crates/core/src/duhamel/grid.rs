use crate::error::{NskqError, Result};
use crate::params::GridSpec;

/// Node times in `]0, T]`, strictly increasing, ending at `T`.
///
/// Geometric nodes `T q^{M-k}` (`k = 1..M`) are merged with `extra` nodes
/// inside `]0, T]`; gaps longer than `max_step` are split uniformly.
pub fn time_grid(spec: &GridSpec, horizon: f64) -> Result<Vec<f64>> {
    if spec.nodes < 1 || !(spec.ratio > 0.0 && spec.ratio < 1.0) || !(horizon > 0.0) {
        return Err(NskqError::InvalidConfig("bad time grid parameters".into()));
    }
    let m = spec.nodes;
    let mut t: Vec<f64> = (1..=m)
        .map(|k| horizon * spec.ratio.powi((m - k) as i32))
        .collect();
    t.extend(spec.extra.iter().copied().filter(|&x| x > 0.0 && x < horizon));
    t.sort_by(f64::total_cmp);
    t.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * horizon);
    *t.last_mut().expect("nonempty grid") = horizon;
    if let Some(h) = spec.max_step {
        if !(h > 0.0) {
            return Err(NskqError::InvalidConfig("max_step must be positive".into()));
        }
        let mut refined = Vec::with_capacity(t.len());
        let mut prev = 0.0;
        for &x in &t {
            let pieces = ((x - prev) / h).ceil().max(1.0) as usize;
            for j in 1..pieces {
                refined.push(prev + (x - prev) * j as f64 / pieces as f64);
            }
            refined.push(x);
            prev = x;
        }
        t = refined;
    }
    Ok(t)
}
