//! Gauss–Legendre rules and graded panels.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

/// Nodes and weights on [-1, 1]; cached per order.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let n = NonZeroUsize::new(n.max(1)).unwrap();
            let mut v = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(v)
        })
        .clone()
}

/// GL rule mapped to [a, b].
pub fn gl_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    gauss_legendre(n).iter().map(|&(x, w)| (c + h * x, h * w)).collect()
}

/// Nodes on [0, b] clustered toward 0 through `x = b t²`.
pub fn graded_from_zero(n: usize, b: f64) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .iter()
        .map(|&(x, w)| {
            let t = 0.5 * (x + 1.0);
            (b * t * t, b * t * w)
        })
        .collect()
}

/// Nodes on [-b, b] built from two mirrored graded halves; `n` is the total count
/// and is rounded up to an even number so 0 is never a node.
pub fn graded_symmetric(n: usize, b: f64) -> Vec<(f64, f64)> {
    let half = n.div_ceil(2).max(1);
    let right = graded_from_zero(half, b);
    let mut out: Vec<(f64, f64)> = right.iter().rev().map(|&(x, w)| (-x, w)).collect();
    out.extend(right);
    out
}

/// Sum of GL rules over consecutive panels `[e_i, e_{i+1}]`.
pub fn panels(edges: &[f64], n: usize) -> Vec<(f64, f64)> {
    edges.windows(2).flat_map(|e| gl_interval(n, e[0], e[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let s: f64 = gl_interval(5, 0.0, 2.0).iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 2f64.powi(10) / 10.0).abs() < 1e-10);
    }

    #[test]
    fn graded_rule_integrates_gaussian() {
        let s: f64 = graded_symmetric(40, 8.0).iter().map(|(x, w)| w * (-x * x).exp()).sum();
        assert!((s - std::f64::consts::PI.sqrt()).abs() < 1e-7, "{s}");
    }
}
