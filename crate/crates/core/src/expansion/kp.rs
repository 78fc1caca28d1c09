//! Kotecký-Preiss criterion with the analytic bound `|K_Γ| <= λ^{|Γ|}`.

use serde::{Deserialize, Serialize};

use crate::clusters::PolymerSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpResult {
    pub lambda: f64,
    pub satisfied: bool,
    /// `max_Γ Σ_{Γ' ≁ Γ} |Γ'| (eλ)^{|Γ'|} / |Γ|`.
    pub worst_ratio: f64,
    /// Index of the polymer attaining the worst ratio.
    pub worst: Option<usize>,
}

/// Checks `Σ_{Γ' ≁ Γ} λ^{|Γ'|} e^{|Γ'| + log|Γ'|} <= |Γ|` for every enumerated `Γ`.
pub fn kp_check(lambda: f64, polymers: &PolymerSet) -> KpResult {
    assert!(lambda >= 0.0, "λ must be nonnegative");
    let el = std::f64::consts::E * lambda;
    let mut worst_ratio = 0.0;
    let mut worst = None;
    for a in 0..polymers.len() {
        let counts = polymers.conflict_counts_by_size(a);
        let sum: f64 = counts
            .iter()
            .enumerate()
            .map(|(s, &c)| c as f64 * s as f64 * el.powi(s as i32))
            .sum();
        let ratio = sum / polymers.size(a) as f64;
        if worst.is_none() || ratio > worst_ratio {
            worst_ratio = ratio;
            worst = Some(a);
        }
    }
    KpResult {
        lambda,
        satisfied: worst_ratio <= 1.0,
        worst_ratio,
        worst,
    }
}

/// Largest λ passing [`kp_check`], by bisection on `[0, 1]`.
///
/// Returns the last passing endpoint and the final bracket width.
pub fn kp_lambda_star(polymers: &PolymerSet, iterations: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    if kp_check(hi, polymers).satisfied {
        return (hi, 0.0);
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if kp_check(mid, polymers).satisfied {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi - lo)
}
