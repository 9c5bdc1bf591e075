//! Solver configuration: every named constant in one place.

use serde::{Deserialize, Serialize};

/// Convergence threshold convention for the gradient potential
/// ||grad f||^2_{c^-1} against a requested accuracy eps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ThresholdMode {
    /// Stop when the potential is at most eps (literal loop criterion).
    Eps,
    /// Stop when the potential is at most eps^2 (the eps-approximate
    /// (r,c)-matrix certificate). Default.
    #[default]
    EpsSquared,
}

impl ThresholdMode {
    pub fn threshold(self, eps: f64) -> f64 {
        match self {
            ThresholdMode::Eps => eps,
            ThresholdMode::EpsSquared => eps * eps,
        }
    }
}

/// Named constants behind the Theta(.) choices, plus desk-scale knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Multiplier on the general-regime diameter bound n ln(nh/(nu eps)).
    pub c_diam: f64,
    /// Warm-start length multiplier for the linear-coupling loop: T_warm = ceil(c_warm * N).
    pub c_warm: f64,
    /// MWU round budget multiplier: T = ceil(c_t (sqrt(n) K + K^2) ln n).
    pub c_t: f64,
    /// K = ceil(c_k ln(1/eps)).
    pub c_k: f64,
    /// Outer-loop multiplier for the accelerated quadratic method:
    /// ceil(c_s2 * N * ln(h N)) iterations.
    pub c_s2: f64,
    /// Truncated-MWU round budget multiplier: T = ceil(c_t3 (K rho + K^2) ln n).
    pub c_t3: f64,
    /// Clip the mirror-feedback split at 1 instead of c_j (the literal
    /// transcription of the coupling loop); off by default.
    pub lc_unit_cap: bool,
    /// Potential threshold convention.
    pub threshold_mode: ThresholdMode,
    /// Largest n for which an explicit Hessian may be materialized.
    pub hessian_dense_cap: usize,
    /// Problem sizes below this delegate the truncated-MWU solver to the
    /// basic one (the truncation machinery only engages at large n).
    pub scaling3_delegate_below: usize,
    /// Lower cap on the number of MWU rounds per outer iteration. When the
    /// averaged step violates its infinity-norm contract the run is
    /// extended (x2) toward the full c_t-derived budget, so desk-scale
    /// runs can start far below the worst-case budget without giving up
    /// the guarantee on accepted steps.
    pub mwu_rounds_floor: usize,
    /// Practical ceiling on adaptive continuation; the worst-case budget
    /// still applies when smaller.
    pub mwu_rounds_cap: usize,
    /// Hard cap on bisection steps inside the l2-constrained solver.
    pub max_bisections: usize,
    /// Record per-call audit data in solve traces.
    pub audit: bool,
    /// Optional early-stop potential for the plain first-order method;
    /// checked on the tail gradient iterates.
    pub scaling0_stop_at: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c_diam: 1.0,
            c_warm: 8.0,
            c_t: 4.0,
            c_k: 3.0,
            c_s2: 64.0,
            c_t3: 4.0,
            lc_unit_cap: false,
            threshold_mode: ThresholdMode::EpsSquared,
            hessian_dense_cap: 5000,
            scaling3_delegate_below: 900,
            mwu_rounds_floor: 24,
            mwu_rounds_cap: 4096,
            max_bisections: 200,
            audit: false,
            scaling0_stop_at: None,
        }
    }
}

impl SolverConfig {
    pub fn k_for(&self, eps: f64) -> usize {
        let k = (self.c_k * (1.0 / eps).ln()).ceil();
        (k as usize).max(2)
    }

    /// K used for the outer-loop caps: keyed to the actual stopping
    /// threshold, so an eps^2 potential target gets the budget matching
    /// the distance it requires.
    pub fn k_cap_for(&self, eps: f64) -> usize {
        self.k_for(self.threshold_mode.threshold(eps).max(f64::MIN_POSITIVE))
    }

    /// Full MWU round budget for the basic subroutine. The 8/3 factor and
    /// the ln(2n^2) term come from the regret calculation: the weighted
    /// Cauchy-Schwarz term consumes the entire 1/32 allowance, so the
    /// whole 1/(8K) slack must cover the learning-rate and entropy terms.
    pub fn mwu_basic_rounds(&self, n: usize, k: usize) -> usize {
        let n_f = (n as f64).max(2.0);
        let k_f = k as f64;
        let t = self.c_t * (8.0 / 3.0)
            * (n_f.sqrt() * k_f + k_f * k_f)
            * (2.0 * n_f * n_f).ln();
        (t.ceil() as usize).max(1)
    }

    /// Full MWU round budget for the truncated subroutine.
    pub fn mwu_full_rounds(&self, n: usize, rho: f64, k: usize) -> usize {
        let k_f = k as f64;
        let t = self.c_t3 * (k_f * rho + k_f * k_f) * (n as f64).max(2.0).ln();
        (t.ceil() as usize).max(1)
    }
}
