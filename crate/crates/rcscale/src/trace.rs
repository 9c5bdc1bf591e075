//! Per-iteration solve records, audit logs, and work counters.

use serde::Serialize;
use std::sync::atomic::{AtomicU64, Ordering};

/// Termination status of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
    IterationCapReached,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub method: String,
    pub f: f64,
    pub potential: f64,
    pub x_inf: f64,
    pub n_bound: f64,
    pub step_kind: String,
    pub elapsed_ns: u128,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub status: Option<SolveStatus>,
}

impl SolveTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }
}

/// One linear-coupling iteration, exposed for invariant auditing.
pub struct LcIterRecord<'a> {
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub n_bound: f64,
    /// Gradient potential at the interpolated point.
    pub pot_x: f64,
    pub x_next: &'a [f64],
    pub y: &'a [f64],
    pub y_next: &'a [f64],
    pub z: &'a [f64],
    pub z_next: &'a [f64],
    pub f_y: f64,
    pub f_y_next: f64,
}

/// One unconstrained gradient step (tail of the first-order method).
pub struct GradStepRecord<'a> {
    pub x: &'a [f64],
    pub x_next: &'a [f64],
    pub decrease: f64,
    pub grad_s_pot: f64,
    pub grad_l_l1: f64,
}

/// One averaged-MWU call (basic variant).
pub struct MwuBasicRecord<'a> {
    pub rounds: usize,
    pub k_param: usize,
    pub eps: f64,
    pub alpha: &'a [f64],
    pub delta_bar: &'a [f64],
    pub inf_gap: f64,
    pub quad_value: f64,
    pub escalations: usize,
}

/// One MWU round: enough to replay the regret bound.
pub struct MwuRoundRecord<'a> {
    pub weights: &'a [f64],
    pub loss: &'a [f64],
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MwuFullBranch {
    Plain,
    Recursed,
    Accumulated,
}

pub struct MwuFullRecord<'a> {
    pub rounds: usize,
    pub rho: f64,
    pub k_param: usize,
    pub eps: f64,
    pub alpha: &'a [f64],
    pub delta_bar: &'a [f64],
    pub inf_gap: f64,
    pub quad_value: f64,
    pub truncated_rounds: usize,
    pub branch_counts: [usize; 3],
    pub returned_accumulated: bool,
    pub vhat_inf: f64,
}

/// One accepted second-order step x -> x + delta/6.6.
pub struct SecondOrderStepRecord<'a> {
    pub x: &'a [f64],
    pub delta: &'a [f64],
    pub quad_value: f64,
    pub eps: f64,
    pub n_bound: f64,
    pub f_before: f64,
    pub f_after: f64,
}

/// Observer hooks for deep invariant audits; all no-ops by default.
pub trait SolveObserver {
    fn on_lc_iteration(&mut self, _rec: &LcIterRecord) {}
    fn on_grad_step(&mut self, _rec: &GradStepRecord) {}
    fn on_mwu_basic(&mut self, _rec: &MwuBasicRecord) {}
    fn on_mwu_round(&mut self, _rec: &MwuRoundRecord) {}
    fn on_mwu_full(&mut self, _rec: &MwuFullRecord) {}
    fn on_second_order_step(&mut self, _rec: &SecondOrderStepRecord) {}
}

/// Default observer that ignores everything.
pub struct NoopObserver;

impl SolveObserver for NoopObserver {}

static F_EVALS: AtomicU64 = AtomicU64::new(0);
static MATVECS: AtomicU64 = AtomicU64::new(0);

pub fn count_f_eval() {
    F_EVALS.fetch_add(1, Ordering::Relaxed);
}

pub fn count_matvec() {
    MATVECS.fetch_add(1, Ordering::Relaxed);
}

/// Snapshot of the global work counters (f evaluations, matrix-vector
/// products). Bench cells diff two snapshots; meaningful only when cells
/// run sequentially.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WorkCounters {
    pub f_evals: u64,
    pub matvecs: u64,
}

pub fn counters() -> WorkCounters {
    WorkCounters { f_evals: F_EVALS.load(Ordering::Relaxed), matvecs: MATVECS.load(Ordering::Relaxed) }
}

impl WorkCounters {
    pub fn delta_since(self, earlier: WorkCounters) -> WorkCounters {
        WorkCounters {
            f_evals: self.f_evals - earlier.f_evals,
            matvecs: self.matvecs - earlier.matvecs,
        }
    }
}
