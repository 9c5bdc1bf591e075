//! Shared helpers for integration and acceptance tests: instance
//! builders, the invariant-audit observer, reference minimizers, and an
//! independent projected-gradient oracle for the constrained quadratic.

#![allow(dead_code)]

use rcscale::config::SolverConfig;
use rcscale::lapsolve::QuadOp;
use rcscale::objective::{eval_f, hessian_apply, RowCache};
use rcscale::problem::ScalingInstance;
use rcscale::sparse::{norm_inf, norm_w_sq, CsrMatrix};
use rcscale::trace::{
    GradStepRecord, LcIterRecord, MwuBasicRecord, MwuFullRecord, MwuRoundRecord,
    SecondOrderStepRecord, SolveObserver,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn square_instance(dense: &[Vec<f64>]) -> ScalingInstance {
    let a = CsrMatrix::from_dense(dense).unwrap();
    let n = dense.len();
    ScalingInstance::from_raw(a, vec![1; n], vec![1; n]).unwrap().0
}

pub fn random_positive(rng: &mut ChaCha8Rng, d: usize, n: usize, lo: f64) -> ScalingInstance {
    let rows: Vec<Vec<f64>> =
        (0..d).map(|_| (0..n).map(|_| rng.gen_range(lo..1.0)).collect()).collect();
    let a = CsrMatrix::from_dense(&rows).unwrap();
    let (r, c) = if d == n {
        (vec![1u64; d], vec![1u64; n])
    } else {
        (vec![n as u64; d], vec![d as u64; n])
    };
    ScalingInstance::from_raw(a, r, c).unwrap().0
}

pub fn triangular(n: usize) -> ScalingInstance {
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if j >= i {
                *cell = 1.0;
            }
        }
    }
    square_instance(&rows)
}

/// High-precision reference point from a long RAS run, shift-centered so
/// its infinity norm is minimal over the shift family.
pub fn reference_minimizer(inst: &ScalingInstance, eps: f64) -> Vec<f64> {
    let cfg = SolverConfig::default();
    let (x, _) = rcscale::cli::ras_solve(inst, eps, 3_000_000, &cfg).unwrap();
    center(&x)
}

/// Subtract the midrange so the infinity norm is minimized (f is shift
/// invariant).
pub fn center(x: &[f64]) -> Vec<f64> {
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (hi + lo);
    x.iter().map(|&v| v - mid).collect()
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|&a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Lower/upper slack of the second-order sandwich at (x, delta): both
/// values are nonnegative when the bounds hold.
pub fn sandwich_slacks(inst: &ScalingInstance, x: &[f64], delta: &[f64]) -> (f64, f64) {
    let cache = RowCache::build(inst, x).unwrap();
    let f_x = rcscale::objective::eval_f_cached(inst, x, &cache);
    let grad = rcscale::objective::eval_grad_cached(inst, &cache);
    let hd = hessian_apply(inst, &cache, delta);
    let quad: f64 = delta.iter().zip(&hd).map(|(&d, &h)| d * h).sum();
    let lin: f64 = grad.iter().zip(delta).map(|(&g, &d)| g * d).sum();
    let x_next: Vec<f64> = x.iter().zip(delta).map(|(&a, &b)| a + b).collect();
    let f_next = eval_f(inst, &x_next).unwrap();
    let lower_slack = f_next - (f_x + lin + quad / 6.0);
    let upper_slack = (f_x + lin + quad) - f_next;
    (lower_slack, upper_slack)
}

/// Records of one completed MWU call: the learning rate and the
/// (weights, loss) pairs of its rounds, for regret replay.
pub struct MwuCallTrace {
    pub eta: f64,
    pub rounds: Vec<(Vec<f64>, Vec<f64>)>,
}

pub struct BasicCallRecord {
    pub inf_gap: f64,
    pub bound: f64,
    pub quad_value: f64,
    pub eps: f64,
    pub escalations: usize,
}

pub struct FullCallRecord {
    pub inf_gap: f64,
    pub bound: f64,
    pub quad_value: f64,
    pub eps: f64,
    pub rho: f64,
    pub k_param: usize,
    pub truncated_rounds: usize,
    pub rounds: usize,
    pub branch_counts: [usize; 3],
    pub returned_accumulated: bool,
    pub vhat_inf: f64,
}

/// Collects every per-iteration contract the specifications state, so a
/// single solver run can be audited afterwards.
pub struct AuditObserver<'a> {
    inst: &'a ScalingInstance,
    /// Comparators (u, f(u)) for the coupling and decrease lemmas.
    pub us: Vec<(Vec<f64>, f64)>,
    pub lc_min_slack: f64,
    pub lc_iterations: usize,
    pub cor45_min_slack: f64,
    pub grad_steps: usize,
    pub basic_calls: Vec<BasicCallRecord>,
    pub full_calls: Vec<FullCallRecord>,
    pub mwu_traces: Vec<MwuCallTrace>,
    current_rounds: Vec<(Vec<f64>, Vec<f64>)>,
    current_eta: f64,
    pub lemma54a_min_slack: f64,
    pub lemma54b_min_slack: f64,
    pub max_step_inf: f64,
    pub sandwich_min_slack: f64,
    pub check_sandwich_per_step: bool,
}

impl<'a> AuditObserver<'a> {
    pub fn new(inst: &'a ScalingInstance) -> Self {
        AuditObserver {
            inst,
            us: vec![(vec![0.0; inst.n()], eval_f(inst, &vec![0.0; inst.n()]).unwrap())],
            lc_min_slack: f64::INFINITY,
            lc_iterations: 0,
            cor45_min_slack: f64::INFINITY,
            grad_steps: 0,
            basic_calls: Vec::new(),
            full_calls: Vec::new(),
            mwu_traces: Vec::new(),
            current_rounds: Vec::new(),
            current_eta: 0.0,
            lemma54a_min_slack: f64::INFINITY,
            lemma54b_min_slack: f64::INFINITY,
            max_step_inf: 0.0,
            sandwich_min_slack: f64::INFINITY,
            check_sandwich_per_step: false,
        }
    }

    /// Register a comparator point, clamped into the given box (the
    /// lemmas quantify over the box, so any clamp is admissible).
    pub fn add_reference(&mut self, u: &[f64], n_bound: f64) {
        let clamped: Vec<f64> = u.iter().map(|&v| v.clamp(-n_bound, n_bound)).collect();
        let f_u = eval_f(self.inst, &clamped).unwrap();
        self.us.push((clamped, f_u));
    }

    fn flush_rounds(&mut self) {
        if !self.current_rounds.is_empty() {
            self.mwu_traces.push(MwuCallTrace {
                eta: self.current_eta,
                rounds: std::mem::take(&mut self.current_rounds),
            });
        }
    }

    /// Replay the regret bound on every recorded MWU call for the
    /// comparators u = n e_i; returns the maximum audit value (<= 0 iff
    /// the bound held everywhere).
    pub fn max_regret_audit(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for call in &self.mwu_traces {
            let n = call.rounds.first().map_or(0, |(w, _)| w.len());
            for i in 0..n {
                let mut u = vec![0.0; n];
                u[i] = n as f64;
                worst = worst.max(rcscale::mwu::mwu_regret_audit(&call.rounds, call.eta, &u));
            }
        }
        worst
    }
}

impl SolveObserver for AuditObserver<'_> {
    fn on_lc_iteration(&mut self, rec: &LcIterRecord) {
        self.lc_iterations += 1;
        let c = self.inst.c();
        let norm_c_sq = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(c).map(|((&x, &y), &cj)| cj * (x - y) * (x - y)).sum()
        };
        for (u, f_u) in &self.us {
            if norm_inf(u) > rec.n_bound * (1.0 + 1e-12) {
                continue;
            }
            let slack = (1.0 - rec.tau) / rec.tau * (rec.f_y - f_u)
                - (rec.f_y_next - f_u) / rec.tau
                + (norm_c_sq(rec.z, u) - norm_c_sq(rec.z_next, u)) / (2.0 * rec.alpha);
            self.lc_min_slack = self.lc_min_slack.min(slack);
        }
    }

    fn on_grad_step(&mut self, rec: &GradStepRecord) {
        self.grad_steps += 1;
        let rhs = 3.0 / 32.0 * rec.grad_s_pot + 0.25 * rec.grad_l_l1;
        self.cor45_min_slack = self.cor45_min_slack.min(rec.decrease - rhs);
    }

    fn on_mwu_basic(&mut self, rec: &MwuBasicRecord) {
        self.flush_rounds();
        self.basic_calls.push(BasicCallRecord {
            inf_gap: rec.inf_gap,
            bound: 1.0 / 32.0 + 1.0 / (8.0 * rec.k_param as f64),
            quad_value: rec.quad_value,
            eps: rec.eps,
            escalations: rec.escalations,
        });
    }

    fn on_mwu_round(&mut self, rec: &MwuRoundRecord) {
        self.current_eta = rec.eta;
        self.current_rounds.push((rec.weights.to_vec(), rec.loss.to_vec()));
    }

    fn on_mwu_full(&mut self, rec: &MwuFullRecord) {
        self.flush_rounds();
        self.full_calls.push(FullCallRecord {
            inf_gap: rec.inf_gap,
            bound: 1.0 / 32.0 + 2.0 / rec.k_param as f64,
            quad_value: rec.quad_value,
            eps: rec.eps,
            rho: rec.rho,
            k_param: rec.k_param,
            truncated_rounds: rec.truncated_rounds,
            rounds: rec.rounds,
            branch_counts: rec.branch_counts,
            returned_accumulated: rec.returned_accumulated,
            vhat_inf: rec.vhat_inf,
        });
    }

    fn on_second_order_step(&mut self, rec: &SecondOrderStepRecord) {
        self.max_step_inf = self.max_step_inf.max(norm_inf(rec.delta));
        for (u, f_u) in &self.us {
            if norm_inf(u) > rec.n_bound * (1.0 + 1e-12) {
                continue;
            }
            let gap = rec.f_before - f_u;
            let slack_a = -rec.quad_value + rec.eps - gap / (64.0 * rec.n_bound);
            self.lemma54a_min_slack = self.lemma54a_min_slack.min(slack_a);
            let slack_b =
                (rec.f_before - rec.f_after) - (gap / (900.0 * rec.n_bound) - rec.eps);
            self.lemma54b_min_slack = self.lemma54b_min_slack.min(slack_b);
        }
        if self.check_sandwich_per_step {
            let step: Vec<f64> = rec.delta.iter().map(|&d| d / 6.6).collect();
            let x_before: Vec<f64> = rec.x.iter().zip(&step).map(|(&a, &s)| a - s).collect();
            let (lo, hi) = sandwich_slacks(self.inst, &x_before, &step);
            self.sandwich_min_slack = self.sandwich_min_slack.min(lo.min(hi));
        }
    }
}

/// Independent oracle for the l2-constrained quadratic: projected
/// gradient in the w-metric with Armijo backtracking, run to saturation.
pub fn pgd_oracle(
    v: &[f64],
    hq: &dyn QuadOp,
    alpha: &[f64],
    w: &[f64],
    c_cap: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let n = v.len();
    let radius_sq = n as f64 / c_cap;
    let project = |delta: &mut Vec<f64>| {
        let shifted: Vec<f64> = delta.iter().zip(alpha).map(|(&d, &a)| d - a).collect();
        let nw = norm_w_sq(&shifted, w);
        if nw > radius_sq {
            let scale = (radius_sq / nw).sqrt();
            for i in 0..n {
                delta[i] = alpha[i] + shifted[i] * scale;
            }
        }
    };
    let objective = |delta: &[f64]| -> f64 {
        let mut tmp = vec![0.0; n];
        hq.apply(delta, &mut tmp);
        v.iter().zip(delta).map(|(&a, &b)| a * b).sum::<f64>()
            + delta.iter().zip(&tmp).map(|(&a, &b)| a * b).sum::<f64>()
    };
    let mut delta = alpha.to_vec();
    let mut obj = objective(&delta);
    let mut step = 1.0;
    let mut grad = vec![0.0; n];
    for _ in 0..iters {
        hq.apply(&delta, &mut grad);
        for i in 0..n {
            grad[i] = v[i] + 2.0 * grad[i];
        }
        // w-preconditioned direction with backtracking
        let mut improved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> =
                (0..n).map(|i| delta[i] - step * grad[i] / w[i]).collect();
            project(&mut cand);
            let cand_obj = objective(&cand);
            if cand_obj < obj - 1e-18 {
                delta = cand;
                obj = cand_obj;
                step *= 1.3;
                improved = true;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    (delta, obj)
}
