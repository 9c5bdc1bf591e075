//! Truncated-loss MWU with gap detection, sign-vector accumulation and
//! recursive sub-solves, the solver built on it, and warm-started
//! pipelines combining the first- and second-order methods.

use crate::config::SolverConfig;
use crate::error::{Result, ScaleError};
use crate::firstorder::scaling0;
use crate::lapsolve::{l2_constrained_min, sparsify, LaplacianMatrix, ScaledLaplacian, SparsifyBackend};
use crate::mwu::{mwu_project, FloorSimplexWeights};
use crate::objective::{
    build_hessian_cached, eval_f_cached, eval_grad_cached, potential_of_grad, RowCache,
};
use crate::problem::{check_asymptotic_scalability, diameter_bound, DiameterRegime, Feasibility, ScalingInstance};
use crate::secondorder::{box_shift, mwu_basic, scaling1, scaling2, step_quad_value, SecondOrderRun};
use crate::sparse::{dot, norm_inf};
use crate::trace::{
    MwuFullRecord, MwuRoundRecord, SecondOrderStepRecord, SolveObserver, SolveStatus, SolveTrace,
    TraceRow,
};
use std::time::Instant;

/// Result of locating a >= 15 jump in the sorted magnitudes of a round's
/// ball minimizer: the split size s, the magnitude-descending permutation,
/// and the sign-indicator vectors supported on the first s sorted
/// coordinates (in original index space).
#[derive(Debug, Clone)]
pub struct GapReport {
    pub s: usize,
    pub perm: Vec<usize>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
}

/// Find the smallest s in [rho] with |y_(s)| - |y_(s+1)| >= 15,
/// |y_(s+1)| <= rho/2 and |y_(s)| >= rho/4 (magnitudes sorted descending,
/// ties broken by index for reproducibility).
pub fn gap_detect(y: &[f64], rho: f64) -> Option<GapReport> {
    let n = y.len();
    if n < 2 {
        return None;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| y[b].abs().total_cmp(&y[a].abs()).then(a.cmp(&b)));
    let s_max = (rho.floor() as usize).min(n - 1);
    for s in 1..=s_max {
        let hi = y[perm[s - 1]].abs();
        let lo = y[perm[s]].abs();
        if hi - lo >= 15.0 && lo <= rho / 2.0 && hi >= rho / 4.0 {
            let mut v_plus = vec![0.0; n];
            let mut v_minus = vec![0.0; n];
            for &idx in &perm[..s] {
                if y[idx] > 0.0 {
                    v_plus[idx] = 1.0;
                } else {
                    v_minus[idx] = -1.0;
                }
            }
            return Some(GapReport { s, perm, v_plus, v_minus });
        }
    }
    None
}

/// True when both sign vectors have small inner product with the gradient
/// and small Hessian quadratic form: the truncated block decouples.
pub fn cross_term_small(grad: &[f64], h: &LaplacianMatrix, report: &GapReport, eps: f64) -> bool {
    dot(grad, &report.v_plus).abs() <= eps
        && h.quad(&report.v_plus) <= eps
        && dot(grad, &report.v_minus).abs() <= eps
        && h.quad(&report.v_minus) <= eps
}

/// Extract the s x s principal block (through the report's permutation),
/// re-deriving diagonals so the result is again Laplacian.
pub fn restrict(
    grad: &[f64],
    h: &LaplacianMatrix,
    alpha: &[f64],
    report: &GapReport,
) -> (Vec<f64>, LaplacianMatrix, Vec<f64>) {
    let s = report.s;
    let mut pos = vec![usize::MAX; grad.len()];
    for (k, &idx) in report.perm[..s].iter().enumerate() {
        pos[idx] = k;
    }
    let edges: Vec<(usize, usize, f64)> = h
        .edges()
        .iter()
        .filter(|&&(i, j, _)| pos[i] != usize::MAX && pos[j] != usize::MAX)
        .map(|&(i, j, w)| (pos[i], pos[j], w))
        .collect();
    let h_sub = LaplacianMatrix::from_edges(s, edges);
    let grad_sub: Vec<f64> = report.perm[..s].iter().map(|&i| grad[i]).collect();
    let alpha_sub: Vec<f64> = report.perm[..s].iter().map(|&i| alpha[i]).collect();
    (grad_sub, h_sub, alpha_sub)
}

#[derive(Debug, Clone)]
pub struct MwuFullOutput {
    pub delta_bar: Vec<f64>,
    pub quad_value: f64,
    pub inf_gap: f64,
    /// Rounds resolved as [plain, recursed, accumulated].
    pub branch_counts: [usize; 3],
    pub truncated_rounds: usize,
    pub returned_accumulated: bool,
    pub vhat_inf: f64,
}

/// Truncated-loss MWU. Rounds whose ball minimizer shows a magnitude gap
/// either recurse into the decoupled leading block (cross term small) or
/// contribute a sign vector to an accumulated descent direction. Losses
/// are truncated at rho + 1 and the learning rate is 1/(rho + K). The
/// output is the average of the untouched rounds, or the normalized
/// accumulated direction when too many rounds truncated.
pub fn mwu_full(
    grad: &[f64],
    h: &LaplacianMatrix,
    alpha: &[f64],
    t: usize,
    rho: f64,
    k_param: usize,
    eps: f64,
    cfg: &SolverConfig,
    obs: &mut dyn SolveObserver,
) -> Result<MwuFullOutput> {
    let n = grad.len();
    debug_assert!(norm_inf(alpha) <= 1.0 / 32.0 + 1e-15);
    let eta = 1.0 / (rho + k_param as f64);
    let hq = ScaledLaplacian { lap: h, factor: 1.0 / 6.0 };
    let mut weights = FloorSimplexWeights::uniform(n);
    let mut truncated: Vec<bool> = vec![false; t];
    let mut sum_plain = vec![0.0; n];
    let mut v_acc = vec![0.0; n];
    let mut vhat = vec![0.0; n];
    let mut branch_counts = [0usize; 3];

    for k in 0..t {
        let sol =
            l2_constrained_min(grad, &hq, alpha, weights.as_slice(), 1024.0, eps, cfg.max_bisections)?;
        let mut delta_k = sol.delta;
        match gap_detect(&delta_k, rho) {
            Some(report) => {
                if cross_term_small(grad, h, &report, eps) {
                    branch_counts[1] += 1;
                    let (grad_sub, h_sub, alpha_sub) = restrict(grad, h, alpha, &report);
                    let k_sub = 4usize; // realizes the <= 1/16 sub-solution bound
                    let t_sub = cfg.mwu_basic_rounds(report.s, k_sub);
                    let z_sub = mwu_basic(
                        &grad_sub,
                        &h_sub,
                        &alpha_sub,
                        t_sub,
                        k_sub,
                        eps,
                        cfg,
                        &mut crate::trace::NoopObserver,
                    )?;
                    for (kk, &idx) in report.perm[..report.s].iter().enumerate() {
                        delta_k[idx] = z_sub.delta_bar[kk];
                    }
                } else {
                    let take_plus = dot(grad, &report.v_plus).abs() > eps;
                    let v_k = if take_plus { &report.v_plus } else { &report.v_minus };
                    debug_assert!(
                        v_k.iter().any(|&x| x != 0.0),
                        "accumulated sign vector must be nonzero"
                    );
                    branch_counts[2] += 1;
                    for i in 0..n {
                        v_acc[i] += v_k[i];
                        vhat[i] += v_k[i].abs();
                    }
                    truncated[k] = true;
                }
            }
            None => {
                branch_counts[0] += 1;
            }
        }
        if !truncated[k] {
            for i in 0..n {
                sum_plain[i] += delta_k[i];
            }
        }
        let loss: Vec<f64> = delta_k
            .iter()
            .zip(alpha)
            .map(|(&d, &a)| -((d - a).abs().min(rho + 1.0)))
            .collect();
        obs.on_mwu_round(&MwuRoundRecord { weights: weights.as_slice(), loss: &loss, eta });
        weights = mwu_project(&weights, &loss, eta);
    }

    let s_len = truncated.iter().filter(|&&b| b).count();
    let vhat_inf = norm_inf(&vhat);
    let returned_accumulated = (s_len as f64) > t as f64 / (2.0 * k_param as f64);
    let delta_bar: Vec<f64> = if returned_accumulated {
        assert!(vhat_inf > 0.0, "accumulated branch with zero usage counts");
        v_acc.iter().map(|&v| v / (k_param as f64 * vhat_inf)).collect()
    } else {
        sum_plain.iter().map(|&s| s / t as f64).collect()
    };
    let inf_gap = delta_bar.iter().zip(alpha).map(|(&d, &a)| (d - a).abs()).fold(0.0, f64::max);
    let quad_value = step_quad_value(grad, h, &delta_bar);
    let out = MwuFullOutput {
        delta_bar,
        quad_value,
        inf_gap,
        branch_counts,
        truncated_rounds: s_len,
        returned_accumulated,
        vhat_inf,
    };
    obs.on_mwu_full(&MwuFullRecord {
        rounds: t,
        rho,
        k_param,
        eps,
        alpha,
        delta_bar: &out.delta_bar,
        inf_gap: out.inf_gap,
        quad_value: out.quad_value,
        truncated_rounds: s_len,
        branch_counts,
        returned_accumulated,
        vhat_inf,
    });
    Ok(out)
}

/// Contract bound on the averaged output: 1/32 + 2/K.
pub fn mwu_full_gap_bound(k_param: usize) -> f64 {
    1.0 / 32.0 + 2.0 / k_param as f64
}

/// Truncation parameter: the clamp of 10 n^(1/3) into [60, 2 sqrt(n)].
pub fn rho_for(n: usize) -> f64 {
    let n_f = n as f64;
    (10.0 * n_f.cbrt()).min(2.0 * n_f.sqrt()).max(60.0)
}

pub struct Scaling3Run {
    pub run: SecondOrderRun,
    pub delegated: bool,
}

/// The advanced solver. Below the delegation size the truncation
/// machinery cannot engage (a coordinate of magnitude rho/4 already
/// violates the weighted-ball budget), so the basic second-order method
/// runs instead and the trace is tagged accordingly.
pub fn scaling3(
    inst: &ScalingInstance,
    n0: f64,
    x0: &[f64],
    eps: f64,
    cfg: &SolverConfig,
    obs: &mut dyn SolveObserver,
) -> Result<Scaling3Run> {
    let n = inst.n();
    if n < cfg.scaling3_delegate_below {
        let mut run = scaling1(inst, n0.max(1.0), eps, cfg, obs)?;
        for row in &mut run.trace.rows {
            row.method = "s3:s1".into();
        }
        return Ok(Scaling3Run { run, delegated: true });
    }

    let started = Instant::now();
    let k_param = cfg.k_for(eps);
    let rho = rho_for(n);
    let t_rounds = cfg.mwu_full_rounds(n, rho, k_param);
    let threshold = cfg.threshold_mode.threshold(eps);
    let cap = (10.0 * n0 * cfg.k_cap_for(eps) as f64).ceil() as usize;

    let mut x = x0.to_vec();
    let mut n_bound = n0;
    let mut trace = SolveTrace::default();
    let mut status = SolveStatus::IterationCapReached;
    let mut best = (f64::INFINITY, x.clone());
    for t in 0..=cap {
        let cache = RowCache::build(inst, &x)?;
        let f = eval_f_cached(inst, &x, &cache);
        let grad = eval_grad_cached(inst, &cache);
        let pot = potential_of_grad(inst, &grad);
        if pot < best.0 {
            best = (pot, x.clone());
        }
        let converged = pot <= threshold;
        if converged {
            status = SolveStatus::Converged;
        }
        if converged || t == cap {
            trace.push(TraceRow {
                t,
                method: "s3".into(),
                f,
                potential: pot,
                x_inf: norm_inf(&x),
                n_bound,
                step_kind: "final".into(),
                elapsed_ns: started.elapsed().as_nanos(),
            });
            break;
        }
        let alpha = box_shift(&x, n_bound);
        let hess = build_hessian_cached(inst, &cache)?;
        let h = sparsify(&hess, 1.1, SparsifyBackend::Passthrough);
        let eps_inner = eps / (64.0 * n_bound * (n as f64).powi(3));
        let out = mwu_full(&grad, &h, &alpha, t_rounds, rho, k_param, eps_inner, cfg, obs)?;
        let step_kind = format!(
            "mwufull:p{}/r{}/a{}{}",
            out.branch_counts[0],
            out.branch_counts[1],
            out.branch_counts[2],
            if out.returned_accumulated { ":acc" } else { "" }
        );
        let f_before = f;
        for i in 0..n {
            x[i] += out.delta_bar[i] / 6.6;
        }
        let f_after = eval_f_cached(inst, &x, &RowCache::build(inst, &x)?);
        obs.on_second_order_step(&SecondOrderStepRecord {
            x: &x,
            delta: &out.delta_bar,
            quad_value: out.quad_value,
            eps: eps_inner,
            n_bound,
            f_before,
            f_after,
        });
        trace.push(TraceRow {
            t,
            method: "s3".into(),
            f: f_before,
            potential: pot,
            x_inf: norm_inf(&x),
            n_bound,
            step_kind,
            elapsed_ns: started.elapsed().as_nanos(),
        });
        n_bound = (n_bound + 1.0 / k_param as f64).max(norm_inf(&x));
    }
    let (final_potential, y) = if status == SolveStatus::Converged {
        let pot = trace.rows.last().map(|r| r.potential).unwrap_or(f64::INFINITY);
        debug_assert!(norm_inf(&x) <= 10.0 * n0 + 1e-9);
        (pot, x)
    } else {
        (best.0, best.1)
    };
    trace.status = Some(status);
    Ok(Scaling3Run {
        run: SecondOrderRun { y, trace, final_potential, final_n_bound: n_bound },
        delegated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PipelineStrategy {
    /// First-order warm start, then the advanced solver.
    Warm0Then3,
    /// Accelerated-quadratic warm start, then the advanced solver.
    Warm2Then3,
    /// The basic second-order solver alone.
    Pure1,
    /// The first-order solver alone.
    Pure0,
}

pub struct PipelineResult {
    pub x: Vec<f64>,
    pub trace: SolveTrace,
    pub final_potential: f64,
    pub n_bound: f64,
}

fn regime_for(inst: &ScalingInstance) -> DiameterRegime {
    if inst.nnz() == inst.d() * inst.n() {
        DiameterRegime::FullPositive
    } else {
        DiameterRegime::General
    }
}

fn merge_rows(trace: &mut SolveTrace, rows: Vec<TraceRow>) {
    for mut row in rows {
        row.t = trace.rows.len();
        trace.rows.push(row);
    }
}

/// Feasibility check, diameter bound, warm start to f-accuracy N n^(1/3),
/// then the advanced solver (or a single-method run).
pub fn pipeline(
    inst: &ScalingInstance,
    eps: f64,
    strategy: PipelineStrategy,
    cfg: &SolverConfig,
    obs: &mut dyn SolveObserver,
) -> Result<PipelineResult> {
    if check_asymptotic_scalability(inst).status == Feasibility::NotScalable {
        return Err(ScaleError::Infeasible);
    }
    let n = inst.n() as f64;
    let h = inst.h();
    let n0 = diameter_bound(inst, eps, regime_for(inst)) * cfg.c_diam;
    let threshold = cfg.threshold_mode.threshold(eps);
    let mut trace = SolveTrace::default();

    let finish = |x: Vec<f64>, mut trace: SolveTrace, pot: f64, nb: f64| {
        trace.status = Some(if pot <= threshold {
            SolveStatus::Converged
        } else {
            SolveStatus::BudgetExhausted
        });
        Ok(PipelineResult { x, trace, final_potential: pot, n_bound: nb })
    };

    match strategy {
        PipelineStrategy::Pure0 => {
            let t = ((n0 * n0 * h / threshold).cbrt().ceil() as usize).max(n0.ceil() as usize);
            let mut cfg0 = cfg.clone();
            cfg0.scaling0_stop_at = Some(threshold);
            let started = Instant::now();
            let out = scaling0(inst, n0, t, &cfg0, obs)?;
            let f = eval_f_cached(inst, &out.z_best, &RowCache::build(inst, &out.z_best)?);
            trace.push(TraceRow {
                t: 0,
                method: "s0".into(),
                f,
                potential: out.best_potential,
                x_inf: norm_inf(&out.z_best),
                n_bound: n0,
                step_kind: format!("lc+tail({})", out.tail_steps),
                elapsed_ns: started.elapsed().as_nanos(),
            });
            finish(out.z_best, trace, out.best_potential, n0)
        }
        PipelineStrategy::Pure1 => {
            let run = scaling1(inst, n0, eps, cfg, obs)?;
            merge_rows(&mut trace, run.trace.rows);
            finish(run.y, trace, run.final_potential, run.final_n_bound)
        }
        PipelineStrategy::Warm0Then3 => {
            // f(z1) - f(u) <= O(N^2 h / T^2) <= N n^(1/3) at this length
            let t_warm = ((n0 * h / n.cbrt()).sqrt().ceil() as usize).max(n0.ceil() as usize);
            let mut cfg0 = cfg.clone();
            cfg0.scaling0_stop_at = Some(threshold);
            let started = Instant::now();
            let warm = scaling0(inst, n0, t_warm, &cfg0, obs)?;
            let x0 = if warm.best_potential <= threshold { &warm.z_best } else { &warm.z1 };
            let f = eval_f_cached(inst, x0, &RowCache::build(inst, x0)?);
            trace.push(TraceRow {
                t: 0,
                method: "s0".into(),
                f,
                potential: warm.best_potential,
                x_inf: norm_inf(x0),
                n_bound: n0,
                step_kind: "warm".into(),
                elapsed_ns: started.elapsed().as_nanos(),
            });
            if warm.best_potential <= threshold {
                return finish(warm.z_best, trace, warm.best_potential, n0);
            }
            let n3 = n0.max(norm_inf(x0));
            let out = scaling3(inst, n3, x0, eps, cfg, obs)?;
            merge_rows(&mut trace, out.run.trace.rows);
            finish(out.run.y, trace, out.run.final_potential, out.run.final_n_bound)
        }
        PipelineStrategy::Warm2Then3 => {
            let t2 = ((h / n.cbrt()).sqrt().ceil() as usize).max(1);
            let warm = scaling2(inst, n0, t2, Some(threshold), cfg, obs)?;
            let warm_pot = warm.final_potential;
            merge_rows(&mut trace, warm.trace.rows);
            if warm_pot <= threshold {
                return finish(warm.y, trace, warm_pot, n0);
            }
            let n3 = n0.max(norm_inf(&warm.y));
            let out = scaling3(inst, n3, &warm.y, eps, cfg, obs)?;
            merge_rows(&mut trace, out.run.trace.rows);
            finish(out.run.y, trace, out.run.final_potential, out.run.final_n_bound)
        }
    }
}
