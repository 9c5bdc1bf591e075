//! RAS baseline and the accelerated first-order method: custom gradient
//! step, box-constrained mirror step, the linear-coupling loop, and the
//! warm-started driver around it.

use crate::config::SolverConfig;
use crate::error::Result;
use crate::objective::{
    eval_f_cached, eval_grad_cached, potential_of_grad, split_grad, split_grad_with_cap,
    GradientSplit, RowCache,
};
use crate::problem::ScalingInstance;
use crate::sparse::norm_inf;
use crate::trace::{GradStepRecord, LcIterRecord, SolveObserver};

/// Log-domain row/column scaling state of the RAS iteration. The scaled
/// matrix is diag(e^{log_row}) A diag(e^{log_col}); it is never formed.
#[derive(Debug, Clone)]
pub struct RasState {
    pub log_row: Vec<f64>,
    pub log_col: Vec<f64>,
}

impl RasState {
    pub fn identity(inst: &ScalingInstance) -> Self {
        RasState { log_row: vec![0.0; inst.d()], log_col: vec![0.0; inst.n()] }
    }
}

/// One RAS sweep: a row normalization followed by a column normalization,
/// both in the log domain. Columns without support are untouched (there
/// are no entries to rescale).
pub fn ras_step(inst: &ScalingInstance, state: &RasState) -> Result<RasState> {
    let cache = RowCache::build(inst, &state.log_col)?;
    // row normalization pins row sums to r: log_row_i = ln r_i - ln <A_i, e^x>
    let log_row: Vec<f64> = (0..inst.d())
        .map(|i| inst.r()[i].ln() - (cache.shift[i] + cache.z[i].ln()))
        .collect();
    // column sums of the row-normalized matrix are grad_j + c_j
    let grad = eval_grad_cached(inst, &cache);
    let mut log_col = state.log_col.clone();
    for j in 0..inst.n() {
        let colsum = grad[j] + inst.c()[j];
        if colsum > 0.0 {
            log_col[j] += (inst.c()[j] / colsum).ln();
        }
    }
    Ok(RasState { log_row, log_col })
}

/// Quadratic lower bound for nonnegative steps.
pub fn q_plus(grad: &[f64], split: &GradientSplit, c: &[f64], delta: &[f64]) -> f64 {
    let mut q = 0.0;
    for &j in &split.lambda_s {
        q += -grad[j] * delta[j] - (4.0 / 3.0) * c[j] * delta[j] * delta[j];
    }
    for &j in &split.lambda_l {
        q += -(7.0 / 3.0) * grad[j] * delta[j];
    }
    q
}

/// Quadratic lower bound for nonpositive steps.
pub fn q_minus(grad: &[f64], split: &GradientSplit, c: &[f64], delta: &[f64]) -> f64 {
    let mut q = 0.0;
    for &j in &split.lambda_s {
        q += -grad[j] * delta[j] - (4.0 / 3.0) * c[j] * delta[j] * delta[j];
    }
    for &j in &split.lambda_l {
        q += -0.5 * grad[j] * delta[j];
    }
    q
}

/// Closed-form maximizer of Q+ over { delta >= 0, ||x+delta||_inf <= N, ||delta||_inf <= 1/2 }.
pub fn q_plus_argmax(
    x: &[f64],
    grad: &[f64],
    split: &GradientSplit,
    c: &[f64],
    bound: Option<f64>,
) -> Vec<f64> {
    let n = x.len();
    let mut delta = vec![0.0; n];
    for &j in &split.lambda_s {
        if grad[j] < 0.0 {
            let hi = match bound {
                Some(nb) => (nb - x[j]).min(0.5).max(0.0),
                None => 0.5,
            };
            delta[j] = (-3.0 * grad[j] / (8.0 * c[j])).clamp(0.0, hi);
        }
    }
    // large coordinates have a strictly negative Q+ coefficient: stay at 0
    delta
}

/// Closed-form maximizer of Q- over { delta <= 0, ||x+delta||_inf <= N, ||delta||_inf <= 1/2 }.
pub fn q_minus_argmax(
    x: &[f64],
    grad: &[f64],
    split: &GradientSplit,
    c: &[f64],
    bound: Option<f64>,
) -> Vec<f64> {
    let n = x.len();
    let mut delta = vec![0.0; n];
    let lo_at = |j: usize| match bound {
        Some(nb) => (-nb - x[j]).max(-0.5).min(0.0),
        None => -0.5,
    };
    for &j in &split.lambda_s {
        if grad[j] > 0.0 {
            delta[j] = (-3.0 * grad[j] / (8.0 * c[j])).clamp(lo_at(j), 0.0);
        }
    }
    for &j in &split.lambda_l {
        delta[j] = lo_at(j);
    }
    delta
}

#[derive(Debug, Clone)]
pub struct GradStepOutcome {
    pub x: Vec<f64>,
    pub f_before: f64,
    pub f_after: f64,
    pub grad_s_pot: f64,
    pub grad_l_l1: f64,
}

/// Projected gradient step: evaluate both candidate moves (the Q+ and Q-
/// maximizers) and keep whichever lowers f more. `bound = None` is the
/// unconstrained variant where only ||delta||_inf <= 1/2 remains.
pub fn grad_step(inst: &ScalingInstance, x: &[f64], bound: Option<f64>) -> Result<GradStepOutcome> {
    let cache = RowCache::build(inst, x)?;
    let f_x = eval_f_cached(inst, x, &cache);
    let grad = eval_grad_cached(inst, &cache);
    grad_step_with(inst, x, f_x, &grad, bound)
}

pub fn grad_step_with(
    inst: &ScalingInstance,
    x: &[f64],
    f_x: f64,
    grad: &[f64],
    bound: Option<f64>,
) -> Result<GradStepOutcome> {
    let c = inst.c();
    let split = split_grad(grad, c);
    let dp = q_plus_argmax(x, grad, &split, c, bound);
    let dm = q_minus_argmax(x, grad, &split, c, bound);
    let y1: Vec<f64> = x.iter().zip(&dp).map(|(&a, &b)| a + b).collect();
    let y2: Vec<f64> = x.iter().zip(&dm).map(|(&a, &b)| a + b).collect();
    let f1 = eval_f_cached(inst, &y1, &RowCache::build(inst, &y1)?);
    let f2 = eval_f_cached(inst, &y2, &RowCache::build(inst, &y2)?);
    let (y, f_after) = if f1 <= f2 { (y1, f1) } else { (y2, f2) };
    Ok(GradStepOutcome {
        x: y,
        f_before: f_x,
        f_after,
        grad_s_pot: split.small_potential(c),
        grad_l_l1: split.large_l1(),
    })
}

/// Box-constrained mirror step: coordinatewise
/// z'_j = clip(z_j - v_j / c_j, -N, N).
pub fn mirror_step(z: &[f64], v: &[f64], c: &[f64], n_bound: f64) -> Vec<f64> {
    z.iter()
        .zip(v)
        .zip(c)
        .map(|((&zj, &vj), &cj)| (zj - vj / cj).clamp(-n_bound, n_bound))
        .collect()
}

/// Positive root of tau^2 / prev^2 + tau - 1 = 0.
pub fn next_tau(prev: f64) -> f64 {
    let p2 = prev * prev;
    0.5 * (-p2 + prev * (p2 + 4.0).sqrt())
}

/// The linear-coupling loop: interpolate a gradient iterate (radius 15N)
/// with a mirror iterate (radius N) for `t` rounds and return the gradient
/// iterate.
pub fn lc(
    inst: &ScalingInstance,
    n_bound: f64,
    t: usize,
    y0: &[f64],
    cfg: &SolverConfig,
    obs: &mut dyn SolveObserver,
) -> Result<Vec<f64>> {
    debug_assert!(n_bound >= 1.0 && t >= 1);
    debug_assert!(norm_inf(y0) <= 15.0 * n_bound * (1.0 + 1e-12));
    let n = inst.n();
    let c = inst.c();
    let ones = vec![1.0; n];
    let mut y = y0.to_vec();
    let mut f_y = {
        let cache = RowCache::build(inst, &y)?;
        eval_f_cached(inst, &y, &cache)
    };
    let mut z = vec![0.0; n];
    let mut tau = 1.0 / (32.0 * n_bound);
    for k in 0..t {
        if k > 0 {
            tau = next_tau(tau);
        }
        debug_assert!(tau > 0.0 && tau <= 1.0 / (32.0 * n_bound) + 1e-15);
        let alpha = 3.0 / (64.0 * tau);
        let x_next: Vec<f64> =
            z.iter().zip(&y).map(|(&zj, &yj)| tau * zj + (1.0 - tau) * yj).collect();
        let cache = RowCache::build(inst, &x_next)?;
        let f_x = eval_f_cached(inst, &x_next, &cache);
        let grad = eval_grad_cached(inst, &cache);
        let step = grad_step_with(inst, &x_next, f_x, &grad, Some(15.0 * n_bound))?;
        let split = if cfg.lc_unit_cap {
            split_grad_with_cap(&grad, &ones)
        } else {
            split_grad(&grad, c)
        };
        let feedback: Vec<f64> = split.grad_s.iter().map(|&g| alpha * g).collect();
        let z_next = mirror_step(&z, &feedback, c, n_bound);
        obs.on_lc_iteration(&LcIterRecord {
            k,
            tau,
            alpha,
            n_bound,
            pot_x: potential_of_grad(inst, &grad),
            x_next: &x_next,
            y: &y,
            y_next: &step.x,
            z: &z,
            z_next: &z_next,
            f_y,
            f_y_next: step.f_after,
        });
        debug_assert!(norm_inf(&z_next) <= n_bound * (1.0 + 1e-12));
        debug_assert!(norm_inf(&step.x) <= 15.0 * n_bound * (1.0 + 1e-12));
        y = step.x;
        f_y = step.f_after;
        z = z_next;
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct Scaling0Result {
    /// Output of the long coupled phase; infinity norm at most 15N.
    pub z1: Vec<f64>,
    /// The tail iterate with the smallest gradient potential.
    pub z_best: Vec<f64>,
    pub best_potential: f64,
    pub tail_steps: usize,
}

/// Warm-started first-order method: repeat the coupling loop log N times
/// at length ~8N, run it once at length `t`, then take `t` unconstrained
/// gradient steps and keep the iterate with the smallest potential.
pub fn scaling0(
    inst: &ScalingInstance,
    n_bound: f64,
    t: usize,
    cfg: &SolverConfig,
    obs: &mut dyn SolveObserver,
) -> Result<Scaling0Result> {
    let warm_len = ((cfg.c_warm * n_bound).ceil() as usize).max(1);
    let warm_calls = (n_bound.max(2.0).log2().ceil() as usize) + 1;
    let mut z0 = vec![0.0; inst.n()];
    for _ in 0..warm_calls {
        z0 = lc(inst, n_bound, warm_len, &z0, cfg, obs)?;
    }
    let z1 = lc(inst, n_bound, t, &z0, cfg, obs)?;

    let mut current = z1.clone();
    let mut best = z1.clone();
    let mut best_potential = f64::INFINITY;
    let mut tail_steps = 0;
    for step_idx in 0..=t {
        let cache = RowCache::build(inst, &current)?;
        let f_x = eval_f_cached(inst, &current, &cache);
        let grad = eval_grad_cached(inst, &cache);
        let pot = potential_of_grad(inst, &grad);
        if pot < best_potential {
            best_potential = pot;
            best = current.clone();
        }
        if step_idx == t || cfg.scaling0_stop_at.map_or(false, |tgt| pot <= tgt) {
            break;
        }
        let outcome = grad_step_with(inst, &current, f_x, &grad, None)?;
        obs.on_grad_step(&GradStepRecord {
            x: &current,
            x_next: &outcome.x,
            decrease: outcome.f_before - outcome.f_after,
            grad_s_pot: outcome.grad_s_pot,
            grad_l_l1: outcome.grad_l_l1,
        });
        current = outcome.x;
        tail_steps += 1;
    }
    Ok(Scaling0Result { z1, z_best: best, best_potential, tail_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{eval_f, eval_grad, grad_potential};
    use crate::problem::ScalingInstance;
    use crate::sparse::CsrMatrix;
    use crate::trace::NoopObserver;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(dense: &[Vec<f64>], r: &[u64], c: &[u64]) -> ScalingInstance {
        let a = CsrMatrix::from_dense(dense).unwrap();
        ScalingInstance::from_raw(a, r.to_vec(), c.to_vec()).unwrap().0
    }

    fn triangular2() -> ScalingInstance {
        inst(&[vec![1.0, 1.0], vec![0.0, 1.0]], &[1, 1], &[1, 1])
    }

    #[test]
    fn ras_hand_example() {
        // A = [[1,1],[0,1]]: after row norm [[.5,.5],[0,1]], after col norm
        // [[1,1/3],[0,2/3]]
        let i = triangular2();
        let s0 = RasState::identity(&i);
        let s1 = ras_step(&i, &s0).unwrap();
        let m = |st: &RasState, r: usize, c: usize, a: f64| -> f64 {
            a * (st.log_row[r] + st.log_col[c]).exp()
        };
        assert!((m(&s1, 0, 0, 1.0) - 1.0).abs() < 1e-12);
        assert!((m(&s1, 0, 1, 1.0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((m(&s1, 1, 1, 1.0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ras_fixed_point_on_scaled_matrix() {
        let i = inst(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1, 1], &[1, 1]);
        let s0 = RasState::identity(&i);
        let s1 = ras_step(&i, &s0).unwrap();
        assert!(norm_inf(&s1.log_col) < 1e-12);
        assert!(norm_inf(&s1.log_row) < 1e-12);
    }

    #[test]
    fn ras_monotone_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| (0..20).map(|_| rng.gen_range(0.1..1.0)).collect()).collect();
        let i = inst(&rows, &vec![20; 20], &vec![20; 20]);
        let mut state = RasState::identity(&i);
        let mut f_prev = eval_f(&i, &state.log_col).unwrap();
        let mut pot_prev = grad_potential(&i, &state.log_col).unwrap();
        for _ in 0..100 {
            state = ras_step(&i, &state).unwrap();
            let f = eval_f(&i, &state.log_col).unwrap();
            let pot = grad_potential(&i, &state.log_col).unwrap();
            assert!(f <= f_prev + 1e-10 * (1.0 + f_prev.abs()), "f increased");
            assert!(pot <= pot_prev + 1e-9 * (1.0 + pot_prev), "potential increased");
            f_prev = f;
            pot_prev = pot;
        }
    }

    #[test]
    fn grad_step_stationary_at_zero_gradient() {
        let i = inst(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1, 1], &[1, 1]);
        let out = grad_step(&i, &[0.0, 0.0], None).unwrap();
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn grad_step_triangular_candidates() {
        let i = triangular2();
        let grad = eval_grad(&i, &[0.0, 0.0]).unwrap();
        let split = split_grad(&grad, i.c());
        let dp = q_plus_argmax(&[0.0, 0.0], &grad, &split, i.c(), None);
        let dm = q_minus_argmax(&[0.0, 0.0], &grad, &split, i.c(), None);
        assert!((dp[0] - 3.0 / 16.0).abs() < 1e-12 && dp[1] == 0.0);
        assert!(dm[0] == 0.0 && (dm[1] + 3.0 / 16.0).abs() < 1e-12);
        // the two candidates tie by shift invariance
        let f1 = eval_f(&i, &[3.0 / 16.0, 0.0]).unwrap();
        let f2 = eval_f(&i, &[0.0, -3.0 / 16.0]).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn grad_step_closed_form_beats_grid() {
        // n <= 3 grid search over the simplex of allowed deltas
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let n = 3;
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.05..1.0)).collect()).collect();
            let i = inst(&rows, &vec![n as u64; n], &vec![n as u64; n]);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = eval_grad(&i, &x).unwrap();
            let split = split_grad(&grad, i.c());
            let dp = q_plus_argmax(&x, &grad, &split, i.c(), None);
            let best_plus = q_plus(&grad, &split, i.c(), &dp);
            let dm = q_minus_argmax(&x, &grad, &split, i.c(), None);
            let best_minus = q_minus(&grad, &split, i.c(), &dm);

            // per-axis grids include the closed-form coordinates, so the
            // grid optimum equals the true optimum for these separable Qs
            let mut axis_plus: Vec<Vec<f64>> = Vec::new();
            let mut axis_minus: Vec<Vec<f64>> = Vec::new();
            for j in 0..n {
                let mut ap: Vec<f64> = (0..=20).map(|k| k as f64 * 0.025).collect();
                ap.push(dp[j]);
                let mut am: Vec<f64> = (0..=20).map(|k| -(k as f64) * 0.025).collect();
                am.push(dm[j]);
                axis_plus.push(ap);
                axis_minus.push(am);
            }
            let mut grid_plus = f64::NEG_INFINITY;
            let mut grid_minus = f64::NEG_INFINITY;
            for a in &axis_plus[0] {
                for b in &axis_plus[1] {
                    for c in &axis_plus[2] {
                        grid_plus = grid_plus.max(q_plus(&grad, &split, i.c(), &[*a, *b, *c]));
                    }
                }
            }
            for a in &axis_minus[0] {
                for b in &axis_minus[1] {
                    for c in &axis_minus[2] {
                        grid_minus = grid_minus.max(q_minus(&grad, &split, i.c(), &[*a, *b, *c]));
                    }
                }
            }
            assert!((best_plus - grid_plus).abs() <= 1e-6, "trial {trial}: Q+");
            assert!((best_minus - grid_minus).abs() <= 1e-6, "trial {trial}: Q-");
        }
    }

    #[test]
    fn mirror_step_closed_form_vs_grid() {
        // z = 0, c = 1: v = 0.5 -> -0.5; v = 5 -> clipped to -1
        let z = [0.0];
        let c = [1.0];
        for (v, expect) in [(0.5, -0.5), (5.0, -1.0)] {
            let out = mirror_step(&z, &[v], &c, 1.0);
            assert!((out[0] - expect).abs() < 1e-12);
            // fine grid oracle over [-1, 1]
            let mut best = f64::INFINITY;
            let mut best_z = 0.0;
            for k in 0..=20000 {
                let cand = -1.0 + k as f64 * 1e-4;
                let val = v * cand + 0.5 * (cand - z[0]) * (cand - z[0]);
                if val < best {
                    best = val;
                    best_z = cand;
                }
            }
            assert!((out[0] - best_z).abs() <= 1e-4);
        }
        let out = mirror_step(&[0.0], &[0.0], &[1.0], 1.0);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn tau_sequence() {
        // tau_0 = 1/32 at N = 1; tau_1 solves the quadratic
        let tau0 = 1.0 / 32.0;
        let tau1 = next_tau(tau0);
        assert!((tau1 - 0.0307655).abs() < 1e-6, "tau1 = {tau1}");
        // tau_k <= 2 / (64 N + k)
        let mut tau = tau0;
        for k in 1..500 {
            tau = next_tau(tau);
            assert!(tau <= 2.0 / (64.0 + k as f64) + 1e-15, "k = {k}");
        }
    }

    #[test]
    fn scaling0_trivial_instance() {
        let i = inst(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1, 1], &[1, 1]);
        let cfg = SolverConfig::default();
        let out = scaling0(&i, 1.0, 3, &cfg, &mut NoopObserver).unwrap();
        assert!(out.best_potential < 1e-20);
        assert!(norm_inf(&out.z_best) < 1e-12);
    }

    #[test]
    fn scaling0_accuracy_sweep_on_triangular() {
        // potential <= eps^2 reached, with ||z||_inf growing like ln(1/eps)
        let i = triangular2();
        let mut norms = Vec::new();
        for eps in [1e-2f64, 1e-3, 1e-4] {
            let n_bound = crate::problem::diameter_bound(&i, eps, crate::problem::DiameterRegime::General);
            let target = eps * eps;
            let cfg = SolverConfig { scaling0_stop_at: Some(target), ..SolverConfig::default() };
            let mut t = 64;
            let mut reached = None;
            while t <= 16384 {
                let out = scaling0(&i, n_bound, t, &cfg, &mut NoopObserver).unwrap();
                assert!(norm_inf(&out.z1) <= 15.0 * n_bound + 1e-9);
                if out.best_potential <= target {
                    reached = Some(out);
                    break;
                }
                t *= 2;
            }
            let out = reached.expect("scaling0 did not reach eps^2 within the sweep");
            norms.push(norm_inf(&out.z_best));
        }
        // log-accuracy growth: the half-gap needed for potential eps^2 is
        // about ln(sqrt(2)/eps)/2
        for (i, eps) in [1e-2f64, 1e-3, 1e-4].iter().enumerate() {
            let ratio = norms[i] / (1.0 / eps).ln();
            assert!((0.2..=1.6).contains(&ratio), "norms {norms:?}");
        }
        assert!(norms[2] > norms[0], "norm should grow as eps shrinks: {norms:?}");
    }
}
