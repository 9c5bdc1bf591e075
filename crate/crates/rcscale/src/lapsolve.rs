//! Laplacian/SDD linear algebra: sparsification, approximate quadratic
//! minimization, and the l2-constrained quadratic minimizer.

use crate::error::{Result, ScaleError};
use crate::sparse::{dot, norm_w_sq};
use crate::trace;

/// Sparse symmetric matrix with nonpositive off-diagonals and zero row
/// sums, stored as an undirected edge list plus the induced CSR form.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    n: usize,
    /// Edges (i, j, w) with i < j and w > 0; the matrix entry is -w.
    edges: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl LaplacianMatrix {
    /// Build from undirected edge weights; duplicate edges are summed and
    /// nonpositive weights dropped. Diagonal entries are induced.
    pub fn from_edges(n: usize, raw: Vec<(usize, usize, f64)>) -> Self {
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
        for (a, b, w) in raw {
            debug_assert!(a < n && b < n && a != b);
            if w > 0.0 {
                let (i, j) = if a < b { (a, b) } else { (b, a) };
                edges.push((i, j, w));
            }
        }
        edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        edges.dedup_by(|next, prev| {
            if next.0 == prev.0 && next.1 == prev.1 {
                prev.2 += next.2;
                true
            } else {
                false
            }
        });

        let mut diag = vec![0.0; n];
        let mut deg = vec![1usize; n]; // one slot per row for the diagonal
        for &(i, j, w) in &edges {
            diag[i] += w;
            diag[j] += w;
            deg[i] += 1;
            deg[j] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + deg[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut cursor = row_ptr[..n].to_vec();
        for i in 0..n {
            col_idx[cursor[i]] = i;
            values[cursor[i]] = diag[i];
            cursor[i] += 1;
        }
        for &(i, j, w) in &edges {
            col_idx[cursor[i]] = j;
            values[cursor[i]] = -w;
            cursor[i] += 1;
            col_idx[cursor[j]] = i;
            values[cursor[j]] = -w;
            cursor[j] += 1;
        }
        LaplacianMatrix { n, edges, row_ptr, col_idx, values, diag }
    }

    pub fn zero(n: usize) -> Self {
        Self::from_edges(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        trace::count_matvec();
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    /// v' L v = sum_{edges} w (v_i - v_j)^2, always nonnegative.
    pub fn quad(&self, v: &[f64]) -> f64 {
        self.edges.iter().map(|&(i, j, w)| w * (v[i] - v[j]) * (v[i] - v[j])).sum()
    }

    pub fn scaled(&self, factor: f64) -> LaplacianMatrix {
        debug_assert!(factor > 0.0);
        LaplacianMatrix {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j, w)| (i, j, w * factor)).collect(),
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| v * factor).collect(),
            diag: self.diag.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i][self.col_idx[k]] = self.values[k];
            }
        }
        out
    }
}

/// A symmetric PSD quadratic form delta' Q delta accessed matrix-free.
pub trait QuadOp {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
    fn diag_into(&self, out: &mut [f64]);

    fn quad(&self, v: &[f64]) -> f64 {
        let mut tmp = vec![0.0; v.len()];
        self.apply(v, &mut tmp);
        dot(v, &tmp)
    }
}

impl QuadOp for LaplacianMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matvec(v, out);
    }

    fn diag_into(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.diag);
    }

    fn quad(&self, v: &[f64]) -> f64 {
        LaplacianMatrix::quad(self, v)
    }
}

/// A Laplacian times a positive scalar (e.g. H/6 in the step quadratics).
pub struct ScaledLaplacian<'a> {
    pub lap: &'a LaplacianMatrix,
    pub factor: f64,
}

impl QuadOp for ScaledLaplacian<'_> {
    fn dim(&self) -> usize {
        self.lap.n()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.lap.matvec(v, out);
        out.iter_mut().for_each(|x| *x *= self.factor);
    }

    fn diag_into(&self, out: &mut [f64]) {
        for (o, &d) in out.iter_mut().zip(self.lap.diag()) {
            *o = d * self.factor;
        }
    }

    fn quad(&self, v: &[f64]) -> f64 {
        self.factor * self.lap.quad(v)
    }
}

/// SDD operator M = 2 (Q + t I + s W) used by the constrained solver; the
/// factor 2 matches the 1/2 z'Mz convention of the linear solve below.
pub struct RidgedOp<'a> {
    pub base: &'a dyn QuadOp,
    pub t: f64,
    pub s: f64,
    pub w: &'a [f64],
}

impl RidgedOp<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.base.apply(v, out);
        for i in 0..v.len() {
            out[i] = 2.0 * (out[i] + self.t * v[i] + self.s * self.w[i] * v[i]);
        }
    }

    fn diag_into(&self, out: &mut [f64]) {
        self.base.diag_into(out);
        for (i, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (*o + self.t + self.s * self.w[i]);
        }
    }

    fn lambda_min_lb(&self) -> f64 {
        let w_min = self.w.iter().cloned().fold(f64::INFINITY, f64::min);
        2.0 * (self.t + self.s * w_min.max(0.0))
    }
}

/// Approximately minimize v'z + 1/2 z'Mz for SDD M, i.e. solve Mz = -v,
/// by Jacobi-preconditioned conjugate gradients. For singular (Laplacian)
/// M the right-hand side must lie in the column span. `x0` warm-starts.
pub fn sdd_solve_op(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: &[f64],
    lambda_min_lb: f64,
    v: &[f64],
    eps_rel: f64,
    x0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = v.len();
    let b: Vec<f64> = v.iter().map(|&x| -x).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let precond: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let max_diag = diag.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);

    // Residual target. When a positive lower spectral bound is available,
    // ||z - z*||_M^2 <= ||r||^2 / lambda_min and ||z*||_M^2 >= ||b||^2 / (2 max_diag)
    // give a sufficient residual criterion; otherwise fall back to a tight
    // relative residual.
    let tol = if lambda_min_lb > 0.0 {
        (eps_rel * lambda_min_lb / (2.0 * max_diag)).sqrt() * b_norm
    } else {
        0.0
    }
    .max(1e-13 * b_norm);

    let kappa_est = if lambda_min_lb > 0.0 { 2.0 * max_diag / lambda_min_lb } else { 1e14 };
    let max_iters = ((20.0 * kappa_est.sqrt()).ceil() as usize).clamp(50, 10 * n.max(5));

    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(&ri, &pi)| ri * pi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        if dot(&r, &r).sqrt() <= tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // numerically singular direction; the current iterate is the
            // best Krylov answer
            return Ok(x);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= tol {
        Ok(x)
    } else {
        Err(ScaleError::NotConverged(max_iters))
    }
}

/// Convenience wrapper over a Laplacian plus optional ridge.
pub fn sdd_solve(m: &LaplacianMatrix, ridge: f64, v: &[f64], eps_rel: f64) -> Result<Vec<f64>> {
    let mut diag = m.diag().to_vec();
    diag.iter_mut().for_each(|d| *d += ridge);
    sdd_solve_op(
        &|x: &[f64], out: &mut [f64]| {
            m.matvec(x, out);
            for i in 0..x.len() {
                out[i] += ridge * x[i];
            }
        },
        &diag,
        ridge,
        v,
        eps_rel,
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsifyBackend {
    /// H = L / ratio, which satisfies H <= L <= ratio*H exactly.
    Passthrough,
    /// Effective-resistance edge sampling with the given seed; intended for
    /// small n where resistances are computed by repeated SDD solves.
    EffectiveResistance { seed: u64 },
}

/// Produce H with H <= L <= ratio * H (as quadratic forms).
pub fn sparsify(l: &LaplacianMatrix, ratio: f64, backend: SparsifyBackend) -> LaplacianMatrix {
    assert!(ratio > 1.0);
    match backend {
        SparsifyBackend::Passthrough => l.scaled(1.0 / ratio),
        SparsifyBackend::EffectiveResistance { seed } => sample_by_resistance(l, ratio, seed),
    }
}

fn sample_by_resistance(l: &LaplacianMatrix, ratio: f64, seed: u64) -> LaplacianMatrix {
    use rand::{Rng, SeedableRng};
    let n = l.n();
    if l.edges().is_empty() {
        return l.clone();
    }
    // eps such that (1+eps)/(1-eps) <= ratio
    let eps = (ratio - 1.0) / (ratio + 1.0);
    // leverage scores via one solve per edge; desk-scale only
    let mut scores = Vec::with_capacity(l.edges().len());
    let mut rhs = vec![0.0; n];
    for &(i, j, w) in l.edges() {
        rhs[i] = 1.0;
        rhs[j] = -1.0;
        // minimize <-rhs, x> + 1/2 x' (2L) x  <=>  L x = rhs
        let neg = rhs.iter().map(|&v| -v).collect::<Vec<_>>();
        let x = sdd_solve_op(
            &|p: &[f64], out: &mut [f64]| {
                l.matvec(p, out);
                out.iter_mut().for_each(|o| *o *= 1.0);
            },
            l.diag(),
            0.0,
            &neg,
            1e-12,
            None,
        )
        .unwrap_or_else(|_| vec![0.0; n]);
        let resistance = (x[i] - x[j]).max(0.0);
        scores.push((w * resistance).max(1e-15));
        rhs[i] = 0.0;
        rhs[j] = 0.0;
    }
    let total: f64 = scores.iter().sum();
    let mut cumulative = Vec::with_capacity(scores.len());
    let mut acc = 0.0;
    for s in &scores {
        acc += s / total;
        cumulative.push(acc);
    }
    let q = ((4.0 * n as f64 * (n as f64).max(2.0).ln() / (eps * eps)).ceil() as usize).max(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0f64; l.edges().len()];
    for _ in 0..q {
        let u: f64 = rng.gen();
        let k = cumulative.partition_point(|&cum| cum < u).min(weights.len() - 1);
        weights[k] += l.edges()[k].2 / (q as f64 * scores[k] / total);
    }
    let sampled: Vec<(usize, usize, f64)> = l
        .edges()
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&(i, j, _), &w)| (i, j, w / (1.0 + eps)))
        .collect();
    LaplacianMatrix::from_edges(n, sampled)
}

/// Output of the l2-constrained quadratic minimization.
#[derive(Debug, Clone)]
pub struct ConstrainedQuadSolution {
    pub delta: Vec<f64>,
    /// Whether the unconstrained (ridged) minimizer was already feasible.
    pub in_ball: bool,
    /// Final Lagrange multiplier of the ball constraint (0 when interior).
    pub lagrange_s: f64,
    /// <v, delta> + delta' Hq delta at the returned point.
    pub objective: f64,
}

/// Minimize <v, delta> + delta' Hq delta subject to ||delta - alpha||_w^2 <= n/c_cap,
/// within additive `eps`, by ridging and bisecting the ball multiplier.
/// Feasibility of the output is unconditional: stalls return the best
/// feasible iterate (delta = alpha always qualifies).
pub fn l2_constrained_min(
    v: &[f64],
    hq: &dyn QuadOp,
    alpha: &[f64],
    w: &[f64],
    c_cap: f64,
    eps: f64,
    max_bisections: usize,
) -> Result<ConstrainedQuadSolution> {
    let n = v.len();
    debug_assert!(hq.dim() == n && alpha.len() == n && w.len() == n);
    debug_assert!(w.iter().all(|&wi| wi > 0.0), "weights must be positive");
    let radius_sq = n as f64 / c_cap;
    let eps = eps.max(1e-300);

    // shift coordinates so the ball is centered at the origin
    let mut v_prime = vec![0.0; n];
    hq.apply(alpha, &mut v_prime);
    for i in 0..n {
        v_prime[i] = v[i] + 2.0 * v_prime[i];
    }
    let vp_norm = dot(&v_prime, &v_prime).sqrt();

    let objective_at = |dp: &[f64]| -> f64 {
        let delta: Vec<f64> = dp.iter().zip(alpha).map(|(&d, &a)| d + a).collect();
        dot(v, &delta) + hq.quad(&delta)
    };
    let finish = |dp: Vec<f64>, in_ball: bool, s: f64| -> ConstrainedQuadSolution {
        let mut dp = dp;
        let nw = norm_w_sq(&dp, w);
        if nw > radius_sq {
            // roundoff guard: radial shrink in the w-metric restores the
            // hard feasibility contract
            let scale = (radius_sq / nw).sqrt() * (1.0 - 1e-14);
            dp.iter_mut().for_each(|x| *x *= scale);
        }
        let objective = objective_at(&dp);
        let delta: Vec<f64> = dp.iter().zip(alpha).map(|(&d, &a)| d + a).collect();
        ConstrainedQuadSolution { delta, in_ball, lagrange_s: s, objective }
    };

    if vp_norm == 0.0 {
        return Ok(finish(vec![0.0; n], true, 0.0));
    }

    let mut t = eps / (8.0 * n as f64);
    let solve_s = |t: f64, s: f64, warm: Option<&[f64]>| -> Result<Vec<f64>> {
        let op = RidgedOp { base: hq, t, s, w };
        let mut diag = vec![0.0; n];
        op.diag_into(&mut diag);
        sdd_solve_op(
            &|p: &[f64], out: &mut [f64]| op.apply(p, out),
            &diag,
            op.lambda_min_lb(),
            &v_prime,
            1e-14,
            warm,
        )
    };
    // interior test at s = 0; a failed solve retries with a larger ridge
    let mut delta0 = None;
    for _ in 0..4 {
        match solve_s(t, 0.0, None) {
            Ok(d) => {
                delta0 = Some(d);
                break;
            }
            Err(ScaleError::NotConverged(_)) => t *= 8.0,
            Err(e) => return Err(e),
        }
    }
    let delta0 = match delta0 {
        Some(d) => d,
        None => return Err(ScaleError::NotConverged(0)),
    };
    if norm_w_sq(&delta0, w) <= radius_sq {
        let lambda = (eps * eps / (4.0 * n as f64 * vp_norm * vp_norm)).min(0.5);
        let shrunk: Vec<f64> = delta0.iter().map(|&x| (1.0 - lambda) * x).collect();
        return Ok(finish(shrunk, true, 0.0));
    }

    // boundary case: bisect the multiplier; ||delta_s||_w^2 decreases in s
    let mut s_hi = 4.0 * c_cap * vp_norm;
    let mut d_hi = solve_s(t, s_hi, Some(&delta0))?;
    let mut grow = 0;
    while norm_w_sq(&d_hi, w) > radius_sq && grow < 64 {
        s_hi *= 4.0;
        d_hi = solve_s(t, s_hi, Some(&d_hi))?;
        grow += 1;
    }
    if norm_w_sq(&d_hi, w) > radius_sq {
        // pathological; fall back to the feasible center
        return Ok(finish(vec![0.0; n], false, s_hi));
    }

    let mut lo = 0.0f64;
    let mut hi = s_hi;
    let mut best = d_hi.clone();
    let mut best_obj = objective_at(&best);
    let mut best_s = s_hi;
    let mut warm = d_hi;
    for _ in 0..max_bisections {
        // a collapsed bracket cannot move the iterate any further
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let d_mid = solve_s(t, mid, Some(&warm))?;
        let nw = norm_w_sq(&d_mid, w);
        if nw <= radius_sq {
            let obj = objective_at(&d_mid);
            if obj < best_obj {
                best_obj = obj;
                best = d_mid.clone();
                best_s = mid;
            }
            let window_lo = radius_sq * (1.0 - eps / (4.0 * hi.max(1e-300) * n as f64));
            if nw >= window_lo {
                return Ok(finish(d_mid, false, mid));
            }
            hi = mid;
        } else {
            lo = mid;
        }
        warm = d_mid;
    }
    // stalled: the best feasible iterate is essentially optimal once the
    // bracket has collapsed
    Ok(finish(best, false, best_s))
}
