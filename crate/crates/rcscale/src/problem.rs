//! Problem representation: input normalization, feasibility, diameter bounds.

use crate::error::{Result, ScaleError};
use crate::maxflow::Dinic;
use crate::sparse::CsrMatrix;

/// A validated matrix scaling problem.
///
/// Holds the row-normalized nonnegative matrix `A` (maximum entry of each
/// row is exactly 1), positive integral target marginals `r` and `c` with
/// equal total mass `h`, and `nu`, the smallest positive entry of `A`.
#[derive(Debug, Clone)]
pub struct ScalingInstance {
    a: CsrMatrix,
    r: Vec<f64>,
    c: Vec<f64>,
    h: u64,
    nu: f64,
    rows_leq_cols: bool,
}

impl ScalingInstance {
    /// Build from an already row-normalized matrix. Fails unless the max
    /// entry of every row equals 1 exactly; use [`ScalingInstance::from_raw`]
    /// for general input.
    pub fn new(a: CsrMatrix, r: Vec<u64>, c: Vec<u64>) -> Result<Self> {
        validate_marginals(&a, &r, &c)?;
        let mut nu = f64::INFINITY;
        for i in 0..a.nrows() {
            let (_, vals) = a.row(i);
            if vals.is_empty() {
                return Err(ScaleError::EmptyRow(i));
            }
            let mut max = f64::NEG_INFINITY;
            for &v in vals {
                if v < 0.0 {
                    return Err(ScaleError::NegativeEntry { row: i, col: 0, value: v });
                }
                max = max.max(v);
                if v > 0.0 {
                    nu = nu.min(v);
                }
            }
            if max != 1.0 {
                return Err(ScaleError::Parse(format!(
                    "row {i} is not normalized (max entry {max}); call from_raw"
                )));
            }
        }
        let h = r.iter().sum::<u64>();
        let rows_leq_cols = a.nrows() <= a.ncols();
        Ok(ScalingInstance {
            r: r.into_iter().map(|x| x as f64).collect(),
            c: c.into_iter().map(|x| x as f64).collect(),
            a,
            h,
            nu,
            rows_leq_cols,
        })
    }

    /// Normalize rows of a raw nonnegative matrix and build the instance.
    /// Returns the per-row divisors; objective values of the normalized
    /// instance differ from the raw one by `sum_i r_i * ln(row_scales[i])`.
    pub fn from_raw(a_raw: CsrMatrix, r: Vec<u64>, c: Vec<u64>) -> Result<(Self, Vec<f64>)> {
        let (a, scales) = normalize_rows(&a_raw)?;
        let inst = Self::new(a, r, c)?;
        Ok((inst, scales))
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    /// Number of rows d.
    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    /// Number of columns n.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.a.nnz()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Total marginal mass h = sum(r) = sum(c).
    pub fn h(&self) -> f64 {
        self.h as f64
    }

    pub fn h_int(&self) -> u64 {
        self.h
    }

    /// Smallest positive entry of the normalized matrix.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Whether d <= n held at construction. Recorded, never enforced.
    pub fn rows_leq_cols(&self) -> bool {
        self.rows_leq_cols
    }
}

fn validate_marginals(a: &CsrMatrix, r: &[u64], c: &[u64]) -> Result<()> {
    if r.len() != a.nrows() || c.len() != a.ncols() {
        return Err(ScaleError::DimensionMismatch(format!(
            "matrix is {}x{} but |r| = {}, |c| = {}",
            a.nrows(),
            a.ncols(),
            r.len(),
            c.len()
        )));
    }
    if let Some(i) = r.iter().position(|&x| x == 0) {
        return Err(ScaleError::ZeroMarginal(i));
    }
    if let Some(j) = c.iter().position(|&x| x == 0) {
        return Err(ScaleError::ZeroMarginal(j));
    }
    let r_sum: u64 = r.iter().sum();
    let c_sum: u64 = c.iter().sum();
    if r_sum != c_sum {
        return Err(ScaleError::MarginalMismatch { r_sum, c_sum });
    }
    Ok(())
}

/// Divide each row by its maximum entry so the row max becomes exactly 1.
pub fn normalize_rows(a_raw: &CsrMatrix) -> Result<(CsrMatrix, Vec<f64>)> {
    let mut scales = Vec::with_capacity(a_raw.nrows());
    let mut triplets = Vec::with_capacity(a_raw.nnz());
    for i in 0..a_raw.nrows() {
        let (cols, vals) = a_raw.row(i);
        let mut max = 0.0f64;
        for (&j, &v) in cols.iter().zip(vals) {
            if v < 0.0 {
                return Err(ScaleError::NegativeEntry { row: i, col: j, value: v });
            }
            max = max.max(v);
        }
        if max <= 0.0 {
            return Err(ScaleError::EmptyRow(i));
        }
        scales.push(max);
        for (&j, &v) in cols.iter().zip(vals) {
            if v > 0.0 {
                triplets.push((i, j, v / max));
            }
        }
    }
    let a = CsrMatrix::from_triplets(a_raw.nrows(), a_raw.ncols(), triplets)?;
    Ok((a, scales))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    AsymptoticallyScalable,
    NotScalable,
}

/// A zero minor R x C of A with sum_{i not in R} r_i < sum_{j in C} c_j,
/// witnessing non-scalability.
#[derive(Debug, Clone)]
pub struct ZeroMinor {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityVerdict {
    pub status: Feasibility,
    pub certificate: Option<ZeroMinor>,
}

/// Decide asymptotic (r,c)-scalability via max flow on the bipartite
/// support network: source -> row i with capacity r_i, row i -> col j with
/// capacity h wherever A_ij > 0, col j -> sink with capacity c_j. The
/// instance is asymptotically scalable iff the max flow saturates h; the
/// min cut otherwise yields the violating zero minor.
pub fn check_asymptotic_scalability(inst: &ScalingInstance) -> FeasibilityVerdict {
    let d = inst.d();
    let n = inst.n();
    let h = inst.h_int();
    let source = 0usize;
    let sink = d + n + 1;
    let mut net = Dinic::new(d + n + 2);
    for i in 0..d {
        net.add_edge(source, 1 + i, inst.r()[i] as u64);
    }
    for j in 0..n {
        net.add_edge(1 + d + j, sink, inst.c()[j] as u64);
    }
    for i in 0..d {
        let (cols, _) = inst.a().row(i);
        for &j in cols {
            net.add_edge(1 + i, 1 + d + j, h);
        }
    }
    let flow = net.max_flow(source, sink);
    if flow == h {
        return FeasibilityVerdict { status: Feasibility::AsymptoticallyScalable, certificate: None };
    }
    // Min cut: R = rows reachable from the source in the residual graph,
    // C = columns not reachable. Support edges have capacity h > max flow,
    // so no reachable row can touch an unreachable column: R x C is zero.
    let seen = net.residual_reachable(source);
    let rows: Vec<usize> = (0..d).filter(|&i| seen[1 + i]).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| !seen[1 + d + j]).collect();
    FeasibilityVerdict {
        status: Feasibility::NotScalable,
        certificate: Some(ZeroMinor { rows, cols }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiameterRegime {
    /// All d*n entries positive: N = ln(h n / nu).
    FullPositive,
    /// Scaling factors known to be polynomially bounded; the caller may
    /// supply a bound, otherwise ln(h n / nu) is used.
    PolyBoundedScaling(Option<f64>),
    /// General asymptotically scalable case: N = n ln(n h / (nu eps)).
    General,
}

/// Upper bound N on the infinity norm of a good scaling vector, clamped to
/// at least 1 (all solvers assume N >= 1).
pub fn diameter_bound(inst: &ScalingInstance, eps: f64, regime: DiameterRegime) -> f64 {
    let n = inst.n() as f64;
    let h = inst.h();
    let nu = inst.nu();
    let raw = match regime {
        DiameterRegime::FullPositive => (h * n / nu).ln(),
        DiameterRegime::PolyBoundedScaling(bound) => bound.unwrap_or_else(|| (h * n / nu).ln()),
        DiameterRegime::General => n * (n * h / (nu * eps)).ln(),
    };
    raw.max(1.0)
}
