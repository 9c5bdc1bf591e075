//! Constrained multiplicative weights over the floor simplex
//! Delta = { w in [1/2, n]^n : sum w_i = n }.

/// MWU weight vector constrained to the floor simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorSimplexWeights {
    w: Vec<f64>,
}

impl FloorSimplexWeights {
    pub fn uniform(n: usize) -> Self {
        FloorSimplexWeights { w: vec![1.0; n] }
    }

    /// Wrap a vector after validating membership in Delta.
    pub fn new(w: Vec<f64>) -> Option<Self> {
        let n = w.len() as f64;
        let sum: f64 = w.iter().sum();
        let ok = w.iter().all(|&wi| (0.5..=n).contains(&wi)) && (sum - n).abs() <= 1e-10;
        ok.then_some(FloorSimplexWeights { w })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Bregman projection step of the constrained MWU:
/// argmin_{z in Delta} { eta <loss, z> + sum_i (z_i ln(z_i / w_i) + w_i - z_i) }.
///
/// Computes y_i = w_i e^{-eta loss_i}, sorts ascending, and finds the split
/// index j such that the first j sorted coordinates sit on the floor 1/2
/// while the rest are scaled by e^{-a} = (n - j/2) / Z_j with Z_j the
/// suffix sum. Such a j always exists; ties take the smaller j. Sorting is
/// value-ordered with index-stable tie-breaking for reproducibility.
pub fn mwu_project(w: &FloorSimplexWeights, loss: &[f64], eta: f64) -> FloorSimplexWeights {
    let n = w.len();
    debug_assert_eq!(loss.len(), n);
    debug_assert!(eta > 0.0);
    let n_f = n as f64;
    let y: Vec<f64> = w.w.iter().zip(loss).map(|(&wi, &li)| wi * (-eta * li).exp()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    // suffix sums of sorted y: suffix[k] = sum_{t >= k} y_sorted[t]
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + y[order[k]];
    }
    let mut chosen = None;
    for j in 0..n {
        let z_j = suffix[j];
        if z_j <= 0.0 {
            break;
        }
        let scale = (n_f - 0.5 * j as f64) / z_j;
        let head_ok = j == 0 || y[order[j - 1]] * scale < 0.5;
        let tail_ok = y[order[j]] * scale >= 0.5;
        if head_ok && tail_ok {
            chosen = Some((j, scale));
            break;
        }
    }
    let (j, scale) = chosen.expect("floor-simplex split index always exists");
    let mut out = vec![0.0; n];
    for (k, &idx) in order.iter().enumerate() {
        out[idx] = if k < j { 0.5 } else { y[idx] * scale };
    }
    FloorSimplexWeights { w: out }
}

/// Left-minus-right of the regret bound
/// sum_k <loss_k, w_k - u> <= n ln(2 n^2) / eta + 2 eta sum_k ||loss_k||^2_{w_k};
/// nonpositive for every admissible comparator u.
pub fn mwu_regret_audit(trace: &[(Vec<f64>, Vec<f64>)], eta: f64, u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mut lhs = 0.0;
    let mut width = 0.0;
    for (w_k, loss_k) in trace {
        for i in 0..u.len() {
            lhs += loss_k[i] * (w_k[i] - u[i]);
            width += w_k[i] * loss_k[i] * loss_k[i];
        }
    }
    lhs - (n * (2.0 * n * n).ln() / eta + 2.0 * eta * width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn breg_objective(z: &[f64], w: &[f64], loss: &[f64], eta: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..z.len() {
            acc += eta * loss[i] * z[i] + z[i] * (z[i] / w[i]).ln() + w[i] - z[i];
        }
        acc
    }

    /// Generic KKT oracle: the minimizer is z_i(a) = max(1/2, y_i e^{-a});
    /// bisect a until the mass constraint holds.
    fn kkt_oracle(w: &[f64], loss: &[f64], eta: f64) -> Vec<f64> {
        let n = w.len() as f64;
        let y: Vec<f64> = w.iter().zip(loss).map(|(&wi, &li)| wi * (-eta * li).exp()).collect();
        let mass = |a: f64| -> f64 { y.iter().map(|&yi| (yi * (-a).exp()).max(0.5)).sum() };
        let mut lo = -700.0;
        let mut hi = 700.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        y.iter().map(|&yi| (yi * (-a).exp()).max(0.5)).collect()
    }

    #[test]
    fn zero_loss_is_fixed_point() {
        let w = FloorSimplexWeights::uniform(4);
        let out = mwu_project(&w, &[0.0; 4], 0.5);
        for &v in out.as_slice() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_coordinate_hand_example() {
        // w = (1,1), eta*loss = (ln 2, -ln 2): y = (1/2, 2), split j = 1,
        // e^{-a} = 1.5/2 -> w' = (0.5, 1.5)
        let w = FloorSimplexWeights::uniform(2);
        let loss = [2.0f64.ln(), -(2.0f64.ln())];
        let out = mwu_project(&w, &loss, 1.0);
        assert!((out.as_slice()[0] - 0.5).abs() < 1e-12);
        assert!((out.as_slice()[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn three_coordinate_floor_binding() {
        let w = FloorSimplexWeights::uniform(3);
        let loss = [10.0, 0.0, -10.0];
        let eta = 1.0 / 10.0; // keep eta * ||loss||_inf <= 1
        let out = mwu_project(&w, &loss, eta);
        let oracle = kkt_oracle(w.as_slice(), &loss, eta);
        for i in 0..3 {
            assert!((out.as_slice()[i] - oracle[i]).abs() < 1e-8, "{:?} vs {:?}", out, oracle);
        }
    }

    #[test]
    fn projection_stays_in_simplex_and_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let mut w = vec![0.0; n];
            // random point of Delta: floors plus mass spread
            let mut rest = n as f64 - 0.5 * n as f64;
            for i in 0..n {
                let share = if i + 1 == n { rest } else { rng.gen_range(0.0..rest) };
                w[i] = 0.5 + share;
                rest -= share;
            }
            let w = FloorSimplexWeights::new(w).unwrap();
            let loss: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eta = 0.9;
            let out = mwu_project(&w, &loss, eta);
            let n_f = n as f64;
            let sum: f64 = out.as_slice().iter().sum();
            assert!((sum - n_f).abs() < 1e-10);
            assert!(out.as_slice().iter().all(|&z| z >= 0.5 - 1e-12 && z <= n_f + 1e-12));

            let obj = breg_objective(out.as_slice(), w.as_slice(), &loss, eta);
            // beat 10^3 random feasible points (10^4 across the outer loop)
            for _ in 0..1000 {
                let mut z = vec![0.5; n];
                let mut rest = 0.5 * n_f;
                for zi in z.iter_mut().take(n - 1) {
                    let share = rng.gen_range(0.0..rest);
                    *zi += share;
                    rest -= share;
                }
                z[n - 1] += rest;
                let other = breg_objective(&z, w.as_slice(), &loss, eta);
                assert!(obj <= other + 1e-9);
            }
            // and match the KKT oracle
            let oracle = kkt_oracle(w.as_slice(), &loss, eta);
            let oracle_obj = breg_objective(&oracle, w.as_slice(), &loss, eta);
            assert!(obj <= oracle_obj + 1e-8);
        }
    }

    #[test]
    fn regret_audit_examples() {
        let eta = 0.25;
        // empty trace
        let audit = mwu_regret_audit(&[], eta, &[3.0, 0.0, 0.0]);
        let n = 3.0f64;
        assert!((audit + n * (2.0 * n * n).ln() / eta).abs() < 1e-12);

        // single round of zero loss
        let audit = mwu_regret_audit(&[(vec![1.0; 3], vec![0.0; 3])], eta, &[3.0, 0.0, 0.0]);
        assert!(audit <= 0.0);

        // random rounds driven by the projection itself
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5usize;
        let eta = 0.3;
        let mut w = FloorSimplexWeights::uniform(n);
        let mut trace = Vec::new();
        for _ in 0..100 {
            let loss: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            trace.push((w.as_slice().to_vec(), loss.clone()));
            w = mwu_project(&w, &loss, eta);
        }
        for i in 0..n {
            let mut u = vec![0.0; n];
            u[i] = n as f64;
            assert!(mwu_regret_audit(&trace, eta, &u) <= 0.0, "comparator {i}");
        }
    }
}
