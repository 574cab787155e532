//! Linear-programming cross-check of the single-photon yield bound, and the
//! small dense simplex solver behind it.

use crate::error::{Error, Result};

const TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpStatus {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Minimises `c·x` subject to `A x = b`, `x >= 0`, by two-phase simplex with
/// Bland's rule. Rows with negative right-hand side are negated first.
pub(crate) fn solve_standard(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpStatus {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let rhs = width - 1;

    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[rhs] = sign * b[i];
        t.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase one: minimise the sum of artificials
    let mut obj = vec![0.0; width];
    for row in &t {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[rhs] -= row[rhs];
    }
    t.push(obj);
    if !run_simplex(&mut t, &mut basis, n + m) {
        return LpStatus::Unbounded;
    }
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if -t[m][rhs] > 1e-9 * scale {
        return LpStatus::Infeasible;
    }

    // push leftover zero-valued artificials out of the basis
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > TOL) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    // phase two
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    for i in 0..m {
        let cb = if basis[i] < n { c[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                obj[j] -= cb * t[i][j];
            }
        }
    }
    t[m] = obj;
    if !run_simplex(&mut t, &mut basis, n) {
        return LpStatus::Unbounded;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][rhs];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpStatus::Optimal { x, value }
}

/// Pivots until no column below `allowed` has a negative reduced cost.
/// Returns false when the objective is unbounded.
fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], allowed: usize) -> bool {
    let m = basis.len();
    let rhs = t[0].len() - 1;
    for _ in 0..10_000 {
        let Some(enter) = (0..allowed).find(|&j| t[m][j] < -TOL) else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > TOL {
                let ratio = t[i][rhs] / t[i][enter];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - TOL || (ratio <= lr + TOL && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            return false;
        };
        pivot(t, basis, row, enter);
    }
    true
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let factor = r[col];
            if factor != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
            }
        }
    }
    basis[row] = col;
}

/// Result of the yield linear program.
#[derive(Debug, Clone, PartialEq)]
pub struct LpBound {
    /// Minimum single-photon yield compatible with the observed rates.
    pub y1: f64,
    /// The minimising photon-number yields `Y_0..=Y_cutoff`.
    pub yields: Vec<f64>,
}

fn poisson_pmf(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut log_fact = 0.0;
    for i in 2..=k {
        log_fact += (i as f64).ln();
    }
    (-mu + k as f64 * mu.ln() - log_fact).exp()
}

/// Minimises `Y_1` over photon-number yields `Y_k` in `[0, 1]` reproducing
/// the vacuum, decoy and signal rates exactly as Poisson mixtures.
///
/// Yields above `cutoff` share one common value; their weight is below
/// `mu_y^(cutoff+1) / (cutoff+1)!`.
pub fn lp_oracle(s0: f64, sx: f64, sy: f64, mu_x: f64, mu_y: f64, cutoff: usize) -> Result<LpBound> {
    if cutoff < 3 {
        return Err(Error::Domain(format!("photon cutoff must be >= 3 (got {cutoff})")));
    }
    if !(0.0 < mu_x && mu_x < mu_y) {
        return Err(Error::Domain(format!("need 0 < mu_x < mu_y (got {mu_x}, {mu_y})")));
    }
    for (name, s) in [("S_0", s0), ("S_x", sx), ("S_y", sy)] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("{name} = {s} is not a probability")));
        }
    }
    let scale = s0.max(sx).max(sy);
    if scale == 0.0 {
        return Ok(LpBound {
            y1: 0.0,
            yields: vec![0.0; cutoff + 1],
        });
    }

    // variables: z_0..=z_K, z_tail, then one slack per upper bound
    let k_vars = cutoff + 2;
    let n = 2 * k_vars;
    let upper = 1.0 / scale;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (mu, s) in [(0.0, s0), (mu_x, sx), (mu_y, sy)] {
        let mut row = vec![0.0; n];
        let mut head = 0.0;
        for (k, cell) in row.iter_mut().enumerate().take(cutoff + 1) {
            *cell = poisson_pmf(mu, k);
            head += *cell;
        }
        row[cutoff + 1] = (1.0 - head).max(0.0);
        a.push(row);
        b.push(s / scale);
    }
    for k in 0..k_vars {
        let mut row = vec![0.0; n];
        row[k] = 1.0;
        row[k_vars + k] = 1.0;
        a.push(row);
        b.push(upper);
    }
    let mut c = vec![0.0; n];
    c[1] = 1.0;

    match solve_standard(&a, &b, &c) {
        LpStatus::Optimal { x, .. } => Ok(LpBound {
            y1: x[1] * scale,
            yields: x[..=cutoff].iter().map(|z| z * scale).collect(),
        }),
        LpStatus::Infeasible => Err(Error::Infeasible(format!(
            "no photon-number yields reproduce S_0 = {s0:e}, S_x = {sx:e}, S_y = {sy:e}"
        ))),
        LpStatus::Unbounded => Err(Error::Structural("yield LP reported unbounded".into())),
    }
}
