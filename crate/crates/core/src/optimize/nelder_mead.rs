//! Downhill simplex minimisation with the standard reflection, expansion,
//! contraction and shrink coefficients (1, 2, 1/2, 1/2).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex edge along each coordinate.
    pub step: f64,
    /// Stop once the spread of simplex values falls below
    /// `tolerance * |best|`.
    pub tolerance: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            step: 0.5,
            tolerance: 1e-6,
            max_evals: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), v0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= opts.tolerance * best.abs().max(f64::MIN_POSITIVE) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = along(2.0);
            let ve = eval(&xe, &mut evals);
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
            continue;
        }
        let (xc, vc) = if vr < simplex[n].1 {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if vc < vr.min(simplex[n].1) {
            simplex[n] = (xc, vc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x0.iter().zip(&item.0).map(|(b, xi)| b + 0.5 * (xi - b)).collect();
            let v = eval(&x, &mut evals);
            *item = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            tolerance: 1e-14,
            max_evals: 5000,
            ..NelderMeadOptions::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn quadratic_bowl_in_four_dims() {
        let f = |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(2))
                .sum::<f64>()
                + 2.0
        };
        let m = minimize(
            f,
            &[1.0, -1.0, 0.0, 2.0],
            &NelderMeadOptions {
                tolerance: 1e-12,
                max_evals: 4000,
                ..Default::default()
            },
        );
        assert!((m.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn respects_budget() {
        let m = minimize(
            |x: &[f64]| x[0].sin(),
            &[0.0],
            &NelderMeadOptions {
                max_evals: 7,
                ..Default::default()
            },
        );
        assert!(m.evals <= 7 + 3);
    }
}
