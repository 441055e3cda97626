//! Derivative-free minimizers: a Nelder-Mead simplex and a golden-section
//! line search used for coordinate-wise polishing. Objectives may return
//! +∞ to mark infeasible points; the simplex retreats from them.

pub struct NmOptions {
    pub max_evals: usize,
    /// Relative simplex diameter below which the search stops.
    pub diameter_tol: f64,
    /// Relative best-to-worst objective spread below which the search stops.
    pub objective_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_evals: 5000,
            diameter_tol: 1e-9,
            objective_tol: 1e-10,
        }
    }
}

pub struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder-Mead with the standard coefficients: reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    opts: &NmOptions,
) -> NmOutcome {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |pt: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(pt);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for j in 0..d {
        let mut pt = x0.to_vec();
        pt[j] += steps[j];
        let v = eval(&pt, &mut evals);
        simplex.push((pt, v));
    }

    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = &simplex[0];
        if best.1.is_finite() {
            let scale = 1.0 + best.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diameter = simplex[1..]
                .iter()
                .map(|(pt, _)| {
                    pt.iter()
                        .zip(&best.0)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                })
                .fold(0.0f64, f64::max);
            let worst = simplex[d].1;
            let spread_ok = worst.is_finite()
                && (worst - best.1).abs() < opts.objective_tol * (1.0 + best.1.abs());
            // Both criteria, as in standard implementations: an equal-value
            // pair of distant vertices must not stop the search. A fully
            // collapsed simplex stops unconditionally (the spread can stay
            // infinite when the minimizer sits on the feasibility boundary).
            if (diameter < opts.diameter_tol * scale && spread_ok)
                || diameter < 1e-3 * opts.diameter_tol * scale
            {
                break;
            }
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; d];
        for (pt, _) in &simplex[..d] {
            for j in 0..d {
                centroid[j] += pt[j] / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let second_worst = simplex[d - 1].1;
        let best_val = simplex[0].1;

        let at = |coef: f64| -> Vec<f64> {
            (0..d)
                .map(|j| centroid[j] + coef * (centroid[j] - worst.0[j]))
                .collect()
        };

        let reflected = at(ALPHA);
        let fr = eval(&reflected, &mut evals);
        if fr < best_val {
            let expanded = at(GAMMA);
            let fe = eval(&expanded, &mut evals);
            simplex[d] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < second_worst {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                at(RHO) // outside contraction
            } else {
                at(-RHO) // inside contraction
            };
            let fc = eval(&contracted, &mut evals);
            if fc < worst.1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let anchor = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..d {
                        v.0[j] = anchor[j] + SIGMA * (v.0[j] - anchor[j]);
                    }
                    v.1 = eval(&v.0.clone(), &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (x, value) = simplex.swap_remove(0);
    NmOutcome { x, value, evals }
}

/// Golden-section search on [a, b]; returns the best point seen. Tolerant of
/// +∞ objective values inside the bracket.
pub fn golden_section(
    f: &mut dyn FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iters: usize,
) -> (f64, f64) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for _ in 0..max_iters {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        let (x, v) = if fc <= fd { (c, fc) } else { (d, fd) };
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_bowl() {
        let mut f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let out = nelder_mead(&mut f, &[0.0, 0.0], &[0.5, 0.5], &NmOptions::default());
        assert!((out.x[0] - 1.5).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] + 0.5).abs() < 1e-6);
        assert!(out.evals < 5000);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let out = nelder_mead(&mut f, &[-1.2, 1.0], &[0.5, 0.5], &NmOptions::default());
        assert!(
            (out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            out.x
        );
    }

    #[test]
    fn recovers_from_infeasible_region() {
        // Left half-plane is forbidden; the minimum sits at x = 2.
        let mut f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let out = nelder_mead(&mut f, &[0.5], &[3.0], &NmOptions::default());
        assert!((out.x[0] - 2.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn golden_section_finds_minimum() {
        let mut f = |x: f64| (x - 0.7).powi(2) + 1.0;
        let (x, v) = golden_section(&mut f, -3.0, 4.0, 1e-12, 200);
        assert!((x - 0.7).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
