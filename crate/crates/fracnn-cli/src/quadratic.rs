//! One-dimensional benchmark: minimize `f(x) = (x - 3)^2` with the
//! fractional-order step, derivative evaluated at the older of the two
//! running iterates. Two seeded starting points in `[0, 0.1)` give the
//! rule its initial parameter difference.

use fracnn::{frac_step_scalar, FracGradConfig, Result, DEFAULT_DELTA_OFFSET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TARGET: f64 = 3.0;

fn objective_derivative(x: f64) -> f64 {
    2.0 * (x - TARGET)
}

pub fn objective(x: f64) -> f64 {
    (x - TARGET) * (x - TARGET)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPoint {
    pub iteration: usize,
    pub alpha: f64,
    pub x: f64,
    pub fx: f64,
}

/// Runs the benchmark for every order in `alphas`, all sharing the same
/// two seeded starting points. Records the iterate at every iteration
/// (index 0 and 1 are the starting points).
pub fn run_quadratic_benchmark(
    alphas: &[f64],
    mu: f64,
    iterations: usize,
    seed: u64,
) -> Result<Vec<QuadraticPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: f64 = rng.gen_range(0.0..0.1);
    let x1: f64 = rng.gen_range(0.0..0.1);

    let mut points = Vec::new();
    for &alpha in alphas {
        let cfg = FracGradConfig::new(alpha, mu)?.with_delta_offset(DEFAULT_DELTA_OFFSET)?;
        let mut xs = Vec::with_capacity(iterations + 1);
        xs.push(x0);
        if iterations >= 1 {
            xs.push(x1);
        }
        for k in 1..iterations {
            let x_prev = xs[k - 1];
            let x_curr = xs[k];
            let next = frac_step_scalar(x_prev, x_curr, objective_derivative(x_prev), &cfg)?;
            xs.push(next);
        }
        for (iteration, &x) in xs.iter().enumerate() {
            points.push(QuadraticPoint {
                iteration,
                alpha,
                x,
                fx: objective(x),
            });
        }
    }
    Ok(points)
}

/// Iterate values of one order, in iteration order.
pub fn trajectory(points: &[QuadraticPoint], alpha: f64) -> Vec<f64> {
    points
        .iter()
        .filter(|p| p.alpha == alpha)
        .map(|p| p.x)
        .collect()
}

/// First iteration index whose iterate is within `tol` of the minimum.
pub fn iterations_to_tolerance(traj: &[f64], tol: f64) -> Option<usize> {
    traj.iter().position(|&x| (x - TARGET).abs() < tol)
}

/// Spread of the last `window` iterates.
pub fn final_span(traj: &[f64], window: usize) -> f64 {
    let tail = &traj[traj.len().saturating_sub(window)..];
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// CSV dump of all trajectories. Twelve digits keep the convergence tail
/// visible in the output.
pub fn quadratic_csv(points: &[QuadraticPoint]) -> String {
    let mut out = String::from("iteration,alpha,x,f_x\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.12},{:.12}\n",
            p.iteration, p.alpha, p.x, p.fx
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_order_converges_well_inside_100_iterations() {
        let points = run_quadratic_benchmark(&[1.0], 0.1, 100, 1).unwrap();
        let traj = trajectory(&points, 1.0);
        assert_eq!(traj.len(), 101);
        let last = *traj.last().unwrap();
        assert!((last - TARGET).abs() < 1e-3, "ended at {last}");
    }

    #[test]
    fn some_fractional_order_beats_the_classical_one() {
        let alphas = [0.6, 0.8, 1.0, 1.2, 1.4];
        let points = run_quadratic_benchmark(&alphas, 0.1, 500, 1).unwrap();
        let classical =
            iterations_to_tolerance(&trajectory(&points, 1.0), 1e-3).expect("must converge");
        let best_fractional = alphas
            .iter()
            .filter(|&&a| a != 1.0)
            .filter_map(|&a| iterations_to_tolerance(&trajectory(&points, a), 1e-3))
            .min();
        assert!(
            best_fractional.is_some_and(|b| b < classical),
            "classical {classical}, fractional {best_fractional:?}"
        );
    }

    #[test]
    fn declared_convergent_runs_sit_at_the_true_minimum() {
        let alphas = [0.6, 0.8, 1.0, 1.2, 1.4];
        let points = run_quadratic_benchmark(&alphas, 0.1, 500, 3).unwrap();
        let mut convergent = 0;
        for &alpha in &alphas {
            let traj = trajectory(&points, alpha);
            if final_span(&traj, 50) < 1e-8 {
                convergent += 1;
                let last = *traj.last().unwrap();
                assert!(
                    (last - TARGET).abs() < 1e-6,
                    "alpha {alpha} converged away from the minimum: {last}"
                );
            }
        }
        assert!(convergent >= 1, "no run declared convergent");
    }

    #[test]
    fn shared_starting_points_across_orders() {
        let points = run_quadratic_benchmark(&[0.5, 1.5], 0.1, 10, 9).unwrap();
        let a = trajectory(&points, 0.5);
        let b = trajectory(&points, 1.5);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn csv_shape() {
        let points = run_quadratic_benchmark(&[1.0], 0.1, 3, 1).unwrap();
        let csv = quadratic_csv(&points);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,alpha,x,f_x");
        assert_eq!(lines.len(), 1 + 4);
    }
}
