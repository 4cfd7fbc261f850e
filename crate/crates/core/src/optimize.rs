//! Derivative-free minimisation by the downhill simplex method with seeded
//! restarts.
//!
//! The search runs in whatever coordinates the caller provides; the trainer
//! passes log-parameters so positivity holds by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    /// Maximum number of objective evaluations, including the initial point.
    pub budget: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// A simplex whose loss spread and extent both fall below these values
    /// is considered converged and triggers a restart.
    pub loss_tolerance: f64,
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            budget: 200,
            initial_step: 0.5,
            loss_tolerance: 1e-10,
            step_tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("optimiser budget must be >= 1"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::invalid(format!(
                "initial simplex step must be > 0, got {}",
                self.initial_step
            )));
        }
        if !(self.loss_tolerance >= 0.0 && self.step_tolerance >= 0.0) {
            return Err(Error::invalid("tolerances must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub x: Vec<f64>,
    pub loss: f64,
    /// Best loss seen after each evaluation; never increases.
    pub trace: Vec<f64>,
    pub restarts: usize,
}

impl OptimizeResult {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

struct Counter<F> {
    f: F,
    budget: usize,
    best_x: Vec<f64>,
    best: f64,
    trace: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn exhausted(&self) -> bool {
        self.trace.len() >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let raw = (self.f)(x);
        let loss = if raw.is_finite() { raw } else { f64::INFINITY };
        if self.trace.is_empty() || loss < self.best {
            self.best = loss;
            self.best_x = x.to_vec();
        }
        self.trace.push(self.best);
        loss
    }
}

/// Minimises `f` from `init`.
///
/// Non-finite losses are treated as `+inf`. The returned point is the best
/// one evaluated, so its loss never exceeds the loss at `init`.
pub fn minimize<F>(f: F, init: &[f64], config: &OptimizeConfig) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    if init.is_empty() {
        return Err(Error::invalid("optimiser needs at least one parameter"));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial point must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut c = Counter {
        f,
        budget: config.budget,
        best_x: init.to_vec(),
        best: f64::INFINITY,
        trace: Vec::with_capacity(config.budget),
    };
    c.eval(init);
    let mut restarts = 0;
    let mut start = init.to_vec();
    let mut start_loss = c.best;
    let mut step = config.initial_step;
    let mut first = true;
    while !c.exhausted() {
        let directions = if first {
            axis_directions(init.len())
        } else {
            random_directions(init.len(), &mut rng)
        };
        run_simplex(&mut c, &start, start_loss, step, &directions, config);
        if c.exhausted() {
            break;
        }
        restarts += 1;
        first = false;
        start = c.best_x.clone();
        start_loss = c.best;
        step = config.initial_step * rng.random_range(0.25..1.0);
    }
    Ok(OptimizeResult {
        x: c.best_x,
        loss: c.best,
        trace: c.trace,
        restarts,
    })
}

fn axis_directions(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect()
}

/// Randomly rotated and signed coordinate directions.
fn random_directions(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut dirs = axis_directions(n);
    for d in &mut dirs {
        for v in d.iter_mut() {
            *v += 0.5 * (rng.random::<f64>() - 0.5);
        }
        if rng.random::<bool>() {
            d.iter_mut().for_each(|v| *v = -*v);
        }
    }
    dirs
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    c: &mut Counter<F>,
    start: &[f64],
    start_loss: f64,
    step: f64,
    directions: &[Vec<f64>],
    config: &OptimizeConfig,
) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), start_loss)];
    for d in directions {
        if c.exhausted() {
            return;
        }
        let x: Vec<f64> = start.iter().zip(d).map(|(s, d)| s + step * d).collect();
        let fx = c.eval(&x);
        simplex.push((x, fx));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        let extent = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = if hi.is_finite() { hi - lo } else { f64::INFINITY };
        if c.exhausted() || (spread <= config.loss_tolerance && extent <= config.step_tolerance) {
            return;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(m, w)| m + t * (w - m)).collect()
        };
        let worst = simplex[n].0.clone();
        let xr = toward(-1.0, &worst);
        let fr = c.eval(&xr);
        if fr < lo {
            if c.exhausted() {
                simplex[n] = (xr, fr);
                return;
            }
            let xe = toward(-2.0, &worst);
            let fe = c.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if c.exhausted() {
            return;
        }
        let (xc, fc) = if fr < hi {
            let xc = toward(-0.5, &worst);
            let fc = c.eval(&xc);
            (xc, fc)
        } else {
            let xc = toward(0.5, &worst);
            let fc = c.eval(&xc);
            (xc, fc)
        };
        if fc < hi.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if c.exhausted() {
                return;
            }
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let fx = c.eval(&x);
            *vertex = (x, fx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2)
    }

    #[test]
    fn finds_quadratic_minimum() {
        let cfg = OptimizeConfig {
            budget: 200,
            ..OptimizeConfig::default()
        };
        let r = minimize(quadratic, &[0.0, 0.0], &cfg).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.evaluations() <= 200);
    }

    #[test]
    fn budget_one_returns_init() {
        let cfg = OptimizeConfig {
            budget: 1,
            ..OptimizeConfig::default()
        };
        let r = minimize(quadratic, &[0.5, 0.5], &cfg).unwrap();
        assert_eq!(r.x, vec![0.5, 0.5]);
        assert_eq!(r.trace, vec![quadratic(&[0.5, 0.5])]);
    }

    #[test]
    fn deterministic_and_monotone() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = OptimizeConfig {
            budget: 300,
            seed: 7,
            ..OptimizeConfig::default()
        };
        let a = minimize(rosen, &[-1.2, 1.0], &cfg).unwrap();
        let b = minimize(rosen, &[-1.2, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.loss, *a.trace.last().unwrap());
        assert!(a.loss <= a.trace[0]);
    }

    #[test]
    fn restarts_use_leftover_budget() {
        let cfg = OptimizeConfig {
            budget: 500,
            ..OptimizeConfig::default()
        };
        let r = minimize(|x| x[0] * x[0], &[3.0], &cfg).unwrap();
        assert_eq!(r.evaluations(), 500);
        assert!(r.restarts >= 1);
        assert!(r.loss < 1e-12);
    }

    #[test]
    fn non_finite_losses_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.1).powi(2) };
        let r = minimize(f, &[1.0], &OptimizeConfig::default()).unwrap();
        assert!(r.loss.is_finite());
        assert!((r.x[0] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = OptimizeConfig {
            budget: 0,
            ..OptimizeConfig::default()
        };
        assert!(minimize(quadratic, &[0.0, 0.0], &cfg).is_err());
        assert!(minimize(quadratic, &[f64::NAN, 0.0], &OptimizeConfig::default()).is_err());
        assert!(minimize(quadratic, &[], &OptimizeConfig::default()).is_err());
    }
}
