//! Central finite-difference check of analytic gradients.
//!
//! The relative error of one element is
//! `|analytic − numeric| / (|analytic| + 1e-8)`, and a check reports the
//! maximum over every element examined.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::{Graph, Tensor, Var};

/// Denominator floor of the relative error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input, flat element)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub elements_checked: usize,
    /// Elements left out because their analytic gradient is below the
    /// relative resolution floor.
    pub below_floor: usize,
    /// Elements left out because the function is not smooth within one step
    /// of them.
    pub nonsmooth: usize,
}

/// Configuration of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    step: f64,
    training: bool,
    per_input_limit: Option<usize>,
    seed: u64,
    floor: f64,
    smoothness: Option<f64>,
}

impl GradCheck {
    pub fn new(step: f64) -> Self {
        GradCheck {
            step,
            training: true,
            per_input_limit: None,
            seed: 0,
            floor: 0.0,
            smoothness: None,
        }
    }

    /// Builds the graphs in evaluation mode.
    pub fn eval_mode(mut self) -> Self {
        self.training = false;
        self
    }

    /// Checks at most `limit` elements of each input, chosen uniformly with
    /// the given seed. Large inputs (whole networks) are checked this way.
    pub fn sampled(mut self, limit: usize, seed: u64) -> Self {
        self.per_input_limit = Some(limit);
        self.seed = seed;
        self
    }

    /// Leaves out elements whose analytic gradient magnitude is below
    /// `floor` times the largest magnitude over all inputs. Central
    /// differences cannot resolve gradients that small relative to the
    /// scale of the function.
    pub fn resolution_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Also differences each element with half the step; when the two
    /// estimates differ by more than `tol` relative, a kink lies within the
    /// step and the element is left out. A wrong analytic gradient still
    /// shows, since both estimates then agree with each other but not with it.
    pub fn smoothness_check(mut self, tol: f64) -> Self {
        self.smoothness = Some(tol);
        self
    }

    fn graph(&self) -> Graph<f64> {
        if self.training {
            Graph::new()
        } else {
            Graph::eval()
        }
    }

    fn evaluate<F>(&self, f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let mut g = self.graph();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_of(&g, out)
    }

    /// Compares the analytic gradient of `f` at `inputs` with central
    /// differences of step `step`.
    pub fn run<F>(&self, f: F, inputs: &[Tensor<f64>]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        if !(self.step > 0.0) {
            return Err(Error::invalid("grad_check", "step must be positive"));
        }
        let mut g = self.graph();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_of(&g, out)?;
        g.backward(out)?;
        let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
        drop(g);

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            elements_checked: 0,
            below_floor: 0,
            nonsmooth: 0,
        };
        let largest = analytic
            .iter()
            .flat_map(|t| t.data())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = self.floor * largest;
        let mut probe = inputs.to_vec();
        for k in 0..inputs.len() {
            let eligible: Vec<usize> = (0..inputs[k].numel())
                .filter(|&e| !(analytic[k].data()[e].abs() < floor))
                .collect();
            report.below_floor += inputs[k].numel() - eligible.len();
            let n = eligible.len();
            let elements: Vec<usize> = match self.per_input_limit {
                Some(limit) if limit < n => {
                    let mut e: Vec<usize> = sample(&mut rng, n, limit)
                        .into_iter()
                        .map(|i| eligible[i])
                        .collect();
                    e.sort_unstable();
                    e
                }
                _ => eligible,
            };
            for e in elements {
                let x0 = inputs[k].data()[e];
                probe[k].data_mut()[e] = x0 + self.step;
                let plus = self.evaluate(&f, &probe)?;
                probe[k].data_mut()[e] = x0 - self.step;
                let minus = self.evaluate(&f, &probe)?;
                let numeric = (plus - minus) / (2.0 * self.step);
                if let Some(tol) = self.smoothness {
                    let half = 0.5 * self.step;
                    probe[k].data_mut()[e] = x0 + half;
                    let plus = self.evaluate(&f, &probe)?;
                    probe[k].data_mut()[e] = x0 - half;
                    let minus = self.evaluate(&f, &probe)?;
                    let fine = (plus - minus) / (2.0 * half);
                    if (numeric - fine).abs() > tol * (fine.abs() + REL_ERR_FLOOR) {
                        probe[k].data_mut()[e] = x0;
                        report.nonsmooth += 1;
                        continue;
                    }
                }
                probe[k].data_mut()[e] = x0;
                let a = analytic[k].data()[e];
                let rel = (a - numeric).abs() / (a.abs() + REL_ERR_FLOOR);
                report.elements_checked += 1;
                if rel > report.max_rel_err || report.worst.is_none() || rel.is_nan() {
                    report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                    report.worst = Some((k, e));
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
        Ok(report)
    }
}

/// Maximum relative error of the analytic gradient of `f` against central
/// differences, over every element of every input, in training mode.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    GradCheck::new(step).run(f, inputs).map(|r| r.max_rel_err)
}

fn scalar_of(g: &Graph<f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.numel() != 1 {
        return Err(Error::invalid(
            "grad_check",
            alloc::format!(
                "closure must return a scalar, returned {} elements",
                t.numel()
            ),
        ));
    }
    Ok(t.data()[0])
}
