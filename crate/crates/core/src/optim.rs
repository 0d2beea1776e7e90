//! Training-state bookkeeping: the λ ramp, the SGD update combining the
//! frame and adversarial gradients, and a finite-difference gradient
//! checking harness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GradMap, Parameters};

/// Adversarial-weight ramp: `2 / (1 + exp(-10 p)) - 1` for progress
/// `p` in [0, 1]. Strictly increasing, exactly 0 at p = 0.
pub fn lambda_schedule(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "progress {p} outside [0, 1]"
        )));
    }
    Ok(2.0 / (1.0 + (-10.0 * p).exp()) - 1.0)
}

/// Mutable state of one training run.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub params: Parameters,
    pub learning_rate: f64,
    pub progress: f64,
    pub lambda: f64,
    pub epoch: usize,
    pub rng_seed: u64,
}

impl TrainingState {
    pub fn new(params: Parameters, learning_rate: f64, rng_seed: u64) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(TrainingState {
            params,
            learning_rate,
            progress: 0.0,
            lambda: 0.0,
            epoch: 0,
            rng_seed,
        })
    }

    /// Move to epoch `epoch` of `total_epochs`: progress advances linearly
    /// from 0 at the first epoch to 1 at the last, and λ follows the ramp.
    pub fn advance_epoch(&mut self, epoch: usize, total_epochs: usize) -> Result<()> {
        self.epoch = epoch;
        self.progress = if total_epochs > 1 {
            epoch as f64 / (total_epochs - 1) as f64
        } else {
            0.0
        };
        self.lambda = lambda_schedule(self.progress)?;
        Ok(())
    }
}

/// Per-update gradients of both objectives, aligned with [`Parameters`].
///
/// `grad_adv` carries the reversal sign convention at the head boundary:
/// trunk entries hold the raw adversarial gradient, while entries for
/// parameters of the domain head itself hold its negation. A single
/// application of the update rule `θ ← θ − μ(g_frame − λ g_adv)` then
/// descends the frame loss on the trunk, ascends the adversarial loss on
/// the trunk (domain invariance) and descends it on the head (the domain
/// classifier keeps learning), with the head's step scaled by λ.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    pub grad_frame: GradMap,
    pub grad_adv: GradMap,
}

/// One SGD update: `θ ← θ − μ (g_frame − λ g_adv)` for every parameter.
/// Gradients absent from a map count as zero. NaN or infinite gradient
/// entries abort the update and leave `state` untouched.
pub fn sgd_step(state: &mut TrainingState, grads: &GradientSet) -> Result<()> {
    for (name, map) in [
        ("grad_frame", &grads.grad_frame),
        ("grad_adv", &grads.grad_adv),
    ] {
        for (pname, g) in map {
            let p = state.params.get(pname).ok_or_else(|| {
                Error::ShapeMismatch(format!("{name} names unknown parameter '{pname}'"))
            })?;
            if p.shape != g.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name}['{pname}']: shape {:?} vs parameter {:?}",
                    g.shape, p.shape
                )));
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {name}['{pname}']"
                )));
            }
        }
    }
    let mu = state.learning_rate;
    let lambda = state.lambda;
    for (name, tensor) in state.params.iter_mut() {
        let gf = grads.grad_frame.get(name.as_str());
        let ga = grads.grad_adv.get(name.as_str());
        if gf.is_none() && ga.is_none() {
            continue;
        }
        for i in 0..tensor.data.len() {
            let f = gf.map_or(0.0, |t| t.data[i]);
            let a = ga.map_or(0.0, |t| t.data[i]);
            tensor.data[i] -= mu * (f - lambda * a);
        }
    }
    Ok(())
}

/// Report from a successful gradient check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteDiffReport {
    pub n_checked: usize,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_rel_err: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare analytic gradients against central differences on a random
/// subsample of scalar parameters.
///
/// `loss_fn` must be deterministic. Relative error is measured as
/// `|analytic − numeric| / max(1, |analytic|)`; the first offender above
/// `tolerance` fails the check.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &Parameters,
    analytic: &GradMap,
    epsilon: f64,
    tolerance: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FiniteDiffReport>
where
    F: Fn(&Parameters) -> f64,
{
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, tensor) in params.iter() {
        for i in 0..tensor.len() {
            coords.push((name.clone(), i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    let picked: Vec<(String, usize)> = coords.into_iter().take(n_samples).collect();
    if picked.is_empty() {
        return Err(Error::InvalidConfig("no parameters to check".into()));
    }

    let mut scratch = params.clone();
    let mut report = FiniteDiffReport {
        n_checked: picked.len(),
        worst_param: String::new(),
        worst_index: 0,
        worst_rel_err: 0.0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (name, i) in picked {
        let orig = scratch.get(&name).unwrap().data[i];
        scratch.get_mut(&name).unwrap().data[i] = orig + epsilon;
        let lp = loss_fn(&scratch);
        scratch.get_mut(&name).unwrap().data[i] = orig - epsilon;
        let lm = loss_fn(&scratch);
        scratch.get_mut(&name).unwrap().data[i] = orig;
        let numeric = (lp - lm) / (2.0 * epsilon);
        let ana = analytic.get(&name).map_or(0.0, |t| t.data[i]);
        let rel = (ana - numeric).abs() / ana.abs().max(1.0);
        if rel > report.worst_rel_err {
            report.worst_rel_err = rel;
            report.worst_param = name.clone();
            report.worst_index = i;
            report.worst_analytic = ana;
            report.worst_numeric = numeric;
        }
        if rel > tolerance {
            return Err(Error::GradientCheck {
                param: format!("{name}[{i}]"),
                analytic: ana,
                numeric,
                rel_err: rel,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use crate::tensor::Tensor;

    #[test]
    fn lambda_endpoints() {
        assert_eq!(lambda_schedule(0.0).unwrap(), 0.0);
        let l1 = lambda_schedule(1.0).unwrap();
        assert!((l1 - 0.9999092).abs() < 1e-6, "{l1}");
        let l01 = lambda_schedule(0.1).unwrap();
        assert!((l01 - 0.4621172).abs() < 1e-6, "{l01}");
        assert!(lambda_schedule(-0.01).is_err());
        assert!(lambda_schedule(1.01).is_err());
    }

    #[test]
    fn lambda_strictly_monotone() {
        let mut prev = -1.0;
        for i in 0..=100 {
            let l = lambda_schedule(i as f64 / 100.0).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    fn one_param_state(theta: Vec<f64>, mu: f64) -> TrainingState {
        let mut params = Parameters::new();
        params.insert("theta", Tensor::vector(theta));
        TrainingState::new(params, mu.max(f64::MIN_POSITIVE), 0).unwrap()
    }

    fn grad(name: &str, v: Vec<f64>) -> GradMap {
        let mut m = GradMap::new();
        m.insert(name.into(), Tensor::vector(v));
        m
    }

    #[test]
    fn sgd_zero_learning_rate_leaves_theta() {
        let mut state = one_param_state(vec![1.0, -2.0], 0.0);
        state.learning_rate = 0.0; // explicit zero step
        let gs = GradientSet {
            grad_frame: grad("theta", vec![1.0, 1.0]),
            grad_adv: GradMap::new(),
        };
        sgd_step(&mut state, &gs).unwrap();
        assert_eq!(state.params.get("theta").unwrap().data, vec![1.0, -2.0]);
    }

    #[test]
    fn sgd_plain_when_lambda_zero() {
        let mut state = one_param_state(vec![0.0], 0.5);
        let gs = GradientSet {
            grad_frame: grad("theta", vec![1.0]),
            grad_adv: GradMap::new(),
        };
        sgd_step(&mut state, &gs).unwrap();
        assert_eq!(state.params.get("theta").unwrap().data, vec![-0.5]);
    }

    #[test]
    fn sgd_combines_both_gradients() {
        // mu=1, lambda=0.5, g_frame=1, g_adv=2 -> theta unchanged
        let mut state = one_param_state(vec![0.0], 1.0);
        state.lambda = 0.5;
        let gs = GradientSet {
            grad_frame: grad("theta", vec![1.0]),
            grad_adv: grad("theta", vec![2.0]),
        };
        sgd_step(&mut state, &gs).unwrap();
        assert_eq!(state.params.get("theta").unwrap().data, vec![0.0]);
    }

    #[test]
    fn sgd_rejects_nan_gradient() {
        let mut state = one_param_state(vec![1.0], 0.1);
        let gs = GradientSet {
            grad_frame: grad("theta", vec![f64::NAN]),
            grad_adv: GradMap::new(),
        };
        assert!(sgd_step(&mut state, &gs).is_err());
        // state preserved
        assert_eq!(state.params.get("theta").unwrap().data, vec![1.0]);
    }

    #[test]
    fn progress_is_linear_and_lambda_tracks_it() {
        let mut state = one_param_state(vec![0.0], 0.1);
        state.advance_epoch(0, 11).unwrap();
        assert_eq!(state.progress, 0.0);
        assert_eq!(state.lambda, 0.0);
        state.advance_epoch(10, 11).unwrap();
        assert_eq!(state.progress, 1.0);
        assert_eq!(state.lambda, lambda_schedule(1.0).unwrap());
        state.advance_epoch(5, 11).unwrap();
        assert_eq!(state.progress, 0.5);
    }

    #[test]
    fn finite_diff_accepts_quadratic() {
        let mut params = Parameters::new();
        params.insert("theta", Tensor::vector(vec![1.0, 2.0]));
        let loss_fn = |p: &Parameters| {
            let t = p.get("theta").unwrap();
            t.data.iter().map(|v| v * v).sum::<f64>()
        };
        let analytic = grad("theta", vec![2.0, 4.0]);
        let report =
            finite_diff_check(loss_fn, &params, &analytic, 1e-6, 1e-6, 50, 13).unwrap();
        assert_eq!(report.n_checked, 2);
        assert!(report.worst_rel_err < 1e-6);
    }

    #[test]
    fn finite_diff_constant_loss_has_zero_gradients() {
        let mut params = Parameters::new();
        params.insert("theta", Tensor::vector(vec![0.3, -0.7, 1.1]));
        let analytic = grad("theta", vec![0.0, 0.0, 0.0]);
        let report =
            finite_diff_check(|_| 42.0, &params, &analytic, 1e-5, 1e-8, 50, 7).unwrap();
        assert!(report.worst_rel_err < 1e-8);
    }

    #[test]
    fn finite_diff_flags_wrong_gradient() {
        let mut params = Parameters::new();
        params.insert("theta", Tensor::vector(vec![1.0]));
        let loss_fn = |p: &Parameters| p.get("theta").unwrap().data[0].powi(2);
        let analytic = grad("theta", vec![5.0]); // wrong on purpose
        let err = finite_diff_check(loss_fn, &params, &analytic, 1e-6, 1e-4, 10, 3).unwrap_err();
        assert!(matches!(err, Error::GradientCheck { .. }));
    }

    #[test]
    fn tape_loss_passes_finite_diff_harness() {
        let mut params = Parameters::new();
        params.insert(
            "w",
            Tensor::from_vec(&[2, 3], vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4]),
        );
        let loss_fn = |p: &Parameters| {
            let mut tape = Tape::new(p);
            let w = tape.param("w");
            let x = tape.leaf(Tensor::vector(vec![1.0, -1.0, 0.5]));
            let h = tape.matvec(w, x);
            let t = tape.tanh(h);
            let ce = tape.cross_entropy_logits(t, 1).unwrap();
            tape.scalar_value(ce)
        };
        let analytic = {
            let mut tape = Tape::new(&params);
            let w = tape.param("w");
            let x = tape.leaf(Tensor::vector(vec![1.0, -1.0, 0.5]));
            let h = tape.matvec(w, x);
            let t = tape.tanh(h);
            let ce = tape.cross_entropy_logits(t, 1).unwrap();
            tape.backward(ce)
        };
        finite_diff_check(loss_fn, &params, &analytic, 1e-5, 1e-6, 50, 11).unwrap();
    }
}
