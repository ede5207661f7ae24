//! Euler-Maruyama integration of the kinetic system with multiplicative
//! noise, including the control loop that suspends noise while some class
//! is empty.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, Model};
use crate::noise::{fill_noise, project_income_into, project_population_into, NoiseSampling};

/// Consecutive deterministic steps allowed before recovery is declared failed.
pub const MAX_RECOVERY_STEPS: usize = 100_000;
/// Times a rejected step is retried with a tenfold smaller deterministic step.
const MAX_STEP_REFINEMENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConservationMode {
    /// Noise keeps the population fixed; total income random-walks.
    Population,
    /// Noise keeps both population and total income fixed.
    PopulationAndIncome,
}

impl ConservationMode {
    pub fn conserves_income(self) -> bool {
        matches!(self, Self::PopulationAndIncome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Noise amplitude.
    pub gamma: f64,
    pub dt: f64,
    pub steps: usize,
    pub mode: ConservationMode,
    /// Components at or below this are treated as vanished.
    pub positivity_eps: f64,
    pub seed: u64,
    /// Record one sample every `stride` steps.
    pub stride: usize,
    pub sampling: NoiseSampling,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.001,
            dt: 0.1,
            steps: 5000,
            mode: ConservationMode::PopulationAndIncome,
            positivity_eps: 1e-12,
            seed: 0,
            stride: 1,
            sampling: NoiseSampling::Truncate,
        }
    }
}

impl SimulationConfig {
    /// Checks the numeric constraints for a model with `n` classes. A zero
    /// noise amplitude is accepted so deterministic limits can be checked.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must be non-negative, got {}", self.gamma),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if self.gamma * self.dt >= 1.0 {
            return Err(Error::invalid("gamma", "gamma * dt must be below 1"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "need at least one step"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        if !(self.positivity_eps >= 0.0 && self.positivity_eps < 1.0 / n as f64) {
            return Err(Error::invalid(
                "positivity_eps",
                format!("must lie in [0, 1/n), got {}", self.positivity_eps),
            ));
        }
        Ok(())
    }

    pub fn noise_scale(&self) -> f64 {
        (self.gamma * self.dt).sqrt()
    }
}

/// Independent random stream for one realization.
pub fn realization_rng(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(t, x)` at equally spaced instants, starting one stride after `t = 0`.
    pub samples: Vec<(f64, Distribution)>,
    /// Number of separate deterministic-only interludes.
    pub recovery_events: usize,
    /// Total steps taken without noise because some class was empty.
    pub recovery_steps: usize,
    /// Steps that left the simplex and were redone deterministically with a smaller dt.
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Distribution> {
        self.samples.last().map(|(_, x)| x)
    }
}

/// Reusable buffers for stepping one trajectory.
struct Stepper<'m> {
    model: &'m Model,
    cfg: &'m SimulationConfig,
    drift: Vec<f64>,
    raw: Vec<f64>,
    scaled: Vec<f64>,
    noise: Vec<f64>,
    next: Vec<f64>,
}

enum StepKind {
    Noisy,
    Refined,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m Model, cfg: &'m SimulationConfig) -> Self {
        let n = model.n();
        Self {
            model,
            cfg,
            drift: vec![0.0; n],
            raw: vec![0.0; n],
            scaled: vec![0.0; n],
            noise: vec![0.0; n],
            next: vec![0.0; n],
        }
    }

    fn noisy_step<R: rand::Rng + ?Sized>(
        &mut self,
        x: &mut [f64],
        rng: &mut R,
    ) -> Result<StepKind> {
        if self.cfg.mode.conserves_income() {
            if let Some((index, &value)) = x
                .iter()
                .enumerate()
                .find(|(_, v)| **v <= self.cfg.positivity_eps)
            {
                return Err(Error::PositivityViolation { index, value });
            }
        }
        self.model.coefficients.drift_into(x, &mut self.drift);
        fill_noise(rng, self.cfg.sampling, &mut self.raw);
        match self.cfg.mode {
            ConservationMode::Population => project_population_into(x, &self.raw, &mut self.noise),
            ConservationMode::PopulationAndIncome => project_income_into(
                x,
                &self.raw,
                &self.model.correction,
                &mut self.scaled,
                &mut self.noise,
            )?,
        }
        let (dt, amp) = (self.cfg.dt, self.cfg.noise_scale());
        for j in 0..x.len() {
            self.next[j] = x[j] + self.drift[j] * dt + self.noise[j] * amp;
        }
        if self.next.iter().all(|v| *v >= 0.0) {
            x.copy_from_slice(&self.next);
            return Ok(StepKind::Noisy);
        }
        log::debug!("noisy step left the simplex; retrying deterministically with dt/10");
        self.refined_step(x, dt)?;
        Ok(StepKind::Refined)
    }

    /// Explicit Euler step of the deterministic system. Falls back to a
    /// tenfold smaller step when the full one would leave the simplex.
    fn deterministic_step(&mut self, x: &mut [f64]) -> Result<bool> {
        let dt = self.cfg.dt;
        self.model.coefficients.drift_into(x, &mut self.drift);
        for j in 0..x.len() {
            self.next[j] = x[j] + self.drift[j] * dt;
        }
        if self.next.iter().all(|v| *v >= 0.0) {
            x.copy_from_slice(&self.next);
            return Ok(false);
        }
        self.refined_step(x, dt)?;
        Ok(true)
    }

    fn refined_step(&mut self, x: &mut [f64], dt: f64) -> Result<()> {
        self.model.coefficients.drift_into(x, &mut self.drift);
        let mut h = dt;
        for _ in 0..MAX_STEP_REFINEMENTS {
            h /= 10.0;
            for j in 0..x.len() {
                self.next[j] = x[j] + self.drift[j] * h;
            }
            if self.next.iter().all(|v| *v >= 0.0) {
                x.copy_from_slice(&self.next);
                return Ok(());
            }
        }
        Err(Error::StepRejected { dt: h })
    }
}

/// One Euler-Maruyama step `x + D(x) dt + eta_bar sqrt(gamma dt)`.
pub fn step_stochastic<R: rand::Rng + ?Sized>(
    x: &Distribution,
    model: &Model,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<Distribution> {
    if x.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x.len(),
        });
    }
    let mut stepper = Stepper::new(model, cfg);
    let mut state = x.as_slice().to_vec();
    stepper.noisy_step(&mut state, rng)?;
    Ok(Distribution::from_vec_unchecked(state))
}

/// Runs `cfg.steps` steps from `x0` with the stream derived from
/// `(cfg.seed, realization)`.
pub fn run_trajectory(
    x0: &Distribution,
    model: &Model,
    cfg: &SimulationConfig,
    realization: u64,
) -> Result<Trajectory> {
    let mut rng = realization_rng(cfg.seed, realization);
    run_trajectory_with_rng(x0, model, cfg, &mut rng)
}

pub fn run_trajectory_with_rng<R: rand::Rng + ?Sized>(
    x0: &Distribution,
    model: &Model,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    cfg.validate(model.n())?;
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if cfg.mode.conserves_income() {
        model.ladder.check_income(model.total_income(x0))?;
    }
    let mut stepper = Stepper::new(model, cfg);
    let mut x = x0.as_slice().to_vec();
    let mut traj = Trajectory {
        samples: Vec::with_capacity(cfg.steps / cfg.stride),
        recovery_events: 0,
        recovery_steps: 0,
        rejected_steps: 0,
    };
    let mut recovering_for = 0usize;
    for step in 1..=cfg.steps {
        let empty = x.iter().any(|v| *v <= cfg.positivity_eps);
        if empty {
            if recovering_for == 0 {
                traj.recovery_events += 1;
                log::debug!("class emptied at step {step}; evolving without noise");
            }
            recovering_for += 1;
            if recovering_for > MAX_RECOVERY_STEPS {
                return Err(Error::RecoveryFailed {
                    steps: MAX_RECOVERY_STEPS,
                });
            }
            traj.recovery_steps += 1;
            if stepper.deterministic_step(&mut x)? {
                traj.rejected_steps += 1;
            }
        } else {
            recovering_for = 0;
            if let StepKind::Refined = stepper.noisy_step(&mut x, rng)? {
                traj.rejected_steps += 1;
            }
        }
        if step % cfg.stride == 0 {
            traj.samples.push((
                step as f64 * cfg.dt,
                Distribution::from_vec_unchecked(x.clone()),
            ));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IncomeLadder;
    use approx::assert_abs_diff_eq;

    fn model() -> Model {
        Model::new(IncomeLadder::new(10, 10.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = SimulationConfig::default();
        assert!(ok.validate(10).is_ok());
        for bad in [
            SimulationConfig {
                dt: 0.0,
                ..ok.clone()
            },
            SimulationConfig {
                gamma: -1.0,
                ..ok.clone()
            },
            SimulationConfig {
                steps: 0,
                ..ok.clone()
            },
            SimulationConfig {
                stride: 0,
                ..ok.clone()
            },
            SimulationConfig {
                positivity_eps: 0.2,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate(10).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_noise_is_an_euler_step() {
        let m = model();
        let x = crate::model::blended_initial_condition(30.0, &m.ladder).unwrap();
        let cfg = SimulationConfig {
            gamma: 0.0,
            ..Default::default()
        };
        let next = step_stochastic(&x, &m, &cfg, &mut realization_rng(1, 0)).unwrap();
        let d = m.drift(&x);
        for j in 0..10 {
            assert_eq!(next[j], x[j] + d[j] * cfg.dt);
        }
    }

    #[test]
    fn income_step_needs_positive_state() {
        let m = model();
        let mut v = vec![0.1; 10];
        v[4] = 0.0;
        v[0] = 0.2;
        let x = Distribution::new(v).unwrap();
        let err = step_stochastic(
            &x,
            &m,
            &SimulationConfig::default(),
            &mut realization_rng(0, 0),
        );
        assert!(matches!(
            err,
            Err(Error::PositivityViolation { index: 4, .. })
        ));
    }

    #[test]
    fn single_income_step_conserves() {
        let m = model();
        let x = m.equilibrium_for_income(27.0).unwrap();
        let mut rng = realization_rng(5, 0);
        let cfg = SimulationConfig::default();
        for _ in 0..100 {
            let next = step_stochastic(&x, &m, &cfg, &mut rng).unwrap();
            assert_abs_diff_eq!(m.total_income(&next), m.total_income(&x), epsilon = 1e-12);
            assert_abs_diff_eq!(next.population(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn income_mode_rejects_out_of_range_start() {
        let m = model();
        let x = Distribution::point_mass(10, 0);
        assert!(matches!(
            run_trajectory(&x, &m, &SimulationConfig::default(), 0),
            Err(Error::IncomeOutOfRange { .. })
        ));
    }

    #[test]
    fn stride_controls_sampling() {
        let m = model();
        let x = m.equilibrium_for_income(27.0).unwrap();
        let cfg = SimulationConfig {
            steps: 100,
            stride: 7,
            ..Default::default()
        };
        let traj = run_trajectory(&x, &m, &cfg, 0).unwrap();
        assert_eq!(traj.len(), 14);
        assert_abs_diff_eq!(traj.samples[0].0, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let m = model();
        let x = m.equilibrium_for_income(24.5).unwrap();
        let cfg = SimulationConfig {
            steps: 300,
            mode: ConservationMode::Population,
            seed: 9,
            ..Default::default()
        };
        let a = run_trajectory(&x, &m, &cfg, 3).unwrap();
        let b = run_trajectory(&x, &m, &cfg, 3).unwrap();
        let c = run_trajectory(&x, &m, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
