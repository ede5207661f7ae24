//! Realization ensembles, per-realization correlations among the Gini
//! index, mobility and total income, and sweeps over the initial income.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, Model};
use crate::par::{map_indexed, Execution};
use crate::sde::{run_trajectory, ConservationMode, SimulationConfig, Trajectory};
use crate::stats::{mean, pearson, population_std_dev, Spread, Summary};

/// Fraction of realizations that must complete for an ensemble to count.
pub const MIN_COMPLETION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub realizations: usize,
    /// Leading samples of each trajectory left out of the correlations.
    pub burn_in: usize,
    pub spread: Spread,
    pub execution: Execution,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            realizations: 50,
            burn_in: 0,
            spread: Spread::StandardError,
            execution: Execution::Parallel,
        }
    }
}

/// Per-component closeness of a trajectory to its starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Closeness {
    /// `x_hat_i - x_i(0)` with `x_hat` the time average.
    pub mean_offset: Vec<f64>,
    /// Standard deviation of each component over the samples.
    pub std_dev: Vec<f64>,
    /// `std_dev_i / x_hat_i`.
    pub relative_std_dev: Vec<f64>,
}

pub fn closeness_diagnostics(traj: &Trajectory, x0: &Distribution) -> Result<Closeness> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "no samples"));
    }
    let n = x0.len();
    let mut mean_offset = Vec::with_capacity(n);
    let mut std_dev = Vec::with_capacity(n);
    let mut relative_std_dev = Vec::with_capacity(n);
    let mut column = Vec::with_capacity(traj.len());
    for i in 0..n {
        column.clear();
        column.extend(traj.samples.iter().map(|(_, x)| x[i]));
        let avg = mean(&column);
        let sd = population_std_dev(&column);
        mean_offset.push(avg - x0[i]);
        std_dev.push(sd);
        relative_std_dev.push(sd / avg);
    }
    Ok(Closeness {
        mean_offset,
        std_dev,
        relative_std_dev,
    })
}

/// Time series of the three indicators along one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorSeries {
    pub t: Vec<f64>,
    pub g: Vec<f64>,
    pub m: Vec<f64>,
    pub mu: Vec<f64>,
}

impl IndicatorSeries {
    pub fn from_trajectory(model: &Model, traj: &Trajectory, skip: usize) -> Result<Self> {
        let mut out = Self::default();
        for (t, x) in traj.samples.iter().skip(skip) {
            let s = model.indicators(x, *t)?;
            out.t.push(s.t);
            out.g.push(s.g);
            out.m.push(s.m);
            out.mu.push(s.mu);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub realization: usize,
    pub r_gm: f64,
    /// Absent when total income is conserved.
    pub r_gmu: Option<f64>,
    /// Absent when total income is conserved.
    pub r_mmu: Option<f64>,
    pub closeness: Closeness,
    pub recovery_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub realization: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub mu0: f64,
    pub initial: Distribution,
    pub config: SimulationConfig,
    pub options: EnsembleOptions,
    pub per_realization: Vec<RealizationStats>,
    pub failures: Vec<RealizationFailure>,
    pub r_gm: Summary,
    pub r_gmu: Option<Summary>,
    pub r_mmu: Option<Summary>,
}

impl EnsembleReport {
    /// Mean over realizations of the per-component closeness magnitudes.
    pub fn mean_closeness(&self) -> Closeness {
        let n = self.initial.len();
        let count = self.per_realization.len() as f64;
        let mut avg = Closeness {
            mean_offset: vec![0.0; n],
            std_dev: vec![0.0; n],
            relative_std_dev: vec![0.0; n],
        };
        for r in &self.per_realization {
            for i in 0..n {
                avg.mean_offset[i] += r.closeness.mean_offset[i].abs() / count;
                avg.std_dev[i] += r.closeness.std_dev[i] / count;
                avg.relative_std_dev[i] += r.closeness.relative_std_dev[i] / count;
            }
        }
        avg
    }
}

fn realization_stats(
    model: &Model,
    x0: &Distribution,
    cfg: &SimulationConfig,
    burn_in: usize,
    realization: usize,
) -> Result<RealizationStats> {
    let traj = run_trajectory(x0, model, cfg, realization as u64)?;
    let series = IndicatorSeries::from_trajectory(model, &traj, burn_in)?;
    let r_gm = pearson(&series.g, &series.m)?;
    let (r_gmu, r_mmu) = if cfg.mode.conserves_income() {
        (None, None)
    } else {
        (
            Some(pearson(&series.g, &series.mu)?),
            Some(pearson(&series.m, &series.mu)?),
        )
    };
    Ok(RealizationStats {
        realization,
        r_gm,
        r_gmu,
        r_mmu,
        closeness: closeness_diagnostics(&traj, x0)?,
        recovery_events: traj.recovery_events,
    })
}

/// Runs `opts.realizations` independent trajectories from `x0` and
/// aggregates their correlations.
pub fn run_ensemble(
    model: &Model,
    x0: &Distribution,
    cfg: &SimulationConfig,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport> {
    if opts.realizations < 2 {
        return Err(Error::invalid("realizations", "need at least two"));
    }
    cfg.validate(model.n())?;
    let mu0 = model.total_income(x0);
    let outcomes = map_indexed(opts.realizations, opts.execution, |r| {
        realization_stats(model, x0, cfg, opts.burn_in, r)
    });

    let mut per_realization = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    let mut first_error = None;
    for (realization, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(stats) => per_realization.push(stats),
            Err(e) => {
                log::warn!("realization {realization} failed: {e}");
                failures.push(RealizationFailure {
                    realization,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let completed = per_realization.len();
    if completed < 2 || (completed as f64) < MIN_COMPLETION * opts.realizations as f64 {
        return Err(Error::EnsembleFailed {
            completed,
            requested: opts.realizations,
            first: Box::new(first_error.unwrap_or(Error::invalid("realizations", "none ran"))),
        });
    }

    let collect = |f: fn(&RealizationStats) -> Option<f64>| -> Option<Summary> {
        let v: Option<Vec<f64>> = per_realization.iter().map(f).collect();
        v.map(|v| Summary::of(&v, opts.spread))
    };
    let r_gm = collect(|s| Some(s.r_gm)).expect("always present");
    let r_gmu = collect(|s| s.r_gmu);
    let r_mmu = collect(|s| s.r_mmu);
    Ok(EnsembleReport {
        mu0,
        initial: x0.clone(),
        config: cfg.clone(),
        options: *opts,
        per_realization,
        failures,
        r_gm,
        r_gmu,
        r_mmu,
    })
}

/// Equilibrates at `mu0` and runs an ensemble from there.
pub fn run_ensemble_at_income(
    model: &Model,
    mu0: f64,
    cfg: &SimulationConfig,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport> {
    let x0 = model.equilibrium_for_income(mu0)?;
    run_ensemble(model, &x0, cfg, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu0: f64,
    /// Gini index of the deterministic equilibrium at `mu0`.
    pub g_eq: f64,
    pub r_mg: Summary,
    pub r_mug: Summary,
    pub r_mmu: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub config: SimulationConfig,
    pub options: EnsembleOptions,
}

impl SweepResult {
    /// Equilibrium Gini values where `value(row)` changes sign between
    /// consecutive rows, located by linear interpolation.
    pub fn sign_changes(&self, value: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows
            .windows(2)
            .filter_map(|w| {
                let (a, b) = (value(&w[0]), value(&w[1]));
                if (a > 0.0) != (b > 0.0) {
                    let frac = a / (a - b);
                    Some(w[0].g_eq + frac * (w[1].g_eq - w[0].g_eq))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Uniform grid of `count` incomes from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// For each initial income: equilibrate, then run an ensemble without
/// income conservation. Every cell uses the same seed, so neighbouring
/// cells see common random numbers.
pub fn sweep_mu(
    model: &Model,
    cfg: &SimulationConfig,
    mu_grid: &[f64],
    opts: &EnsembleOptions,
) -> Result<SweepResult> {
    for &mu in mu_grid {
        model.ladder.check_income(mu)?;
    }
    let mut grid = mu_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let cfg = SimulationConfig {
        mode: ConservationMode::Population,
        ..cfg.clone()
    };
    let rows = map_indexed(grid.len(), opts.execution, |cell| -> Result<SweepRow> {
        let mu0 = grid[cell];
        let x0 = model.equilibrium_for_income(mu0)?;
        let g_eq = crate::indicators::gini(&x0, model.ladder.incomes())?;
        let report = run_ensemble(model, &x0, &cfg, opts)?;
        Ok(SweepRow {
            mu0,
            g_eq,
            r_mg: report.r_gm,
            r_mug: report.r_gmu.expect("population mode reports R_Gmu"),
            r_mmu: report.r_mmu.expect("population mode reports R_Mmu"),
        })
    });
    Ok(SweepResult {
        rows: rows.into_iter().collect::<Result<_>>()?,
        config: cfg,
        options: *opts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IncomeLadder;

    fn model() -> Model {
        Model::new(IncomeLadder::new(10, 10.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_noise_closeness_vanishes() {
        let m = model();
        let x0 = m.equilibrium_for_income(27.0).unwrap();
        let cfg = SimulationConfig {
            gamma: 0.0,
            dt: 0.01,
            steps: 200,
            ..Default::default()
        };
        let traj = run_trajectory(&x0, &m, &cfg, 0).unwrap();
        let c = closeness_diagnostics(&traj, &x0).unwrap();
        for i in 0..10 {
            assert!(c.mean_offset[i].abs() < 1e-9, "{:?}", c.mean_offset);
            assert!(c.std_dev[i] < 1e-9);
            assert!(c.relative_std_dev[i] < 1e-8);
        }
    }

    #[test]
    fn zero_noise_ensemble_fails_cleanly() {
        // G and M are (nearly) constant, so correlations are undefined or meaningless;
        // the degenerate series must surface as an ensemble error, not a NaN.
        let m = model();
        let x0 = Distribution::uniform(10);
        let cfg = SimulationConfig {
            gamma: 0.0,
            steps: 5,
            ..Default::default()
        };
        let opts = EnsembleOptions {
            realizations: 4,
            ..Default::default()
        };
        match run_ensemble(&m, &x0, &cfg, &opts) {
            Ok(r) => assert!(r.r_gm.mean.abs() <= 1.0),
            Err(e) => assert!(matches!(e, Error::EnsembleFailed { .. })),
        }
    }

    #[test]
    fn income_mode_omits_income_correlations() {
        let m = model();
        let cfg = SimulationConfig {
            steps: 200,
            ..Default::default()
        };
        let opts = EnsembleOptions {
            realizations: 3,
            ..Default::default()
        };
        let r = run_ensemble_at_income(&m, 27.0, &cfg, &opts).unwrap();
        assert_eq!(r.per_realization.len(), 3);
        assert!(r.r_gmu.is_none() && r.r_mmu.is_none());
        assert!(r.per_realization.iter().all(|s| s.r_gmu.is_none()));
        assert!(r.r_gm.mean.abs() <= 1.0 && r.r_gm.spread >= 0.0);
    }

    #[test]
    fn too_few_realizations() {
        let m = model();
        let x0 = m.equilibrium_for_income(27.0).unwrap();
        let opts = EnsembleOptions {
            realizations: 1,
            ..Default::default()
        };
        assert!(run_ensemble(&m, &x0, &SimulationConfig::default(), &opts).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = uniform_grid(21.0, 28.0, 100);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 21.0);
        assert_eq!(g[99], 28.0);
    }

    #[test]
    fn sign_change_interpolation() {
        let row = |mu0: f64, g_eq: f64, v: f64| SweepRow {
            mu0,
            g_eq,
            r_mg: Summary {
                mean: v,
                spread: 0.0,
                count: 2,
            },
            r_mug: Summary {
                mean: v,
                spread: 0.0,
                count: 2,
            },
            r_mmu: Summary {
                mean: 0.9,
                spread: 0.0,
                count: 2,
            },
        };
        let sweep = SweepResult {
            rows: vec![
                row(21.0, 0.36, 0.2),
                row(22.0, 0.37, 0.1),
                row(23.0, 0.38, -0.1),
            ],
            config: SimulationConfig::default(),
            options: EnsembleOptions::default(),
        };
        let changes = sweep.sign_changes(|r| r.r_mg.mean);
        assert_eq!(changes.len(), 1);
        assert!((changes[0] - 0.375).abs() < 1e-12);
        assert!(sweep.sign_changes(|r| r.r_mmu.mean).is_empty());
    }
}
