//! Independent re-derivations checked against the library.

use incomedyn::model::{blended_initial_condition, integrate_deterministic};
use incomedyn::sde::{realization_rng, run_trajectory};
use incomedyn::*;

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Five-term payment formula, 1-based, with the index extension.
fn p_literal(n: usize, h: usize, k: usize) -> f64 {
    if h == 0 || h > n || k == 0 || k > n {
        return 0.0;
    }
    let nf = n as f64;
    let (hf, kf) = (h as f64, k as f64);
    hf.min(kf) / (4.0 * nf)
        * (1.0 - delta(h, k))
        * (1.0 - delta(1, k))
        * (1.0 - delta(1, h))
        * (1.0 - delta(n, h))
        * (1.0 - delta(n, k))
        + hf / (2.0 * nf) * delta(h, k) * (1.0 - delta(1, k)) * (1.0 - delta(n, k))
        + kf / (2.0 * nf) * delta(n, h) * (1.0 - delta(n, k)) * (1.0 - delta(1, k))
        + 1.0 / (2.0 * nf) * delta(1, k) * (1.0 - delta(1, h)) * (1.0 - delta(n, h))
        + 1.0 / (2.0 * nf) * delta(h, n) * delta(k, 1)
}

/// Transition coefficient written term by term, 1-based.
fn c_literal(n: usize, s: f64, dr: f64, i: usize, h: usize, k: usize) -> f64 {
    let bracket = dr / s
        - (1.0 - delta(i, n)) * (1.0 - delta(k, 1)) * p_literal(n, k, i)
        - (1.0 - delta(i, 1)) * (1.0 - delta(k, n)) * p_literal(n, i, k);
    let up = if i >= 1 { p_literal(n, k, i - 1) } else { 0.0 };
    s / dr * delta(h, i) * bracket
        + s / dr
            * (delta(h, i + 1) * (1.0 - delta(k, n)) * p_literal(n, i + 1, k)
                + if i >= 2 { delta(h, i - 1) } else { 0.0 } * (1.0 - delta(k, 1)) * up)
}

fn model() -> Model {
    Model::new(IncomeLadder::new(10, 10.0, 1.0).unwrap()).unwrap()
}

#[test]
fn payment_matrix_matches_literal_formula() {
    for n in [3, 4, 10, 17] {
        let p = PaymentMatrix::new(n).unwrap();
        for h in 1..=n {
            for k in 1..=n {
                assert_eq!(p.get(h - 1, k - 1), p_literal(n, h, k), "n={n} h={h} k={k}");
            }
        }
    }
}

#[test]
fn coefficients_match_literal_formula() {
    let m = model();
    for i in 1..=10 {
        for h in 1..=10 {
            for k in 1..=10 {
                let lit = c_literal(10, 1.0, 10.0, i, h, k);
                let got = m.coefficients.get(i - 1, h - 1, k - 1);
                assert!((lit - got).abs() < 1e-14, "C^{i}_{h}{k}: {got} vs {lit}");
            }
        }
    }
}

#[test]
fn coefficient_spot_values() {
    // hand-evaluated, 1-based (i, h, k)
    let m = model();
    let c = &m.coefficients;
    // h = i + 1 (payer drops into i): S/dr * p_{5,3} = 0.1 * 3/40
    assert!((c.get(3, 4, 2) - 0.0075).abs() < 1e-15);
    // h = i: 1 - S/dr (p_{6,4} + p_{4,6}) = 1 - 0.1 * (4/40 + 4/40)
    assert!((c.get(3, 3, 5) - 0.98).abs() < 1e-15);
    // h = i - 1 (receiver climbs into i): S/dr * p_{7,3} = 0.1 * 3/40
    assert!((c.get(3, 2, 6) - 0.0075).abs() < 1e-15);
    // richest class paying the poorest: C^9_{10,1} = 0.1 * p_{10,1} = 0.1 / 20
    assert!((c.get(8, 9, 0) - 0.005).abs() < 1e-15);
    // only neighbouring classes exchange, and two poorest agents never trade
    assert_eq!(c.get(1, 4, 0), 0.0);
    assert_eq!(c.get(0, 0, 0), 1.0);
}

fn drift_literal(c: &CoefficientTensor, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut gain = 0.0;
            let mut loss = 0.0;
            for h in 0..n {
                for k in 0..n {
                    gain += c.get(i, h, k) * x[h] * x[k];
                    loss += c.get(h, i, k) * x[i] * x[k];
                }
            }
            gain - loss
        })
        .collect()
}

#[test]
fn drift_matches_double_sum() {
    let m = model();
    let mut rng = realization_rng(77, 0);
    for _ in 0..200 {
        let raw: Vec<f64> = (0..10)
            .map(|_| rand::Rng::random::<f64>(&mut rng))
            .collect();
        let total: f64 = raw.iter().sum();
        let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let fast = m.coefficients.drift(&x);
        let slow = drift_literal(&m.coefficients, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn population_projection_matches_matrix_form() {
    let mut rng = realization_rng(5, 1);
    for _ in 0..100 {
        let raw: Vec<f64> = (0..10)
            .map(|_| rand::Rng::random::<f64>(&mut rng))
            .collect();
        let total: f64 = raw.iter().sum();
        let x = Distribution::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let xi = draw_noise(&mut rng, 10, NoiseSampling::Truncate);
        let got = project_population(&x, &xi);
        for i in 0..10 {
            let mut expect = 0.0;
            for j in 0..10 {
                let d = if i == j {
                    x[i] * (1.0 - x[i])
                } else {
                    -x[i] * x[j]
                };
                expect += d * xi.as_slice()[j];
            }
            assert!((got[i] - expect).abs() < 1e-15);
            assert!(got[i].abs() <= 2.0 * x[i]);
        }
        assert!(got.iter().sum::<f64>().abs() < 1e-14);
    }
}

#[test]
fn deterministic_run_conserves_over_many_steps() {
    let m = model();
    let x0 = blended_initial_condition(33.0, &m.ladder).unwrap();
    let mu0 = m.total_income(&x0);
    let r = integrate_deterministic(&x0, &m.coefficients, 0.1, 10_000, 1e-300).unwrap();
    assert_eq!(r.steps, 10_000);
    assert!(!r.converged);
    assert!((r.state.population() - 1.0).abs() < 1e-9);
    assert!((m.total_income(&r.state) - mu0).abs() < 1e-9);
}

#[test]
fn relaxation_agrees_with_small_step_reference() {
    let m = model();
    let x0 = blended_initial_condition(27.0, &m.ladder).unwrap();
    let coarse = integrate_deterministic(&x0, &m.coefficients, 0.1, 2_000, 1e-300).unwrap();
    let fine = integrate_deterministic(&x0, &m.coefficients, 0.01, 20_000, 1e-300).unwrap();
    for i in 0..10 {
        assert!((coarse.state[i] - fine.state[i]).abs() < 1e-9);
    }
    assert!((m.total_income(&coarse.state) - m.total_income(&fine.state)).abs() < 1e-9);
}

#[test]
fn equilibria_conserve_requested_income() {
    let m = model();
    for mu in [24.5, 29.5] {
        let x = m.equilibrium_for_income(mu).unwrap();
        assert!((m.total_income(&x) - mu).abs() < 1e-9);
        let d = m.drift(&x);
        assert!(d.iter().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn income_mode_trajectory_stays_close_to_equilibrium() {
    let m = model();
    let x0 = m.equilibrium_for_income(27.0).unwrap();
    let cfg = SimulationConfig::default();
    let traj = run_trajectory(&x0, &m, &cfg, 0).unwrap();
    assert_eq!(traj.len(), 5000);
    assert_eq!(traj.recovery_events, 0);
    let mu0 = m.total_income(&x0);
    for (_, x) in &traj.samples {
        assert!((x.population() - 1.0).abs() < 1e-10);
        assert!((m.total_income(x) - mu0).abs() < 1e-8 * 5000.0);
    }
    let last = traj.last().unwrap();
    for i in 0..10 {
        assert!((last[i] - x0[i]).abs() < 0.1 * x0[i]);
    }
}

#[test]
fn population_mode_lets_income_wander() {
    let m = model();
    let x0 = m.equilibrium_for_income(27.0).unwrap();
    let cfg = SimulationConfig {
        mode: ConservationMode::Population,
        ..Default::default()
    };
    let traj = run_trajectory(&x0, &m, &cfg, 0).unwrap();
    let incomes: Vec<f64> = traj
        .samples
        .iter()
        .map(|(_, x)| m.total_income(x))
        .collect();
    let spread = incomes.iter().cloned().fold(f64::MIN, f64::max)
        - incomes.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 1e-3, "income spread {spread}");
    for (_, x) in &traj.samples {
        assert!((x.population() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zero_noise_trajectory_is_stationary() {
    let m = model();
    let x0 = m.equilibrium_for_income(27.0).unwrap();
    let cfg = SimulationConfig {
        gamma: 0.0,
        steps: 500,
        ..Default::default()
    };
    let traj = run_trajectory(&x0, &m, &cfg, 0).unwrap();
    for (_, x) in &traj.samples {
        for i in 0..10 {
            // relaxation residual times elapsed time
            assert!((x[i] - x0[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn empty_class_triggers_recovery() {
    let m = model();
    let mut v = m.equilibrium_for_income(27.0).unwrap().into_inner();
    let moved = v[4];
    v[4] = 0.0;
    // keep population and income: split the mass between classes 4 and 6
    v[3] += moved / 2.0;
    v[5] += moved / 2.0;
    let x0 = Distribution::new(v).unwrap();
    let mu0 = m.total_income(&x0);
    let cfg = SimulationConfig {
        steps: 400,
        ..Default::default()
    };
    let traj = run_trajectory(&x0, &m, &cfg, 0).unwrap();
    assert!(traj.recovery_events >= 1);
    assert!(traj.recovery_steps >= 1);
    // the first step is deterministic: a pure Euler step from x0
    let d = m.drift(&x0);
    let first = &traj.samples[0].1;
    for i in 0..10 {
        assert_eq!(first[i], x0[i] + d[i] * cfg.dt);
    }
    let last = traj.last().unwrap();
    assert!(last.min_component() > 0.0);
    assert!((last.population() - 1.0).abs() < 1e-10);
    assert!((m.total_income(last) - mu0).abs() < 1e-9);
}

#[test]
fn correction_matrix_matches_raw_sum_formula() {
    let r = [3.0, 4.5, 7.0, 8.0, 12.5, 13.0, 20.0];
    let a = correction_matrix(&r).unwrap();
    let n = r.len();
    for i in 0..n {
        let span: Vec<f64> = (i.saturating_sub(1)..=(i + 1).min(n - 1))
            .map(|j| r[j])
            .collect();
        let cnt = span.len() as f64;
        let rs: f64 = span.iter().sum();
        let ts: f64 = span.iter().map(|v| v * v).sum();
        for j in 0..n {
            let expect = if j.abs_diff(i) <= 1 {
                (cnt * r[i] * r[j] + ts - rs * r[i] - rs * r[j]) / (rs * rs - cnt * ts)
            } else {
                0.0
            };
            assert!((a.get(j, i) - expect).abs() < 1e-12, "a[{j}][{i}]");
        }
    }
}
