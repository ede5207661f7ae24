//! Exchange model: income ladder, payment probabilities, transition
//! coefficients and the deterministic kinetic drift.
//!
//! Classes are indexed from 0 in code. Class 0 is the poorest and class
//! `n - 1` the richest. An individual of class `h` meeting one of class `k`
//! pays one money unit `S` with probability `p[h][k]`; since classes are
//! `delta_r` apart, the payer drops one class with probability
//! `S / delta_r` and the receiver climbs one class with the same
//! probability. This is the only choice of transition coefficients that
//! keeps the total income constant along the deterministic flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::CorrectionMatrix;

/// Ratio `s_unit / delta_r` above which a warning is logged.
pub const UNIT_RATIO_WARN: f64 = 0.2;

/// Default time step for deterministic relaxation.
pub const RELAX_DT: f64 = 0.1;
/// Default max-norm drift tolerance for a stationary state.
pub const RELAX_TOL: f64 = 1e-10;
/// Default step budget for deterministic relaxation.
pub const RELAX_MAX_STEPS: usize = 2_000_000;
/// Default blend weight of the two-class mix in the initial condition.
pub const BLEND_LAMBDA: f64 = 0.5;

/// Linear income ladder `r_j = j * delta_r`, `j = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeLadder {
    n: usize,
    delta_r: f64,
    s_unit: f64,
    r: Vec<f64>,
}

impl IncomeLadder {
    pub fn new(n: usize, delta_r: f64, s_unit: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(
                "n",
                format!("need at least 3 classes, got {n}"),
            ));
        }
        if !(delta_r.is_finite() && delta_r > 0.0) {
            return Err(Error::invalid(
                "delta_r",
                format!("must be positive, got {delta_r}"),
            ));
        }
        if !(s_unit.is_finite() && s_unit > 0.0) {
            return Err(Error::invalid(
                "s_unit",
                format!("must be positive, got {s_unit}"),
            ));
        }
        if s_unit >= delta_r {
            return Err(Error::invalid(
                "s_unit",
                format!("money unit {s_unit} must be smaller than class spacing {delta_r}"),
            ));
        }
        if s_unit / delta_r > UNIT_RATIO_WARN {
            log::warn!(
                "s_unit / delta_r = {} exceeds {UNIT_RATIO_WARN}; the model assumes S << delta_r",
                s_unit / delta_r
            );
        }
        let r = (1..=n).map(|j| j as f64 * delta_r).collect();
        Ok(Self {
            n,
            delta_r,
            s_unit,
            r,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    pub fn s_unit(&self) -> f64 {
        self.s_unit
    }

    /// Average incomes of the classes, poorest first.
    pub fn incomes(&self) -> &[f64] {
        &self.r
    }

    /// Probability that a single exchange moves the payer or receiver by one class.
    pub fn jump_probability(&self) -> f64 {
        self.s_unit / self.delta_r
    }

    pub fn poorest(&self) -> f64 {
        self.r[0]
    }

    pub fn richest(&self) -> f64 {
        self.r[self.n - 1]
    }

    /// Checks `r_1 < mu < r_n`.
    pub fn check_income(&self, mu: f64) -> Result<()> {
        let (lo, hi) = (self.poorest(), self.richest());
        if mu.is_finite() && lo < mu && mu < hi {
            Ok(())
        } else {
            Err(Error::IncomeOutOfRange { mu, lo, hi })
        }
    }
}

/// Payment probabilities `p[h][k]`: chance that in an `(h, k)` encounter the
/// `h`-class individual pays.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentMatrix {
    n: usize,
    p: Vec<f64>,
}

impl PaymentMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(
                "n",
                format!("need at least 3 classes, got {n}"),
            ));
        }
        let nf = n as f64;
        let last = n - 1;
        let mut p = vec![0.0; n * n];
        for h in 0..n {
            for k in 0..n {
                let (poor_h, poor_k) = (h == 0, k == 0);
                let (rich_h, rich_k) = (h == last, k == last);
                // 1-based class labels enter the formula.
                let (hl, kl) = ((h + 1) as f64, (k + 1) as f64);
                let value = if h != k && !poor_h && !poor_k && !rich_h && !rich_k {
                    hl.min(kl) / (4.0 * nf)
                } else if h == k && !poor_k && !rich_k {
                    hl / (2.0 * nf)
                } else if rich_h && !rich_k && !poor_k {
                    kl / (2.0 * nf)
                } else if poor_k && !poor_h {
                    // paid to the poorest class, by the middle classes or the richest
                    1.0 / (2.0 * nf)
                } else {
                    0.0
                };
                p[h * n + k] = value;
            }
        }
        Ok(Self { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry for classes `h`, `k` in `0..n`.
    #[inline]
    pub fn get(&self, h: usize, k: usize) -> f64 {
        self.p[h * self.n + k]
    }

    /// Entry with the index extension: anything outside `0..n` (the class
    /// above the richest, the class below the poorest) pays or receives
    /// nothing.
    #[inline]
    pub fn at(&self, h: isize, k: isize) -> f64 {
        let n = self.n as isize;
        if (0..n).contains(&h) && (0..n).contains(&k) {
            self.get(h as usize, k as usize)
        } else {
            0.0
        }
    }
}

/// Dense transition tensor; `get(i, h, k)` is the probability that an
/// `h`-class individual ends in class `i` after meeting a `k`-class one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    n: usize,
    c: Vec<f64>,
    // out_rate[i * n + k] = sum_h c[h][i][k]
    out_rate: Vec<f64>,
}

impl CoefficientTensor {
    pub fn new(ladder: &IncomeLadder, p: &PaymentMatrix) -> Result<Self> {
        let n = ladder.n();
        if p.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.n(),
            });
        }
        let sigma = ladder.jump_probability();
        let last = n - 1;
        let mut c = vec![0.0; n * n * n];
        for i in 0..n {
            let ii = i as isize;
            for h in 0..n {
                for k in 0..n {
                    let ki = k as isize;
                    let mut value = 0.0;
                    if h == i {
                        let mut leave = 0.0;
                        if i != last && k != 0 {
                            leave += p.get(k, i);
                        }
                        if i != 0 && k != last {
                            leave += p.get(i, k);
                        }
                        value += 1.0 - sigma * leave;
                    }
                    if h == i + 1 && k != last {
                        value += sigma * p.at(ii + 1, ki);
                    }
                    if i > 0 && h == i - 1 && k != 0 {
                        value += sigma * p.at(ki, ii - 1);
                    }
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::ModelParameter { i, h, k, value });
                    }
                    c[(i * n + h) * n + k] = value;
                }
            }
        }
        let mut out_rate = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                out_rate[i * n + k] = (0..n).map(|h| c[(h * n + i) * n + k]).sum();
            }
        }
        Ok(Self { n, c, out_rate })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, h: usize, k: usize) -> f64 {
        self.c[(i * self.n + h) * self.n + k]
    }

    /// Largest deviation of `sum_i C[i][h][k]` from one.
    pub fn stochasticity_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for h in 0..n {
            for k in 0..n {
                let s: f64 = (0..n).map(|i| self.get(i, h, k)).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    /// Kinetic drift `D_i = sum_{h,k} C^i_hk x_h x_k - x_i sum_{h,k} C^h_ik x_k`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.drift_into(x, &mut out);
        out
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for (i, d) in out.iter_mut().enumerate() {
            let block = &self.c[i * n * n..(i + 1) * n * n];
            let mut gain = 0.0;
            for (h, row) in block.chunks_exact(n).enumerate() {
                if x[h] == 0.0 {
                    continue;
                }
                let inner: f64 = row.iter().zip(x).map(|(c, xk)| c * xk).sum();
                gain += x[h] * inner;
            }
            let out_row = &self.out_rate[i * n..(i + 1) * n];
            let loss: f64 = out_row.iter().zip(x).map(|(c, xk)| c * xk).sum::<f64>() * x[i];
            *d = gain - loss;
        }
    }
}

/// Population fractions over the income classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

/// Tolerance on `sum x = 1` accepted by [`Distribution::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

impl Distribution {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(
                "x",
                format!("component {index} = {value} is not a non-negative number"),
            ));
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(
                "x",
                format!("fractions sum to {total}, not 1"),
            ));
        }
        Ok(Self(x))
    }

    /// Wraps a vector produced by a conserving update.
    pub(crate) fn from_vec_unchecked(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// All mass in class `index`.
    pub fn point_mass(n: usize, index: usize) -> Self {
        let mut x = vec![0.0; n];
        x[index] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn population(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Everything the dynamics need, built once and shared read-only.
#[derive(Debug, Clone)]
pub struct Model {
    pub ladder: IncomeLadder,
    pub payments: PaymentMatrix,
    pub coefficients: CoefficientTensor,
    pub correction: CorrectionMatrix,
}

impl Model {
    pub fn new(ladder: IncomeLadder) -> Result<Self> {
        let payments = PaymentMatrix::new(ladder.n())?;
        let coefficients = CoefficientTensor::new(&ladder, &payments)?;
        let correction = CorrectionMatrix::new(ladder.incomes())?;
        Ok(Self {
            ladder,
            payments,
            coefficients,
            correction,
        })
    }

    pub fn n(&self) -> usize {
        self.ladder.n()
    }

    pub fn drift(&self, x: &Distribution) -> Vec<f64> {
        self.coefficients.drift(x.as_slice())
    }

    pub fn total_income(&self, x: &Distribution) -> f64 {
        crate::indicators::total_income(x, self.ladder.incomes())
    }

    pub fn equilibrium_for_income(&self, mu: f64) -> Result<Distribution> {
        equilibrium_for_income(mu, &self.ladder, &self.coefficients)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, d| m.max(d.abs()))
}

/// Scratch space for classical fourth-order Runge-Kutta steps.
#[derive(Debug, Clone)]
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` in place by one step; returns the drift evaluated at the
    /// starting point (the first stage).
    pub(crate) fn step<'a>(
        &'a mut self,
        c: &CoefficientTensor,
        x: &mut [f64],
        dt: f64,
    ) -> &'a [f64] {
        let n = x.len();
        c.drift_into(x, &mut self.k1);
        for j in 0..n {
            self.tmp[j] = x[j] + 0.5 * dt * self.k1[j];
        }
        c.drift_into(&self.tmp, &mut self.k2);
        for j in 0..n {
            self.tmp[j] = x[j] + 0.5 * dt * self.k2[j];
        }
        c.drift_into(&self.tmp, &mut self.k3);
        for j in 0..n {
            self.tmp[j] = x[j] + dt * self.k3[j];
        }
        c.drift_into(&self.tmp, &mut self.k4);
        for j in 0..n {
            x[j] += dt / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
        &self.k1
    }
}

/// Outcome of a deterministic relaxation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub state: Distribution,
    pub converged: bool,
    pub steps: usize,
    /// Max-norm of the drift at `state`.
    pub residual: f64,
}

/// Integrates the deterministic kinetic system with fixed-step RK4 until
/// the max-norm of the drift drops below `tol` or `max_steps` is reached.
pub fn integrate_deterministic(
    x0: &Distribution,
    c: &CoefficientTensor,
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Relaxation> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(
            "tol",
            format!("must be positive, got {tol}"),
        ));
    }
    if x0.len() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: c.n(),
            got: x0.len(),
        });
    }
    let mut x = x0.as_slice().to_vec();
    let mut rk = Rk4::new(x.len());
    let mut drift = c.drift(&x);
    let mut steps = 0;
    while max_abs(&drift) >= tol && steps < max_steps {
        rk.step(c, &mut x, dt);
        steps += 1;
        c.drift_into(&x, &mut drift);
    }
    let residual = max_abs(&drift);
    Ok(Relaxation {
        state: Distribution::from_vec_unchecked(x),
        converged: residual < tol,
        steps,
        residual,
    })
}

/// Strictly positive starting point with total income `mu`: a blend of the
/// uniform distribution and a mix of the poorest and richest classes.
pub fn blended_initial_condition(mu: f64, ladder: &IncomeLadder) -> Result<Distribution> {
    ladder.check_income(mu)?;
    let n = ladder.n();
    let r = ladder.incomes();
    let (lo, hi) = (ladder.poorest(), ladder.richest());
    let uniform_income = r.iter().sum::<f64>() / n as f64;
    // The two-class mix can only reach incomes in [lo, hi], so the blend weight
    // must be at least lambda_min for the mix weights to stay in [0, 1].
    let lambda_min = if mu < uniform_income {
        (uniform_income - mu) / (uniform_income - lo)
    } else {
        (mu - uniform_income) / (hi - uniform_income)
    };
    let lambda = BLEND_LAMBDA.max(0.5 * (lambda_min + 1.0));
    let mix_income = (mu - (1.0 - lambda) * uniform_income) / lambda;
    let w_poor = ((hi - mix_income) / (hi - lo)).clamp(0.0, 1.0);
    let base = (1.0 - lambda) / n as f64;
    let mut x = vec![base; n];
    x[0] += lambda * w_poor;
    x[n - 1] += lambda * (1.0 - w_poor);
    Ok(Distribution::from_vec_unchecked(x))
}

/// Deterministic stationary state with total income `mu`.
pub fn equilibrium_for_income(
    mu: f64,
    ladder: &IncomeLadder,
    c: &CoefficientTensor,
) -> Result<Distribution> {
    let x0 = blended_initial_condition(mu, ladder)?;
    let relax = integrate_deterministic(&x0, c, RELAX_DT, RELAX_MAX_STEPS, RELAX_TOL)?;
    if !relax.converged {
        return Err(Error::NotConverged {
            steps: relax.steps,
            residual: relax.residual,
        });
    }
    Ok(relax.state)
}
