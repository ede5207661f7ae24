//! Inequality, mobility and income indicators of a class distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, IncomeLadder, Model, PaymentMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSample {
    pub t: f64,
    /// Gini index.
    pub g: f64,
    /// Mobility index.
    pub m: f64,
    /// Total (equivalently, average) income.
    pub mu: f64,
}

/// `mu = sum_i r_i x_i`.
pub fn total_income(x: &Distribution, r: &[f64]) -> f64 {
    x.as_slice().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Gini index as the normalized mean absolute income difference.
pub fn gini(x: &Distribution, r: &[f64]) -> Result<f64> {
    let xs = x.as_slice();
    let mu = total_income(x, r);
    if !(mu > 0.0) {
        return Err(Error::UndefinedIndex("Gini index"));
    }
    let mut acc = 0.0;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            acc += xs[i] * xs[j] * (r[i] - r[j]).abs();
        }
    }
    // the double sum counts each unordered pair twice
    Ok(acc / (mu * x.population()))
}

/// Lorenz polyline: cumulative population share against cumulative income
/// share, classes sorted by income. Has `n + 1` points from `(0, 0)` to `(1, 1)`.
pub fn lorenz_curve(x: &Distribution, r: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mu = total_income(x, r);
    if !(mu > 0.0) {
        return Err(Error::UndefinedIndex("Lorenz curve"));
    }
    let pop = x.population();
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
    let mut points = Vec::with_capacity(r.len() + 1);
    points.push((0.0, 0.0));
    let (mut cum_pop, mut cum_inc) = (0.0, 0.0);
    for i in order {
        cum_pop += x[i];
        cum_inc += x[i] * r[i];
        points.push((cum_pop / pop, cum_inc / mu));
    }
    Ok(points)
}

/// Gini index from the area between the Lorenz curve and the diagonal,
/// integrated exactly over the polyline.
pub fn lorenz_gini(x: &Distribution, r: &[f64]) -> Result<f64> {
    let pts = lorenz_curve(x, r)?;
    let under: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
        .sum();
    Ok((0.5 - under) / 0.5)
}

/// Mobility index: weighted probability of moving up one class, summed over
/// the interior classes and normalized by their population.
pub fn mobility(x: &Distribution, p: &PaymentMatrix, ladder: &IncomeLadder) -> Result<f64> {
    let n = ladder.n();
    let xs = x.as_slice();
    let interior = x.population() - xs[0] - xs[n - 1];
    if !(interior > 1e-15) {
        return Err(Error::DegeneratePopulation(xs[0] + xs[n - 1]));
    }
    let r = ladder.incomes();
    let s = ladder.s_unit();
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let weight = s / (r[i + 1] - r[i]);
        let received: f64 = (0..n).map(|k| p.get(k, i) * xs[k]).sum();
        acc += weight * received * xs[i];
    }
    Ok(acc / interior)
}

impl Model {
    pub fn indicators(&self, x: &Distribution, t: f64) -> Result<IndicatorSample> {
        let r = self.ladder.incomes();
        Ok(IndicatorSample {
            t,
            g: gini(x, r)?,
            m: mobility(x, &self.payments, &self.ladder)?,
            mu: total_income(x, r),
        })
    }
}
