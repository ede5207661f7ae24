//! Conservation-constrained multiplicative noise.
//!
//! Two constructions turn a raw draw `xi` (components in `[-1, 1]`) into a
//! perturbation proportional to the class populations:
//!
//! * [`project_population`] keeps `sum x` fixed.
//! * [`project_income`] keeps both `sum x` and `sum r x` fixed, using a
//!   tridiagonal [`CorrectionMatrix`] and the `Omega` rescaling so that
//!   `|eta_bar_i| <= x_i`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Distribution;

/// How a standard normal sample is confined to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSampling {
    /// Redraw until the sample falls inside `[-1, 1]`.
    #[default]
    Truncate,
    /// Clamp the sample to `[-1, 1]`.
    Clip,
}

impl std::str::FromStr for NoiseSampling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "truncate" => Ok(Self::Truncate),
            "clip" => Ok(Self::Clip),
            other => Err(format!("unknown noise sampling `{other}` (truncate|clip)")),
        }
    }
}

/// One raw noise vector with every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw(Vec<f64>);

impl NoiseDraw {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if let Some(v) = xi.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::invalid(
                "xi",
                format!("component {v} outside [-1, 1]"),
            ));
        }
        Ok(Self(xi))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn sample_unit<R: Rng + ?Sized>(rng: &mut R, sampling: NoiseSampling) -> f64 {
    match sampling {
        NoiseSampling::Truncate => loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 1.0 {
                break z;
            }
        },
        NoiseSampling::Clip => {
            let z: f64 = rng.sample(StandardNormal);
            z.clamp(-1.0, 1.0)
        }
    }
}

/// Fills `out` with independent normal samples confined to `[-1, 1]`.
pub fn fill_noise<R: Rng + ?Sized>(rng: &mut R, sampling: NoiseSampling, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = sample_unit(rng, sampling);
    }
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, sampling: NoiseSampling) -> NoiseDraw {
    let mut xi = vec![0.0; n];
    fill_noise(rng, sampling, &mut xi);
    NoiseDraw(xi)
}

/// Population-conserving projection `xi'_i = x_i xi_i - x_i sum_k x_k xi_k`.
pub fn project_population(x: &Distribution, xi: &NoiseDraw) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    project_population_into(x.as_slice(), xi.as_slice(), &mut out);
    out
}

pub(crate) fn project_population_into(x: &[f64], xi: &[f64], out: &mut [f64]) {
    let mean: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
    for ((o, &xv), &z) in out.iter_mut().zip(x).zip(xi) {
        *o = xv * z - xv * mean;
    }
}

/// Tridiagonal correction `A` with `1 + sum_j a[j][i] = 0` and
/// `r_i + sum_j a[j][i] r_j = 0` for every column `i`, of minimal
/// Frobenius norm among such matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionMatrix {
    n: usize,
    // bands[i] = (a[i-1][i], a[i][i], a[i+1][i]); entries outside the matrix are 0
    bands: Vec<[f64; 3]>,
    windows: Vec<Window>,
}

/// Window sums over classes `i-1..=i+1` that exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl CorrectionMatrix {
    pub fn new(r: &[f64]) -> Result<Self> {
        let n = r.len();
        if n < 3 {
            return Err(Error::invalid(
                "r",
                format!("need at least 3 classes, got {n}"),
            ));
        }
        if let Some(v) = r.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "r",
                format!("incomes must be positive, got {v}"),
            ));
        }
        let mut bands = Vec::with_capacity(n);
        let mut windows = Vec::with_capacity(n);
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let span = &r[lo..=hi];
            let w = Window {
                count: span.len() as f64,
                sum: span.iter().sum(),
                sum_sq: span.iter().map(|v| v * v).sum(),
            };
            // The entries are invariant under a common income shift; measuring
            // from r_i avoids cancelling terms of order r^2.
            let ri = r[i];
            let (mut rs, mut ts) = (0.0, 0.0);
            for &v in span {
                rs += v - ri;
                ts += (v - ri) * (v - ri);
            }
            let denom = rs * rs - w.count * ts;
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::SingularLadder { column: i });
            }
            let entry = |rj: f64| (ts - rs * (rj - ri)) / denom;
            let mut band = [0.0; 3];
            if i > 0 {
                band[0] = entry(r[i - 1]);
            }
            band[1] = entry(ri);
            if i + 1 < n {
                band[2] = entry(r[i + 1]);
            }
            bands.push(band);
            windows.push(w);
        }
        Ok(Self { n, bands, windows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `a[row][col]`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row + 1 == col {
            self.bands[col][0]
        } else if row == col {
            self.bands[col][1]
        } else if row == col + 1 {
            self.bands[col][2]
        } else {
            0.0
        }
    }

    pub fn window(&self, col: usize) -> Window {
        self.windows[col]
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|row| (0..self.n).map(|col| self.get(row, col)).collect())
            .collect()
    }

    /// `out = eta + A eta`.
    pub(crate) fn apply_shifted(&self, eta: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = eta[i] + self.get(i, i) * eta[i];
            if i > 0 {
                acc += self.get(i, i - 1) * eta[i - 1];
            }
            if i + 1 < n {
                acc += self.get(i, i + 1) * eta[i + 1];
            }
            out[i] = acc;
        }
    }
}

pub fn correction_matrix(r: &[f64]) -> Result<CorrectionMatrix> {
    CorrectionMatrix::new(r)
}

/// `Omega = max{1, max_i x_i/x_{i-1}, max_i x_i/x_{i+1}}`.
pub fn omega(x: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::PositivityViolation { index, value });
    }
    Ok(x.windows(2)
        .map(|w| (w[1] / w[0]).max(w[0] / w[1]))
        .fold(1.0, f64::max))
}

/// Population- and income-conserving perturbation built from `eta0`.
pub fn project_income(
    x: &Distribution,
    eta0: &NoiseDraw,
    a: &CorrectionMatrix,
) -> Result<Vec<f64>> {
    if x.len() != a.n() || eta0.as_slice().len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: if x.len() != a.n() {
                x.len()
            } else {
                eta0.as_slice().len()
            },
        });
    }
    let mut scratch = vec![0.0; a.n()];
    let mut out = vec![0.0; a.n()];
    project_income_into(x.as_slice(), eta0.as_slice(), a, &mut scratch, &mut out)?;
    Ok(out)
}

pub(crate) fn project_income_into(
    x: &[f64],
    eta0: &[f64],
    a: &CorrectionMatrix,
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let scale = 0.75 / omega(x)?;
    for ((s, &xv), &z) in scratch.iter_mut().zip(x).zip(eta0) {
        *s = scale * xv * z;
    }
    a.apply_shifted(scratch, out);
    Ok(())
}
