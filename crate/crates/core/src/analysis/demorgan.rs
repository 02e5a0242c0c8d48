use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapKind {
    /// `not (x1 and ... and xn)` against `not x1 or ... or not xn`.
    And,
    /// `not (x1 or ... or xn)` against `not x1 and ... and not xn`.
    Or,
}

fn check(x: &[f64]) -> Result<(), AnalysisError> {
    if x.is_empty() {
        return Err(AnalysisError::TooFew {
            what: "values",
            min: 1,
            got: 0,
        });
    }
    match x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&v) => Err(AnalysisError::OutOfRange(v)),
        None => Ok(()),
    }
}

fn gap_and(x: &[f64]) -> f64 {
    let (min, prod) = x.iter().fold((1.0f64, 1.0), |(m, p), &v| (m.min(v), p * v));
    min - prod
}

fn gap_or(x: &[f64]) -> f64 {
    let (max, prod) = x.iter().fold((0.0f64, 1.0), |(m, p), &v| (m.max(v), p * (1.0 - v)));
    1.0 - max - prod
}

fn gap(kind: GapKind, x: &[f64]) -> f64 {
    match kind {
        GapKind::And => gap_and(x),
        GapKind::Or => gap_or(x),
    }
}

/// `(1 - prod x) - max(1 - x)`: how far the product conjunction's
/// negation exceeds the disjunction of negations under the exact max.
pub fn demorgan_gap_and(x: &[f64]) -> Result<f64, AnalysisError> {
    check(x)?;
    Ok(gap_and(x))
}

/// `(1 - max x) - prod (1 - x)`.
pub fn demorgan_gap_or(x: &[f64]) -> Result<f64, AnalysisError> {
    check(x)?;
    Ok(gap_or(x))
}

fn arity(n: usize) -> Result<(), AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFew {
            what: "operands",
            min: 2,
            got: n,
        });
    }
    Ok(())
}

/// Maximizer `x* = n^(-1/(n-1))` of the conjunction gap on the diagonal
/// and the gap there, `x* - x*^n`.
pub fn demorgan_peak(n: usize) -> Result<(f64, f64), AnalysisError> {
    arity(n)?;
    let x = (n as f64).powf(-1.0 / (n as f64 - 1.0));
    Ok((x, x - x.powi(n as i32)))
}

/// The disjunction gap peaks at `1 - x*` with the same height.
pub fn demorgan_peak_or(n: usize) -> Result<(f64, f64), AnalysisError> {
    let (x, g) = demorgan_peak(n)?;
    Ok((1.0 - x, g))
}

/// Mean gap over the grid of `points` equally spaced values per axis,
/// endpoints included, enumerating all `points^n` tuples.
pub fn demorgan_average_grid(n: usize, points: usize, kind: GapKind) -> Result<f64, AnalysisError> {
    arity(n)?;
    if points < 2 {
        return Err(AnalysisError::TooFew {
            what: "grid points",
            min: 2,
            got: points,
        });
    }
    let axis: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let total = (points as f64).powi(n as i32);
    let mut sum = 0.0;
    // the last coordinate varies fastest; inner sums keep rounding low
    loop {
        for (k, &i) in idx.iter().enumerate().take(n - 1) {
            x[k] = axis[i];
        }
        let mut inner = 0.0;
        for &v in &axis {
            x[n - 1] = v;
            inner += gap(kind, &x);
        }
        sum += inner;
        let mut k = n - 1;
        loop {
            if k == 0 {
                return Ok(sum / total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Mean gap and its standard error over uniform samples of `[0,1]^n`.
pub fn demorgan_average_mc(n: usize, samples: usize, kind: GapKind, seed: u64) -> Result<(f64, f64), AnalysisError> {
    arity(n)?;
    if samples < 2 {
        return Err(AnalysisError::TooFew {
            what: "samples",
            min: 2,
            got: samples,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        x.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let g = gap(kind, &x);
        s += g;
        s2 += g * g;
    }
    let m = samples as f64;
    let mean = s / m;
    let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}

/// Two-variable gap over a `points x points` grid as `x1,x2,gap` rows.
pub fn demorgan_grid_csv(points: usize, kind: GapKind) -> Result<String, AnalysisError> {
    if points < 2 {
        return Err(AnalysisError::TooFew {
            what: "grid points",
            min: 2,
            got: points,
        });
    }
    let mut s = String::from("x1,x2,gap\n");
    for i in 0..points {
        for j in 0..points {
            let x = [i as f64 / (points - 1) as f64, j as f64 / (points - 1) as f64];
            s.push_str(&format!("{},{},{}\n", x[0], x[1], gap(kind, &x)));
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemorganSummary {
    pub n: usize,
    pub kind: GapKind,
    pub peak_x: f64,
    pub peak_gap: f64,
    pub grid_points: usize,
    pub grid_average: f64,
    pub mc_samples: usize,
    pub mc_average: f64,
    pub mc_stderr: f64,
}

impl DemorganSummary {
    pub fn to_text(&self) -> String {
        format!(
            "n = {}\nkind = {}\npeak_x = {:.6}\npeak_gap = {:.6}\ngrid_points_per_axis = {}\ngrid_average = {:.6}\nmc_samples = {}\nmc_average = {:.6}\nmc_stderr = {:.6}\n",
            self.n,
            match self.kind {
                GapKind::And => "and",
                GapKind::Or => "or",
            },
            self.peak_x,
            self.peak_gap,
            self.grid_points,
            self.grid_average,
            self.mc_samples,
            self.mc_average,
            self.mc_stderr
        )
    }
}

pub fn demorgan_summary(
    n: usize,
    kind: GapKind,
    grid_points: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DemorganSummary, AnalysisError> {
    let (peak_x, peak_gap) = match kind {
        GapKind::And => demorgan_peak(n)?,
        GapKind::Or => demorgan_peak_or(n)?,
    };
    let grid_average = demorgan_average_grid(n, grid_points, kind)?;
    let (mc_average, mc_stderr) = demorgan_average_mc(n, mc_samples, kind, seed)?;
    Ok(DemorganSummary {
        n,
        kind,
        peak_x,
        peak_gap,
        grid_points,
        grid_average,
        mc_samples,
        mc_average,
        mc_stderr,
    })
}
