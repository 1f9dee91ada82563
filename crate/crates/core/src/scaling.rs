//! Power-law exponent fits of measured bias magnitudes, verifying the
//! k^{3/2} / k^2 growth in steps and the eta^2 / eta^3 growth in step
//! size.

use crate::error::{Error, Result};
use crate::estimators::{estimate_bias, BiasMode, MonteCarloEstimate};
use crate::objectives::Objective1D;

/// Weighted least-squares fit of log y against log s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Intercept on the log scale: log y = intercept + exponent * log s.
    pub intercept: f64,
    pub r_squared: f64,
    pub exponent_stderr: f64,
}

/// One fit input: scale s, magnitude y, weight w (inverse variance of
/// log y; 1/relative-stderr^2 for Monte-Carlo points).
#[derive(Debug, Clone, Copy)]
pub struct PowerPoint {
    pub s: f64,
    pub y: f64,
    pub w: f64,
}

/// Fit y = C s^e by weighted least squares on (log s, log y).
pub fn fit_power_law(points: &[PowerPoint]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 points (got {})",
            points.len()
        )));
    }
    let bad: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.y > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveFitInput { indices: bad });
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if points[i].s == points[j].s {
                return Err(Error::invalid("scales must be distinct"));
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.s.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y.ln()).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|p| if p.w > 0.0 { p.w } else { 1.0 })
        .collect();
    let wsum: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sxx: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| w * (x - xbar) * (x - xbar))
        .sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate design: all log-scales equal"));
    }
    let exponent = sxy / sxx;
    let intercept = ybar - exponent * xbar;
    let syy: f64 = ys
        .iter()
        .zip(&ws)
        .map(|(y, w)| w * (y - ybar) * (y - ybar))
        .sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| {
            let r = y - (intercept + exponent * x);
            w * r * r
        })
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    // With weights taken as inverse variances of log y, the slope variance
    // is 1/sxx.
    let exponent_stderr = (1.0 / sxx).sqrt();
    Ok(PowerLawFit {
        exponent,
        intercept,
        r_squared,
        exponent_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary the step count k at fixed eta.
    K,
    /// Vary eta at fixed k.
    Eta,
}

/// One measured sweep point.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    /// The swept scale (k or eta).
    pub s: f64,
    pub estimate: MonteCarloEstimate,
    /// False when the point was flagged (|mean| below 5 stderr, or sign
    /// disagreeing with the majority) and excluded from the fit.
    pub used_in_fit: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub fit: PowerLawFit,
}

/// Measure the bias magnitude along one axis and fit its growth exponent.
///
/// The whole grid must sit inside the small-step growth regime
/// eta * H * k <= 1/2; grids straddling the regime boundary mix growth
/// laws and are refused rather than fitted.
#[allow(clippy::too_many_arguments)]
pub fn sweep_bias_scaling(
    obj: &Objective1D,
    axis: SweepAxis,
    grid: &[f64],
    fixed: f64,
    n: u64,
    x0: f64,
    seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    if grid.len() < 3 {
        return Err(Error::invalid("sweep needs at least 3 grid points"));
    }
    let h = obj.constants().h;
    let pairs: Vec<(f64, u64)> = match axis {
        SweepAxis::K => grid
            .iter()
            .map(|&k| {
                if k < 2.0 || k.fract() != 0.0 {
                    Err(Error::invalid(format!(
                        "k grid entries must be integers >= 2 (got {k})"
                    )))
                } else {
                    Ok((fixed, k as u64))
                }
            })
            .collect::<Result<_>>()?,
        SweepAxis::Eta => grid.iter().map(|&eta| (eta, fixed as u64)).collect(),
    };
    for &(eta, k) in &pairs {
        let ehk = eta * h * k as f64;
        if ehk > 0.5 {
            return Err(Error::regime(
                "eta * H * k <= 1/2 over the whole sweep",
                format!("eta={eta}, k={k}: eta*H*k = {ehk}"),
            ));
        }
        if eta > 0.5 / h {
            return Err(Error::regime("eta <= 1/(2H)", format!("eta = {eta}")));
        }
    }

    let mut estimates = Vec::with_capacity(pairs.len());
    for (i, &(eta, k)) in pairs.iter().enumerate() {
        let pts = estimate_bias(
            obj,
            x0,
            eta,
            &[k],
            n,
            BiasMode::Antithetic,
            seed,
            // a separate experiment id per grid point keeps the noise
            // streams of different points independent
            1000 + i as u64,
            workers,
        )?;
        estimates.push(pts[0].estimate);
    }

    // Flag small or wrong-signed points instead of silently dropping them.
    let positive = estimates.iter().filter(|e| e.mean > 0.0).count();
    let majority_negative = positive * 2 <= estimates.len();
    let mut points = Vec::with_capacity(pairs.len());
    for (&(eta, k), est) in pairs.iter().zip(&estimates) {
        let s = match axis {
            SweepAxis::K => k as f64,
            SweepAxis::Eta => eta,
        };
        let resolved = est.mean.abs() >= 5.0 * est.stderr;
        let sign_ok = (est.mean < 0.0) == majority_negative;
        points.push(SweepPoint {
            s,
            estimate: *est,
            used_in_fit: resolved && sign_ok,
        });
    }
    let fit_input: Vec<PowerPoint> = points
        .iter()
        .filter(|p| p.used_in_fit)
        .map(|p| {
            let rel = p.estimate.stderr / p.estimate.mean.abs();
            PowerPoint {
                s: p.s,
                y: p.estimate.mean.abs(),
                w: 1.0 / (rel * rel),
            }
        })
        .collect();
    let fit = fit_power_law(&fit_input)?;
    Ok(SweepResult { points, fit })
}
