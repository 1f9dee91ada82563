//! Continuous-limit checks: Euler-Maruyama simulation of
//! dX = -F'(X) dt + sqrt(eta) sigma dB and the Taylor coefficients of
//! u(t, x) = E[X(t) | X(0) = x] around t = 0.

use crate::engine::{CheckpointPolicy, Sign, Trajectory, DIVERGENCE_GUARD};
use crate::error::{DivergenceSite, Error, Result};
use crate::estimators::{MonteCarloEstimate, WelfordState};
use crate::objectives::Objective1D;
use crate::parallel::run_sharded;
use crate::rng::{draw_from_stream, StreamKey};

/// First two t-derivatives of u(t, x) at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCoeffs {
    pub u_t: f64,
    pub u_tt: f64,
}

/// Coefficients predicted by the backward-equation calculation with the
/// diffusion term written as eta sigma^2 u_xx:
/// u_t = -F'(x), u_tt = F'(x) F''(x) - eta sigma^2 F'''(x).
///
/// Whether that diffusion coefficient (rather than eta sigma^2 / 2)
/// matches the simulated process is exactly what
/// `check_backward_expansion` measures.
pub fn taylor_coeffs_predicted(obj: &Objective1D, x: f64, eta: f64, sigma: f64) -> TaylorCoeffs {
    let g = obj.mean_grad(x);
    TaylorCoeffs {
        u_t: -g,
        u_tt: g * obj.hess(x) - eta * sigma * sigma * obj.third(x),
    }
}

/// Euler-Maruyama integration of dX = -F'(X) dt + sqrt(eta) sigma dB.
///
/// Per step: X <- X - dt (F'(X) + sqrt(eta/dt) xi) with xi drawn from the
/// objective's noise model. The noise amplitude and sign are arranged so
/// that with dt = eta the update is the SGD step verbatim: the two are
/// bitwise identical under aligned keys (for a symmetric noise law the
/// sign convention does not change the process).
#[allow(clippy::too_many_arguments)]
pub fn euler_maruyama(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    dt: f64,
    steps: u64,
    key: StreamKey,
    sign: Sign,
    policy: &CheckpointPolicy,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0 (got {dt})")));
    }
    let mut traj = TrajectoryBuilder::new(x0);
    let stream = key.stream_id();
    let noise = obj.noise();
    let amp = (eta / dt).sqrt();
    let s = sign.factor();
    let mut x = x0;
    for j in 0..steps {
        let xi = s * noise.sample(draw_from_stream(stream, j));
        x -= dt * (obj.mean_grad(x) + amp * xi);
        if !(x.is_finite() && x.abs() <= DIVERGENCE_GUARD) {
            return Err(Error::Diverged {
                guard: DIVERGENCE_GUARD,
                site: DivergenceSite {
                    replica: Some(key.replica),
                    step: j,
                    ..Default::default()
                },
            });
        }
        if policy_wants(policy, j + 1, steps) {
            traj.push(j + 1, x);
        }
    }
    Ok(traj.finish())
}

fn policy_wants(policy: &CheckpointPolicy, idx: u64, last: u64) -> bool {
    match policy {
        CheckpointPolicy::Full => true,
        CheckpointPolicy::Auto => idx == last || idx.is_power_of_two(),
        CheckpointPolicy::Set(set) => set.contains(&idx),
    }
}

// Trajectory's push is crate-private through the engine; rebuild via a tiny
// local builder to keep Trajectory invariants in one place.
struct TrajectoryBuilder {
    points: Vec<(u64, f64)>,
}

impl TrajectoryBuilder {
    fn new(x0: f64) -> Self {
        TrajectoryBuilder {
            points: vec![(0, x0)],
        }
    }
    fn push(&mut self, idx: u64, x: f64) {
        self.points.push((idx, x));
    }
    fn finish(self) -> Trajectory {
        Trajectory::from_points(self.points)
    }
}

/// Outcome of fitting u(t) = x + u_t t + 1/2 u_tt t^2 (+ optional cubic
/// nuisance) to Monte-Carlo means of the SDE at several horizons.
#[derive(Debug, Clone)]
pub struct BackwardExpansionReport {
    pub points: Vec<(f64, MonteCarloEstimate)>,
    pub fitted_u_t: f64,
    pub fitted_u_tt: f64,
    pub u_t_stderr: f64,
    pub u_tt_stderr: f64,
    pub predicted: TaylorCoeffs,
}

/// Estimate u(t, x) over antithetic SDE paths at each horizon in
/// `t_grid`, fit the Taylor expansion by weighted least squares, and
/// return fitted and predicted coefficients side by side.
///
/// A cubic nuisance term absorbs the o(t^2) remainder, which noticeably
/// stabilizes the quadratic coefficient at the default horizons.
#[allow(clippy::too_many_arguments)]
pub fn check_backward_expansion(
    obj: &Objective1D,
    x: f64,
    eta: f64,
    sigma: f64,
    t_grid: &[f64],
    n: u64,
    dt: f64,
    seed: u64,
    workers: usize,
) -> Result<BackwardExpansionReport> {
    if t_grid.len() < 3 {
        return Err(Error::invalid("t_grid needs at least 3 horizons"));
    }
    if !n.is_multiple_of(2) || n < 2 {
        return Err(Error::invalid("n must be even and >= 2 (antithetic pairs)"));
    }
    let t_max = t_grid.iter().cloned().fold(0.0f64, f64::max);
    let h = obj.constants().h;
    let gate = t_max * (h + obj.mean_grad(x).abs());
    if gate > 0.2 + 1e-12 {
        return Err(Error::regime(
            "max(t) * (H + |F'(x)|) <= 0.2",
            format!("got {gate}"),
        ));
    }
    // Snap each horizon to a whole number of steps and fit at the snapped
    // times.
    let steps: Vec<u64> = t_grid
        .iter()
        .map(|&t| ((t / dt).round() as u64).max(1))
        .collect();
    let ts: Vec<f64> = steps.iter().map(|&s| s as f64 * dt).collect();
    let checkpoint: Vec<u64> = {
        let mut s = steps.clone();
        s.sort_unstable();
        s.dedup();
        s
    };
    let max_steps = *checkpoint.last().unwrap();

    let base = StreamKey::new(seed, 61);
    let noise = obj.noise();
    if !noise.is_sign_symmetric() {
        return Err(Error::invalid(
            "antithetic SDE paths require a sign-symmetric noise model",
        ));
    }
    let amp = (eta / dt).sqrt();
    let shards = run_sharded(n / 2, workers, |pairs| -> Result<Vec<WelfordState>> {
        let mut acc = vec![WelfordState::new(); checkpoint.len()];
        let mut plus = vec![0.0f64; checkpoint.len()];
        let mut minus = vec![0.0f64; checkpoint.len()];
        for pair in pairs {
            let stream = base.with_replica(pair).stream_id();
            for (sgn, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                let mut xx = x;
                let mut next = 0usize;
                for j in 0..max_steps {
                    let xi = sgn * noise.sample(draw_from_stream(stream, j));
                    xx -= dt * (obj.mean_grad(xx) + amp * xi);
                    if !(xx.is_finite() && xx.abs() <= DIVERGENCE_GUARD) {
                        return Err(Error::Diverged {
                            guard: DIVERGENCE_GUARD,
                            site: DivergenceSite {
                                replica: Some(pair),
                                step: j,
                                ..Default::default()
                            },
                        });
                    }
                    if j + 1 == checkpoint[next] {
                        out[next] = xx;
                        next += 1;
                        if next == checkpoint.len() {
                            break;
                        }
                    }
                }
            }
            for (i, w) in acc.iter_mut().enumerate() {
                w.push(0.5 * (plus[i] + minus[i]));
            }
        }
        Ok(acc)
    })?;
    let mut merged = vec![WelfordState::new(); checkpoint.len()];
    for s in &shards {
        for (m, w) in merged.iter_mut().zip(s) {
            m.merge(w);
        }
    }
    // Map the merged accumulators back onto the (possibly unsorted) t_grid.
    let est_for = |step: u64| -> MonteCarloEstimate {
        let idx = checkpoint.binary_search(&step).unwrap();
        MonteCarloEstimate::from_welford(&merged[idx])
    };
    let points: Vec<(f64, MonteCarloEstimate)> = steps
        .iter()
        .zip(&ts)
        .map(|(&s, &t)| (t, est_for(s)))
        .collect();

    // Weighted least squares for u(t) - x = u_t t + (u_tt/2) t^2 + c3 t^3.
    let rows: Vec<[f64; 3]> = points
        .iter()
        .map(|(t, _)| [*t, 0.5 * t * t, t * t * t])
        .collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.mean - x).collect();
    // With antithetic pairs on a symmetric linear objective every pair
    // mean is exactly the deterministic trajectory; the fit is then exact
    // and its parameter errors are zero.
    let exact = points.iter().all(|(_, e)| e.stderr == 0.0);
    let ws: Vec<f64> = points
        .iter()
        .map(|(_, e)| {
            let v = e.stderr * e.stderr;
            if v > 0.0 {
                1.0 / v
            } else {
                1.0
            }
        })
        .collect();
    let (coef, cov) = wls_3(&rows, &ys, &ws)?;
    let predicted = taylor_coeffs_predicted(obj, x, eta, sigma);

    let report = BackwardExpansionReport {
        points,
        fitted_u_t: coef[0],
        fitted_u_tt: coef[1],
        u_t_stderr: if exact { 0.0 } else { cov[0].sqrt() },
        u_tt_stderr: if exact { 0.0 } else { cov[1].sqrt() },
        predicted,
    };
    // Decision rule: to arbitrate the diffusion-coefficient convention the
    // fit must separate u_tt from u_tt/2 at four standard errors.
    if predicted.u_tt != 0.0 && report.u_tt_stderr * 8.0 > predicted.u_tt.abs() {
        let needed = (8.0 * report.u_tt_stderr / predicted.u_tt.abs()).powi(2);
        return Err(Error::Inconclusive {
            required_n: (n as f64 * needed).ceil() as u64,
            got_n: n,
        });
    }
    Ok(report)
}

/// Solve the 3-parameter weighted least squares by normal equations;
/// returns the coefficients and the diagonal of (X^T W X)^{-1}.
fn wls_3(rows: &[[f64; 3]], ys: &[f64], ws: &[f64]) -> Result<([f64; 3], [f64; 3])> {
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for ((r, &y), &w) in rows.iter().zip(ys).zip(ws) {
        for i in 0..3 {
            xty[i] += w * r[i] * y;
            for j in 0..3 {
                xtx[i][j] += w * r[i] * r[j];
            }
        }
    }
    let inv = invert_3x3(&xtx).ok_or_else(|| Error::invalid("singular design matrix"))?;
    let mut coef = [0.0f64; 3];
    for i in 0..3 {
        for j in 0..3 {
            coef[i] += inv[i][j] * xty[j];
        }
    }
    Ok((coef, [inv[0][0], inv[1][1], inv[2][2]]))
}

fn invert_3x3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (
                m[(j + 1) % 3][(i + 1) % 3],
                m[(j + 1) % 3][(i + 2) % 3],
                m[(j + 2) % 3][(i + 1) % 3],
                m[(j + 2) % 3][(i + 2) % 3],
            );
            out[i][j] = (a * d - b * c) * inv_det;
        }
    }
    Some(out)
}
