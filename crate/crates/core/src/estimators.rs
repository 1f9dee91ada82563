//! Monte-Carlo measurement of iterate bias, densities, averaging-loop
//! suboptimality, and stochastic-dominance statistics, with mergeable
//! streaming moments.
//!
//! Replicas are sharded across workers with fixed shard boundaries and
//! merged in ascending shard order, so every estimate is bitwise identical
//! for one worker or many.

use crate::engine::{fedavg_drive, run_gd, CheckpointPolicy, FedAvgConfig, Sign, DIVERGENCE_GUARD};
use crate::error::{DivergenceSite, Error, Result};
use crate::objectives::{ClientObjective, Objective1D};
use crate::parallel::run_sharded;
use crate::rng::{draw_from_stream, StreamKey};

/// Streaming mean/variance accumulator with an exact parallel merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WelfordState {
    count: u64,
    mean: f64,
    m2: f64,
}

impl WelfordState {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline(always)]
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &WelfordState) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * (self.count as f64) * w;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }
}

/// Point estimate with its 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
}

impl MonteCarloEstimate {
    pub fn from_welford(w: &WelfordState) -> Self {
        let half = 1.96 * w.stderr();
        MonteCarloEstimate {
            n: w.count(),
            mean: w.mean(),
            stderr: w.stderr(),
            ci95: (w.mean() - half, w.mean() + half),
        }
    }
}

/// Uniform-bin histogram over [lo, hi); out-of-range mass is tracked
/// separately so range adequacy can be checked afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::invalid(format!(
                "histogram needs hi > lo and bins >= 1 (got [{lo}, {hi}], {bins} bins)"
            )));
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            total: 0,
            below: 0,
            above: 0,
        })
    }

    #[inline(always)]
    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
            return;
        }
        if x >= self.hi {
            self.above += 1;
            return;
        }
        let bins = self.counts.len();
        let idx = (((x - self.lo) / (self.hi - self.lo) * bins as f64) as usize).min(bins - 1);
        self.counts[idx] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.below += other.below;
        self.above += other.above;
    }

    pub fn outside_fraction(&self) -> f64 {
        let all = self.total + self.below + self.above;
        if all == 0 {
            0.0
        } else {
            (self.below + self.above) as f64 / all as f64
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (0..=self.counts.len()).map(move |i| self.lo + i as f64 * w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasMode {
    Plain,
    Antithetic,
}

#[derive(Debug, Clone, Copy)]
pub struct BiasPoint {
    pub k: u64,
    pub estimate: MonteCarloEstimate,
}

/// Step an SGD chain to `k_max`, writing the iterate at each requested
/// checkpoint into `out` (checkpoints must be strictly increasing).
#[inline]
#[allow(clippy::too_many_arguments)]
fn sgd_checkpoints(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    ks: &[u64],
    stream: u64,
    sign: f64,
    replica: u64,
    out: &mut [f64],
) -> Result<()> {
    let noise = obj.noise();
    let mut x = x0;
    let mut next = 0usize;
    if ks[0] == 0 {
        out[0] = x;
        next = 1;
    }
    let k_max = *ks.last().unwrap();
    for j in 0..k_max {
        let xi = sign * noise.sample(draw_from_stream(stream, j));
        x -= eta * obj.stoch_grad(x, xi);
        if !(x.is_finite() && x.abs() <= DIVERGENCE_GUARD) {
            return Err(Error::Diverged {
                guard: DIVERGENCE_GUARD,
                site: DivergenceSite {
                    replica: Some(replica),
                    step: j,
                    ..Default::default()
                },
            });
        }
        if next < ks.len() && j + 1 == ks[next] {
            out[next] = x;
            next += 1;
        }
    }
    Ok(())
}

fn check_k_list(k_list: &[u64]) -> Result<()> {
    if k_list.is_empty() {
        return Err(Error::invalid("k_list must be non-empty"));
    }
    if !k_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("k_list must be strictly increasing"));
    }
    Ok(())
}

/// Estimate the iterate bias E[x_sgd^(k)] - z_gd^(k) at each k in `k_list`.
///
/// Antithetic mode pairs replicas (key, +1) / (key, -1), averages within
/// each pair first, and aggregates over pairs; this cancels the leading
/// linear noise term and is what makes small biases measurable.
#[allow(clippy::too_many_arguments)]
pub fn estimate_bias(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    k_list: &[u64],
    n: u64,
    mode: BiasMode,
    seed: u64,
    experiment: u64,
    workers: usize,
) -> Result<Vec<BiasPoint>> {
    check_k_list(k_list)?;
    if n < 2 {
        return Err(Error::invalid("n must be >= 2"));
    }
    if mode == BiasMode::Antithetic {
        if !n.is_multiple_of(2) {
            return Err(Error::invalid("antithetic mode needs an even n"));
        }
        if !obj.noise().is_sign_symmetric() {
            return Err(Error::invalid(
                "antithetic pairing requires a sign-symmetric noise model",
            ));
        }
    }
    let k_max = *k_list.last().unwrap();
    let gd = run_gd(obj, x0, eta, k_max, &CheckpointPolicy::Set(k_list.to_vec()))?;
    let z: Vec<f64> = k_list.iter().map(|&k| gd.at(k).unwrap()).collect();

    let units = match mode {
        BiasMode::Plain => n,
        BiasMode::Antithetic => n / 2,
    };
    let base = StreamKey::new(seed, experiment);
    let shards = run_sharded(units, workers, |range| -> Result<Vec<WelfordState>> {
        let mut acc = vec![WelfordState::new(); k_list.len()];
        let mut xs = vec![0.0f64; k_list.len()];
        let mut xs_minus = vec![0.0f64; k_list.len()];
        for rep in range {
            let stream = base.with_replica(rep).stream_id();
            match mode {
                BiasMode::Plain => {
                    sgd_checkpoints(obj, x0, eta, k_list, stream, 1.0, rep, &mut xs)?;
                    for (i, w) in acc.iter_mut().enumerate() {
                        w.push(xs[i] - z[i]);
                    }
                }
                BiasMode::Antithetic => {
                    sgd_checkpoints(obj, x0, eta, k_list, stream, 1.0, rep, &mut xs)?;
                    sgd_checkpoints(obj, x0, eta, k_list, stream, -1.0, rep, &mut xs_minus)?;
                    for (i, w) in acc.iter_mut().enumerate() {
                        w.push(0.5 * (xs[i] + xs_minus[i]) - z[i]);
                    }
                }
            }
        }
        Ok(acc)
    })?;

    let mut merged = vec![WelfordState::new(); k_list.len()];
    for shard in &shards {
        for (m, s) in merged.iter_mut().zip(shard) {
            m.merge(s);
        }
    }
    Ok(k_list
        .iter()
        .zip(&merged)
        .map(|(&k, w)| BiasPoint {
            k,
            estimate: MonteCarloEstimate::from_welford(w),
        })
        .collect())
}

/// Mean (with confidence interval) and unbiased sample variance of the
/// k-step SGD iterate.
#[allow(clippy::too_many_arguments)]
pub fn estimate_iterate_moments(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    k: u64,
    n: u64,
    seed: u64,
    experiment: u64,
    workers: usize,
) -> Result<(MonteCarloEstimate, f64)> {
    let base = StreamKey::new(seed, experiment);
    let shards = run_sharded(n, workers, |reps| -> Result<WelfordState> {
        let mut acc = WelfordState::new();
        let mut buf = [0.0f64; 1];
        for rep in reps {
            let stream = base.with_replica(rep).stream_id();
            sgd_checkpoints(obj, x0, eta, &[k], stream, 1.0, rep, &mut buf)?;
            acc.push(buf[0]);
        }
        Ok(acc)
    })?;
    let mut merged = WelfordState::new();
    for s in &shards {
        merged.merge(s);
    }
    Ok((
        MonteCarloEstimate::from_welford(&merged),
        merged.sample_variance(),
    ))
}

/// Histograms and running means of the SGD iterate at several checkpoints.
#[derive(Debug, Clone)]
pub struct DensityRun {
    pub checkpoints: Vec<u64>,
    pub histograms: Vec<Histogram>,
    pub means: Vec<MonteCarloEstimate>,
    /// Paired estimates of x^(k_{i+1}) - x^(k_i) along the same replica,
    /// one per consecutive checkpoint pair.
    pub gaps: Vec<MonteCarloEstimate>,
}

/// Sample the iterate distribution at the given checkpoints.
///
/// The range must span at least six predicted standard deviations, where
/// the prediction uses the closed-form quadratic law with the objective's
/// declared (larger) curvature; afterwards more than 0.1% of the mass
/// outside the range is an error.
#[allow(clippy::too_many_arguments)]
pub fn estimate_density(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    checkpoints: &[u64],
    n: u64,
    bins: usize,
    range: (f64, f64),
    seed: u64,
    experiment: u64,
    workers: usize,
) -> Result<DensityRun> {
    check_k_list(checkpoints)?;
    let k_max = *checkpoints.last().unwrap();
    let predicted = crate::oracles::quad_sgd_distribution(
        obj.constants().h,
        obj.noise().scale(),
        eta,
        x0,
        k_max,
    )?;
    let sd = predicted.variance.sqrt();
    if range.1 - range.0 < 6.0 * sd {
        return Err(Error::invalid(format!(
            "range [{}, {}] narrower than 6 predicted standard deviations ({:.3e})",
            range.0, range.1, sd
        )));
    }

    struct Shard {
        hists: Vec<Histogram>,
        means: Vec<WelfordState>,
        gaps: Vec<WelfordState>,
    }
    let base = StreamKey::new(seed, experiment);
    let shards = run_sharded(n, workers, |reps| -> Result<Shard> {
        let mut sh = Shard {
            hists: checkpoints
                .iter()
                .map(|_| Histogram::new(range.0, range.1, bins).unwrap())
                .collect(),
            means: vec![WelfordState::new(); checkpoints.len()],
            gaps: vec![WelfordState::new(); checkpoints.len().saturating_sub(1)],
        };
        let mut xs = vec![0.0f64; checkpoints.len()];
        for rep in reps {
            let stream = base.with_replica(rep).stream_id();
            sgd_checkpoints(obj, x0, eta, checkpoints, stream, 1.0, rep, &mut xs)?;
            for (i, &x) in xs.iter().enumerate() {
                sh.hists[i].add(x);
                sh.means[i].push(x);
                if i + 1 < xs.len() {
                    sh.gaps[i].push(xs[i + 1] - x);
                }
            }
        }
        Ok(sh)
    })?;

    let mut hists: Vec<Histogram> = checkpoints
        .iter()
        .map(|_| Histogram::new(range.0, range.1, bins).unwrap())
        .collect();
    let mut means = vec![WelfordState::new(); checkpoints.len()];
    let mut gaps = vec![WelfordState::new(); checkpoints.len().saturating_sub(1)];
    for sh in &shards {
        for i in 0..checkpoints.len() {
            hists[i].merge(&sh.hists[i]);
            means[i].merge(&sh.means[i]);
            if i + 1 < checkpoints.len() {
                gaps[i].merge(&sh.gaps[i]);
            }
        }
    }
    for h in &hists {
        if h.outside_fraction() > 1e-3 {
            return Err(Error::RangeTooSmall {
                lo: range.0,
                hi: range.1,
                outside_fraction: h.outside_fraction(),
            });
        }
    }
    Ok(DensityRun {
        checkpoints: checkpoints.to_vec(),
        histograms: hists,
        means: means.iter().map(MonteCarloEstimate::from_welford).collect(),
        gaps: gaps.iter().map(MonteCarloEstimate::from_welford).collect(),
    })
}

/// One-sided empirical-CDF comparison between the k-step SGD iterates of
/// two objectives sharing a noise model.
#[derive(Debug, Clone, Copy)]
pub struct DominanceReport {
    /// max over the evaluation grid of (Fhat_b - Fhat_a)+, i.e. how far
    /// Pr[b >= c] falls below Pr[a >= c] anywhere. Near zero when b
    /// first-order stochastically dominates a.
    pub max_violation: f64,
    /// 95% two-sided DKW band for one empirical CDF at this n.
    pub dkw95: f64,
    pub n: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn dominance_check(
    obj_a: &Objective1D,
    obj_b: &Objective1D,
    x0: f64,
    eta: f64,
    k: u64,
    n: u64,
    seed: u64,
    experiment: u64,
    workers: usize,
) -> Result<DominanceReport> {
    if obj_a.noise() != obj_b.noise() {
        return Err(Error::invalid(
            "dominance check requires both objectives to share the noise model",
        ));
    }
    // Both chains consume the same noise stream (common random numbers):
    // identical objectives then yield identical samples, and the per-step
    // dominance coupling is realized literally.
    let base = StreamKey::new(seed, experiment);
    let sample = |obj: &Objective1D| -> Result<Vec<f64>> {
        let shards = run_sharded(n, workers, |reps| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(reps.clone().count());
            let mut buf = [0.0f64; 1];
            for rep in reps {
                let stream = base.with_replica(rep).stream_id();
                sgd_checkpoints(obj, x0, eta, &[k], stream, 1.0, rep, &mut buf)?;
                out.push(buf[0]);
            }
            Ok(out)
        })?;
        let mut all: Vec<f64> = shards.into_iter().flatten().collect();
        all.sort_unstable_by(f64::total_cmp);
        Ok(all)
    };
    let a = sample(obj_a)?;
    let b = sample(obj_b)?;

    // Evaluate on pooled order statistics at 512 quantile points.
    let cdf = |sorted: &[f64], c: f64| -> f64 {
        sorted.partition_point(|&v| v <= c) as f64 / sorted.len() as f64
    };
    let mut max_violation = 0.0f64;
    let grid_points = 512usize;
    let pooled_len = a.len() + b.len();
    for j in 0..grid_points {
        let rank = j * (pooled_len - 1) / (grid_points - 1);
        // rank-th pooled order statistic without materializing the pool
        let c = kth_of_two(&a, &b, rank);
        let v = cdf(&b, c) - cdf(&a, c);
        if v > max_violation {
            max_violation = v;
        }
    }
    Ok(DominanceReport {
        max_violation,
        dkw95: ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt(),
        n,
    })
}

/// k-th smallest element (0-based) of the union of two sorted slices.
fn kth_of_two(a: &[f64], b: &[f64], k: usize) -> f64 {
    // Binary search on the answer over the merged value range.
    let (mut lo, mut hi) = (0usize, a.len());
    // Count of elements of `a` taken is t; then elements of b taken is k+1-t.
    // Standard two-array selection.
    while lo < hi {
        let mid = (lo + hi) / 2;
        // a[mid] would be within the first k+1 if the number of b-elements
        // strictly below a[mid] plus mid is <= k.
        let below_b = b.partition_point(|&v| v < a.get(mid).copied().unwrap_or(f64::INFINITY));
        if mid + below_b <= k {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let take_a = lo;
    let take_b = k + 1 - take_a;
    let cand_a = if take_a > 0 {
        a[take_a - 1]
    } else {
        f64::NEG_INFINITY
    };
    let cand_b = if take_b > 0 {
        b[take_b - 1]
    } else {
        f64::NEG_INFINITY
    };
    cand_a.max(cand_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// F(x^{(R,0)}) - F(x*) of the client-average objective.
    ValueGap,
    /// ||F'(x-hat)||^2 at the shadow average for a uniformly random
    /// (round, local step).
    GradSq,
}

/// Mean value of the client-average objective at x.
pub fn average_value(clients: &[ClientObjective], x: f64) -> f64 {
    clients.iter().map(|c| c.objective.value(x)).sum::<f64>() / clients.len() as f64
}

/// Mean gradient of the client-average objective at x.
pub fn average_grad(clients: &[ClientObjective], x: f64) -> f64 {
    clients
        .iter()
        .map(|c| c.objective.mean_grad(x))
        .sum::<f64>()
        / clients.len() as f64
}

/// Optimum of the (convex) client-average objective, by Newton iteration
/// seeded at 0 with a secant fallback step size.
pub fn average_optimum(clients: &[ClientObjective]) -> f64 {
    let mut x = 0.0f64;
    for _ in 0..128 {
        let g = average_grad(clients, x);
        if g.abs() < 1e-14 {
            break;
        }
        let h = clients.iter().map(|c| c.objective.hess(x)).sum::<f64>() / clients.len() as f64;
        x -= g / h.max(1e-12);
    }
    x
}

/// Monte-Carlo estimate of an averaging-loop error metric over `n`
/// replicas of the full loop.
pub fn fedavg_error(
    clients: &[ClientObjective],
    cfg: &FedAvgConfig,
    n: u64,
    experiment: u64,
    metric: ErrorMetric,
    workers: usize,
) -> Result<MonteCarloEstimate> {
    let x_star = average_optimum(clients);
    let f_star = average_value(clients, x_star);
    let base = StreamKey::new(cfg.master_seed, experiment);
    let shards = run_sharded(n, workers, |reps| -> Result<WelfordState> {
        let mut acc = WelfordState::new();
        for rep in reps {
            let key = base.with_replica(rep);
            match metric {
                ErrorMetric::ValueGap => {
                    let starts = fedavg_drive(clients, cfg, key, Sign::Plus, |_, _, _| {})?;
                    acc.push(average_value(clients, *starts.last().unwrap()) - f_star);
                }
                ErrorMetric::GradSq => {
                    // Sample the (round, local step) pair from a dedicated
                    // stream that cannot collide with client noise.
                    let pick = key.with_client(u64::MAX).stream_id();
                    let r_pick = draw_from_stream(pick, 0) % cfg.rounds;
                    let k_pick = 1 + draw_from_stream(pick, 1) % cfg.local_steps;
                    let mut shadow = f64::NAN;
                    fedavg_drive(clients, cfg, key, Sign::Plus, |r, k, xs| {
                        if r == r_pick && k == k_pick {
                            shadow = xs.iter().sum::<f64>() / xs.len() as f64;
                        }
                    })?;
                    let g = average_grad(clients, shadow);
                    acc.push(g * g);
                }
            }
        }
        Ok(acc)
    })?;
    let mut merged = WelfordState::new();
    for s in &shards {
        merged.merge(s);
    }
    Ok(MonteCarloEstimate::from_welford(&merged))
}
