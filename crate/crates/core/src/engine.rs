//! Deterministic, seedable trajectory generation: GD, SGD, and the
//! K-local-steps / R-rounds / M-clients averaging loop.
//!
//! Everything here is pure given (config, key): replicas, clients, and
//! grid points can be partitioned across threads in any order without
//! changing a single bit of output.

use crate::error::{DivergenceSite, Error, Result};
use crate::objectives::{ClientObjective, Objective1D};
use crate::rng::{draw_from_stream, StreamKey};

/// Trajectories abort once |x| exceeds this guard, surfacing a structured
/// error instead of propagating non-finite values.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Antithetic pairing sign applied to each noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline(always)]
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Which iterates a run records.
#[derive(Debug, Clone)]
pub enum CheckpointPolicy {
    /// Every iterate. Default for direct trajectory inspection.
    Full,
    /// Powers of two plus the final index; bounds memory on long runs.
    Auto,
    /// Exactly these step indices (plus index 0).
    Set(Vec<u64>),
}

impl CheckpointPolicy {
    fn wants(&self, idx: u64, last: u64) -> bool {
        match self {
            CheckpointPolicy::Full => true,
            CheckpointPolicy::Auto => idx == last || idx.is_power_of_two(),
            CheckpointPolicy::Set(set) => set.contains(&idx),
        }
    }
}

/// Checkpointed iterates; the first entry is always (0, x0) and step
/// indices increase strictly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<(u64, f64)>,
}

impl Trajectory {
    fn new(x0: f64) -> Self {
        Trajectory {
            points: vec![(0, x0)],
        }
    }

    pub(crate) fn from_points(points: Vec<(u64, f64)>) -> Self {
        debug_assert!(!points.is_empty() && points[0].0 == 0);
        debug_assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
        Trajectory { points }
    }

    fn push(&mut self, idx: u64, x: f64) {
        debug_assert!(idx > self.points.last().unwrap().0);
        self.points.push((idx, x));
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn final_value(&self) -> f64 {
        self.points.last().unwrap().1
    }

    pub fn at(&self, idx: u64) -> Option<f64> {
        self.points
            .binary_search_by_key(&idx, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }
}

/// Experiment description for the averaging loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FedAvgConfig {
    pub eta: f64,
    /// Local steps per round (K).
    pub local_steps: u64,
    /// Communication rounds (R).
    pub rounds: u64,
    /// Participating clients (M).
    pub clients: u64,
    pub x0: f64,
    /// Monte-Carlo replica count used by estimators.
    pub replicas: u64,
    pub master_seed: u64,
}

impl FedAvgConfig {
    pub fn new(
        eta: f64,
        local_steps: u64,
        rounds: u64,
        clients: u64,
        x0: f64,
        replicas: u64,
        master_seed: u64,
    ) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0 (got {eta})")));
        }
        if local_steps == 0 || rounds == 0 || clients == 0 || replicas == 0 {
            return Err(Error::invalid(
                "local_steps, rounds, clients and replicas must all be >= 1",
            ));
        }
        Ok(FedAvgConfig {
            eta,
            local_steps,
            rounds,
            clients,
            x0,
            replicas,
            master_seed,
        })
    }
}

#[inline(always)]
fn guard(x: f64, site: DivergenceSite) -> Result<f64> {
    if x.is_finite() && x.abs() <= DIVERGENCE_GUARD {
        Ok(x)
    } else {
        Err(Error::Diverged {
            guard: DIVERGENCE_GUARD,
            site,
        })
    }
}

/// Noiseless gradient descent: z_{j+1} = z_j - eta F'(z_j).
pub fn run_gd(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    steps: u64,
    policy: &CheckpointPolicy,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(x0);
    let mut x = x0;
    for j in 0..steps {
        x = guard(
            x - eta * obj.mean_grad(x),
            DivergenceSite {
                step: j,
                ..Default::default()
            },
        )?;
        if policy.wants(j + 1, steps) {
            traj.push(j + 1, x);
        }
    }
    Ok(traj)
}

/// SGD with keyed counter noise: each step draws xi from the objective's
/// noise model at (key, step) and applies `sign`; the same key and sign
/// reproduce the trajectory bit-exactly.
pub fn run_sgd(
    obj: &Objective1D,
    x0: f64,
    eta: f64,
    steps: u64,
    key: StreamKey,
    sign: Sign,
    policy: &CheckpointPolicy,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(x0);
    let stream = key.stream_id();
    let noise = obj.noise();
    let s = sign.factor();
    let mut x = x0;
    for j in 0..steps {
        let xi = s * noise.sample(draw_from_stream(stream, j));
        x = guard(
            x - eta * obj.stoch_grad(x, xi),
            DivergenceSite {
                replica: Some(key.replica),
                step: j,
                ..Default::default()
            },
        )?;
        if policy.wants(j + 1, steps) {
            traj.push(j + 1, x);
        }
    }
    Ok(traj)
}

/// One run of the averaging loop.
#[derive(Debug, Clone)]
pub struct FedAvgRun {
    /// Round-start iterates x^{(r, 0)} for r = 0..=R (index = round).
    pub round_starts: Trajectory,
    /// Local trajectories, indexed [round][client input position]; local
    /// step indices run 0..=K within each round. Populated only when
    /// requested.
    pub locals: Vec<Vec<Trajectory>>,
}

/// Core loop: broadcast, K local SGD steps per client with independent
/// keyed noise, uniform averaging. The observer sees every local iterate
/// (round, 1-based local step, per-client values in input order).
pub(crate) fn fedavg_drive<F>(
    clients: &[ClientObjective],
    cfg: &FedAvgConfig,
    base: StreamKey,
    sign: Sign,
    mut observe: F,
) -> Result<Vec<f64>>
where
    F: FnMut(u64, u64, &[f64]),
{
    if clients.len() as u64 != cfg.clients {
        return Err(Error::invalid(format!(
            "config names {} clients but {} objectives were supplied",
            cfg.clients,
            clients.len()
        )));
    }
    // Averaging accumulates in ascending client_tag order so that
    // permuting the input leaves every bit of the output unchanged.
    let mut tag_order: Vec<usize> = (0..clients.len()).collect();
    tag_order.sort_by_key(|&i| clients[i].client_tag);

    let m = clients.len();
    let s = sign.factor();
    let mut round_starts = Vec::with_capacity(cfg.rounds as usize + 1);
    let mut x_server = cfg.x0;
    round_starts.push(x_server);
    let mut xs = vec![0.0f64; m];
    for r in 0..cfg.rounds {
        for x in xs.iter_mut() {
            *x = x_server; // broadcast
        }
        let streams: Vec<u64> = clients
            .iter()
            .map(|c| base.with_client(c.client_tag).with_round(r).stream_id())
            .collect();
        for k in 0..cfg.local_steps {
            for (i, c) in clients.iter().enumerate() {
                let xi = s * c.noise().sample(draw_from_stream(streams[i], k));
                let x = xs[i] - cfg.eta * c.objective.stoch_grad(xs[i], xi);
                xs[i] = guard(
                    x,
                    DivergenceSite {
                        replica: Some(base.replica),
                        client: Some(c.client_tag),
                        round: Some(r),
                        step: k,
                    },
                )?;
            }
            observe(r, k + 1, &xs);
        }
        let mut sum = 0.0;
        for &i in &tag_order {
            sum += xs[i];
        }
        x_server = sum / m as f64; // server averaging
        round_starts.push(x_server);
    }
    Ok(round_starts)
}

/// Run the averaging loop, recording round starts and (optionally) the
/// per-client local trajectories under `policy`.
pub fn run_fedavg(
    clients: &[ClientObjective],
    cfg: &FedAvgConfig,
    base: StreamKey,
    policy: &CheckpointPolicy,
    keep_locals: bool,
) -> Result<FedAvgRun> {
    let m = clients.len();
    let k_last = cfg.local_steps;
    let mut raw_locals: Vec<Vec<Vec<(u64, f64)>>> = Vec::new();
    let round_starts_raw = fedavg_drive(clients, cfg, base, Sign::Plus, |r, k, xs| {
        if !keep_locals {
            return;
        }
        if raw_locals.len() <= r as usize {
            raw_locals.push(vec![Vec::new(); m]);
        }
        if policy.wants(k, k_last) {
            for (i, &x) in xs.iter().enumerate() {
                raw_locals[r as usize][i].push((k, x));
            }
        }
    })?;
    let locals = raw_locals
        .into_iter()
        .enumerate()
        .map(|(r, per_client)| {
            per_client
                .into_iter()
                .map(|pts| {
                    // Locals start from the broadcast round-start value.
                    let mut t = Trajectory::new(round_starts_raw[r]);
                    for (k, x) in pts {
                        t.push(k, x);
                    }
                    t
                })
                .collect()
        })
        .collect();
    let mut round_starts = Trajectory::new(round_starts_raw[0]);
    for (r, &x) in round_starts_raw.iter().enumerate().skip(1) {
        round_starts.push(r as u64, x);
    }
    Ok(FedAvgRun {
        round_starts,
        locals,
    })
}
