//! Convergence-rate and step-size formulas, reported term by term, plus
//! simulation-backed verification of the upper bounds.
//!
//! Bounds are never collapsed to one opaque number: every term is named
//! and evaluated separately, so constant-factor ambiguity in big-O
//! statements cannot hide a broken term.

use crate::engine::FedAvgConfig;
use crate::error::{Error, Result};
use crate::estimators::{
    average_optimum, average_value, fedavg_error, ErrorMetric, MonteCarloEstimate,
};
use crate::objectives::ClientObjective;

/// Problem scales feeding the rate formulas. `zeta` is the uniform
/// heterogeneity used only by the table's upper-bound row; `zeta_star` is
/// the at-optimum heterogeneity used by the lower bounds. The two measure
/// different things and are never conflated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub h: f64,
    pub sigma: f64,
    pub q: f64,
    /// Uniform gradient bound (non-convex rates).
    pub g: f64,
    /// Initial distance to the optimum.
    pub d: f64,
    /// Initial value gap F(x0) - F*.
    pub b: f64,
    pub zeta_star: f64,
    pub zeta: f64,
    pub m: u64,
    pub k: u64,
    pub r: u64,
}

impl RateInputs {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("h", self.h),
            ("sigma", self.sigma),
            ("q", self.q),
            ("g", self.g),
            ("d", self.d),
            ("b", self.b),
            ("zeta_star", self.zeta_star),
            ("zeta", self.zeta),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0 (got {v})")));
            }
        }
        if self.m < 1 || self.k < 1 || self.r < 1 {
            return Err(Error::invalid("m, k, r must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerm {
    pub name: &'static str,
    pub value: f64,
}

/// A rate bound as the list of its terms; `total` is their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub label: &'static str,
    pub terms: Vec<BoundTerm>,
    pub total: f64,
}

impl BoundReport {
    fn new(label: &'static str, terms: Vec<BoundTerm>) -> Self {
        let total = terms.iter().map(|t| t.value).sum();
        BoundReport {
            label,
            terms,
            total,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

fn homog_terms(i: &RateInputs) -> Vec<BoundTerm> {
    let (kf, rf, mf) = (i.k as f64, i.r as f64, i.m as f64);
    let opt = i.h * i.d * i.d / (kf * rf);
    let stat = i.sigma * i.d / (mf * kf * rf).sqrt();
    let bias = (i.sigma * i.d / (kf * rf).sqrt()).min(
        i.h.powf(1.0 / 3.0) * i.sigma.powf(2.0 / 3.0) * i.d.powf(4.0 / 3.0)
            / (kf.powf(1.0 / 3.0) * rf.powf(2.0 / 3.0)),
    );
    vec![
        BoundTerm {
            name: "optimization",
            value: opt,
        },
        BoundTerm {
            name: "statistical",
            value: stat,
        },
        BoundTerm {
            name: "bias",
            value: bias,
        },
    ]
}

/// Homogeneous final-iterate floor:
/// H D^2/(KR) + sigma D / sqrt(MKR) + min{sigma D / sqrt(KR),
/// H^{1/3} sigma^{2/3} D^{4/3} / (K^{1/3} R^{2/3})}. Requires K >= 2.
pub fn lower_bound_homog(i: &RateInputs) -> Result<BoundReport> {
    i.validate()?;
    if i.k < 2 {
        return Err(Error::regime("K >= 2", format!("K = {}", i.k)));
    }
    Ok(BoundReport::new("lower_homog", homog_terms(i)))
}

/// Heterogeneous floor: the homogeneous terms plus
/// min{zeta*^2/H, H^{1/3} zeta*^{2/3} D^{4/3} / R^{2/3}}.
pub fn lower_bound_hetero(i: &RateInputs) -> Result<BoundReport> {
    i.validate()?;
    if i.k < 2 {
        return Err(Error::regime("K >= 2", format!("K = {}", i.k)));
    }
    let rf = i.r as f64;
    let mut terms = homog_terms(i);
    let het = (i.zeta_star * i.zeta_star / i.h).min(
        i.h.powf(1.0 / 3.0) * i.zeta_star.powf(2.0 / 3.0) * i.d.powf(4.0 / 3.0)
            / rf.powf(2.0 / 3.0),
    );
    terms.push(BoundTerm {
        name: "heterogeneity",
        value: het,
    });
    Ok(BoundReport::new("lower_hetero", terms))
}

/// The heterogeneous upper-bound row of the rate table, which uses the
/// uniform heterogeneity zeta. Evaluated for documentation output only.
pub fn table_upper_hetero(i: &RateInputs) -> Result<BoundReport> {
    i.validate()?;
    let rf = i.r as f64;
    let mut terms = homog_terms(i);
    // The upper row's bias term has no min with sigma D / sqrt(KR).
    let (kf, _) = (i.k as f64, ());
    terms[2] = BoundTerm {
        name: "bias",
        value: i.h.powf(1.0 / 3.0) * i.sigma.powf(2.0 / 3.0) * i.d.powf(4.0 / 3.0)
            / (kf.powf(1.0 / 3.0) * rf.powf(2.0 / 3.0)),
    };
    terms.push(BoundTerm {
        name: "heterogeneity",
        value: i.h.powf(1.0 / 3.0) * i.zeta.powf(2.0 / 3.0) * i.d.powf(4.0 / 3.0)
            / rf.powf(2.0 / 3.0),
    });
    Ok(BoundReport::new("upper_hetero_table", terms))
}

fn min_finite(candidates: &[f64]) -> f64 {
    candidates
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min)
}

/// Convex third-order-smooth prescription:
/// eta = min{1/H, sqrt(BM)/(sigma sqrt(HRK)), B^{1/5}/(K^{3/5} R^{1/5} Q^{2/5} sigma^{4/5})}
/// with rate HB/(KR) + sigma sqrt(BH)/sqrt(MKR) + B^{4/5} sigma^{4/5} Q^{2/5}/(K^{2/5} R^{4/5}).
pub fn stepsize_and_rate_convex_3o(i: &RateInputs) -> Result<(f64, BoundReport)> {
    i.validate()?;
    let (kf, rf, mf) = (i.k as f64, i.r as f64, i.m as f64);
    let eta2 = if i.sigma > 0.0 {
        (i.b * mf).sqrt() / (i.sigma * (i.h * rf * kf).sqrt())
    } else {
        f64::INFINITY
    };
    let eta3 = if i.sigma > 0.0 && i.q > 0.0 {
        i.b.powf(0.2) / (kf.powf(0.6) * rf.powf(0.2) * i.q.powf(0.4) * i.sigma.powf(0.8))
    } else {
        f64::INFINITY
    };
    let eta = min_finite(&[1.0 / i.h, eta2, eta3]);
    let terms = vec![
        BoundTerm {
            name: "optimization",
            value: i.h * i.b / (kf * rf),
        },
        BoundTerm {
            name: "statistical",
            value: i.sigma * (i.b * i.h).sqrt() / (mf * kf * rf).sqrt(),
        },
        BoundTerm {
            name: "third_order",
            value: i.b.powf(0.8) * i.sigma.powf(0.8) * i.q.powf(0.4)
                / (kf.powf(0.4) * rf.powf(0.8)),
        },
    ];
    Ok((eta, BoundReport::new("convex_3o", terms)))
}

/// Non-convex third-order-smooth prescription:
/// eta = min{1/H, sqrt(BM)/(sigma sqrt(HKR)), B^{1/5}/(K R^{1/5} Q^{2/5} (sigma+G)^{4/5})}
/// with rate HB/(KR) + sigma sqrt(BH)/sqrt(MKR) + B^{4/5} (G+sigma)^{4/5} Q^{2/5}/R^{4/5}.
pub fn stepsize_and_rate_nonconvex_3o(i: &RateInputs) -> Result<(f64, BoundReport)> {
    i.validate()?;
    let (kf, rf, mf) = (i.k as f64, i.r as f64, i.m as f64);
    let gs = i.g + i.sigma;
    let eta2 = if i.sigma > 0.0 {
        (i.b * mf).sqrt() / (i.sigma * (i.h * kf * rf).sqrt())
    } else {
        f64::INFINITY
    };
    let eta3 = if i.q > 0.0 && gs > 0.0 {
        i.b.powf(0.2) / (kf * rf.powf(0.2) * i.q.powf(0.4) * gs.powf(0.8))
    } else {
        f64::INFINITY
    };
    let eta = min_finite(&[1.0 / i.h, eta2, eta3]);
    let terms = vec![
        BoundTerm {
            name: "optimization",
            value: i.h * i.b / (kf * rf),
        },
        BoundTerm {
            name: "statistical",
            value: i.sigma * (i.b * i.h).sqrt() / (mf * kf * rf).sqrt(),
        },
        BoundTerm {
            name: "third_order",
            value: i.b.powf(0.8) * gs.powf(0.8) * i.q.powf(0.4) / rf.powf(0.8),
        },
    ];
    Ok((eta, BoundReport::new("nonconvex_3o", terms)))
}

/// Non-convex second-order prescription:
/// eta = min{1/H, sqrt(BM)/(sigma sqrt(HKR)), B^{1/3}/(K R^{1/3} H^{2/3} (G+sigma)^{2/3})}
/// with rate HB/(KR) + sigma sqrt(BH)/sqrt(MKR) + B^{2/3} (G+sigma)^{2/3} H^{2/3}/R^{2/3}.
pub fn stepsize_and_rate_nonconvex_2o(i: &RateInputs) -> Result<(f64, BoundReport)> {
    i.validate()?;
    let (kf, rf, mf) = (i.k as f64, i.r as f64, i.m as f64);
    let gs = i.g + i.sigma;
    let eta2 = if i.sigma > 0.0 {
        (i.b * mf).sqrt() / (i.sigma * (i.h * kf * rf).sqrt())
    } else {
        f64::INFINITY
    };
    let eta3 = if gs > 0.0 {
        i.b.powf(1.0 / 3.0) / (kf * rf.powf(1.0 / 3.0) * i.h.powf(2.0 / 3.0) * gs.powf(2.0 / 3.0))
    } else {
        f64::INFINITY
    };
    let eta = min_finite(&[1.0 / i.h, eta2, eta3]);
    let terms = vec![
        BoundTerm {
            name: "optimization",
            value: i.h * i.b / (kf * rf),
        },
        BoundTerm {
            name: "statistical",
            value: i.sigma * (i.b * i.h).sqrt() / (mf * kf * rf).sqrt(),
        },
        BoundTerm {
            name: "second_order",
            value: i.b.powf(2.0 / 3.0) * gs.powf(2.0 / 3.0) * i.h.powf(2.0 / 3.0)
                / rf.powf(2.0 / 3.0),
        },
    ];
    Ok((eta, BoundReport::new("nonconvex_2o", terms)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichBound {
    Convex3o,
    Nonconvex3o,
    Nonconvex2o,
}

impl WhichBound {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "convex3o" => Ok(WhichBound::Convex3o),
            "nonconvex3o" => Ok(WhichBound::Nonconvex3o),
            "nonconvex2o" => Ok(WhichBound::Nonconvex2o),
            other => Err(Error::invalid(format!(
                "unknown bound `{other}` (expected convex3o|nonconvex3o|nonconvex2o)"
            ))),
        }
    }
}

/// Result of running the loop at the prescribed step size and comparing
/// the measured squared-gradient metric to the evaluated bound.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub which: WhichBound,
    pub eta: f64,
    pub report: BoundReport,
    pub measured: MonteCarloEstimate,
    pub slack: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Build the rate inputs for a homogeneous client set started at `x0`:
/// B and D from the averaged objective, H/Q/sigma from declared constants,
/// G from the caller (the averaged gradient is unbounded on the whole
/// line, so the caller decides the relevant radius).
pub fn rate_inputs_from_clients(
    clients: &[ClientObjective],
    x0: f64,
    g: f64,
    m: u64,
    k: u64,
    r: u64,
) -> Result<RateInputs> {
    if clients.is_empty() {
        return Err(Error::invalid("need at least one client"));
    }
    let x_star = average_optimum(clients);
    let b = average_value(clients, x0) - average_value(clients, x_star);
    let h = clients
        .iter()
        .map(|c| c.objective.constants().h)
        .fold(0.0f64, f64::max);
    let q = clients
        .iter()
        .map(|c| c.objective.constants().q.unwrap_or(f64::INFINITY))
        .fold(0.0f64, f64::max);
    let sigma = clients
        .iter()
        .map(|c| c.objective.constants().sigma)
        .fold(0.0f64, f64::max);
    Ok(RateInputs {
        h,
        sigma,
        q,
        g,
        d: (x0 - x_star).abs(),
        b,
        zeta_star: 0.0,
        zeta: 0.0,
        m,
        k,
        r,
    })
}

/// Run the averaging loop at the prescribed step size, measure
/// E||F'(x-hat)||^2 at a uniformly sampled (round, local step) shadow
/// average, and check it against `slack` times the evaluated bound.
#[allow(clippy::too_many_arguments)]
pub fn verify_upper(
    clients: &[ClientObjective],
    inputs: &RateInputs,
    x0: f64,
    n: u64,
    seed: u64,
    which: WhichBound,
    slack: f64,
    workers: usize,
) -> Result<VerifyReport> {
    // Assumption gate: the third-order prescriptions need a declared
    // (finite) third-order constant on every client objective.
    if matches!(which, WhichBound::Convex3o | WhichBound::Nonconvex3o) {
        for c in clients {
            if c.objective.constants().q.is_none() {
                return Err(Error::invalid(
                    "third-order bound requested but the objective declares no third-order constant",
                ));
            }
        }
    }
    if !inputs.q.is_finite() && matches!(which, WhichBound::Convex3o | WhichBound::Nonconvex3o) {
        return Err(Error::invalid(
            "inputs.q must be finite for third-order bounds",
        ));
    }
    let (eta, report) = match which {
        WhichBound::Convex3o => stepsize_and_rate_convex_3o(inputs)?,
        WhichBound::Nonconvex3o => stepsize_and_rate_nonconvex_3o(inputs)?,
        WhichBound::Nonconvex2o => stepsize_and_rate_nonconvex_2o(inputs)?,
    };
    let cfg = FedAvgConfig::new(eta, inputs.k, inputs.r, inputs.m, x0, n, seed)?;
    let measured = fedavg_error(clients, &cfg, n, 71, ErrorMetric::GradSq, workers)?;
    let threshold = slack * report.total;
    Ok(VerifyReport {
        which,
        eta,
        report,
        measured,
        slack,
        threshold,
        pass: measured.mean <= threshold,
    })
}
