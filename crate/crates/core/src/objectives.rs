//! Scalar stochastic objectives with exact derivatives and noise samplers.
//!
//! Each objective bundle exposes the mean value F, its first three
//! derivatives in closed form, declared smoothness constants, and a noise
//! model for the stochastic gradient f'(x; xi) = F'(x) + xi. Bundles are
//! immutable after construction and hold no RNG state: samplers take the
//! noise draw as an argument, so they are safely shareable across workers.

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{normal_inv_cdf, u64_to_open01};

/// Declared constants of an objective: smoothness `h`, third-order
/// smoothness `q` (`None` means unbounded), noise scale `sigma`, and the
/// optimum of the mean objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub h: f64,
    pub q: Option<f64>,
    pub sigma: f64,
    pub x_star: f64,
}

/// Additive gradient-noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Uniform { sigma: f64 },
    PointMass { value: f64 },
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::Uniform { sigma } => sigma * sigma / 3.0,
            NoiseModel::PointMass { .. } => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Declared noise scale: the bound sigma appearing in the objective's
    /// constants (equals the std dev for Gaussian, the support half-width
    /// for Uniform).
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } | NoiseModel::Uniform { sigma } => sigma,
            NoiseModel::PointMass { .. } => 0.0,
        }
    }

    /// True when xi and -xi are identically distributed, which is what
    /// antithetic pairing requires.
    pub fn is_sign_symmetric(&self) -> bool {
        match *self {
            NoiseModel::Gaussian { .. } | NoiseModel::Uniform { .. } => true,
            NoiseModel::PointMass { value } => value == 0.0,
        }
    }

    /// Map one raw 64-bit draw to a noise realization.
    #[inline(always)]
    pub fn sample(&self, raw: u64) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    sigma * normal_inv_cdf(u64_to_open01(raw))
                }
            }
            NoiseModel::Uniform { sigma } => sigma * (2.0 * u64_to_open01(raw) - 1.0),
            NoiseModel::PointMass { value } => value,
        }
    }
}

/// Which noise family the log-cosh instance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

/// log(cosh(x)) evaluated without overflow: for |x| > 20 use
/// |x| - log 2 + log1p(e^{-2|x|}) (cosh itself overflows near |x| ~ 710).
pub fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 20.0 {
        ax - std::f64::consts::LN_2 + (-2.0 * ax).exp().ln_1p()
    } else {
        ax.cosh().ln()
    }
}

/// phi(t) = integral of log cosh from 0 to t. Odd in t; evaluated by
/// adaptive Gauss-Legendre quadrature to 1e-12 absolute, with the analytic
/// asymptote taking over past |t| = 30 where log cosh(s) = s - log 2 up to
/// e^{-60} corrections.
fn phi(t: f64) -> f64 {
    let a = t.abs();
    let v = if a <= 30.0 {
        quadrature::integrate(log_cosh, 0.0, a, 1e-12)
    } else {
        let base = quadrature::integrate(log_cosh, 0.0, 30.0, 1e-12);
        base + 0.5 * (a * a - 900.0) - std::f64::consts::LN_2 * (a - 30.0)
    };
    if t < 0.0 {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    /// F(x) = 1/2 h_right x^2 for x >= 0, 1/2 h_left x^2 for x < 0.
    /// C^1 at the kink; F''(0) reported as h_right by convention.
    PiecewiseQuadratic { h_right: f64, h_left: f64 },
    /// F(x) = 3/8 h x^2 + h^3/(64 q^2) phi(4qx/h); F''' peaks at q.
    /// `q` may be negative (mirrored instance, used in symmetry checks).
    LogCosh { h: f64, q: f64 },
    /// F(x) = 1/2 l x^2.
    Quadratic { l: f64 },
    /// F(x) = 1/2 c (x - opt)^2; gradient c x - c opt. Deterministic
    /// building block of the heterogeneous pair.
    ShiftedQuadratic { curvature: f64, optimum: f64 },
}

/// A scalar stochastic objective: mean value/derivatives plus a noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective1D {
    form: Form,
    noise: NoiseModel,
}

impl Objective1D {
    pub fn value(&self, x: f64) -> f64 {
        match self.form {
            Form::PiecewiseQuadratic { h_right, h_left } => {
                if x >= 0.0 {
                    0.5 * h_right * x * x
                } else {
                    0.5 * h_left * x * x
                }
            }
            Form::LogCosh { h, q } => {
                0.375 * h * x * x + h.powi(3) / (64.0 * q * q) * phi(4.0 * q * x / h)
            }
            Form::Quadratic { l } => 0.5 * l * x * x,
            Form::ShiftedQuadratic { curvature, optimum } => {
                let d = x - optimum;
                0.5 * curvature * d * d
            }
        }
    }

    #[inline(always)]
    pub fn mean_grad(&self, x: f64) -> f64 {
        match self.form {
            Form::PiecewiseQuadratic { h_right, h_left } => {
                if x >= 0.0 {
                    h_right * x
                } else {
                    h_left * x
                }
            }
            Form::LogCosh { h, q } => 0.75 * h * x + h * h / (16.0 * q) * log_cosh(4.0 * q * x / h),
            Form::Quadratic { l } => l * x,
            Form::ShiftedQuadratic { curvature, optimum } => curvature * (x - optimum),
        }
    }

    /// Stochastic gradient f'(x; xi) = F'(x) + xi with the provided noise
    /// realization.
    #[inline(always)]
    pub fn stoch_grad(&self, x: f64, noise: f64) -> f64 {
        self.mean_grad(x) + noise
    }

    pub fn hess(&self, x: f64) -> f64 {
        match self.form {
            Form::PiecewiseQuadratic { h_right, h_left } => {
                if x >= 0.0 {
                    h_right
                } else {
                    h_left
                }
            }
            Form::LogCosh { h, q } => 0.75 * h + 0.25 * h * (4.0 * q * x / h).tanh(),
            Form::Quadratic { l } => l,
            Form::ShiftedQuadratic { curvature, .. } => curvature,
        }
    }

    /// Third derivative of the mean objective. Zero almost everywhere for
    /// the piecewise quadratic (undefined at the kink, never consumed by
    /// any algorithm here).
    pub fn third(&self, x: f64) -> f64 {
        match self.form {
            Form::PiecewiseQuadratic { .. } | Form::Quadratic { .. } => 0.0,
            Form::ShiftedQuadratic { .. } => 0.0,
            Form::LogCosh { h, q } => {
                let c = (4.0 * q * x / h).cosh();
                q / (c * c)
            }
        }
    }

    pub fn constants(&self) -> Constants {
        let sigma = self.noise.scale();
        match self.form {
            Form::PiecewiseQuadratic { h_right, h_left } => Constants {
                h: h_right.max(h_left),
                q: None,
                sigma,
                x_star: 0.0,
            },
            Form::LogCosh { h, q } => Constants {
                h,
                q: Some(q.abs()),
                sigma,
                x_star: 0.0,
            },
            Form::Quadratic { l } => Constants {
                h: l,
                q: Some(0.0),
                sigma,
                x_star: 0.0,
            },
            Form::ShiftedQuadratic { curvature, optimum } => Constants {
                h: curvature,
                q: Some(0.0),
                sigma,
                x_star: optimum,
            },
        }
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn optimum(&self) -> f64 {
        self.constants().x_star
    }
}

/// Two-curvature convex objective with a kink at zero and Gaussian
/// gradient noise. Subsumes both the equal-ratio worst-case instance
/// (h_left = h_right / 2) and steeper density-illustration variants.
pub fn make_piecewise_quadratic(h_right: f64, h_left: f64, sigma: f64) -> Result<Objective1D> {
    if !(h_right > 0.0) || !(h_left > 0.0) {
        return Err(Error::invalid(format!(
            "piecewise curvatures must be positive (got h_right={h_right}, h_left={h_left})"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0 (got {sigma})")));
    }
    Ok(Objective1D {
        form: Form::PiecewiseQuadratic { h_right, h_left },
        noise: NoiseModel::Gaussian { sigma },
    })
}

/// Smooth instance built from phi(x) = integral of log cosh: curvature
/// varies in [h/2, h] and the third derivative peaks at q (attained at the
/// optimum x = 0).
pub fn make_logcosh_instance(h: f64, q: f64, sigma: f64, kind: NoiseKind) -> Result<Objective1D> {
    if !(h > 0.0) || !(q > 0.0) {
        return Err(Error::invalid(format!(
            "logcosh requires h > 0 and q > 0 (got h={h}, q={q})"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0 (got {sigma})")));
    }
    let noise = match kind {
        NoiseKind::Gaussian => NoiseModel::Gaussian { sigma },
        NoiseKind::Uniform => NoiseModel::Uniform { sigma },
    };
    Ok(Objective1D {
        form: Form::LogCosh { h, q },
        noise,
    })
}

/// Mirror image of the log-cosh instance: F'''(0) = -q. Exists for
/// symmetry checks of third-order predictions.
pub fn make_logcosh_mirrored(h: f64, q: f64, sigma: f64, kind: NoiseKind) -> Result<Objective1D> {
    let mut obj = make_logcosh_instance(h, q, sigma, kind)?;
    if let Form::LogCosh { q, .. } = &mut obj.form {
        *q = -*q;
    }
    Ok(obj)
}

/// F(x) = 1/2 L x^2 with Gaussian gradient noise: F'(x) = Lx, stochastic
/// gradient Lx + xi.
pub fn make_quadratic(l: f64, sigma: f64) -> Result<Objective1D> {
    if !(l > 0.0) {
        return Err(Error::invalid(format!(
            "curvature must be positive (got {l})"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0 (got {sigma})")));
    }
    Ok(Objective1D {
        form: Form::Quadratic { l },
        noise: NoiseModel::Gaussian { sigma },
    })
}

/// An objective assigned to one client, tagged so RNG streams travel with
/// client identity under permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientObjective {
    pub objective: Objective1D,
    pub client_tag: u64,
}

impl ClientObjective {
    pub fn noise(&self) -> NoiseModel {
        self.objective.noise()
    }
}

/// Deterministic two-client pair: client 0 follows x <- x(1 - eta h) + eta zeta,
/// client 1 follows x <- x(1 - eta mu) - eta zeta with mu = h/2. The mean
/// gradients are h x - zeta and mu x + zeta, so the averaged objective has
/// its optimum at 0 and the gradient-heterogeneity at 0 equals zeta^2.
pub fn make_hetero_pair(h: f64, zeta_star: f64) -> Result<[ClientObjective; 2]> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("h must be positive (got {h})")));
    }
    if !(zeta_star >= 0.0) {
        return Err(Error::invalid(format!(
            "zeta_star must be >= 0 (got {zeta_star})"
        )));
    }
    let mu = 0.5 * h;
    let steep = Objective1D {
        form: Form::ShiftedQuadratic {
            curvature: h,
            optimum: zeta_star / h,
        },
        noise: NoiseModel::PointMass { value: 0.0 },
    };
    let flat = Objective1D {
        form: Form::ShiftedQuadratic {
            curvature: mu,
            optimum: -zeta_star / mu,
        },
        noise: NoiseModel::PointMass { value: 0.0 },
    };
    Ok([
        ClientObjective {
            objective: steep,
            client_tag: 0,
        },
        ClientObjective {
            objective: flat,
            client_tag: 1,
        },
    ])
}

/// Mean gradient heterogeneity (1/M) sum_m F_m'(x)^2 at a reference point.
pub fn hetero_measure(clients: &[ClientObjective], x: f64) -> f64 {
    let m = clients.len() as f64;
    clients
        .iter()
        .map(|c| {
            let g = c.objective.mean_grad(x);
            g * g
        })
        .sum::<f64>()
        / m
}

/// Independent per-coordinate objectives; value is the sum, gradient the
/// per-coordinate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeObjective {
    pub coords: Vec<Objective1D>,
}

impl CompositeObjective {
    pub fn value(&self, xs: &[f64]) -> f64 {
        assert_eq!(xs.len(), self.coords.len());
        self.coords.iter().zip(xs).map(|(c, &x)| c.value(x)).sum()
    }

    pub fn grad(&self, xs: &[f64]) -> Vec<f64> {
        assert_eq!(xs.len(), self.coords.len());
        self.coords
            .iter()
            .zip(xs)
            .map(|(c, &x)| c.mean_grad(x))
            .collect()
    }
}

/// Curvature of the slightly convex coordinate in the three-part
/// worst-case construction, as a function of the problem scales:
/// mu = (1/D^2) max( min(sigma D / sqrt(KR), sigma^{2/3} H^{1/3} D^{4/3} / (K^{1/3} R^{2/3})),
///                   zeta^{2/3} H^{1/3} D^{4/3} / R^{2/3},
///                   H D^2 / (K R) ).
pub fn lower_bound_mu(h: f64, sigma: f64, zeta_star: f64, d: f64, k: u64, r: u64) -> f64 {
    let (kf, rf) = (k as f64, r as f64);
    let noise_term = if sigma > 0.0 {
        (sigma * d / (kf * rf).sqrt()).min(
            sigma.powf(2.0 / 3.0) * h.powf(1.0 / 3.0) * d.powf(4.0 / 3.0)
                / (kf.powf(1.0 / 3.0) * rf.powf(2.0 / 3.0)),
        )
    } else {
        0.0
    };
    let hetero_term =
        zeta_star.powf(2.0 / 3.0) * h.powf(1.0 / 3.0) * d.powf(4.0 / 3.0) / rf.powf(2.0 / 3.0);
    let det_term = h * d * d / (kf * rf);
    noise_term.max(hetero_term).max(det_term) / (d * d)
}

/// The full three-coordinate worst-case instance, per client.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    /// Per-client composites; one entry when zeta_star = 0 (all clients
    /// share the same distribution).
    pub clients: Vec<CompositeObjective>,
    pub x0: [f64; 3],
    pub l: f64,
    pub mu: f64,
}

/// Assemble the three-coordinate construction: a noisy two-curvature
/// coordinate with curvatures (L, L/2), a noiseless slightly convex
/// coordinate mu x^2, and either a noiseless steep coordinate H x^2
/// (zeta_star = 0) or the deterministic heterogeneous pair.
pub fn make_lowerbound_composite(
    h: f64,
    mu: f64,
    sigma: f64,
    zeta_star: f64,
    d: f64,
    l: Option<f64>,
) -> Result<LowerBoundInstance> {
    if !(h > 0.0) || !(d > 0.0) {
        return Err(Error::invalid(format!(
            "need h > 0, d > 0 (got h={h}, d={d})"
        )));
    }
    if !(mu > 0.0 && mu <= h) {
        return Err(Error::invalid(format!(
            "need 0 < mu <= h (got mu={mu}, h={h})"
        )));
    }
    if !(sigma >= 0.0) || !(zeta_star >= 0.0) {
        return Err(Error::invalid("sigma and zeta_star must be >= 0"));
    }
    let l = l.unwrap_or(h / 12.0);
    let noisy = make_piecewise_quadratic(l, 0.5 * l, sigma)?;
    // mu x^2 and H x^2 have curvatures 2 mu and 2 H in the 1/2 c x^2 form.
    let slight = make_quadratic(2.0 * mu, 0.0)?;
    let x0 = [0.0, 0.5 * d, 0.5 * d];
    let clients = if zeta_star == 0.0 {
        let steep = make_quadratic(2.0 * h, 0.0)?;
        vec![CompositeObjective {
            coords: vec![noisy, slight, steep],
        }]
    } else {
        make_hetero_pair(h, zeta_star)?
            .into_iter()
            .map(|c| CompositeObjective {
                coords: vec![noisy, slight, c.objective],
            })
            .collect()
    };
    Ok(LowerBoundInstance { clients, x0, l, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn fd_grid() -> Vec<f64> {
        let mut g = Vec::new();
        let mut x = -10.0;
        while x <= 10.0 {
            g.push(x);
            x += 0.37;
        }
        g
    }

    #[test]
    fn piecewise_direct_evaluation() {
        let obj = make_piecewise_quadratic(1.0, 0.5, 1.0).unwrap();
        assert_eq!(obj.mean_grad(2.0), 2.0);
        assert_eq!(obj.mean_grad(-2.0), -1.0);
        assert_eq!(obj.mean_grad(0.0), 0.0);
        assert_eq!(obj.hess(0.0), 1.0); // reported as h_right by convention
        let c = obj.constants();
        assert_eq!(c.h, 1.0);
        assert_eq!(c.q, None);
        assert_eq!(c.x_star, 0.0);
    }

    #[test]
    fn piecewise_density_figure_instance() {
        // F(x) = x^2 for x >= 0, x^2/10 for x < 0, noise N(0, 0.01).
        let obj = make_piecewise_quadratic(2.0, 0.2, 0.1).unwrap();
        assert_eq!(obj.value(3.0), 9.0);
        assert!((obj.value(-3.0) - 0.9).abs() < 1e-15);
        assert!((obj.noise().variance() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn piecewise_rejects_bad_parameters() {
        assert!(make_piecewise_quadratic(0.0, 1.0, 1.0).is_err());
        assert!(make_piecewise_quadratic(1.0, -0.5, 1.0).is_err());
    }

    #[test]
    fn logcosh_derivatives_at_zero_and_limits() {
        let obj = make_logcosh_instance(1.0, 0.5, 1.0, NoiseKind::Gaussian).unwrap();
        assert!((obj.third(0.0) - 0.5).abs() < 1e-14);
        assert!((obj.hess(0.0) - 0.75).abs() < 1e-14);
        assert!((obj.hess(1e6) - 1.0).abs() < 1e-9);
        assert!((obj.hess(-1e6) - 0.5).abs() < 1e-9);
        assert_eq!(obj.value(0.0), 0.0);
        assert_eq!(obj.mean_grad(0.0), 0.0);
        // F''' >= q/2 on |x| <= h/(8q) = 0.25
        let mut x = -0.25;
        while x <= 0.25 {
            assert!(
                obj.third(x) >= 0.25 - 1e-12,
                "third({x}) = {}",
                obj.third(x)
            );
            x += 0.01;
        }
    }

    #[test]
    fn logcosh_mirrored_negates_odd_part() {
        let a = make_logcosh_instance(1.0, 0.5, 1.0, NoiseKind::Gaussian).unwrap();
        let b = make_logcosh_mirrored(1.0, 0.5, 1.0, NoiseKind::Gaussian).unwrap();
        for x in [-1.3, -0.2, 0.0, 0.4, 2.1] {
            assert!((a.value(x) - b.value(-x)).abs() < 1e-12);
            assert!((a.mean_grad(x) + b.mean_grad(-x)).abs() < 1e-12);
            assert!((a.third(x) + b.third(x)).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn quadratic_noiseless_step() {
        let obj = make_quadratic(1.0, 0.0).unwrap();
        let x = 1.0 - 0.5 * obj.mean_grad(1.0);
        assert_eq!(x, 0.5);
    }

    #[test]
    fn hetero_pair_fixed_points_and_measure() {
        let pair = make_hetero_pair(1.0, 1.0).unwrap();
        // fixed points: zeta/h = 1 and -zeta/mu = -2
        assert!((pair[0].objective.optimum() - 1.0).abs() < 1e-15);
        assert!((pair[1].objective.optimum() + 2.0).abs() < 1e-15);
        // heterogeneity at the shared optimum 0
        assert!((hetero_measure(&pair, 0.0) - 1.0).abs() < 1e-12);
        // zeta = 0 degenerates to noiseless quadratics with optimum 0
        let pair0 = make_hetero_pair(1.0, 0.0).unwrap();
        for c in &pair0 {
            assert_eq!(c.objective.optimum(), 0.0);
            assert_eq!(c.objective.mean_grad(0.0), 0.0);
        }
        assert_eq!(hetero_measure(&pair0, 0.0), 0.0);
    }

    #[test]
    fn lower_bound_mu_arithmetic() {
        // H=1, D=1, sigma=1, zeta=0, K=R=4: max(min(1/4, 1/4), 0, 1/16) = 1/4
        let mu = lower_bound_mu(1.0, 1.0, 0.0, 1.0, 4, 4);
        assert!((mu - 0.25).abs() < 1e-15, "mu = {mu}");
    }

    #[test]
    fn composite_construction() {
        let inst = make_lowerbound_composite(1.0, 0.25, 1.0, 0.0, 1.0, None).unwrap();
        assert_eq!(
            inst.clients.len(),
            1,
            "homogeneous case shares one distribution"
        );
        assert!((inst.l - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(inst.x0, [0.0, 0.5, 0.5]);
        // GD on coordinate 2 (mu x^2, mu=1 here) contracts by (1 - 2 eta mu).
        let inst2 = make_lowerbound_composite(1.0, 1.0, 0.0, 0.0, 1.0, None).unwrap();
        let f2 = &inst2.clients[0].coords[1];
        let mut x = 0.5;
        for _ in 0..2 {
            x -= 0.1 * f2.mean_grad(x);
        }
        assert!((x - 0.32).abs() < 1e-15);
        assert!((f2.value(x) - 0.32 * 0.32).abs() < 1e-15);

        let hetero = make_lowerbound_composite(1.0, 0.25, 1.0, 1.0, 1.0, None).unwrap();
        assert_eq!(hetero.clients.len(), 2);
        assert!(make_lowerbound_composite(1.0, 2.0, 1.0, 0.0, 1.0, None).is_err());
    }

    #[test]
    fn composite_value_and_grad_are_coordinatewise() {
        let inst = make_lowerbound_composite(1.0, 0.5, 1.0, 0.0, 2.0, None).unwrap();
        let comp = &inst.clients[0];
        let xs = [0.3, -0.7, 1.1];
        let v: f64 = comp.coords.iter().zip(xs).map(|(c, x)| c.value(x)).sum();
        assert_eq!(comp.value(&xs), v);
        let g = comp.grad(&xs);
        for (i, c) in comp.coords.iter().enumerate() {
            assert_eq!(g[i], c.mean_grad(xs[i]));
        }
    }

    #[test]
    fn noise_model_variances() {
        assert_eq!(NoiseModel::Gaussian { sigma: 2.0 }.variance(), 4.0);
        assert!((NoiseModel::Uniform { sigma: 2.0 }.variance() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(NoiseModel::PointMass { value: 3.0 }.variance(), 0.0);
    }

    #[test]
    fn noise_centering_and_empirical_variance() {
        let n = 1_000_000u64;
        for noise in [
            NoiseModel::Gaussian { sigma: 1.0 },
            NoiseModel::Uniform { sigma: 1.0 },
        ] {
            let stream = StreamKey::new(7, 77).stream_id();
            let (mut sum, mut sq) = (0.0, 0.0);
            for i in 0..n {
                let xi = noise.sample(crate::rng::draw_from_stream(stream, i));
                sum += xi;
                sq += xi * xi;
            }
            let mean = sum / n as f64;
            let var = sq / n as f64 - mean * mean;
            let se = (noise.variance() / n as f64).sqrt();
            assert!(mean.abs() < 4.0 * se, "{noise:?}: mean {mean}");
            assert!(
                (var / noise.variance() - 1.0).abs() < 0.02,
                "{noise:?}: var {var}"
            );
        }
    }

    #[test]
    fn derivative_consistency_by_finite_differences() {
        let objs: Vec<Objective1D> = vec![
            make_piecewise_quadratic(1.0, 0.5, 1.0).unwrap(),
            make_piecewise_quadratic(2.0, 0.2, 0.1).unwrap(),
            make_logcosh_instance(1.0, 0.5, 1.0, NoiseKind::Gaussian).unwrap(),
            make_logcosh_instance(2.0, 0.1, 1.0, NoiseKind::Uniform).unwrap(),
            make_quadratic(1.5, 1.0).unwrap(),
            make_hetero_pair(1.0, 1.0).unwrap()[0].objective,
            make_hetero_pair(1.0, 1.0).unwrap()[1].objective,
        ];
        for obj in &objs {
            let kinked = obj.constants().q.is_none();
            for &x in &fd_grid() {
                let h1 = 1e-5 * (1.0 + x.abs());
                if kinked && x.abs() < 3.0 * h1 {
                    continue; // centered differences straddle the kink
                }
                let fd_grad = (obj.value(x + h1) - obj.value(x - h1)) / (2.0 * h1);
                let g = obj.mean_grad(x);
                assert!(
                    (fd_grad - g).abs() <= 1e-6 * (1.0 + g.abs()),
                    "grad mismatch at {x}: fd {fd_grad} vs {g}"
                );
                let h2 = 1e-4 * (1.0 + x.abs());
                if kinked && x.abs() < 3.0 * h2 {
                    continue;
                }
                let fd_hess = (obj.mean_grad(x + h2) - obj.mean_grad(x - h2)) / (2.0 * h2);
                let hess = obj.hess(x);
                assert!(
                    (fd_hess - hess).abs() <= 1e-5 * (1.0 + hess.abs()),
                    "hess mismatch at {x}: fd {fd_hess} vs {hess}"
                );
            }
        }
    }

    #[test]
    fn declared_constants_are_honest() {
        let objs = [
            make_piecewise_quadratic(1.0, 0.5, 1.0).unwrap(),
            make_logcosh_instance(1.0, 0.5, 1.0, NoiseKind::Gaussian).unwrap(),
            make_quadratic(2.0, 1.0).unwrap(),
        ];
        for obj in &objs {
            let c = obj.constants();
            assert!(obj.mean_grad(c.x_star).abs() <= 1e-12);
            for &x in &fd_grid() {
                assert!(obj.hess(x).abs() <= c.h + 1e-12, "hess breach at {x}");
                if let Some(q) = c.q {
                    assert!(obj.third(x).abs() <= q + 1e-12, "third breach at {x}");
                }
            }
        }
    }
}
