//! Cross-checks of the Monte-Carlo estimators against an independent
//! density-evolution quadrature, including the decisive numerical test of
//! the mean-equation diffusion-coefficient convention.

mod common;

use common::{sgd_mean_by_quadrature, DensityOracle};
use localsgd_lab::estimators::{estimate_bias, BiasMode};
use localsgd_lab::objectives::{make_logcosh_instance, make_piecewise_quadratic, NoiseKind};
use localsgd_lab::sde::check_backward_expansion;

#[test]
fn bias_estimator_matches_quadrature_on_kinked_objective() {
    let (eta, sigma) = (0.05, 1.0);
    let obj = make_piecewise_quadratic(1.0, 0.5, sigma).unwrap();
    let ks = [5u64, 10, 20];
    let want = sgd_mean_by_quadrature(
        |x| if x >= 0.0 { x } else { 0.5 * x },
        eta,
        sigma,
        &ks,
        2.0,
        16_001,
    );
    let got = estimate_bias(
        &obj,
        0.0,
        eta,
        &ks,
        400_000,
        BiasMode::Antithetic,
        7,
        900,
        2,
    )
    .unwrap();
    for (p, w) in got.iter().zip(&want) {
        assert!(
            (p.estimate.mean - w).abs() <= 4.0 * p.estimate.stderr.max(1e-7),
            "k={}: MC {} vs quadrature {w}",
            p.k,
            p.estimate.mean
        );
    }
}

#[test]
fn bias_estimator_matches_quadrature_on_smooth_objective() {
    let (eta, sigma) = (0.1, 1.0);
    let obj = make_logcosh_instance(1.0, 0.5, sigma, NoiseKind::Gaussian).unwrap();
    let ks = [5u64, 10];
    let want = sgd_mean_by_quadrature(|x| obj.mean_grad(x), eta, sigma, &ks, 3.0, 24_001);
    let got = estimate_bias(
        &obj,
        0.0,
        eta,
        &ks,
        400_000,
        BiasMode::Antithetic,
        9,
        901,
        2,
    )
    .unwrap();
    for (p, w) in got.iter().zip(&want) {
        assert!(
            (p.estimate.mean - w).abs() <= 4.0 * p.estimate.stderr,
            "k={}: MC {} vs quadrature {w}",
            p.k,
            p.estimate.mean
        );
    }
}

/// The discrete leading-order bias constant. Expanding the one-step mean
/// map to second order gives E[x^(k)] - z^(k) = -1/4 eta^3 k(k-1) sigma^2 F'''
/// (1 + O(eta H k)); the frequently quoted shorthand -1/2 eta^3 k^2 sigma^2 F'''
/// overstates it by more than a factor of two. The quadrature arbitrates.
#[test]
fn discrete_bias_leading_constant_is_one_quarter() {
    let (eta, sigma, q, k) = (0.02, 1.0, 0.5, 10u64);
    let obj = make_logcosh_instance(1.0, q, sigma, NoiseKind::Gaussian).unwrap();
    let bias = sgd_mean_by_quadrature(|x| obj.mean_grad(x), eta, sigma, &[k], 1.5, 24_001)[0];
    let quarter = -0.25 * eta.powi(3) * (k * (k - 1)) as f64 * sigma * sigma * q;
    let half_sq = -0.5 * eta.powi(3) * (k * k) as f64 * sigma * sigma * q;
    let ratio_quarter = bias / quarter;
    assert!(
        (0.8..=1.0).contains(&ratio_quarter),
        "bias {bias} vs quarter-law {quarter} (ratio {ratio_quarter})"
    );
    assert!(
        bias.abs() < 0.5 * half_sq.abs(),
        "the k^2/2 shorthand {half_sq} overstates the true bias {bias} by more than 2x"
    );
}

/// Decisive check of the mean-equation diffusion convention: fit the
/// quadratic Taylor coefficient of E[X(t)] from (a) the crate's
/// antithetic Monte-Carlo path sampler and (b) an independent density
/// quadrature of the same integrator. Both land at u_tt = -eta sigma^2 Q / 2,
/// i.e. the diffusion term of the mean equation carries the factor 1/2;
/// the prediction without the 1/2 is twice too large.
#[test]
fn sde_mean_quadratic_coefficient_has_the_half() {
    let (eta, sigma, q, h) = (0.1, 1.0, 0.5, 1.0);
    let obj = make_logcosh_instance(h, q, sigma, NoiseKind::Gaussian).unwrap();
    let t_grid = [0.05, 0.1, 0.15, 0.2];
    let dt = 0.0025;

    // (a) Monte-Carlo fit.
    let rep = check_backward_expansion(&obj, 0.0, eta, sigma, &t_grid, 400_000, dt, 13, 2).unwrap();

    // (b) density quadrature of the same Euler scheme.
    let mut oracle = DensityOracle::new(2.0, 24_001, (eta * dt).sqrt() * sigma);
    let mut means = Vec::new();
    let mut steps_done = 0u64;
    for &t in &t_grid {
        let steps = (t / dt).round() as u64;
        while steps_done < steps {
            oracle.step(|x| dt * obj.mean_grad(x));
            steps_done += 1;
        }
        means.push(oracle.mean());
    }
    // weighted-free cubic-nuisance fit of the quadrature means
    let fit = fit_quadratic_with_cubic(&t_grid, &means);

    let with_half = -0.5 * eta * sigma * sigma * q;
    let without_half = -eta * sigma * sigma * q;
    for (label, u_tt) in [("monte carlo", rep.fitted_u_tt), ("quadrature", fit)] {
        assert!(
            (u_tt - with_half).abs() <= 0.10 * with_half.abs(),
            "{label}: fitted u_tt {u_tt} is not within 10% of {with_half}"
        );
        assert!(
            (u_tt - with_half).abs() < (u_tt - without_half).abs(),
            "{label}: fitted u_tt {u_tt} sits closer to the no-half prediction"
        );
    }
    // and the two routes agree with each other
    assert!(
        (rep.fitted_u_tt - fit).abs() <= 0.05 * fit.abs(),
        "MC {} vs quadrature {fit}",
        rep.fitted_u_tt
    );
}

/// Least squares of y = a t + (b/2) t^2 + c t^3; returns b.
fn fit_quadratic_with_cubic(ts: &[f64], ys: &[f64]) -> f64 {
    let rows: Vec<[f64; 3]> = ts.iter().map(|&t| [t, 0.5 * t * t, t * t * t]).collect();
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for (r, &y) in rows.iter().zip(ys) {
        for i in 0..3 {
            xty[i] += r[i] * y;
            for j in 0..3 {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    // Gaussian elimination, 3x3.
    let mut a = xtx;
    let mut b = xty;
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (entry, &p) in a[row].iter_mut().zip(&pivot_row) {
                *entry -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    b[1] / a[1][1]
}

/// The mean of the density quadrature for a pure quadratic matches the
/// closed-form contraction, validating the oracle itself.
#[test]
fn quadrature_oracle_self_check_on_quadratic() {
    let (eta, sigma, l) = (0.1, 1.0, 1.0);
    let means = sgd_mean_by_quadrature(|x| l * x, eta, sigma, &[3], 2.0, 16_001);
    // start at 0: mean stays 0 by symmetry
    assert!(means[0].abs() < 1e-12, "{}", means[0]);
    // variance check via a shifted start is covered by the closed form in
    // the crate; here check second moment of the evolved density directly.
    let mut oracle = DensityOracle::new(2.0, 16_001, eta * sigma);
    for _ in 0..3 {
        oracle.step(|x| eta * l * x);
    }
    let want = localsgd_lab::oracles::quad_sgd_distribution(l, sigma, eta, 0.0, 3)
        .unwrap()
        .variance;
    let mut var = 0.0;
    let dx = 4.0 / 16_000.0;
    for (i, &p) in oracle.p_values().iter().enumerate() {
        let x = -2.0 + i as f64 * dx;
        var += x * x * p * dx;
    }
    assert!((var / want - 1.0).abs() < 1e-3, "var {var} vs {want}");
}
