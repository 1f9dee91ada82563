//! Shared test support: a deterministic density-evolution oracle.
//!
//! The density of the scalar chain x <- x - drift(x) - noise is evolved on
//! a uniform grid: the drift remaps mass with linear interpolation, the
//! additive Gaussian noise convolves with an exact kernel. This computes
//! E[x^(k)] by quadrature, with no Monte Carlo and no dependence on the
//! crate's samplers, so it serves as an independent ground truth for the
//! bias estimators and the SDE mean.

pub struct DensityOracle {
    xs: Vec<f64>,
    p: Vec<f64>,
    dx: f64,
    kernel: Vec<f64>,
}

impl DensityOracle {
    /// Start from a point mass at 0 on the grid [-half_width, half_width]
    /// with `n` points; per-step noise is N(0, noise_sd^2).
    pub fn new(half_width: f64, n: usize, noise_sd: f64) -> Self {
        assert!(n % 2 == 1, "odd grid so that 0 is a node");
        let dx = 2.0 * half_width / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| -half_width + i as f64 * dx).collect();
        let mut p = vec![0.0; n];
        p[n / 2] = 1.0 / dx;
        let half = (8.0 * noise_sd / dx).ceil() as i64;
        let mut kernel: Vec<f64> = (-half..=half)
            .map(|j| (-0.5 * (j as f64 * dx / noise_sd).powi(2)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        for k in kernel.iter_mut() {
            *k /= norm;
        }
        DensityOracle { xs, p, dx, kernel }
    }

    /// One step of x <- x - drift(x), then noise convolution.
    pub fn step<F: Fn(f64) -> f64>(&mut self, drift: F) {
        let n = self.xs.len();
        let lo = self.xs[0];
        let mut moved = vec![0.0f64; n];
        for i in 0..n {
            let mass = self.p[i] * self.dx;
            if mass == 0.0 {
                continue;
            }
            let y = self.xs[i] - drift(self.xs[i]);
            let pos = (y - lo) / self.dx;
            let idx = pos.floor() as i64;
            let frac = pos - idx as f64;
            let i0 = idx.clamp(0, n as i64 - 1) as usize;
            let i1 = (idx + 1).clamp(0, n as i64 - 1) as usize;
            moved[i0] += mass * (1.0 - frac);
            moved[i1] += mass * frac;
        }
        let half = (self.kernel.len() / 2) as i64;
        let mut out = vec![0.0f64; n];
        for (i, &m) in moved.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (j, &kw) in self.kernel.iter().enumerate() {
                let t = i as i64 + j as i64 - half;
                if t >= 0 && (t as usize) < n {
                    out[t as usize] += m * kw;
                }
            }
        }
        for (pi, &o) in self.p.iter_mut().zip(&out) {
            *pi = o / self.dx;
        }
    }

    pub fn mean(&self) -> f64 {
        self.xs
            .iter()
            .zip(&self.p)
            .map(|(&x, &pv)| x * pv * self.dx)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.p.iter().map(|&pv| pv * self.dx).sum()
    }

    pub fn p_values(&self) -> &[f64] {
        &self.p
    }
}

/// E[x^(k)] of SGD (step size eta, additive Gaussian gradient noise of
/// standard deviation sigma) started at 0, at each requested k.
pub fn sgd_mean_by_quadrature<F: Fn(f64) -> f64 + Copy>(
    mean_grad: F,
    eta: f64,
    sigma: f64,
    ks: &[u64],
    half_width: f64,
    n: usize,
) -> Vec<f64> {
    let mut oracle = DensityOracle::new(half_width, n, eta * sigma);
    let mut out = Vec::with_capacity(ks.len());
    let mut done = 0u64;
    for &k in ks {
        while done < k {
            oracle.step(|x| eta * mean_grad(x));
            done += 1;
        }
        assert!(
            (oracle.total_mass() - 1.0).abs() < 1e-6,
            "mass leaked: {}",
            oracle.total_mass()
        );
        out.push(oracle.mean());
    }
    out
}
