//! Statistical battery comparing the simulator with closed-form results.
//!
//! Each statistical tolerance is `max(stated, z·standard error)`, so small
//! trial counts widen the bounds instead of producing spurious failures.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::analytics::{aa_baseline, gamma_pdf, ks_distance, sa_baseline, second_order_approx, GammaParams};
use crate::channel::SystemConfig;
use crate::constrained::{real_equivalent, to_real};
use crate::linalg::{CMatrix, CVector};
use crate::precoding::precoder_stat;
use crate::simulation::{moments, run_trials_multi, EhCircuit, Scheme, SimOptions};

const Z: f64 = 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Battery {
    scale: f64,
    results: Vec<CheckResult>,
}

impl Battery {
    /// Records `|observed − expected| ≤ tolerance·scale`.
    fn within(&mut self, name: &str, observed: f64, expected: f64, tolerance: f64) {
        let limit = tolerance * self.scale;
        let gap = (observed - expected).abs();
        self.results.push(CheckResult {
            name: name.into(),
            passed: gap <= limit,
            detail: format!("observed {observed:.6e}, expected {expected:.6e}, |gap| {gap:.3e} <= {limit:.3e}"),
        });
    }

    fn relative(&mut self, name: &str, observed: f64, expected: f64, tolerance: f64) {
        self.within(name, observed / expected, 1.0, tolerance);
    }

    fn at_most(&mut self, name: &str, observed: f64, limit: f64) {
        let limit = limit * self.scale;
        self.results.push(CheckResult {
            name: name.into(),
            passed: observed <= limit,
            detail: format!("{observed:.4e} <= {limit:.4e}"),
        });
    }
}

fn mean_tolerance(stated: f64, g: &GammaParams, n: usize) -> f64 {
    stated.max(Z / (g.shape.sqrt() * (n as f64).sqrt()))
}

fn variance_tolerance(stated: f64, g: &GammaParams, n: usize) -> f64 {
    stated.max(Z * ((2.0 + 6.0 / g.shape) / n as f64).sqrt())
}

fn ks_tolerance(stated: f64, n: usize) -> f64 {
    stated.max(1.95 / (n as f64).sqrt())
}

fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * std::f64::consts::FRAC_1_SQRT_2
}

/// Runs every check; `tolerance_scale` multiplies all bounds (1 = nominal).
pub fn run_selfcheck(trials: u64, seed: u64, tolerance_scale: f64) -> crate::Result<Vec<CheckResult>> {
    let mut b = Battery { scale: tolerance_scale, results: Vec::new() };
    let n = trials.max(2) as usize;

    // Equal-power and switched-antenna sum power under i.i.d. Rayleigh fading.
    let mut config = SystemConfig::iid_rayleigh(8, 8, 1);
    config.master_seed = seed;
    let runs =
        run_trials_multi(&config, &EhCircuit::default(), &[Scheme::Aa, Scheme::Sa], n as u64, &SimOptions::default())?;
    for (records, law, tag) in [(&runs[0], aa_baseline(8, 1, 1.0)?, "aa"), (&runs[1], sa_baseline(8, 8, 1, 1.0)?, "sa")]
    {
        let samples: Vec<f64> = records.iter().map(|r| r.sum_power_rf).collect();
        let m = moments(&samples)?;
        b.relative(&format!("{tag}_gamma_mean"), m.mean, law.mean(), mean_tolerance(0.02, &law, n));
        b.relative(&format!("{tag}_gamma_variance"), m.variance, law.variance(), variance_tolerance(0.10, &law, n));
        b.at_most(&format!("{tag}_gamma_ks"), ks_distance(&samples, |x| law.cdf(x)), ks_tolerance(0.02, n));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);

    // |Y|² of a unit complex Gaussian is exponential.
    let power: Vec<f64> = (0..n).map(|_| complex_normal(&mut rng).norm_sqr()).collect();
    let exp1 = GammaParams::new(1.0, 1.0)?;
    b.at_most("squared_gaussian_exponential_ks", ks_distance(&power, |x| exp1.cdf(x)), ks_tolerance(0.02, n));

    // Sums of exponentials are Gamma.
    let terms = 6;
    let sums: Vec<f64> = (0..n).map(|_| (0..terms).map(|_| -> f64 { Exp1.sample(&mut rng) }).sum()).collect();
    let m = moments(&sums)?;
    let law = GammaParams::new(terms as f64, 1.0)?;
    let se = 3.0 / (n as f64).sqrt();
    b.relative("exponential_sum_mean", m.mean, law.mean(), se);
    b.relative("exponential_sum_variance", m.variance, law.variance(), variance_tolerance(se, &law, n));

    // Scaling a Gamma variable scales its scale parameter.
    let base = GammaParams::new(3.0, 2.0)?;
    let a = 0.7;
    let scaled = GammaParams::new(3.0, 2.0 * a)?;
    let worst = [0.1, 0.5, 1.0, 3.0, 9.0].iter().try_fold(0.0_f64, |w, &x| -> crate::Result<f64> {
        let lhs = gamma_pdf(x, scaled)?;
        let rhs = gamma_pdf(x / a, base)? / a;
        Ok(w.max((lhs - rhs).abs() / rhs))
    })?;
    b.at_most("gamma_scaling_density", worst, 1e-12);

    // Moment matching preserves the first two moments.
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let terms: Vec<GammaParams> = (0..rng.random_range(1..8))
            .map(|_| GammaParams::new(rng.random_range(0.1..50.0), rng.random_range(1e-3..10.0)))
            .collect::<crate::Result<_>>()?;
        let y = second_order_approx(&terms)?;
        let mean: f64 = terms.iter().map(GammaParams::mean).sum();
        let var: f64 = terms.iter().map(GammaParams::variance).sum();
        worst = worst.max((y.mean() / mean - 1.0).abs()).max((y.variance() / var - 1.0).abs());
    }
    b.at_most("second_order_moment_preservation", worst, 1e-12);

    // Real-equivalent norm identity.
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (p, m) = (rng.random_range(1..12), rng.random_range(1..12));
        let a = CMatrix::from_fn(p, m, |_, _| complex_normal(&mut rng));
        let x = CVector::from_fn(m, |_, _| complex_normal(&mut rng));
        let lhs = (&a * &x).norm_squared();
        let rhs = (real_equivalent(&a) * to_real(&x)).norm_squared();
        worst = worst.max((lhs - rhs).abs() / lhs);
    }
    b.at_most("real_equivalent_identity", worst, 1e-12);

    // The SVD precoder beats random feasible beams.
    let mut violations = 0usize;
    let probes = n.clamp(100, 10_000);
    for _ in 0..20 {
        let a = CMatrix::from_fn(rng.random_range(1..=48), 8, |_, _| complex_normal(&mut rng));
        let best = (&a * precoder_stat(&a, 1.0)?.x).norm_squared();
        for _ in 0..probes {
            let v = CVector::from_fn(8, |_, _| complex_normal(&mut rng));
            let v = &v / Complex64::from(v.norm());
            if (&a * v).norm_squared() >= best {
                violations += 1;
            }
        }
    }
    b.at_most("svd_beats_random_beams", violations as f64, 0.0);

    Ok(b.results)
}
