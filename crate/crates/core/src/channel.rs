//! Rician MIMO channel between a uniform linear array and clusters of
//! single-antenna terminals.
//!
//! Each cluster carries slow statistics (a line-of-sight matrix and a
//! transmit correlation matrix in Karhunen–Loève form) and a fast i.i.d.
//! Rayleigh term drawn per channel use:
//!
//! ```text
//! H_eff = α₁·H_los + α₂·G·diag(√Λ)·Uᴴ,   α₁ = √(βκ/(1+κ)),  α₂ = √(β/(1+κ))
//! ```
//!
//! Correlation matrices are produced in factored form `R = F·Fᴴ` with
//! `trace(R) = M`, so the KL factors come from the small Gram `FᴴF`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen_desc, CMatrix, CVector};

pub const DEFAULT_ELEMENT_SPACING: f64 = 0.5;
pub const DEFAULT_SCATTER_APERTURE_DEG: f64 = 10.0;
/// Eigenvalues below `max · KL_RANK_THRESHOLD` count as zero.
pub const KL_RANK_THRESHOLD: f64 = 1e-12;
const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// How per-cluster transmit correlation matrices are drawn.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationModel {
    /// `R ∝ W·Wᴴ` with `W` an `M × N_s` i.i.d. complex Gaussian matrix.
    #[default]
    Wishart,
    /// Finite-ray one-ring model: `N_s` plane waves uniform in the scatter
    /// aperture around the cluster direction.
    OneRing,
    /// `R = I_M`.
    Uncorrelated,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub model: CorrelationModel,
    /// Half-width of the one-ring scatter aperture, degrees.
    pub scatter_aperture_deg: f64,
    /// Number of rays / Wishart columns. Defaults to the cluster size.
    pub rank: Option<usize>,
    /// Draw the statistics once instead of per trial (debugging aid).
    pub frozen: bool,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            model: CorrelationModel::default(),
            scatter_aperture_deg: DEFAULT_SCATTER_APERTURE_DEG,
            rank: None,
            frozen: false,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub num_terminals: usize,
    /// Cluster direction measured from the array endfire, degrees.
    pub angle_deg: f64,
    /// Terminals are spread uniformly over `angle ± aperture`; 0 means all
    /// terminals share the cluster's line of sight.
    #[serde(default)]
    pub aperture_deg: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub rician_kappa: f64,
    /// Large-scale channel gain in dB (negative for loss).
    pub pathloss_db: f64,
}

impl ClusterConfig {
    pub fn new(num_terminals: usize, angle_deg: f64, rician_kappa: f64, pathloss_db: f64) -> Self {
        Self { num_terminals, angle_deg, aperture_deg: 0.0, rician_kappa, pathloss_db }
    }
}

/// Full scenario description.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub clusters: Vec<ClusterConfig>,
    pub tx_power_w: f64,
    #[serde(default)]
    pub antenna_gain_db: f64,
    /// Element spacing in wavelengths.
    #[serde(default = "default_spacing")]
    pub element_spacing: f64,
    /// Mechanical rotation of the array, degrees.
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub correlation: CorrelationConfig,
}

fn default_spacing() -> f64 {
    DEFAULT_ELEMENT_SPACING
}

impl SystemConfig {
    /// The three-cluster operating point: M = K = 8, κ = 5, clusters at
    /// 0°, 30° and 70°, 10 W through 10 dB elements over a −63.5 dB path.
    pub fn operating_point() -> Self {
        Self {
            num_antennas: 8,
            clusters: [0.0, 30.0, 70.0].iter().map(|&phi| ClusterConfig::new(8, phi, 5.0, -63.5)).collect(),
            tx_power_w: 10.0,
            antenna_gain_db: 10.0,
            element_spacing: DEFAULT_ELEMENT_SPACING,
            rotation_deg: 0.0,
            master_seed: 1,
            correlation: CorrelationConfig::default(),
        }
    }

    /// Uncorrelated Rayleigh reference: κ = 0, `R = I`, unit gains and power.
    pub fn iid_rayleigh(num_antennas: usize, num_terminals: usize, num_clusters: usize) -> Self {
        Self {
            num_antennas,
            clusters: (0..num_clusters)
                .map(|l| {
                    ClusterConfig::new(num_terminals, 180.0 * (l + 1) as f64 / (num_clusters + 1) as f64, 0.0, 0.0)
                })
                .collect(),
            tx_power_w: 1.0,
            antenna_gain_db: 0.0,
            element_spacing: DEFAULT_ELEMENT_SPACING,
            rotation_deg: 0.0,
            master_seed: 1,
            correlation: CorrelationConfig { model: CorrelationModel::Uncorrelated, ..Default::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_antennas == 0 {
            return bad("num_antennas must be at least 1".into());
        }
        if self.clusters.is_empty() {
            return bad("at least one cluster is required".into());
        }
        if self.clusters.len() > self.num_antennas {
            return bad(format!(
                "{} clusters exceed the {} available beams (need clusters <= num_antennas)",
                self.clusters.len(),
                self.num_antennas
            ));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            return bad(format!("tx_power_w must be positive, got {}", self.tx_power_w));
        }
        if !self.antenna_gain_db.is_finite() {
            return bad("antenna_gain_db must be finite".into());
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return bad(format!("element_spacing must be positive, got {}", self.element_spacing));
        }
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            return bad(format!("rotation_deg must lie in [0, 180], got {}", self.rotation_deg));
        }
        let corr = &self.correlation;
        if !(corr.scatter_aperture_deg >= 0.0 && corr.scatter_aperture_deg.is_finite()) {
            return bad("correlation.scatter_aperture_deg must be nonnegative".into());
        }
        for (l, c) in self.clusters.iter().enumerate() {
            if c.num_terminals == 0 {
                return bad(format!("clusters[{l}].num_terminals must be at least 1"));
            }
            if !(0.0..=180.0).contains(&c.angle_deg) {
                return bad(format!("clusters[{l}].angle_deg must lie in [0, 180], got {}", c.angle_deg));
            }
            if !(c.aperture_deg >= 0.0 && c.aperture_deg.is_finite()) {
                return bad(format!("clusters[{l}].aperture_deg must be nonnegative, got {}", c.aperture_deg));
            }
            if c.rician_kappa.is_nan() || c.rician_kappa < 0.0 {
                return bad(format!("clusters[{l}].rician_kappa must be nonnegative, got {}", c.rician_kappa));
            }
            if !c.pathloss_db.is_finite() {
                return bad(format!("clusters[{l}].pathloss_db must be finite"));
            }
            let rank = self.correlation_rank(l);
            if corr.model != CorrelationModel::Uncorrelated && (rank == 0 || rank > self.num_antennas) {
                return bad(format!(
                    "correlation rank {rank} for clusters[{l}] must lie in [1, num_antennas = {}]",
                    self.num_antennas
                ));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            num_antennas: self.num_antennas,
            element_spacing: self.element_spacing,
            rotation_deg: self.rotation_deg,
        }
    }

    /// Linear power gain of cluster `l` including the element gain.
    pub fn cluster_gain(&self, l: usize) -> f64 {
        db_to_linear(self.clusters[l].pathloss_db + self.antenna_gain_db)
    }

    /// Correlation rank of cluster `l`: the configured value, or else the
    /// cluster size capped at the array size.
    pub fn correlation_rank(&self, l: usize) -> usize {
        self.correlation.rank.unwrap_or_else(|| self.clusters[l].num_terminals.min(self.num_antennas))
    }

    pub fn total_terminals(&self) -> usize {
        self.clusters.iter().map(|c| c.num_terminals).sum()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Array size, spacing and mechanical rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    pub element_spacing: f64,
    pub rotation_deg: f64,
}

/// Random streams are keyed by (master seed, trial) so results do not depend
/// on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel,
    Solver,
    Frozen,
}

pub fn trial_rng(master_seed: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(match stream {
        Stream::Channel => trial.wrapping_mul(2),
        Stream::Solver => trial.wrapping_mul(2).wrapping_add(1),
        Stream::Frozen => u64::MAX,
    });
    rng
}

/// Line-of-sight and multipath amplitudes `(α₁, α₂)` for gain `β` and Rician
/// factor `κ`. `κ = ∞` is the pure line-of-sight limit.
pub fn rician_weights(beta_linear: f64, kappa: f64) -> Result<(f64, f64)> {
    if beta_linear <= 0.0 || !beta_linear.is_finite() {
        return Err(Error::Domain(format!("channel gain must be positive, got {beta_linear}")));
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(Error::Domain(format!("Rician factor must be nonnegative, got {kappa}")));
    }
    if kappa.is_infinite() {
        return Ok((beta_linear.sqrt(), 0.0));
    }
    Ok(((beta_linear * kappa / (1.0 + kappa)).sqrt(), (beta_linear / (1.0 + kappa)).sqrt()))
}

/// ULA response toward `phi_deg` (from endfire); entry `i` is
/// `exp(j·2π·i·spacing·cos φ)`.
pub fn steering_vector(phi_deg: f64, num_antennas: usize, spacing: f64) -> CVector {
    let step = 2.0 * PI * spacing * phi_deg.to_radians().cos();
    CVector::from_fn(num_antennas, |i, _| Complex64::from_polar(1.0, step * i as f64))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Line-of-sight matrix of a cluster and the angle each row points to.
pub fn los_matrix<R: Rng + ?Sized>(
    cluster: &ClusterConfig,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> (CMatrix, Vec<f64>) {
    let center = cluster.angle_deg + geometry.rotation_deg;
    let k = cluster.num_terminals;
    let angles: Vec<f64> = if cluster.aperture_deg == 0.0 {
        vec![center; k]
    } else {
        let half = cluster.aperture_deg;
        (0..k).map(|_| rng.random_range(center - half..=center + half)).collect()
    };
    let mut los = CMatrix::zeros(k, geometry.num_antennas);
    for (row, &angle) in angles.iter().enumerate() {
        let a = steering_vector(angle, geometry.num_antennas, geometry.element_spacing);
        los.row_mut(row).copy_from(&a.transpose());
    }
    (los, angles)
}

/// Draws a factor `F` (M × n) with `R = F·Fᴴ` and `trace(R) = M`.
pub fn correlation_factor<R: Rng + ?Sized>(
    model: CorrelationModel,
    center_deg: f64,
    rank_target: usize,
    scatter_aperture_deg: f64,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> Result<CMatrix> {
    let m = geometry.num_antennas;
    if model != CorrelationModel::Uncorrelated && (rank_target == 0 || rank_target > m) {
        return Err(Error::Domain(format!("correlation rank {rank_target} must lie in [1, {m}]")));
    }
    let factor = match model {
        CorrelationModel::Uncorrelated => CMatrix::identity(m, m),
        CorrelationModel::OneRing => {
            let mut f = CMatrix::zeros(m, rank_target);
            let scale = 1.0 / (rank_target as f64).sqrt();
            for j in 0..rank_target {
                let ray = if scatter_aperture_deg == 0.0 {
                    center_deg
                } else {
                    rng.random_range(center_deg - scatter_aperture_deg..=center_deg + scatter_aperture_deg)
                };
                let a = steering_vector(ray, m, geometry.element_spacing) * Complex64::from(scale);
                f.column_mut(j).copy_from(&a);
            }
            f
        }
        CorrelationModel::Wishart => {
            let mut f = CMatrix::from_fn(m, rank_target, |_, _| complex_normal(rng));
            let norm = f.norm();
            f *= Complex64::from((m as f64).sqrt() / norm);
            f
        }
    };
    Ok(factor)
}

/// One-ring transmit correlation for a cluster: `rank_target` rays uniform in
/// `angle + rotation ± scatter_aperture`, normalized to `trace(R) = M`.
pub fn sample_correlation<R: Rng + ?Sized>(
    cluster: &ClusterConfig,
    geometry: &ArrayGeometry,
    rank_target: usize,
    scatter_aperture_deg: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    let center = cluster.angle_deg + geometry.rotation_deg;
    let f = correlation_factor(CorrelationModel::OneRing, center, rank_target, scatter_aperture_deg, geometry, rng)?;
    Ok(&f * f.adjoint())
}

/// Karhunen–Loève factors `R = U·diag(Λ)·Uᴴ`, truncated to numerical rank.
#[derive(Debug, Clone)]
pub struct KlFactors {
    /// M × r, orthonormal columns.
    pub basis: CMatrix,
    /// Nonincreasing, positive.
    pub eigenvalues: Vec<f64>,
}

impl KlFactors {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let scaled = CMatrix::from_fn(self.basis.nrows(), self.rank(), |i, j| self.basis[(i, j)] * self.eigenvalues[j]);
        scaled * self.basis.adjoint()
    }
}

fn truncate(values: &[f64]) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().take_while(|&&v| v > top * KL_RANK_THRESHOLD).count()
}

pub fn kl_factors(r: &CMatrix) -> Result<KlFactors> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension(format!("correlation matrix is {}x{}", r.nrows(), r.ncols())));
    }
    if r.nrows() == 0 {
        return Err(Error::Empty);
    }
    let scale = r.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
    let defect = hermitian_defect(r);
    if defect > HERMITIAN_TOLERANCE * scale {
        return Err(Error::NotHermitian(defect));
    }
    let (values, vectors) = hermitian_eigen_desc(r);
    let rank = truncate(&values);
    if rank == 0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(KlFactors { basis: vectors.columns(0, rank).into_owned(), eigenvalues: values[..rank].to_vec() })
}

/// KL factors of `R = F·Fᴴ` from the eigen-decomposition of `FᴴF`.
pub fn kl_factors_from_factor(f: &CMatrix) -> Result<KlFactors> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::Empty);
    }
    let gram = f.adjoint() * f;
    let (values, vectors) = hermitian_eigen_desc(&gram);
    let rank = truncate(&values);
    if rank == 0 {
        return Err(Error::ZeroMatrix);
    }
    let mut basis = f * vectors.columns(0, rank);
    for (j, mut col) in basis.column_iter_mut().enumerate() {
        let n = col.norm();
        col /= Complex64::from(n);
        debug_assert!(values[j] > 0.0);
    }
    Ok(KlFactors { basis, eigenvalues: values[..rank].to_vec() })
}

/// Slow statistics of one cluster, known at the transmitter.
#[derive(Debug, Clone)]
pub struct ClusterStatistics {
    /// K × M.
    pub los: CMatrix,
    pub terminal_angles_deg: Vec<f64>,
    /// M × M, Hermitian PSD, trace M.
    pub correlation: CMatrix,
    pub kl: KlFactors,
    pub alpha_los: f64,
    pub alpha_mp: f64,
    /// `diag(√Λ)·Uᴴ`, r × M.
    pub mp_factor: CMatrix,
}

impl ClusterStatistics {
    pub fn new(
        los: CMatrix,
        terminal_angles_deg: Vec<f64>,
        correlation: CMatrix,
        kl: KlFactors,
        alpha_los: f64,
        alpha_mp: f64,
    ) -> Result<Self> {
        let m = los.ncols();
        if correlation.shape() != (m, m) || kl.basis.nrows() != m {
            return Err(Error::Dimension(format!(
                "line-of-sight has {m} columns but correlation is {}x{}",
                correlation.nrows(),
                correlation.ncols()
            )));
        }
        let r = kl.rank();
        let mp_factor = CMatrix::from_fn(r, m, |i, j| kl.basis[(j, i)].conj() * kl.eigenvalues[i].sqrt());
        Ok(Self { los, terminal_angles_deg, correlation, kl, alpha_los, alpha_mp, mp_factor })
    }

    /// Draws the statistics of cluster `l` of `system`.
    pub fn sample<R: Rng + ?Sized>(system: &SystemConfig, l: usize, rng: &mut R) -> Result<Self> {
        let cluster = &system.clusters[l];
        let geometry = system.geometry();
        let (alpha_los, alpha_mp) = rician_weights(system.cluster_gain(l), cluster.rician_kappa)?;
        let (los, angles) = los_matrix(cluster, &geometry, rng);
        let factor = correlation_factor(
            system.correlation.model,
            cluster.angle_deg + geometry.rotation_deg,
            system.correlation_rank(l),
            system.correlation.scatter_aperture_deg,
            &geometry,
            rng,
        )?;
        let kl = kl_factors_from_factor(&factor)?;
        let correlation = &factor * factor.adjoint();
        Self::new(los, angles, correlation, kl, alpha_los, alpha_mp)
    }

    pub fn num_terminals(&self) -> usize {
        self.los.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.los.ncols()
    }

    pub fn rank(&self) -> usize {
        self.kl.rank()
    }
}

/// Statistics for every cluster of the system.
pub fn draw_statistics<R: Rng + ?Sized>(system: &SystemConfig, rng: &mut R) -> Result<Vec<ClusterStatistics>> {
    (0..system.clusters.len()).map(|l| ClusterStatistics::sample(system, l, rng)).collect()
}

/// K × r matrix of i.i.d. CN(0, 1) entries.
pub fn sample_fading<R: Rng + ?Sized>(num_terminals: usize, rank: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(num_terminals, rank, |_, _| complex_normal(rng))
}

/// One channel draw for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterChannel {
    /// K × r.
    pub fading: CMatrix,
    /// K × M.
    pub effective: CMatrix,
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub clusters: Vec<ClusterChannel>,
}

impl ChannelRealization {
    /// All clusters' effective channels stacked in cluster order.
    pub fn stacked(&self) -> CMatrix {
        let rows: usize = self.clusters.iter().map(|c| c.effective.nrows()).sum();
        let m = self.clusters.first().map_or(0, |c| c.effective.ncols());
        let mut out = CMatrix::zeros(rows, m);
        let mut at = 0;
        for c in &self.clusters {
            out.rows_mut(at, c.effective.nrows()).copy_from(&c.effective);
            at += c.effective.nrows();
        }
        out
    }
}

pub fn realize_channel<R: Rng + ?Sized>(stats: &ClusterStatistics, rng: &mut R) -> ClusterChannel {
    let fading = sample_fading(stats.num_terminals(), stats.rank(), rng);
    let los_part = &stats.los * Complex64::from(stats.alpha_los);
    let effective = if stats.alpha_mp == 0.0 {
        los_part
    } else {
        los_part + (&fading * &stats.mp_factor) * Complex64::from(stats.alpha_mp)
    };
    ClusterChannel { fading, effective }
}

pub fn realize_system<R: Rng + ?Sized>(stats: &[ClusterStatistics], rng: &mut R) -> ChannelRealization {
    ChannelRealization { clusters: stats.iter().map(|s| realize_channel(s, rng)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_frobenius;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn geometry(m: usize) -> ArrayGeometry {
        ArrayGeometry { num_antennas: m, element_spacing: 0.5, rotation_deg: 0.0 }
    }

    #[test]
    fn rician_weight_examples() {
        assert_eq!(rician_weights(1.0, 0.0).unwrap(), (0.0, 1.0));
        let (a1, a2) = rician_weights(1.0, 1e9).unwrap();
        assert!((a1 - 1.0).abs() < 1e-9 && a2 < 1e-4);
        let (a1, a2) = rician_weights(1.0, 5.0).unwrap();
        assert!((a1 - 0.912_870_929).abs() < 1e-8);
        assert!((a2 - 0.408_248_290).abs() < 1e-8);
        assert_eq!(rician_weights(4.0, f64::INFINITY).unwrap(), (2.0, 0.0));
        assert!(rician_weights(-1.0, 1.0).is_err());
        assert!(rician_weights(1.0, -0.5).is_err());
    }

    proptest! {
        #[test]
        fn rician_weights_conserve_gain(beta in 1e-9f64..1e3, kappa in 0.0f64..1e6) {
            let (a1, a2) = rician_weights(beta, kappa).unwrap();
            prop_assert!((a1 * a1 + a2 * a2 - beta).abs() <= 1e-12 * beta);
        }

        #[test]
        fn steering_entries_unit_modulus(phi in 0.0f64..180.0, m in 1usize..64) {
            let a = steering_vector(phi, m, 0.5);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector(90.0, 4, 0.5);
        assert!(a.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
        let a = steering_vector(0.0, 2, 0.5);
        assert!((a[1] - c(-1.0, 0.0)).norm() < 1e-12);
        let a = steering_vector(60.0, 2, 0.5);
        assert!((a[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn los_matrix_narrow_and_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let narrow = ClusterConfig::new(3, 90.0, 5.0, 0.0);
        let (los, angles) = los_matrix(&narrow, &geometry(4), &mut rng);
        assert_eq!(angles, vec![90.0; 3]);
        assert!(los.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));

        let mut spread = ClusterConfig::new(8, 40.0, 5.0, 0.0);
        spread.aperture_deg = 8.0;
        let (los, angles) = los_matrix(&spread, &geometry(8), &mut rng);
        assert!(angles.iter().all(|a| (32.0..=48.0).contains(a)));
        for i in 0..8 {
            assert!((los.row(i).norm_squared() - 8.0).abs() < 1e-9);
            for j in 0..i {
                assert!((los.row(i) - los.row(j)).norm() > 1e-6, "rows {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn one_ring_single_ray_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cluster = ClusterConfig::new(1, 50.0, 0.0, 0.0);
        let r = sample_correlation(&cluster, &geometry(6), 1, 0.0, &mut rng).unwrap();
        let a = steering_vector(50.0, 6, 0.5);
        let expected = &a * a.adjoint() * c(6.0 / a.norm_squared(), 0.0);
        assert!(relative_frobenius(&r, &expected) < 1e-12);
        let kl = kl_factors(&r).unwrap();
        assert_eq!(kl.rank(), 1);
        assert!((kl.eigenvalues[0] - 6.0).abs() < 1e-9);
        let overlap = (kl.basis.column(0).adjoint() * &a)[0].norm() / a.norm();
        assert!((overlap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_trace_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [CorrelationModel::Wishart, CorrelationModel::OneRing, CorrelationModel::Uncorrelated] {
            for _ in 0..5 {
                let f = correlation_factor(model, 30.0, 4, 10.0, &geometry(8), &mut rng).unwrap();
                let r = &f * f.adjoint();
                assert!((r.trace().re - 8.0).abs() < 1e-9 * 8.0, "{model:?}");
            }
        }
    }

    #[test]
    fn one_ring_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cluster = ClusterConfig::new(8, 30.0, 0.0, 0.0);
        let r = sample_correlation(&cluster, &geometry(8), 8, 10.0, &mut rng).unwrap();
        let (values, _) = hermitian_eigen_desc(&r);
        assert!(values.iter().all(|&v| v >= -1e-12 * values[0]));
        // Eight rays packed into 20° leave the tail of the spectrum below the
        // truncation threshold, yet the truncated factors still reproduce R.
        let kl = kl_factors(&r).unwrap();
        assert!(kl.rank() <= 8);
        assert!(relative_frobenius(&kl.reconstruct(), &r) <= 1e-10);

        let wide = ClusterConfig::new(8, 90.0, 0.0, 0.0);
        let r = sample_correlation(&wide, &geometry(8), 8, 90.0, &mut rng).unwrap();
        assert_eq!(kl_factors(&r).unwrap().rank(), 8);
    }

    #[test]
    fn rank_above_array_size_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cluster = ClusterConfig::new(9, 30.0, 0.0, 0.0);
        assert!(sample_correlation(&cluster, &geometry(8), 9, 10.0, &mut rng).is_err());
    }

    #[test]
    fn kl_of_identity() {
        let kl = kl_factors(&CMatrix::identity(5, 5)).unwrap();
        assert_eq!(kl.eigenvalues, vec![1.0; 5]);
        assert!(relative_frobenius(&kl.reconstruct(), &CMatrix::identity(5, 5)) < 1e-14);
    }

    #[test]
    fn kl_rejects_non_hermitian() {
        let mut r = CMatrix::identity(3, 3);
        r[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(kl_factors(&r), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn kl_reconstruction_and_factor_route_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for rank in [1, 3, 8] {
            let f = correlation_factor(CorrelationModel::Wishart, 0.0, rank, 0.0, &geometry(8), &mut rng).unwrap();
            let r = &f * f.adjoint();
            let direct = kl_factors(&r).unwrap();
            let via = kl_factors_from_factor(&f).unwrap();
            assert_eq!(direct.rank(), rank);
            assert_eq!(via.rank(), rank);
            assert!(relative_frobenius(&direct.reconstruct(), &r) <= 1e-10);
            assert!(relative_frobenius(&via.reconstruct(), &r) <= 1e-10);
            let gram = via.basis.adjoint() * &via.basis;
            assert!(relative_frobenius(&gram, &CMatrix::identity(rank, rank)) < 1e-10);
            for (a, b) in direct.eigenvalues.iter().zip(&via.eigenvalues) {
                assert!((a - b).abs() < 1e-10 * direct.eigenvalues[0]);
            }
        }
    }

    #[test]
    fn fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let r = 4;
        let n = 100_000;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut gram = CMatrix::zeros(r, r);
        let mut power = 0.0;
        for _ in 0..n {
            let g = sample_fading(1, r, &mut rng);
            mean += g[(0, 0)];
            power += g.iter().map(|z| z.norm_sqr()).sum::<f64>();
            gram += g.adjoint() * &g;
        }
        mean /= n as f64;
        gram /= Complex64::from(n as f64);
        assert!(mean.norm() <= 0.01);
        assert!(((power / (n * r) as f64) - 1.0).abs() <= 0.01);
        let err = (&gram - CMatrix::identity(r, r)).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        assert!(err <= 0.02, "entrywise error {err}");
    }

    fn small_system(kappa: f64) -> SystemConfig {
        let mut s = SystemConfig::operating_point();
        s.clusters.truncate(1);
        s.clusters[0].rician_kappa = kappa;
        s.clusters[0].pathloss_db = 0.0;
        s.antenna_gain_db = 0.0;
        s
    }

    #[test]
    fn pure_los_limit_is_deterministic() {
        let system = small_system(f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let h = realize_channel(&stats, &mut rng);
        assert_eq!(h.effective, stats.los);
    }

    #[test]
    fn rayleigh_only_channel() {
        let system = small_system(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let h = realize_channel(&stats, &mut rng);
        let expected = &h.fading * &stats.mp_factor;
        assert!(relative_frobenius(&h.effective, &expected) < 1e-14);
    }

    #[test]
    fn row_power_is_conserved() {
        let system = small_system(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let h = realize_channel(&stats, &mut rng);
            total += h.effective.row(0).norm_squared();
        }
        let mean = total / n as f64;
        assert!((mean / 8.0 - 1.0).abs() <= 0.03, "mean row power {mean}");
    }

    #[test]
    fn expected_power_identity() {
        // E_G ‖H_eff x‖² = α₁²‖H_los x‖² + K·α₂²‖diag(√Λ)Uᴴx‖²
        let system = small_system(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let x = CVector::from_fn(8, |i, _| c((i as f64).cos(), (2.0 * i as f64).sin()));
        let k = stats.num_terminals() as f64;
        let expected = stats.alpha_los.powi(2) * (&stats.los * &x).norm_squared()
            + k * stats.alpha_mp.powi(2) * (&stats.mp_factor * &x).norm_squared();
        let n = 20_000;
        let mean =
            (0..n).map(|_| (realize_channel(&stats, &mut rng).effective * &x).norm_squared()).sum::<f64>() / n as f64;
        assert!((mean / expected - 1.0).abs() <= 3.0 / (n as f64).sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn empirical_transmit_correlation_converges() {
        let mut system = small_system(0.0);
        system.correlation.model = CorrelationModel::OneRing;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let n = 10_000;
        let mut acc = CMatrix::zeros(8, 8);
        for _ in 0..n {
            let h = realize_channel(&stats, &mut rng).effective;
            acc += h.adjoint() * &h;
        }
        // K rows per draw, each with covariance R.
        acc /= Complex64::from((n * stats.num_terminals()) as f64);
        assert!(relative_frobenius(&acc, &stats.correlation) <= 0.05);
    }

    #[test]
    fn trial_streams_are_independent_of_order() {
        let a: f64 = trial_rng(7, 3, Stream::Channel).random();
        let _: f64 = trial_rng(7, 2, Stream::Channel).random();
        let b: f64 = trial_rng(7, 3, Stream::Channel).random();
        let s: f64 = trial_rng(7, 3, Stream::Solver).random();
        assert_eq!(a, b);
        assert_ne!(a, s);
    }

    #[test]
    fn validation_rejects_too_many_clusters() {
        let mut s = SystemConfig::operating_point();
        s.num_antennas = 2;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        assert!(SystemConfig::operating_point().validate().is_ok());
    }
}
