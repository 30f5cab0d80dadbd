//! Closed-form beamformers and received-power evaluation.
//!
//! All statistical precoders maximize `‖A x‖²` over `‖x‖² ≤ Pₓ` for a stacked
//! matrix `A`, which is solved by the dominant right singular vector.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ClusterStatistics};
use crate::error::{Error, Result};
use crate::linalg::{dominant_right_singular, normalize_phase, CMatrix, CVector};

/// Beamforming strategies that produce a single transmit vector.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BeamScheme {
    /// Dominant correlation eigenvector of the first cluster.
    Mp,
    /// Rician statistical precoder for the first cluster only.
    StatSingle,
    /// Statistical precoder over every cluster.
    StatMulti,
    /// Realized-channel precoder.
    FullCsit,
    /// All antennas, equal power, no CSIT.
    Aa,
    ConstrainedStat,
    ConstrainedFull,
}

impl BeamScheme {
    pub const ALL: [BeamScheme; 7] = [
        BeamScheme::Mp,
        BeamScheme::StatSingle,
        BeamScheme::StatMulti,
        BeamScheme::FullCsit,
        BeamScheme::Aa,
        BeamScheme::ConstrainedStat,
        BeamScheme::ConstrainedFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BeamScheme::Mp => "MP",
            BeamScheme::StatSingle => "STAT_SINGLE",
            BeamScheme::StatMulti => "STAT_MULTI",
            BeamScheme::FullCsit => "FULL_CSIT",
            BeamScheme::Aa => "AA",
            BeamScheme::ConstrainedStat => "CONSTRAINED_STAT",
            BeamScheme::ConstrainedFull => "CONSTRAINED_FULL",
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, BeamScheme::ConstrainedStat | BeamScheme::ConstrainedFull)
    }
}

impl fmt::Display for BeamScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeamScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        BeamScheme::ALL
            .into_iter()
            .find(|b| b.name() == wanted)
            .ok_or_else(|| Error::Domain(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector {
    pub x: CVector,
    pub scheme: BeamScheme,
    /// Set when the top singular value was not separated from the second,
    /// so the returned maximizer is one of several.
    pub degenerate: bool,
}

impl BeamVector {
    pub fn power(&self) -> f64 {
        self.x.norm_squared()
    }

    pub fn num_antennas(&self) -> usize {
        self.x.len()
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Los,
    Multipath,
}

/// A contiguous row range of the stacked matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowBlock {
    pub cluster: usize,
    pub kind: BlockKind,
    pub start: usize,
    pub len: usize,
}

/// Per cluster, `α₁·H_los` stacked over `√K·α₂·diag(√Λ)·Uᴴ`.
///
/// The `√K` weight makes `‖A x‖²` the expected sum power over all terminals:
/// each of the `K` terminals collects `α₂²‖diag(√Λ)Uᴴx‖²` from multipath.
#[derive(Debug, Clone)]
pub struct StackedStatMatrix {
    pub matrix: CMatrix,
    pub row_map: Vec<RowBlock>,
}

impl StackedStatMatrix {
    pub fn objective(&self, x: &CVector) -> f64 {
        (&self.matrix * x).norm_squared()
    }

    pub fn blocks_of(&self, cluster: usize) -> impl Iterator<Item = &RowBlock> {
        self.row_map.iter().filter(move |b| b.cluster == cluster)
    }
}

pub fn build_stat_matrix(stats: &[ClusterStatistics]) -> Result<StackedStatMatrix> {
    let first = stats.first().ok_or(Error::Empty)?;
    let m = first.num_antennas();
    if let Some(bad) = stats.iter().position(|s| s.num_antennas() != m || s.mp_factor.ncols() != m) {
        return Err(Error::Dimension(format!("cluster {bad} does not have {m} antennas")));
    }
    let rows: usize = stats.iter().map(|s| s.num_terminals() + s.rank()).sum();
    let mut matrix = CMatrix::zeros(rows, m);
    let mut row_map = Vec::with_capacity(2 * stats.len());
    let mut at = 0;
    for (cluster, s) in stats.iter().enumerate() {
        let k = s.num_terminals();
        matrix.rows_mut(at, k).copy_from(&(&s.los * Complex64::from(s.alpha_los)));
        row_map.push(RowBlock { cluster, kind: BlockKind::Los, start: at, len: k });
        at += k;
        let r = s.rank();
        let weight = (k as f64).sqrt() * s.alpha_mp;
        matrix.rows_mut(at, r).copy_from(&(&s.mp_factor * Complex64::from(weight)));
        row_map.push(RowBlock { cluster, kind: BlockKind::Multipath, start: at, len: r });
        at += r;
    }
    Ok(StackedStatMatrix { matrix, row_map })
}

fn check_power(px: f64) -> Result<()> {
    if px > 0.0 && px.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("transmit power must be positive, got {px}")))
    }
}

fn scaled(mut v: CVector, px: f64) -> CVector {
    normalize_phase(&mut v);
    v * Complex64::from(px.sqrt())
}

/// `√Pₓ` times the leading KL eigenvector.
pub fn precoder_mp(basis: &CMatrix, px: f64) -> Result<BeamVector> {
    check_power(px)?;
    if basis.ncols() == 0 || basis.nrows() == 0 {
        return Err(Error::Empty);
    }
    let u = basis.column(0).into_owned();
    let n = u.norm();
    if n == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(BeamVector { x: scaled(u / Complex64::from(n), px), scheme: BeamScheme::Mp, degenerate: false })
}

/// `√Pₓ·u_max(A)`; achieves `‖A x‖² = Pₓ·σ_max²`.
pub fn precoder_stat(a: &CMatrix, px: f64) -> Result<BeamVector> {
    precoder_svd(a, px, BeamScheme::StatMulti)
}

/// Maximum-ratio precoder on the realized effective channels of every cluster.
pub fn precoder_full_csit(realization: &ChannelRealization, px: f64) -> Result<BeamVector> {
    precoder_svd(&realization.stacked(), px, BeamScheme::FullCsit)
}

pub(crate) fn precoder_svd(a: &CMatrix, px: f64, scheme: BeamScheme) -> Result<BeamVector> {
    check_power(px)?;
    let dom = dominant_right_singular(a)?;
    Ok(BeamVector { x: scaled(dom.vector, px), scheme, degenerate: dom.degenerate })
}

/// `√(Pₓ/M)·𝟙`.
pub fn precoder_aa(num_antennas: usize, px: f64) -> Result<BeamVector> {
    check_power(px)?;
    if num_antennas == 0 {
        return Err(Error::Empty);
    }
    let v = Complex64::from((px / num_antennas as f64).sqrt());
    Ok(BeamVector { x: CVector::from_element(num_antennas, v), scheme: BeamScheme::Aa, degenerate: false })
}

/// Power collected per terminal when the `M` antennas take turns, each
/// radiating `Pₓ` for a `1/M` share of the block.
pub fn sa_received_power(h: &CMatrix, px: f64) -> Vec<f64> {
    let m = h.ncols().max(1) as f64;
    h.row_iter().map(|row| px / m * row.iter().map(|z| z.norm_sqr()).sum::<f64>()).collect()
}

/// `|h_k·x|²` for every row of `h`.
pub fn received_powers(h: &CMatrix, x: &CVector) -> Result<Vec<f64>> {
    if h.ncols() != x.len() {
        return Err(Error::Dimension(format!("channel has {} columns, beam has {} entries", h.ncols(), x.len())));
    }
    Ok((h * x).iter().map(|y| y.norm_sqr()).collect())
}

/// `α₁²·|h_losₖ·x|² + α₂²·‖diag(√Λ)Uᴴx‖²`, averaged over the fast fading.
pub fn expected_terminal_power(stats: &ClusterStatistics, k: usize, x: &CVector) -> Result<f64> {
    if k >= stats.num_terminals() {
        return Err(Error::Domain(format!("terminal {k} out of range for cluster of {}", stats.num_terminals())));
    }
    if x.len() != stats.num_antennas() {
        return Err(Error::Dimension(format!("beam has {} entries, array has {}", x.len(), stats.num_antennas())));
    }
    let los = (stats.los.row(k) * x)[0].norm_sqr();
    let mp = (&stats.mp_factor * x).norm_squared();
    Ok(stats.alpha_los.powi(2) * los + stats.alpha_mp.powi(2) * mp)
}

/// Expected power of every terminal of every cluster, in cluster order.
pub fn expected_powers(stats: &[ClusterStatistics], x: &CVector) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stats.iter().map(|s| s.num_terminals()).sum());
    for s in stats {
        if x.len() != s.num_antennas() {
            return Err(Error::Dimension(format!("beam has {} entries, array has {}", x.len(), s.num_antennas())));
        }
        let mp = s.alpha_mp.powi(2) * (&s.mp_factor * x).norm_squared();
        let los = &s.los * x;
        out.extend(los.iter().map(|y| s.alpha_los.powi(2) * y.norm_sqr() + mp));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        kl_factors, realize_channel, realize_system, sample_correlation, steering_vector, trial_rng, ClusterConfig,
        ClusterStatistics, Stream, SystemConfig,
    };
    use crate::linalg::relative_frobenius;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_sphere<R: Rng>(m: usize, px: f64, rng: &mut R) -> CVector {
        let v = CVector::from_fn(m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let n = v.norm();
        v * Complex64::from(px.sqrt() / n)
    }

    fn same_up_to_phase(a: &CVector, b: &CVector) -> bool {
        let inner = (a.adjoint() * b)[0].norm();
        (inner - a.norm() * b.norm()).abs() <= 1e-9 * a.norm() * b.norm()
    }

    fn op_stats(seed: u64) -> Vec<ClusterStatistics> {
        let system = SystemConfig::operating_point();
        let mut rng = trial_rng(seed, 0, Stream::Channel);
        crate::channel::draw_statistics(&system, &mut rng).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in BeamScheme::ALL {
            assert_eq!(s.name().parse::<BeamScheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("bogus".parse::<BeamScheme>().is_err());
    }

    #[test]
    fn stacked_dimensions() {
        let stats = op_stats(1);
        let a = build_stat_matrix(&stats).unwrap();
        assert_eq!(a.matrix.shape(), (48, 8));
        assert_eq!(a.row_map.len(), 6);
        assert_eq!(a.row_map[1], RowBlock { cluster: 0, kind: BlockKind::Multipath, start: 8, len: 8 });

        let mut system = SystemConfig::operating_point();
        system.clusters.truncate(1);
        system.clusters[0].num_terminals = 1;
        system.clusters[0].rician_kappa = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = crate::channel::draw_statistics(&system, &mut rng).unwrap();
        let a = build_stat_matrix(&s).unwrap();
        assert_eq!(a.matrix.shape(), (2, 8));
        assert!(a.matrix.row(0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn mismatched_antennas_rejected() {
        let mut stats = op_stats(1);
        let mut small = SystemConfig::operating_point();
        small.num_antennas = 4;
        small.clusters.truncate(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        stats.push(ClusterStatistics::sample(&small, 0, &mut rng).unwrap());
        assert!(matches!(build_stat_matrix(&stats), Err(Error::Dimension(_))));
    }

    #[test]
    fn mp_examples() {
        let x = precoder_mp(&CMatrix::identity(4, 4), 1.0).unwrap();
        assert_eq!(x.x, CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cluster = ClusterConfig::new(1, 35.0, 0.0, 0.0);
        let geom = SystemConfig::operating_point().geometry();
        let r = sample_correlation(&cluster, &geom, 1, 0.0, &mut rng).unwrap();
        let kl = kl_factors(&r).unwrap();
        let x = precoder_mp(&kl.basis, 3.0).unwrap();
        assert!((x.power() - 3.0).abs() < 1e-12);
        assert!(same_up_to_phase(&x.x, &steering_vector(35.0, 8, 0.5)));
        assert!(precoder_mp(&CMatrix::zeros(4, 0), 1.0).is_err());
    }

    #[test]
    fn mp_beats_random_beams() {
        let stats = op_stats(4);
        let s = &stats[1];
        let x = precoder_mp(&s.kl.basis, 1.0).unwrap();
        let best = (&s.mp_factor * &x.x).norm_squared();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let y = random_sphere(8, 1.0, &mut rng);
            assert!((&s.mp_factor * &y).norm_squared() <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn stat_rank_one() {
        let a = CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0)]);
        let b = CVector::from_vec(vec![c(0.3, -1.0), c(2.0, 0.5), c(0.0, 1.0)]);
        let mat = &a * b.adjoint();
        let x = precoder_stat(&mat, 2.0).unwrap();
        assert!(same_up_to_phase(&x.x, &b));
        assert!((x.power() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stat_reduces_to_mp_without_los() {
        let mut system = SystemConfig::operating_point();
        system.clusters.truncate(1);
        system.clusters[0].rician_kappa = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stats = crate::channel::draw_statistics(&system, &mut rng).unwrap();
        let a = build_stat_matrix(&stats).unwrap();
        let xs = precoder_stat(&a.matrix, 10.0).unwrap();
        let xm = precoder_mp(&stats[0].kl.basis, 10.0).unwrap();
        assert!(same_up_to_phase(&xs.x, &xm.x));
    }

    #[test]
    fn stat_objective_matches_expected_powers() {
        let stats = op_stats(2);
        let a = build_stat_matrix(&stats).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_sphere(8, 10.0, &mut rng);
            let total: f64 = expected_powers(&stats, &x).unwrap().iter().sum();
            let mut direct = 0.0;
            for s in &stats {
                for k in 0..s.num_terminals() {
                    direct += expected_terminal_power(s, k, &x).unwrap();
                }
            }
            assert!((total / a.objective(&x) - 1.0).abs() < 1e-12);
            assert!((direct / total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn appending_cluster_never_lowers_sigma_max() {
        let stats = op_stats(5);
        let mut prev = 0.0;
        for l in 1..=3 {
            let a = build_stat_matrix(&stats[..l]).unwrap();
            let x = precoder_stat(&a.matrix, 1.0).unwrap();
            let obj = a.objective(&x.x);
            assert!(obj >= prev * (1.0 - 1e-12));
            prev = obj;
        }
    }

    #[test]
    fn full_csit_examples() {
        let mut system = SystemConfig::operating_point();
        system.clusters.truncate(1);
        system.clusters[0].num_terminals = 1;
        system.clusters[0].rician_kappa = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stats = crate::channel::draw_statistics(&system, &mut rng).unwrap();
        let real = realize_system(&stats, &mut rng);
        let x = precoder_full_csit(&real, 4.0).unwrap();
        let h = real.clusters[0].effective.row(0).adjoint();
        assert!(same_up_to_phase(&x.x, &h));

        let mut los = SystemConfig::operating_point();
        for c in &mut los.clusters {
            c.rician_kappa = f64::INFINITY;
        }
        let stats = crate::channel::draw_statistics(&los, &mut rng).unwrap();
        let real = realize_system(&stats, &mut rng);
        let xf = precoder_full_csit(&real, 10.0).unwrap();
        let xs = precoder_stat(&build_stat_matrix(&stats).unwrap().matrix, 10.0).unwrap();
        assert!(same_up_to_phase(&xf.x, &xs.x));
    }

    #[test]
    fn full_csit_dominates_statistical_per_trial() {
        let system = SystemConfig::operating_point();
        for trial in 0..50 {
            let mut rng = trial_rng(17, trial, Stream::Channel);
            let stats = crate::channel::draw_statistics(&system, &mut rng).unwrap();
            let real = realize_system(&stats, &mut rng);
            let b = real.stacked();
            let xf = precoder_full_csit(&real, 10.0).unwrap();
            let xs = precoder_stat(&build_stat_matrix(&stats).unwrap().matrix, 10.0).unwrap();
            assert!((&b * &xf.x).norm_squared() >= (&b * &xs.x).norm_squared() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn aa_examples() {
        assert_eq!(precoder_aa(1, 9.0).unwrap().x, CVector::from_element(1, c(3.0, 0.0)));
        assert!(precoder_aa(4, 1.0).unwrap().x.iter().all(|z| (z - c(0.5, 0.0)).norm() < 1e-15));
        for m in 1..40 {
            assert!((precoder_aa(m, 7.0).unwrap().power() - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sa_examples() {
        let ones = CMatrix::from_element(3, 5, c(1.0, 0.0));
        assert_eq!(sa_received_power(&ones, 1.0), vec![1.0; 3]);
        let h = CMatrix::from_element(2, 1, c(0.6, -0.8));
        let aa = received_powers(&h, &precoder_aa(1, 2.0).unwrap().x).unwrap();
        for (s, a) in sa_received_power(&h, 2.0).iter().zip(&aa) {
            assert!((s - a).abs() < 1e-12);
        }
    }

    #[test]
    fn sa_mean_under_rayleigh() {
        let system = SystemConfig::iid_rayleigh(8, 1, 1);
        let n = 10_000;
        let mut total = 0.0;
        for trial in 0..n {
            let mut rng = trial_rng(3, trial, Stream::Channel);
            let stats = crate::channel::draw_statistics(&system, &mut rng).unwrap();
            let h = realize_channel(&stats[0], &mut rng);
            total += sa_received_power(&h.effective, 1.0)[0];
        }
        assert!((total / n as f64 - 1.0).abs() <= 0.03);
    }

    #[test]
    fn received_power_examples() {
        let h = CMatrix::from_fn(3, 4, |i, j| c(i as f64, j as f64));
        assert_eq!(received_powers(&h, &CVector::zeros(4)).unwrap(), vec![0.0; 3]);
        let x = CVector::from_vec(vec![c(1.0, 1.0), c(0.0, 2.0)]);
        let k = CMatrix::from_row_slice(1, 2, (x.adjoint() * Complex64::from(2.5 / x.norm())).as_slice());
        let p = received_powers(&k, &x).unwrap();
        assert!((p[0] - 6.25 * x.norm_squared()).abs() < 1e-12);
        assert!(received_powers(&h, &CVector::zeros(3)).is_err());
    }

    #[test]
    fn expected_power_examples() {
        let mut system = SystemConfig::operating_point();
        system.clusters.truncate(1);
        system.clusters[0].rician_kappa = 0.0;
        system.correlation.rank = Some(3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let x = random_sphere(8, 1.0, &mut rng);
        let p0 = expected_terminal_power(&stats, 0, &x).unwrap();
        for k in 1..8 {
            assert_eq!(expected_terminal_power(&stats, k, &x).unwrap(), p0);
        }
        assert!(expected_terminal_power(&stats, 8, &x).is_err());

        // Orthogonal to the correlation span and to the line of sight.
        let mut system = SystemConfig::operating_point();
        system.clusters.truncate(1);
        system.clusters[0].angle_deg = 90.0;
        system.correlation.model = crate::channel::CorrelationModel::OneRing;
        system.correlation.rank = Some(1);
        system.correlation.scatter_aperture_deg = 0.0;
        let stats = ClusterStatistics::sample(&system, 0, &mut rng).unwrap();
        let x = steering_vector(0.0, 8, 0.5);
        assert!(expected_terminal_power(&stats, 0, &x).unwrap() < 1e-20);
    }

    #[test]
    fn expected_power_matches_monte_carlo() {
        let stats = op_stats(8);
        let x = precoder_stat(&build_stat_matrix(&stats).unwrap().matrix, 10.0).unwrap().x;
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let n = 10_000;
        let s = &stats[2];
        let mut acc = [0.0; 8];
        for _ in 0..n {
            let h = realize_channel(s, &mut rng);
            for (a, p) in acc.iter_mut().zip(received_powers(&h.effective, &x).unwrap()) {
                *a += p;
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let expected = expected_terminal_power(s, k, &x).unwrap();
            assert!((a / n as f64 / expected - 1.0).abs() <= 0.03, "terminal {k}");
        }
    }

    #[test]
    fn stat_beats_random_feasible_vectors() {
        let a = build_stat_matrix(&op_stats(3)).unwrap();
        let x = precoder_stat(&a.matrix, 10.0).unwrap();
        let best = a.objective(&x.x);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..100_000 {
            let y = random_sphere(8, 10.0, &mut rng);
            assert!(a.objective(&y) < best);
        }
    }

    #[test]
    fn realized_channels_stack_in_cluster_order() {
        let stats = op_stats(12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = realize_system(&stats, &mut rng);
        let b = real.stacked();
        assert_eq!(b.shape(), (24, 8));
        let rebuilt = CMatrix::from_fn(24, 8, |i, j| real.clusters[i / 8].effective[(i % 8, j)]);
        assert!(relative_frobenius(&b, &rebuilt) == 0.0);
    }

    proptest! {
        #[test]
        fn global_phase_invariance(theta in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = CMatrix::from_fn(4, 6, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let x = random_sphere(6, 2.0, &mut rng);
            let rot = &x * Complex64::from_polar(1.0, theta);
            let p = received_powers(&h, &x).unwrap();
            let q = received_powers(&h, &rot).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }
            let total: f64 = p.iter().sum();
            prop_assert!((total - (&h * &x).norm_squared()).abs() <= 1e-12 * total);
        }
    }
}
