//! Noise amplification indices, the full kinematic map, and admissible-workspace sampling.

use nalgebra::{DMatrix, Matrix6xX, Vector3};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, ShapeError};
use crate::modal::{Config, ModalBasis};
use crate::routing::{realizable, RoutingPath, REALIZABILITY_GRID};
use crate::sensing::{body_jacobian, config_jacobian, SensorArray};

/// Relative singular-value cutoff of the pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Default lower bound on `ℵ(J_ℓc)` for a usable design.
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Below this acceptance rate the rejection sampler gives up.
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Singular values of `a`, `min(rows, cols)` of them.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// `ℵ(A) = σ_min²/σ_max`, zero when `A` is numerically rank deficient.
pub fn noise_amp(a: &DMatrix<f64>) -> f64 {
    aleph_from_singular_values(&singular_values(a), a.nrows().max(a.ncols()))
}

fn aleph_from_singular_values(sv: &[f64], dim: usize) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= f64::EPSILON * smax * dim as f64 {
        return 0.0;
    }
    smin * smin / smax
}

/// Moore–Penrose pseudoinverse with cutoff `1e-12 σ_max`.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(PINV_CUTOFF * smax)
        .expect("singular vectors computed")
}

/// Pseudoinverse and `ℵ` of `a` from a single decomposition.
pub(crate) fn pinv_and_noise_amp(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if a.nrows() == 0 || a.ncols() == 0 {
        return (DMatrix::zeros(a.ncols(), a.nrows()), 0.0);
    }
    let svd = a.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let aleph = aleph_from_singular_values(&sv, a.nrows().max(a.ncols()));
    let smax = svd.singular_values.max();
    let p = svd
        .pseudo_inverse(PINV_CUTOFF * smax)
        .expect("singular vectors computed");
    (p, aleph)
}

/// Scale the angular rows of a body Jacobian by the characteristic length.
pub fn scale_angular(j: &Matrix6xX<f64>, c_ell: f64) -> DMatrix<f64> {
    let mut d = DMatrix::from_iterator(6, j.ncols(), j.iter().copied());
    d.rows_mut(0, 3).scale_mut(c_ell);
    d
}

/// `J_ℓξ = (J_ξc J_ℓc⁺)⁺` from precomputed factors; `jxc` already scaled.
pub fn compose_full_map(jxc: &DMatrix<f64>, jlc: &DMatrix<f64>) -> DMatrix<f64> {
    pinv(&(jxc * pinv(jlc)))
}

/// `ℵ(J_ℓξ)` without forming the outer pseudoinverse.
///
/// With `B = J_ξc J_ℓc⁺` of full rank, the singular values of `B⁺` are the
/// reciprocals of those of `B`, so `ℵ(B⁺) = σ_min(B)/σ_max(B)²`.
pub fn full_map_aleph(jxc: &DMatrix<f64>, jlc_pinv: &DMatrix<f64>) -> f64 {
    let b = jxc * jlc_pinv;
    let sv = singular_values(&b);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= PINV_CUTOFF * smax {
        return 0.0;
    }
    smin / (smax * smax)
}

/// Full kinematic map `J_ℓξ(s)` at configuration `c`, a `p × 6` matrix.
pub fn full_map_jacobian(
    array: &SensorArray,
    basis: &ModalBasis,
    c: &Config,
    s: f64,
    c_ell: f64,
    n_steps: usize,
) -> Result<DMatrix<f64>> {
    let jlc = config_jacobian(array, basis, c)?;
    let jxc = scale_angular(&body_jacobian(basis, c, s, n_steps)?, c_ell);
    Ok(compose_full_map(&jxc, &jlc))
}

/// Disk geometry between two adjacent spacer disks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskGeometry {
    pub height: f64,
    pub radius: f64,
    pub subsegment_length: f64,
}

/// Radius of curvature at which adjacent disks touch, the largest root of
/// `2(ρ − r_d) tan(L_s/2ρ) = h_d`.
pub fn disk_collision_radius(h_d: f64, r_d: f64, l_s: f64) -> Result<f64> {
    if !(h_d > 0.0 && h_d < l_s && r_d >= 0.0) {
        return Err(ShapeError::Invalid(format!(
            "disk geometry needs 0 < h_d < L_s and r_d >= 0 (h_d = {h_d}, r_d = {r_d}, L_s = {l_s})"
        )));
    }
    let f = |rho: f64| 2.0 * (rho - r_d) * (l_s / (2.0 * rho)).tan() - h_d;
    let lo_end = l_s / std::f64::consts::PI + 1e-9;
    let hi_end = 1e6 * l_s;
    // scan downward in curvature radius so the first sign change is the largest root
    let n = 20_000;
    let ratio = (lo_end / hi_end).powf(1.0 / n as f64);
    let mut hi = hi_end;
    let mut f_hi = f(hi);
    for k in 1..=n {
        let lo = if k == n {
            lo_end
        } else {
            hi_end * ratio.powi(k)
        };
        let f_lo = f(lo);
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() != f_hi.signum() {
            return Ok(bisect(f, lo, hi, f_lo));
        }
        hi = lo;
        f_hi = f_lo;
    }
    Err(ShapeError::NoBracket)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_sign = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Constraints defining the admissible workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// Maximum strain about each local axis.
    pub strain_max: Vector3<f64>,
    pub backbone_diameter: f64,
    pub disk: Option<DiskGeometry>,
    pub realizability: bool,
    /// Largest bending angle over one subsegment (rad).
    pub bend_limit: Option<f64>,
    /// Largest twist angle over one subsegment (rad).
    pub twist_limit: Option<f64>,
}

impl ConstraintSet {
    /// Uniform strain limit on a backbone of diameter `d_b`, with realizability on.
    pub fn strain(strain: f64, backbone_diameter: f64) -> Self {
        Self {
            strain_max: Vector3::repeat(strain),
            backbone_diameter,
            disk: None,
            realizability: true,
            bend_limit: None,
            twist_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strain_max.iter().any(|e| !(*e > 0.0)) || !(self.backbone_diameter > 0.0) {
            return Err(ShapeError::Invalid(
                "strain limits and backbone diameter must be positive".into(),
            ));
        }
        if let Some(d) = &self.disk {
            if !(d.subsegment_length > 0.0) {
                return Err(ShapeError::Invalid(
                    "disk subsegment length must be positive".into(),
                ));
            }
        }
        if (self.bend_limit.is_some() || self.twist_limit.is_some()) && self.disk.is_none() {
            return Err(ShapeError::Invalid(
                "bend and twist limits need the disk subsegment length".into(),
            ));
        }
        Ok(())
    }

    /// Curvature limit per axis from strain alone, `ε_j/(d_b/2)`.
    pub fn strain_curvature(&self) -> Vector3<f64> {
        self.strain_max / (0.5 * self.backbone_diameter)
    }

    /// Limit on the bending magnitude `‖[u_x, u_y]‖` from disk collision and bend angle.
    pub fn bending_limit(&self) -> Result<f64> {
        let mut limit = f64::INFINITY;
        if let Some(d) = &self.disk {
            // without a root the disks cannot touch at any curvature
            match disk_collision_radius(d.height, d.radius, d.subsegment_length) {
                Ok(rho) => limit = limit.min(1.0 / rho),
                Err(ShapeError::NoBracket) => {}
                Err(e) => return Err(e),
            }
            if let Some(b) = self.bend_limit {
                limit = limit.min(b / d.subsegment_length);
            }
        }
        Ok(limit)
    }

    pub fn torsion_limit(&self) -> f64 {
        match (&self.disk, self.twist_limit) {
            (Some(d), Some(t)) => t / d.subsegment_length,
            _ => f64::INFINITY,
        }
    }

    /// Per-axis half-width of the sampling box.
    pub fn box_limits(&self) -> Result<Vector3<f64>> {
        let strain = self.strain_curvature();
        let bend = self.bending_limit()?;
        Ok(Vector3::new(
            strain.x.min(bend),
            strain.y.min(bend),
            strain.z.min(self.torsion_limit()),
        ))
    }
}

/// Checks a configuration against precomputed limits on a 200-point grid.
struct AdmissibilityCheck<'a> {
    basis: &'a ModalBasis,
    strain: Vector3<f64>,
    bend: f64,
    torsion: f64,
    realizability: bool,
    paths: &'a [RoutingPath],
}

impl<'a> AdmissibilityCheck<'a> {
    fn new(
        basis: &'a ModalBasis,
        constraints: &ConstraintSet,
        paths: &'a [RoutingPath],
    ) -> Result<Self> {
        constraints.validate()?;
        Ok(Self {
            basis,
            strain: constraints.strain_curvature(),
            bend: constraints.bending_limit()?,
            torsion: constraints.torsion_limit(),
            realizability: constraints.realizability,
            paths,
        })
    }

    fn admits(&self, c: &Config) -> bool {
        let n = REALIZABILITY_GRID;
        for i in 0..n {
            let s = self.basis.length * i as f64 / (n - 1) as f64;
            let u = self.basis.curvature_unchecked(c, s);
            if (0..3).any(|j| u[j].abs() > self.strain[j]) {
                return false;
            }
            if u.x.hypot(u.y) > self.bend || u.z.abs() > self.torsion {
                return false;
            }
        }
        !self.realizability
            || self
                .paths
                .iter()
                .all(|p| realizable(p, self.basis, c, REALIZABILITY_GRID).ok)
    }
}

/// Whether `c` satisfies the constraints; realizability is tested against `paths` over `[0, L]`.
pub fn is_admissible(
    basis: &ModalBasis,
    constraints: &ConstraintSet,
    paths: &[RoutingPath],
    c: &Config,
) -> Result<bool> {
    basis.check_config(c)?;
    Ok(AdmissibilityCheck::new(basis, constraints, paths)?.admits(c))
}

/// Admissible configurations drawn by rejection sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceSamples {
    pub configs: Vec<Config>,
    pub seed: u64,
    pub method: String,
}

impl WorkspaceSamples {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Draw `n_target` admissible configurations uniformly from the curvature box.
///
/// Each coefficient on axis `j` is drawn from `[−u_j, u_j]` where `u_j` is the
/// tightest curvature limit on that axis. `paths` are the routings that must
/// stay realizable.
pub fn sample_admissible(
    basis: &ModalBasis,
    constraints: &ConstraintSet,
    paths: &[RoutingPath],
    n_target: usize,
    seed: u64,
) -> Result<WorkspaceSamples> {
    sample_admissible_decaying(basis, constraints, paths, n_target, seed, 1.0)
}

/// As [`sample_admissible`], with the box half-width of a degree-`d` coefficient shrunk by `decay^d`.
///
/// High-order bases accept almost nothing from the full box; a geometric decay
/// keeps rejection sampling practical while still exciting every term.
pub fn sample_admissible_decaying(
    basis: &ModalBasis,
    constraints: &ConstraintSet,
    paths: &[RoutingPath],
    n_target: usize,
    seed: u64,
    decay: f64,
) -> Result<WorkspaceSamples> {
    if n_target == 0 {
        return Err(ShapeError::Invalid(
            "need at least one workspace sample".into(),
        ));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(ShapeError::Invalid(format!(
            "box decay {decay} must lie in (0, 1]"
        )));
    }
    let check = AdmissibilityCheck::new(basis, constraints, paths)?;
    let limits = constraints.box_limits()?;
    let widths: Vec<f64> = basis
        .axes()
        .iter()
        .enumerate()
        .flat_map(|(j, a)| {
            a.degrees()
                .iter()
                .map(move |&d| limits[j] * decay.powi(d as i32))
        })
        .collect();
    if widths.iter().any(|w| !w.is_finite()) {
        return Err(ShapeError::Invalid(
            "sampling box is unbounded on some axis".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = Vec::with_capacity(n_target);
    let mut attempts = 0usize;
    while configs.len() < n_target {
        attempts += 1;
        let c = Config::from_iterator(widths.len(), widths.iter().map(|&w| rng.gen_range(-w..=w)));
        if check.admits(&c) {
            configs.push(c);
        }
        if attempts >= 10_000 && (configs.len() as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(ShapeError::LowAcceptance {
                rate: configs.len() as f64 / attempts as f64,
            });
        }
    }
    let decay_note = if decay < 1.0 {
        format!(", degree decay {decay}")
    } else {
        String::new()
    };
    Ok(WorkspaceSamples {
        configs,
        seed,
        method: format!(
            "uniform box rejection, half-widths [{:.4}, {:.4}, {:.4}] 1/m{decay_note}, {} draws",
            limits.x, limits.y, limits.z, attempts
        ),
    })
}

/// Mean of per-sample values, reduced in sample order.
pub(crate) fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `ℵ_g(J_ℓξ(s))`: mean noise amplification of the full map over the samples.
pub fn global_index(
    array: &SensorArray,
    basis: &ModalBasis,
    samples: &WorkspaceSamples,
    s: f64,
    c_ell: f64,
    n_steps: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(ShapeError::EmptySamples);
    }
    let values: Vec<f64> = samples
        .configs
        .par_iter()
        .map(|c| {
            let jlc = config_jacobian(array, basis, c)?;
            let jxc = scale_angular(&body_jacobian(basis, c, s, n_steps)?, c_ell);
            Ok(full_map_aleph(&jxc, &pinv(&jlc)))
        })
        .collect::<Result<_>>()?;
    Ok(ordered_mean(&values))
}

/// Sensitivity summary of one routing design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    /// Smallest `ℵ(J_ℓc)` over the configurations checked.
    pub aleph_config: f64,
    /// `(s, ℵ_g(J_ℓξ(s)))` per objective arc length.
    pub aleph_full: Vec<(f64, f64)>,
    pub characteristic_length: f64,
    pub singular: bool,
}

/// Evaluate a design over a shared sample set.
///
/// Linear-class designs have a constant `J_ℓc`, so the singularity test uses the
/// straight configuration; otherwise every sample is tested as well.
pub fn evaluate_design(
    array: &SensorArray,
    basis: &ModalBasis,
    samples: &WorkspaceSamples,
    s_obj: &[f64],
    c_ell: f64,
    epsilon: f64,
    n_steps: usize,
) -> Result<DesignReport> {
    if samples.is_empty() {
        return Err(ShapeError::EmptySamples);
    }
    let straight = noise_amp(&config_jacobian(array, basis, &Config::zeros(basis.dim()))?);
    let linear = array.is_linear_class(basis);
    let per_sample: Vec<(f64, Vec<f64>)> = samples
        .configs
        .par_iter()
        .map(|c| {
            let jlc = config_jacobian(array, basis, c)?;
            let jp = pinv(&jlc);
            let values = s_obj
                .iter()
                .map(|&s| {
                    Ok(full_map_aleph(
                        &scale_angular(&body_jacobian(basis, c, s, n_steps)?, c_ell),
                        &jp,
                    ))
                })
                .collect::<Result<Vec<f64>>>()?;
            let a = if linear { straight } else { noise_amp(&jlc) };
            Ok((a, values))
        })
        .collect::<Result<_>>()?;
    let aleph_config = per_sample.iter().map(|(a, _)| *a).fold(straight, f64::min);
    let aleph_full = s_obj
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let v: Vec<f64> = per_sample.iter().map(|(_, vals)| vals[k]).collect();
            (s, ordered_mean(&v))
        })
        .collect();
    Ok(DesignReport {
        aleph_config,
        aleph_full,
        characteristic_length: c_ell,
        singular: aleph_config < epsilon,
    })
}
