//! Ground truth for reconstruction studies: a planar elastic-rod oracle, synthetic
//! spatial curvature fields, and pose error metrics.

use nalgebra::{DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Result, ShapeError};
use crate::liegroup::{vee, PoseSE3};
use crate::modal::{Config, ModalBasis};
use crate::optimizer::{optimize_planar_anchors, PlanarDesign, PlanarObjective};
use crate::sensing::{
    forward_kinematics, lengths, solve_shape, Measurement, Reference, SensorArray,
};
use crate::sensitivity::{sample_admissible_decaying, ConstraintSet};

/// Elastic modulus assumed for Nitinol (Pa).
pub const DEFAULT_MODULUS: f64 = 60e9;

/// RK4 steps along the rod.
pub const BVP_STEPS: usize = 2000;

/// Quadrature points for synthetic measurement lengths.
pub const TRUTH_QUADRATURE: usize = 400;

/// Per-degree shrink of the sampling box for synthetic truth fields.
pub const TRUTH_DECAY: f64 = 0.5;

const MAX_SHOOTING: usize = 200;

/// Free-string pitch radius in the convergence study, as a fraction of the length.
pub const CONVERGENCE_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodSpec {
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// Pa
    pub elastic_modulus: f64,
}

impl RodSpec {
    pub fn nitinol(length: f64, diameter: f64) -> Self {
        Self {
            length,
            diameter,
            elastic_modulus: DEFAULT_MODULUS,
        }
    }

    /// `EI` with `I = πd⁴/64` (N·m²).
    pub fn bending_stiffness(&self) -> f64 {
        self.elastic_modulus * std::f64::consts::PI * self.diameter.powi(4) / 64.0
    }

    pub fn validate(&self) -> Result<()> {
        if [self.length, self.diameter, self.elastic_modulus]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(ShapeError::Invalid(
                "rod length, diameter and modulus must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tip load in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipWrench {
    /// N
    pub force: Vector3<f64>,
    /// N·m
    pub moment: Vector3<f64>,
}

impl TipWrench {
    /// Force along world x, moment about world y.
    pub fn planar(force_x: f64, moment_y: f64) -> Self {
        Self {
            force: Vector3::new(force_x, 0.0, 0.0),
            moment: Vector3::new(0.0, moment_y, 0.0),
        }
    }

    pub fn is_planar(&self) -> bool {
        self.force.y == 0.0 && self.force.z == 0.0 && self.moment.x == 0.0 && self.moment.z == 0.0
    }
}

/// Equilibrium shape of a planar rod, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RodSolution {
    pub rod: RodSpec,
    pub wrench: TipWrench,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Rotation about world y.
    pub theta: Vec<f64>,
    /// Internal bending moment `m_y` (N·m).
    pub moment: Vec<f64>,
    pub iterations: usize,
}

type State = [f64; 4];

fn rhs(y: &State, ei: f64, f: f64) -> State {
    let (sn, cs) = y[2].sin_cos();
    [sn, cs, y[3] / ei, -f * cs]
}

fn rk4(y: &State, h: f64, ei: f64, f: f64) -> State {
    let add = |a: &State, k: &State, t: f64| std::array::from_fn(|i| a[i] + t * k[i]);
    let k1 = rhs(y, ei, f);
    let k2 = rhs(&add(y, &k1, h / 2.0), ei, f);
    let k3 = rhs(&add(y, &k2, h / 2.0), ei, f);
    let k4 = rhs(&add(y, &k3, h), ei, f);
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Tip moment and its sensitivity to the base moment `m0`.
fn shoot(m0: f64, length: f64, ei: f64, f: f64) -> (f64, f64) {
    let h = length / BVP_STEPS as f64;
    // [θ, m, ∂θ/∂m0, ∂m/∂m0]
    let g = |y: &[f64; 4]| [y[1] / ei, -f * y[0].cos(), y[3] / ei, f * y[0].sin() * y[2]];
    let mut y = [0.0, m0, 0.0, 1.0];
    let add = |a: &[f64; 4], k: &[f64; 4], t: f64| -> [f64; 4] {
        std::array::from_fn(|i| a[i] + t * k[i])
    };
    for _ in 0..BVP_STEPS {
        let k1 = g(&y);
        let k2 = g(&add(&y, &k1, h / 2.0));
        let k3 = g(&add(&y, &k2, h / 2.0));
        let k4 = g(&add(&y, &k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    (y[1], y[3])
}

/// Newton on the base moment from `guess`; on failure, the iterations spent.
fn newton(
    guess: f64,
    rod: &RodSpec,
    f: f64,
    moment: f64,
    budget: usize,
) -> std::result::Result<(f64, usize), usize> {
    let ei = rod.bending_stiffness();
    let scale = moment.abs() + f.abs() * rod.length + ei / rod.length;
    let mut m0 = guess;
    let (tip, mut dtip) = shoot(m0, rod.length, ei, f);
    let mut res = tip - moment;
    for it in 0..budget {
        if res.abs() <= 1e-13 * scale {
            return Ok((m0, it));
        }
        if !(dtip.abs() > 0.0) || !res.is_finite() {
            return Err(it + 1);
        }
        let step = -res / dtip;
        let mut t = 1.0;
        loop {
            let trial = m0 + t * step;
            let (tt, dt) = shoot(trial, rod.length, ei, f);
            if (tt - moment).abs() < res.abs() {
                m0 = trial;
                dtip = dt;
                res = tt - moment;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                // no further decrease: accept only at the roundoff floor
                return if res.abs() <= 1e-10 * scale {
                    Ok((m0, it + 1))
                } else {
                    Err(it + 1)
                };
            }
        }
    }
    if res.abs() <= 1e-13 * scale {
        Ok((m0, budget))
    } else {
        Err(budget)
    }
}

/// Newton through `levels` equal load increments, each warm-started from the last.
fn continuation(rod: &RodSpec, f: f64, mt: f64, levels: usize, used: &mut usize) -> Option<f64> {
    let mut m0 = 0.0;
    for k in 1..=levels {
        let lam = k as f64 / levels as f64;
        // linear-theory guess on the first increment
        let start = if k == 1 {
            lam * (mt + f * rod.length)
        } else {
            m0
        };
        match newton(
            start,
            rod,
            lam * f,
            lam * mt,
            MAX_SHOOTING.saturating_sub(*used),
        ) {
            Ok((m, it)) => {
                *used += it;
                m0 = m;
            }
            Err(it) => {
                *used += it.max(1);
                return None;
            }
        }
    }
    Some(m0)
}

/// Solve `EI u_y(s) = m_y + f_x (z(L) − z(s))` by shooting on the base moment.
///
/// Newton's method is run under load continuation, doubling the number of load
/// increments whenever a level fails to converge.
pub fn planar_rod_bvp(rod: &RodSpec, wrench: &TipWrench) -> Result<RodSolution> {
    rod.validate()?;
    if !wrench.is_planar() || !(wrench.force.x.is_finite() && wrench.moment.y.is_finite()) {
        return Err(ShapeError::Invalid(
            "planar rod needs a finite force along world x and moment about world y".into(),
        ));
    }
    let (f, mt) = (wrench.force.x, wrench.moment.y);
    let mut used = 0usize;
    let mut levels = 1usize;
    let m0 = loop {
        if let Some(m) = continuation(rod, f, mt, levels, &mut used) {
            break m;
        }
        if used >= MAX_SHOOTING || levels >= 64 {
            let (tip, _) = shoot(mt + f * rod.length, rod.length, rod.bending_stiffness(), f);
            return Err(ShapeError::ShootingDivergence {
                iterations: used,
                residual: (tip - mt).abs(),
            });
        }
        levels *= 2;
    };

    let ei = rod.bending_stiffness();
    let h = rod.length / BVP_STEPS as f64;
    let mut y: State = [0.0, 0.0, 0.0, m0];
    let mut sol = RodSolution {
        rod: *rod,
        wrench: *wrench,
        s: Vec::with_capacity(BVP_STEPS + 1),
        x: Vec::with_capacity(BVP_STEPS + 1),
        z: Vec::with_capacity(BVP_STEPS + 1),
        theta: Vec::with_capacity(BVP_STEPS + 1),
        moment: Vec::with_capacity(BVP_STEPS + 1),
        iterations: used,
    };
    for k in 0..=BVP_STEPS {
        sol.s.push(if k == BVP_STEPS {
            rod.length
        } else {
            k as f64 * h
        });
        sol.x.push(y[0]);
        sol.z.push(y[1]);
        sol.theta.push(y[2]);
        sol.moment.push(y[3]);
        if k < BVP_STEPS {
            y = rk4(&y, h, ei, f);
        }
    }
    Ok(sol)
}

impl RodSolution {
    /// `u_y` on the grid (1/m).
    pub fn curvature(&self) -> Vec<f64> {
        let ei = self.rod.bending_stiffness();
        self.moment.iter().map(|m| m / ei).collect()
    }

    fn state_at(&self, s: f64) -> Result<State> {
        let l = self.rod.length;
        if !(s >= -1e-12 * l && s <= l * (1.0 + 1e-12)) {
            return Err(ShapeError::Domain { s, length: l });
        }
        let s = s.clamp(0.0, l);
        let h = l / BVP_STEPS as f64;
        let k = ((s / h).floor() as usize).min(BVP_STEPS);
        let y = [self.x[k], self.z[k], self.theta[k], self.moment[k]];
        let rest = s - self.s[k];
        if rest <= 0.0 {
            return Ok(y);
        }
        Ok(rk4(
            &y,
            rest,
            self.rod.bending_stiffness(),
            self.wrench.force.x,
        ))
    }

    /// Bending angle `∫₀ˢ u_y`.
    pub fn angle_at(&self, s: f64) -> Result<f64> {
        self.state_at(s).map(|y| y[2])
    }

    pub fn pose_at(&self, s: f64) -> Result<PoseSE3> {
        let y = self.state_at(s)?;
        let (sn, cs) = y[2].sin_cos();
        let r = Matrix3::new(cs, 0.0, sn, 0.0, 1.0, 0.0, -sn, 0.0, cs);
        Ok(PoseSE3::new(r, Vector3::new(y[0], 0.0, y[1])))
    }

    pub fn tip(&self) -> PoseSE3 {
        self.pose_at(self.rod.length).expect("tip lies on the rod")
    }

    /// Largest `|EI u_y(s) − (m_y + f_x (z(L) − z(s)))|` on the grid (N·m).
    pub fn moment_residual(&self) -> f64 {
        let zl = *self.z.last().expect("non-empty grid");
        let (f, mt) = (self.wrench.force.x, self.wrench.moment.y);
        self.moment
            .iter()
            .zip(&self.z)
            .map(|(m, z)| (m - (mt + f * (zl - z))).abs())
            .fold(0.0, f64::max)
    }
}

/// `n` evenly spaced values over `[−max, max]`.
pub fn linspace_symmetric(max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| -max + 2.0 * max * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Cartesian product of force and moment levels, force outermost.
pub fn wrench_grid(max_force: f64, max_moment: f64, n: usize) -> Vec<TipWrench> {
    let forces = linspace_symmetric(max_force, n);
    let moments = linspace_symmetric(max_moment, n);
    forces
        .iter()
        .flat_map(|&f| moments.iter().map(move |&m| TipWrench::planar(f, m)))
        .collect()
}

/// Free pitch radii for a `p`-string planar array, alternating `∓0.2 L`.
pub fn convergence_radii(p: usize, length: f64) -> Vec<f64> {
    (1..p)
        .map(|i| {
            if i % 2 == 1 {
                -CONVERGENCE_RADIUS * length
            } else {
                CONVERGENCE_RADIUS * length
            }
        })
        .collect()
}

/// Pose errors at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// Position error as a percent of the segment length.
    pub e_p: f64,
    /// rad
    pub theta_e: f64,
    /// `sqrt(‖Δp‖ + c_ℓ θ_e)`, with `‖Δp‖` in meters.
    pub e_n: f64,
}

/// Position, angular and normalized errors between matched pose lists.
pub fn error_metrics(
    truth: &[PoseSE3],
    estimate: &[PoseSE3],
    c_ell: f64,
    length: f64,
) -> Result<Vec<ErrorMetrics>> {
    if truth.len() != estimate.len() {
        return Err(ShapeError::Dimension {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| {
            let dp = (t.position - e.position).norm();
            let cos =
                (((e.rotation * t.rotation.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            let theta_e = cos.acos();
            ErrorMetrics {
                e_p: dp / length * 100.0,
                theta_e,
                e_n: (dp + c_ell * theta_e).sqrt(),
            }
        })
        .collect())
}

/// Angle of `R_a R_bᵀ`, accurate down to roundoff for nearly equal rotations.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a * b.transpose();
    let skew = vee(&((r - r.transpose()) * 0.5));
    skew.norm().atan2((r.trace() - 1.0) / 2.0)
}

/// Reconstruction errors for one string count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub p: usize,
    /// Free pitch radii (m); the fixed string is `0.25 L` at `s = L`.
    pub radii: Vec<f64>,
    /// Free anchors as fractions of the length.
    pub anchors: Vec<f64>,
    pub aleph: f64,
    /// Tip position error per wrench (% of length).
    pub errors: Vec<f64>,
    /// Tip rotation error per wrench (rad).
    pub rotation_errors: Vec<f64>,
}

impl ConvergenceRow {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_rotation(&self) -> f64 {
        self.rotation_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Reconstruct elastic-rod tips with `p`-string planar arrays.
///
/// Each array's free anchors maximize `ℵ(J_ℓc)`. String lengths follow the planar
/// constant-pitch relation `ℓᵢ = s_aᵢ − rᵢ θ(s_aᵢ)` along the rod solution, and
/// the coefficients come from the exact constant Jacobian.
pub fn convergence_study(
    rod: &RodSpec,
    wrenches: &[TipWrench],
    string_counts: &[usize],
    n_steps: usize,
) -> Result<Vec<ConvergenceRow>> {
    if wrenches.is_empty() {
        return Err(ShapeError::Invalid(
            "convergence study needs at least one wrench".into(),
        ));
    }
    let shapes: Vec<RodSolution> = wrenches
        .par_iter()
        .map(|w| planar_rod_bvp(rod, w))
        .collect::<Result<_>>()?;
    let l = rod.length;
    string_counts
        .iter()
        .map(|&p| {
            if p == 0 {
                return Err(ShapeError::Invalid("string count must be positive".into()));
            }
            let design = PlanarDesign::new(l, convergence_radii(p, l));
            let best = optimize_planar_anchors(&design, &PlanarObjective::ConfigSpace)?;
            let j = design.jacobian(&best.anchors)?;
            let basis = design.basis()?;
            let strings = design.strings(&best.anchors)?;
            let lu = j.clone().lu();
            let per_shape: Vec<(f64, f64)> = shapes
                .par_iter()
                .map(|sol| {
                    let dl = strings
                        .iter()
                        .map(|s| {
                            let crate::routing::RoutingPath::ConstantPitch { rx, .. } = s.path
                            else {
                                unreachable!("planar strings are constant pitch")
                            };
                            Ok(-rx * sol.angle_at(s.anchor)?)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let c = lu
                        .solve(&DVector::from_vec(dl))
                        .ok_or(ShapeError::SingularDesign {
                            aleph: 0.0,
                            ratio: 0.0,
                        })?;
                    let est = forward_kinematics(&basis, &c, &[l], n_steps)?[0];
                    let tip = sol.tip();
                    Ok((
                        (tip.position - est.position).norm() / l * 100.0,
                        rotation_angle(&tip.rotation, &est.rotation),
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(ConvergenceRow {
                p,
                radii: design.free_radii.clone(),
                anchors: best.anchors,
                aleph: best.value,
                errors: per_shape.iter().map(|e| e.0).collect(),
                rotation_errors: per_shape.iter().map(|e| e.1).collect(),
            })
        })
        .collect()
}

/// A synthetic ground-truth configuration with its measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    /// Coefficients in the truth basis.
    pub c: Config,
    /// Absolute measurement rows from fine quadrature.
    pub lengths: DVector<f64>,
}

/// Admissible random curvature fields in `basis_truth` and the lengths `array` would read.
pub fn synthetic_spatial_truth(
    basis_truth: &ModalBasis,
    array: &SensorArray,
    constraints: &ConstraintSet,
    n: usize,
    seed: u64,
) -> Result<Vec<SyntheticCase>> {
    let fine = SensorArray::new(
        array.strings.clone(),
        array.composites.clone(),
        TRUTH_QUADRATURE,
    )?;
    let paths: Vec<_> = array.strings.iter().map(|s| s.path.clone()).collect();
    let samples =
        sample_admissible_decaying(basis_truth, constraints, &paths, n, seed, TRUTH_DECAY)?;
    samples
        .configs
        .into_par_iter()
        .map(|c| {
            let l = lengths(&fine, basis_truth, &c, Reference::Absolute)?;
            Ok(SyntheticCase { c, lengths: l })
        })
        .collect()
}

/// One reconstructed synthetic case.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialResult {
    pub c: Config,
    pub iterations: usize,
    pub metrics: Vec<ErrorMetrics>,
}

/// Solve each synthetic case with the sensing basis and score the poses at `s_eval`.
pub fn spatial_study(
    basis_truth: &ModalBasis,
    cases: &[SyntheticCase],
    array: &SensorArray,
    basis: &ModalBasis,
    s_eval: &[f64],
    c_ell: f64,
    n_steps: usize,
) -> Result<Vec<SpatialResult>> {
    cases
        .par_iter()
        .map(|case| {
            let sol = solve_shape(
                array,
                basis,
                &Measurement::new(case.lengths.clone(), Reference::Absolute),
                &Config::zeros(basis.dim()),
            )?;
            let truth = forward_kinematics(basis_truth, &case.c, s_eval, n_steps)?;
            let est = forward_kinematics(basis, &sol.c, s_eval, n_steps)?;
            Ok(SpatialResult {
                metrics: error_metrics(&truth, &est, c_ell, basis.length)?,
                iterations: sol.diagnostics.iterations,
                c: sol.c,
            })
        })
        .collect()
}

/// Columns of `basis_truth` matching each column of `basis`, for embedding sensing coefficients.
pub fn embed(basis: &ModalBasis, basis_truth: &ModalBasis, c: &Config) -> Result<Config> {
    basis.check_config(c)?;
    let mut out = Config::zeros(basis_truth.dim());
    let (off, off_t) = (basis.offsets(), basis_truth.offsets());
    for (axis, (a, at)) in basis.axes().iter().zip(basis_truth.axes()).enumerate() {
        for (k, d) in a.degrees().iter().enumerate() {
            let Some(kt) = at.degrees().iter().position(|x| x == d) else {
                return Err(ShapeError::Invalid(format!(
                    "degree {d} on axis {axis} is missing from the truth basis"
                )));
            };
            out[off_t[axis] + kt] = c[off[axis] + k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::exp_se3;
    use crate::liegroup::Twist6;
    use crate::modal::AxisBasis;
    use crate::routing::{RoutingPath, StringSpec};
    use crate::sensitivity::{is_admissible, DiskGeometry};
    use std::f64::consts::PI;

    fn rod() -> RodSpec {
        RodSpec::nitinol(0.3, 0.004)
    }

    #[test]
    fn zero_load_leaves_the_rod_straight() {
        let sol = planar_rod_bvp(&rod(), &TipWrench::planar(0.0, 0.0)).unwrap();
        assert!(sol.curvature().iter().all(|u| *u == 0.0));
        let tip = sol.tip();
        assert!((tip.position - Vector3::new(0.0, 0.0, 0.3)).norm() < 1e-13);
    }

    #[test]
    fn pure_moment_bends_into_an_arc() {
        let r = rod();
        let m = 2.5;
        let sol = planar_rod_bvp(&r, &TipWrench::planar(0.0, m)).unwrap();
        let u = sol.curvature();
        let k = m / r.bending_stiffness();
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let sd = (u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / u.len() as f64).sqrt();
        assert!(sd <= 1e-10 * k && (mean - k).abs() <= 1e-10 * k);
        let tip = sol.tip().position;
        let x = (1.0 - (k * r.length).cos()) / k;
        let z = (k * r.length).sin() / k;
        assert!(
            (tip.x - x).abs() < 1e-10 && (tip.z - z).abs() < 1e-10,
            "{tip:?} vs {x}, {z}"
        );
    }

    #[test]
    fn large_force_satisfies_moment_balance() {
        let r = rod();
        let sol = planar_rod_bvp(&r, &TipWrench::planar(60.0, 0.0)).unwrap();
        let umax = sol.curvature().iter().fold(0.0f64, |a, u| a.max(u.abs()));
        assert!(sol.moment_residual() <= 1e-9 * umax * r.bending_stiffness());
        assert!((sol.moment.last().unwrap()).abs() < 1e-9);
        // the tip position is the one entering the moment expression
        assert!((sol.tip().position.z - sol.z[BVP_STEPS]).abs() < 1e-10);
        assert!(
            sol.tip().position.x > 0.1,
            "a 60 N tip force bends the rod strongly"
        );
    }

    #[test]
    fn bvp_rejects_out_of_plane_loads() {
        let w = TipWrench {
            force: Vector3::new(1.0, 1.0, 0.0),
            moment: Vector3::zeros(),
        };
        assert!(matches!(
            planar_rod_bvp(&rod(), &w),
            Err(ShapeError::Invalid(_))
        ));
    }

    #[test]
    fn off_grid_states_interpolate_by_integration() {
        let sol = planar_rod_bvp(&rod(), &TipWrench::planar(-30.0, 3.0)).unwrap();
        let i = 777;
        assert_eq!(sol.angle_at(sol.s[i]).unwrap(), sol.theta[i]);
        let mid = 0.5 * (sol.s[i] + sol.s[i + 1]);
        let th = sol.angle_at(mid).unwrap();
        assert!(
            th > sol.theta[i].min(sol.theta[i + 1]) - 1e-12
                && th < sol.theta[i].max(sol.theta[i + 1]) + 1e-12
        );
        assert!(sol.angle_at(0.31).is_err());
    }

    #[test]
    fn wrench_grid_is_a_full_product() {
        let g = wrench_grid(60.0, 6.0, 10);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], TipWrench::planar(-60.0, -6.0));
        assert_eq!(g[99], TipWrench::planar(60.0, 6.0));
        assert_eq!(g[9], TipWrench::planar(-60.0, 6.0));
        assert_eq!(linspace_symmetric(1.0, 1), vec![0.0]);
    }

    #[test]
    fn metrics_examples() {
        let a = PoseSE3::identity();
        let m = error_metrics(&[a], &[a], 0.05, 0.3).unwrap()[0];
        assert_eq!((m.e_p, m.theta_e, m.e_n), (0.0, 0.0, 0.0));
        for axis in [
            Vector3::x(),
            Vector3::y(),
            Vector3::new(1.0, 1.0, 1.0).normalize(),
        ] {
            let r = exp_se3(&Twist6::new(axis * (PI / 2.0), Vector3::zeros()));
            let m = error_metrics(&[a], &[r], 0.05, 0.3).unwrap()[0];
            assert!((m.theta_e - PI / 2.0).abs() < 1e-12);
            assert!((m.e_n - (0.05 * PI / 2.0).sqrt()).abs() < 1e-12);
        }
        let shifted = PoseSE3::new(Matrix3::identity(), Vector3::new(0.003, 0.0, 0.0));
        let m = error_metrics(&[a], &[shifted], 0.05, 0.3).unwrap()[0];
        assert!((m.e_p - 1.0).abs() < 1e-12);
        assert!(error_metrics(&[a], &[], 0.05, 0.3).is_err());
    }

    #[test]
    fn rotation_angle_resolves_tiny_rotations() {
        let r = exp_se3(&Twist6::new(
            Vector3::new(0.0, 3e-11, 0.0),
            Vector3::zeros(),
        ))
        .rotation;
        assert!((rotation_angle(&r, &Matrix3::identity()) - 3e-11).abs() < 1e-15);
        let big = exp_se3(&Twist6::new(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros())).rotation;
        assert!((rotation_angle(&big, &Matrix3::identity()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_improves_with_strings() {
        let w = wrench_grid(60.0, 6.0, 3);
        let rows = convergence_study(&rod(), &w, &[1, 2, 3], 100).unwrap();
        assert!(rows[0].mean() > rows[1].mean() && rows[1].mean() > rows[2].mean());
        for r in &rows {
            assert!(
                r.max_rotation() <= 1e-8,
                "p = {}: {}",
                r.p,
                r.max_rotation()
            );
        }
        assert_eq!(convergence_radii(4, 1.0), vec![-0.2, 0.2, -0.2]);
    }

    const LS: f64 = 0.293;

    /// Opposite-handed helices, so torsion is well observed.
    fn helical_array() -> SensorArray {
        let strings = (0..8)
            .map(|i| {
                let path = RoutingPath::Helical {
                    radius: 0.03,
                    omega: if i % 2 == 0 { 12.0 } else { -12.0 },
                    alpha: i as f64 * PI / 4.0,
                };
                StringSpec::base(path, LS * (0.4 + 0.6 * ((i * 5) % 8) as f64 / 7.0))
            })
            .collect();
        SensorArray::simple(strings).unwrap()
    }

    fn sensing_basis() -> ModalBasis {
        ModalBasis::new(
            AxisBasis::first(3),
            AxisBasis::first(3),
            AxisBasis::first(2),
            LS,
        )
        .unwrap()
    }

    fn soft_constraints() -> ConstraintSet {
        let mut c = ConstraintSet::strain(0.05, 0.004);
        c.disk = Some(DiskGeometry {
            height: 0.02,
            radius: 0.0375,
            subsegment_length: LS / 10.0,
        });
        c.bend_limit = Some(10f64.to_radians());
        c.twist_limit = Some(7.5f64.to_radians());
        c
    }

    #[test]
    fn model_matched_truth_is_recovered() {
        let basis = sensing_basis();
        let array = helical_array();
        let cases = synthetic_spatial_truth(&basis, &array, &soft_constraints(), 5, 21).unwrap();
        assert_eq!(cases.len(), 5);
        // reconstruct with the same quadrature that produced the lengths
        let fine = SensorArray::new(array.strings.clone(), Vec::new(), TRUTH_QUADRATURE).unwrap();
        for case in &cases {
            let sol = solve_shape(
                &fine,
                &basis,
                &Measurement::new(case.lengths.clone(), Reference::Absolute),
                &Config::zeros(8),
            )
            .unwrap();
            assert!(
                (&sol.c - &case.c).norm() <= 1e-6,
                "{}",
                (&sol.c - &case.c).norm()
            );
        }
    }

    #[test]
    fn truth_outside_the_sensing_basis_leaves_a_residual_error() {
        let basis = sensing_basis();
        let truth_basis = ModalBasis::new(
            AxisBasis::first(4),
            AxisBasis::first(4),
            AxisBasis::first(2),
            LS,
        )
        .unwrap();
        let array = helical_array();
        let base = synthetic_spatial_truth(&basis, &array, &soft_constraints(), 3, 5).unwrap();
        let fine = SensorArray::new(array.strings.clone(), Vec::new(), TRUTH_QUADRATURE).unwrap();
        let cases: Vec<SyntheticCase> = base
            .iter()
            .map(|b| {
                let mut c = embed(&basis, &truth_basis, &b.c).unwrap();
                // T₃ on x and y at 10% of the T₀ amplitude
                c[3] = 0.1 * c[0];
                c[7] = 0.1 * c[4];
                let lengths = lengths(&fine, &truth_basis, &c, Reference::Absolute).unwrap();
                SyntheticCase { c, lengths }
            })
            .collect();
        let results =
            spatial_study(&truth_basis, &cases, &array, &basis, &[LS], 0.0375, 100).unwrap();
        for r in &results {
            let m = r.metrics[0];
            assert!(m.e_p > 0.0 && m.e_p < 5.0, "{m:?}");
        }
    }

    #[test]
    fn synthetic_samples_are_admissible() {
        let truth_basis = ModalBasis::new(
            AxisBasis::first(5),
            AxisBasis::first(5),
            AxisBasis::first(3),
            LS,
        )
        .unwrap();
        let array = helical_array();
        let cons = soft_constraints();
        let cases = synthetic_spatial_truth(&truth_basis, &array, &cons, 20, 9).unwrap();
        let paths: Vec<RoutingPath> = array.strings.iter().map(|s| s.path.clone()).collect();
        for c in &cases {
            assert!(is_admissible(&truth_basis, &cons, &paths, &c.c).unwrap());
        }
    }

    #[test]
    fn embedding_maps_matching_degrees() {
        let small = sensing_basis();
        let big = ModalBasis::new(
            AxisBasis::first(4),
            AxisBasis::first(4),
            AxisBasis::first(3),
            LS,
        )
        .unwrap();
        let c = Config::from_iterator(8, (1..=8).map(|k| k as f64));
        let e = embed(&small, &big, &c).unwrap();
        assert_eq!(
            e.as_slice(),
            &[1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0, 0.0, 7.0, 8.0, 0.0]
        );
        assert!(embed(&big, &small, &e).is_err());
    }
}
