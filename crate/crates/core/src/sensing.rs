//! String length models, Jacobians, forward kinematics and shape reconstruction.

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, Vector3};

use crate::error::{Result, ShapeError};
use crate::liegroup::{self, exp_se3, PoseSE3, Twist6};
use crate::modal::{Config, ModalBasis};
use crate::routing::{velocity_from_curvature, StringSpec};
use crate::sensitivity::{noise_amp, singular_values};

/// Trapezoid nodes per string integral.
pub const DEFAULT_QUADRATURE: usize = 80;

/// Integration steps along the backbone.
pub const DEFAULT_STEPS: usize = 100;

/// Below this `σ_min/σ_max` the length Jacobian is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_HALVINGS: usize = 20;

/// Signed sum of member string length changes, e.g. an antagonistic tendon pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub members: Vec<usize>,
    pub signs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reference {
    Absolute,
    /// Length changes relative to the straight configuration, as an encoder reports them.
    #[default]
    DeltaFromStraight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub values: DVector<f64>,
    pub reference: Reference,
}

impl Measurement {
    pub fn new(values: DVector<f64>, reference: Reference) -> Self {
        Self { values, reference }
    }

    pub fn delta(values: DVector<f64>) -> Self {
        Self::new(values, Reference::DeltaFromStraight)
    }
}

/// Strings plus the composite rows built from them.
///
/// Output rows are the strings not consumed by any composite, in index order,
/// followed by one row per composite.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    pub strings: Vec<StringSpec>,
    pub composites: Vec<Composite>,
    pub quadrature_points: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SensorArray {
    pub fn new(
        strings: Vec<StringSpec>,
        composites: Vec<Composite>,
        quadrature_points: usize,
    ) -> Result<Self> {
        if quadrature_points < 2 {
            return Err(ShapeError::Invalid(
                "quadrature needs at least two points".into(),
            ));
        }
        let mut used = vec![false; strings.len()];
        for comp in &composites {
            if comp.members.is_empty() || comp.members.len() != comp.signs.len() {
                return Err(ShapeError::Invalid(
                    "composite members and signs must be non-empty and equal in length".into(),
                ));
            }
            for (&m, &sign) in comp.members.iter().zip(&comp.signs) {
                if m >= strings.len() {
                    return Err(ShapeError::Invalid(format!(
                        "composite member {m} is not a string index"
                    )));
                }
                if used[m] {
                    return Err(ShapeError::Invalid(format!(
                        "string {m} belongs to more than one composite"
                    )));
                }
                if sign.abs() != 1.0 {
                    return Err(ShapeError::Invalid(format!(
                        "composite sign must be +1 or -1, got {sign}"
                    )));
                }
                used[m] = true;
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = (0..strings.len())
            .filter(|&i| !used[i])
            .map(|i| vec![(i, 1.0)])
            .collect();
        rows.extend(composites.iter().map(|c| {
            c.members
                .iter()
                .copied()
                .zip(c.signs.iter().copied())
                .collect()
        }));
        if rows.is_empty() {
            return Err(ShapeError::Invalid(
                "sensor array has no measurements".into(),
            ));
        }
        Ok(Self {
            strings,
            composites,
            quadrature_points,
            rows,
        })
    }

    pub fn simple(strings: Vec<StringSpec>) -> Result<Self> {
        Self::new(strings, Vec::new(), DEFAULT_QUADRATURE)
    }

    /// Number of measurement rows.
    pub fn p(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn validate(&self, basis: &ModalBasis) -> Result<()> {
        self.strings
            .iter()
            .try_for_each(|s| s.validate(basis.length))
    }

    /// Constant-pitch routing on a torsion-free basis: lengths are affine in `c`.
    pub fn is_linear_class(&self, basis: &ModalBasis) -> bool {
        !basis.has_torsion() && self.strings.iter().all(|s| s.path.is_constant_pitch())
    }

    /// Collapse per-string values into measurement rows.
    pub fn combine(&self, per_string: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            self.rows
                .iter()
                .map(|r| r.iter().map(|&(i, sg)| sg * per_string[i]).sum()),
        )
    }

    pub(crate) fn combine_rows(&self, per_string: &[DVector<f64>], m: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.p(), m);
        for (k, row) in self.rows.iter().enumerate() {
            for &(i, sg) in row {
                let mut row = j.row_mut(k);
                row += per_string[i].transpose() * sg;
            }
        }
        j
    }
}

/// Length of one string and optionally its gradient, by the trapezoid rule.
pub(crate) fn string_eval(
    spec: &StringSpec,
    index: usize,
    basis: &ModalBasis,
    c: &Config,
    nodes: usize,
    gradient: bool,
) -> Result<(f64, Option<DVector<f64>>)> {
    let (a, b) = spec.interval(basis.length);
    let m = basis.dim();
    let mut grad = gradient.then(|| DVector::zeros(m));
    if b <= a {
        return Ok((0.0, grad));
    }
    let n = nodes.max(2);
    let h = (b - a) / (n - 1) as f64;
    let mut length = 0.0;
    for k in 0..n {
        let s = if k == n - 1 { b } else { a + k as f64 * h };
        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        let u = basis.curvature_unchecked(c, s);
        let v = velocity_from_curvature(&spec.path, &u, s);
        if !(v.z > 0.0) {
            return Err(ShapeError::NotRealizable {
                string: index,
                margin: v.z,
                s,
            });
        }
        let norm = v.norm();
        length += w * norm;
        if let Some(g) = grad.as_mut() {
            let lever = spec.path.radial(s).cross(&(v / norm));
            accumulate_phi_t(basis, s, &lever, w, g);
        }
    }
    Ok((length, grad))
}

/// `g += w Φ(s)ᵀ v`.
fn accumulate_phi_t(basis: &ModalBasis, s: f64, v: &Vector3<f64>, w: f64, g: &mut DVector<f64>) {
    let phi = basis
        .basis_matrix(s)
        .expect("quadrature node inside the segment");
    g.gemv_tr(w, &phi, v, 1.0);
}

/// Length of a single string at configuration `c`.
pub fn string_length(
    spec: &StringSpec,
    basis: &ModalBasis,
    c: &Config,
    quadrature_points: usize,
) -> Result<f64> {
    basis.check_config(c)?;
    string_eval(spec, 0, basis, c, quadrature_points, false).map(|(l, _)| l)
}

fn per_string_lengths(array: &SensorArray, basis: &ModalBasis, c: &Config) -> Result<Vec<f64>> {
    array
        .strings
        .iter()
        .enumerate()
        .map(|(i, s)| string_eval(s, i, basis, c, array.quadrature_points, false).map(|(l, _)| l))
        .collect()
}

/// Measurement rows at `c`.
pub fn lengths(
    array: &SensorArray,
    basis: &ModalBasis,
    c: &Config,
    reference: Reference,
) -> Result<DVector<f64>> {
    basis.check_config(c)?;
    let mut per = per_string_lengths(array, basis, c)?;
    if reference == Reference::DeltaFromStraight {
        let straight = per_string_lengths(array, basis, &Config::zeros(basis.dim()))?;
        per.iter_mut().zip(&straight).for_each(|(l, l0)| *l -= l0);
    }
    Ok(array.combine(&per))
}

/// Absolute measurement rows and `J_ℓc` in one pass.
pub fn lengths_and_jacobian(
    array: &SensorArray,
    basis: &ModalBasis,
    c: &Config,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    basis.check_config(c)?;
    let mut ls = Vec::with_capacity(array.strings.len());
    let mut gs = Vec::with_capacity(array.strings.len());
    for (i, s) in array.strings.iter().enumerate() {
        let (l, g) = string_eval(s, i, basis, c, array.quadrature_points, true)?;
        ls.push(l);
        gs.push(g.expect("gradient requested"));
    }
    Ok((array.combine(&ls), array.combine_rows(&gs, basis.dim())))
}

/// `J_ℓc = ∂ℓ/∂c`, one row per measurement.
pub fn config_jacobian(
    array: &SensorArray,
    basis: &ModalBasis,
    c: &Config,
) -> Result<DMatrix<f64>> {
    lengths_and_jacobian(array, basis, c).map(|(_, j)| j)
}

/// `[Φ(s); 0]`, the derivative of a backbone twist with respect to `c`.
fn twist_derivative(basis: &ModalBasis, s: f64) -> Matrix6xX<f64> {
    let phi = basis
        .basis_matrix(s)
        .expect("collocation point inside the segment");
    let mut d = Matrix6xX::zeros(basis.dim());
    d.fixed_rows_mut::<3>(0).copy_from(&phi);
    d
}

/// Magnus element over `[s0, s0 + h]` and its derivative with respect to `c`.
fn magnus_with_derivative(
    basis: &ModalBasis,
    c: &Config,
    s0: f64,
    h: f64,
    jac: bool,
) -> (Twist6, Option<Matrix6xX<f64>>) {
    let (s1, s2) = liegroup::collocation_points(s0, h);
    let eta1 = Twist6::backbone(basis.curvature_unchecked(c, s1));
    let eta2 = Twist6::backbone(basis.curvature_unchecked(c, s2));
    let psi = liegroup::magnus_psi(&eta1, &eta2, h);
    if !jac {
        return (psi, None);
    }
    let d1 = twist_derivative(basis, s1);
    let d2 = twist_derivative(basis, s2);
    let w = 3f64.sqrt() / 12.0 * h * h;
    let dpsi =
        (&d1 + &d2) * (0.5 * h) + (liegroup::ad(&eta1) * &d2 - liegroup::ad(&eta2) * &d1) * w;
    (psi, Some(dpsi))
}

/// Pose and body Jacobian at a set of arc lengths, marching once along the backbone.
fn march(
    basis: &ModalBasis,
    c: &Config,
    queries: &[f64],
    n_steps: usize,
    base: PoseSE3,
    jac: bool,
) -> Result<Vec<(PoseSE3, Option<Matrix6xX<f64>>)>> {
    basis.check_config(c)?;
    let length = basis.length;
    let n = n_steps.max(1);
    let h = length / n as f64;
    let mut order: Vec<usize> = (0..queries.len()).collect();
    for &s in queries {
        if !(s >= 0.0 && s <= length * (1.0 + 1e-12)) {
            return Err(ShapeError::Domain { s, length });
        }
    }
    order.sort_by(|&a, &b| queries[a].total_cmp(&queries[b]));

    let m = basis.dim();
    let mut out = vec![(PoseSE3::identity(), None); queries.len()];
    let mut pose = base;
    let mut body = jac.then(|| Matrix6xX::zeros(m));
    let mut k = 0usize;
    let advance = |pose: &PoseSE3, body: &Option<Matrix6xX<f64>>, s0: f64, step: f64| {
        let (psi, dpsi) = magnus_with_derivative(basis, c, s0, step, jac);
        let e = exp_se3(&psi);
        let next_body = body.as_ref().map(|j| {
            let back: Matrix6<f64> = e.inverse().adjoint();
            back * j + liegroup::dexp_matrix(&psi) * dpsi.expect("derivative requested")
        });
        (pose.compose(&e), next_body)
    };
    for idx in order {
        let s = queries[idx].min(length);
        // full steps whose end lies at or before s
        let full = ((s / h) * (1.0 + 1e-14)).floor() as usize;
        let full = full.min(n);
        while k < full {
            let (p, b) = advance(&pose, &body, k as f64 * h, h);
            pose = p;
            body = b;
            k += 1;
        }
        let rem = s - k as f64 * h;
        out[idx] = if rem > 1e-14 * length {
            advance(&pose, &body, k as f64 * h, rem)
        } else {
            (pose, body.clone())
        };
    }
    Ok(out)
}

/// Poses at the requested arc lengths.
pub fn forward_kinematics(
    basis: &ModalBasis,
    c: &Config,
    s_query: &[f64],
    n_steps: usize,
) -> Result<Vec<PoseSE3>> {
    Ok(
        march(basis, c, s_query, n_steps, PoseSE3::identity(), false)?
            .into_iter()
            .map(|(p, _)| p)
            .collect(),
    )
}

/// Body Jacobian `J_ξc(s)`: the twist of frame `s` produced by each coefficient.
pub fn body_jacobian(
    basis: &ModalBasis,
    c: &Config,
    s: f64,
    n_steps: usize,
) -> Result<Matrix6xX<f64>> {
    Ok(body_jacobians(basis, c, &[s], n_steps)?.remove(0).1)
}

/// Poses and body Jacobians at several arc lengths in one pass.
pub fn body_jacobians(
    basis: &ModalBasis,
    c: &Config,
    s_query: &[f64],
    n_steps: usize,
) -> Result<Vec<(PoseSE3, Matrix6xX<f64>)>> {
    Ok(
        march(basis, c, s_query, n_steps, PoseSE3::identity(), true)?
            .into_iter()
            .map(|(p, j)| (p, j.expect("jacobian requested")))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    /// Noise amplification of `J_ℓc` at the solution.
    pub aleph: f64,
    pub linear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub c: Config,
    pub diagnostics: SolveDiagnostics,
}

fn check_conditioning(j: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(j);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let aleph = noise_amp(j);
    if !(ratio >= SINGULAR_RATIO) {
        return Err(ShapeError::SingularDesign { aleph, ratio });
    }
    Ok(aleph)
}

fn least_squares(j: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(rhs, SINGULAR_RATIO * smax)
        .expect("singular vectors computed")
}

/// Recover modal coefficients from a measurement vector.
///
/// Linear-class arrays are solved in closed form; others by Gauss–Newton
/// with a halving line search from `initial`.
pub fn solve_shape(
    array: &SensorArray,
    basis: &ModalBasis,
    measurement: &Measurement,
    initial: &Config,
) -> Result<Solution> {
    let m = basis.dim();
    let p = array.p();
    basis.check_config(initial)?;
    if measurement.values.len() != p {
        return Err(ShapeError::Dimension {
            expected: p,
            got: measurement.values.len(),
        });
    }
    if p < m {
        return Err(ShapeError::Underdetermined {
            measurements: p,
            coefficients: m,
        });
    }
    let zero = Config::zeros(m);
    let target = match measurement.reference {
        Reference::Absolute => measurement.values.clone(),
        Reference::DeltaFromStraight => {
            &measurement.values + lengths(array, basis, &zero, Reference::Absolute)?
        }
    };

    if array.is_linear_class(basis) {
        let (l0, j) = lengths_and_jacobian(array, basis, &zero)?;
        let aleph = check_conditioning(&j)?;
        let rhs = &target - l0;
        let c = least_squares(&j, &rhs);
        let residual = (&j * &c - rhs).norm();
        return Ok(Solution {
            c,
            diagnostics: SolveDiagnostics {
                iterations: 1,
                residual,
                aleph,
                linear: true,
            },
        });
    }

    gauss_newton(array, basis, &target, initial)
}

/// Gauss–Newton on `ℓ(c) − ℓ*` with a halving line search; `iterations` counts accepted steps.
pub(crate) fn gauss_newton(
    array: &SensorArray,
    basis: &ModalBasis,
    target: &DVector<f64>,
    initial: &Config,
) -> Result<Solution> {
    let mut c = initial.clone();
    let (l, mut j) = lengths_and_jacobian(array, basis, &c)?;
    let mut r = l - target;
    for iter in 0..MAX_ITERATIONS {
        check_conditioning(&j)?;
        let delta = -least_squares(&j, &r);
        if delta.norm() <= STEP_TOLERANCE {
            return Ok(finish(c, iter, &r, &j));
        }
        let rnorm = r.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &c + &delta * t;
            if let Ok((lt, jt)) = lengths_and_jacobian(array, basis, &trial) {
                let rt = lt - target;
                if rt.norm() < rnorm {
                    accepted = Some((trial, jt, rt));
                    break;
                }
            }
            t *= 0.5;
        }
        // no decrease along the Gauss–Newton direction: the residual has stagnated
        let Some((trial, jt, rt)) = accepted else {
            return Ok(finish(c, iter, &r, &j));
        };
        let step = delta.norm() * t;
        c = trial;
        j = jt;
        r = rt;
        if step <= STEP_TOLERANCE {
            return Ok(finish(c, iter + 1, &r, &j));
        }
    }
    Err(ShapeError::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: r.norm(),
        best: c.iter().copied().collect(),
    })
}

fn finish(c: Config, iterations: usize, r: &DVector<f64>, j: &DMatrix<f64>) -> Solution {
    Solution {
        c,
        diagnostics: SolveDiagnostics {
            iterations,
            residual: r.norm(),
            aleph: noise_amp(j),
            linear: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::AxisBasis;
    use crate::routing::{Mount, RoutingPath};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const L: f64 = 0.3;

    fn cp(rx: f64, ry: f64) -> RoutingPath {
        RoutingPath::ConstantPitch { rx, ry }
    }

    fn helix(alpha: f64, omega: f64) -> RoutingPath {
        RoutingPath::Helical {
            radius: 0.02,
            omega,
            alpha,
        }
    }

    fn spatial_basis() -> ModalBasis {
        ModalBasis::new(
            AxisBasis::first(3),
            AxisBasis::first(3),
            AxisBasis::first(2),
            L,
        )
        .unwrap()
    }

    fn helical_array() -> SensorArray {
        let strings = (0..8)
            .map(|i| {
                let alpha = i as f64 * PI / 4.0;
                let anchor = L * (0.4 + 0.6 * ((i * 5) % 8) as f64 / 7.0);
                StringSpec::base(helix(alpha, if i % 2 == 0 { 6.0 } else { -4.0 }), anchor)
            })
            .collect();
        SensorArray::simple(strings).unwrap()
    }

    fn zero_torsion_array() -> (SensorArray, ModalBasis) {
        let basis = ModalBasis::new(
            AxisBasis::first(2),
            AxisBasis::first(2),
            AxisBasis::empty(),
            L,
        )
        .unwrap();
        let strings = vec![
            StringSpec::base(cp(0.02, 0.0), L),
            StringSpec::base(cp(0.0, 0.02), L),
            StringSpec::base(cp(-0.014, 0.014), 0.5 * L),
            StringSpec::base(cp(0.014, 0.014), 0.5 * L),
        ];
        (SensorArray::simple(strings).unwrap(), basis)
    }

    fn fd_config_jacobian(
        array: &SensorArray,
        basis: &ModalBasis,
        c: &Config,
        h: f64,
    ) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(array.p(), basis.dim());
        for i in 0..basis.dim() {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[i] += h;
            cm[i] -= h;
            let d = (lengths(array, basis, &cp, Reference::Absolute).unwrap()
                - lengths(array, basis, &cm, Reference::Absolute).unwrap())
                / (2.0 * h);
            j.set_column(i, &d);
        }
        j
    }

    fn fd_body_jacobian(basis: &ModalBasis, c: &Config, s: f64, h: f64) -> Matrix6xX<f64> {
        let pose = forward_kinematics(basis, c, &[s], DEFAULT_STEPS).unwrap()[0];
        let inv = pose.inverse().matrix();
        let mut j = Matrix6xX::zeros(basis.dim());
        for i in 0..basis.dim() {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[i] += h;
            cm[i] -= h;
            let tp = forward_kinematics(basis, &cp, &[s], DEFAULT_STEPS).unwrap()[0].matrix();
            let tm = forward_kinematics(basis, &cm, &[s], DEFAULT_STEPS).unwrap()[0].matrix();
            let twist = liegroup::vee6(&(inv * (tp - tm) / (2.0 * h)));
            j.set_column(i, &twist.to_vector());
        }
        j
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn straight_string_length() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let s = StringSpec::base(cp(0.02, 0.01), 0.2);
        assert!((string_length(&s, &basis, &Config::zeros(3), 80).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn planar_constant_curvature_length() {
        let basis = ModalBasis::planar(1, L).unwrap();
        let (k, rx, sa) = (4.0, 0.03, 0.25);
        let s = StringSpec::base(cp(rx, 0.0), sa);
        let l = string_length(&s, &basis, &Config::from_vec(vec![k]), 80).unwrap();
        assert!((l - sa * (1.0 - rx * k)).abs() < 1e-15);
    }

    #[test]
    fn helix_length_on_straight_backbone() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let (rs, w, sa) = (0.03, 12.0, 0.27);
        let s = StringSpec::base(
            RoutingPath::Helical {
                radius: rs,
                omega: w,
                alpha: 0.4,
            },
            sa,
        );
        let l = string_length(&s, &basis, &Config::zeros(3), 80).unwrap();
        assert!((l - sa * (1.0 + (rs * w).powi(2)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tip_mount_integrates_to_the_end() {
        let basis = ModalBasis::planar(1, L).unwrap();
        let s = StringSpec::new(cp(0.02, 0.0), 0.1, Mount::Tip);
        let l = string_length(&s, &basis, &Config::from_vec(vec![5.0]), 80).unwrap();
        assert!((l - 0.2 * (1.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn non_realizable_reports_margin() {
        let basis = ModalBasis::planar(1, L).unwrap();
        let s = StringSpec::base(cp(0.1, 0.0), L);
        match string_length(&s, &basis, &Config::from_vec(vec![12.0]), 80) {
            Err(ShapeError::NotRealizable { margin, .. }) => assert!((margin + 0.2).abs() < 1e-12),
            other => panic!("expected a realizability error, got {other:?}"),
        }
    }

    #[test]
    fn delta_lengths_and_composites() {
        let basis = ModalBasis::planar(1, L).unwrap();
        let strings = vec![
            StringSpec::base(cp(0.03, 0.0), 0.2),
            StringSpec::base(cp(-0.03, 0.0), 0.2),
            StringSpec::base(cp(0.01, 0.0), L),
        ];
        let comp = Composite {
            members: vec![0, 1],
            signs: vec![1.0, 1.0],
        };
        let array = SensorArray::new(strings.clone(), vec![comp], 80).unwrap();
        assert_eq!(array.p(), 2);
        assert_eq!(
            lengths(
                &array,
                &basis,
                &Config::zeros(1),
                Reference::DeltaFromStraight
            )
            .unwrap(),
            DVector::zeros(2)
        );
        let d = lengths(
            &array,
            &basis,
            &Config::from_vec(vec![6.0]),
            Reference::DeltaFromStraight,
        )
        .unwrap();
        assert!(
            d[1].abs() < 1e-15,
            "antagonistic pair should cancel, got {}",
            d[1]
        );
        assert!((d[0] + 0.3 * 0.01 * 6.0).abs() < 1e-15);

        let single = SensorArray::simple(vec![strings[2].clone()]).unwrap();
        let c = Config::from_vec(vec![3.0]);
        let l = lengths(&single, &basis, &c, Reference::Absolute).unwrap();
        assert_eq!(l[0], string_length(&strings[2], &basis, &c, 80).unwrap());
    }

    #[test]
    fn composite_validation() {
        let s = vec![
            StringSpec::base(cp(0.01, 0.0), L),
            StringSpec::base(cp(-0.01, 0.0), L),
        ];
        let twice = vec![
            Composite {
                members: vec![0, 1],
                signs: vec![1.0, 1.0],
            },
            Composite {
                members: vec![1],
                signs: vec![-1.0],
            },
        ];
        assert!(SensorArray::new(s.clone(), twice, 80).is_err());
        let bad_sign = vec![Composite {
            members: vec![0],
            signs: vec![2.0],
        }];
        assert!(SensorArray::new(s.clone(), bad_sign, 80).is_err());
        let out_of_range = vec![Composite {
            members: vec![3],
            signs: vec![1.0],
        }];
        assert!(SensorArray::new(s, out_of_range, 80).is_err());
    }

    #[test]
    fn planar_jacobian_closed_form() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let rx = 0.04;
        let array = SensorArray::simple(vec![StringSpec::base(cp(rx, 0.0), L)]).unwrap();
        let j = config_jacobian(&array, &basis, &Config::from_vec(vec![2.0, -1.0, 3.0])).unwrap();
        let exact = [-rx * L, 0.0, rx * L / 3.0];
        // the trapezoid rule integrates T₂ to −L/3 + 4h²/(3L)
        let h = L / 79.0;
        let trapezoid = [-rx * L, 0.0, -rx * (-L / 3.0 + 4.0 * h * h / (3.0 * L))];
        for i in 0..3 {
            assert!(
                (j[(0, i)] - trapezoid[i]).abs() < 1e-16,
                "column {i}: {}",
                j[(0, i)]
            );
            assert!((j[(0, i)] - exact[i]).abs() <= 1e-3 * rx * L);
        }
    }

    #[test]
    fn identity_basis_jacobian_pattern() {
        let basis = ModalBasis::new(
            AxisBasis::first(1),
            AxisBasis::first(1),
            AxisBasis::empty(),
            L,
        )
        .unwrap();
        let rx = 0.025;
        let array = SensorArray::simple(vec![StringSpec::base(cp(rx, 0.0), L)]).unwrap();
        let j = config_jacobian(&array, &basis, &Config::from_vec(vec![3.0, 2.0])).unwrap();
        assert!(j[(0, 0)].abs() < 1e-16);
        assert!((j[(0, 1)] + rx * L).abs() < 1e-15);
    }

    #[test]
    fn linear_class_jacobian_is_constant() {
        let (array, basis) = zero_torsion_array();
        let j0 = config_jacobian(&array, &basis, &Config::zeros(4)).unwrap();
        let j1 = config_jacobian(
            &array,
            &basis,
            &Config::from_vec(vec![10.0, -5.0, 8.0, 3.0]),
        )
        .unwrap();
        assert!((j0 - j1).abs().max() <= 1e-12);
    }

    #[test]
    fn helical_jacobian_matches_fd() {
        let basis = spatial_basis();
        let array = helical_array();
        for c in [
            vec![5.0, -3.0, 2.0, -4.0, 6.0, 1.0, 3.0, -2.0],
            vec![-8.0, 1.0, 0.5, 7.0, -2.0, -3.0, -5.0, 4.0],
        ] {
            let c = Config::from_vec(c);
            let j = config_jacobian(&array, &basis, &c).unwrap();
            let fd = fd_config_jacobian(&array, &basis, &c, 1e-7);
            assert!(rel_err(&j, &fd) <= 1e-5, "rel error {}", rel_err(&j, &fd));
        }
    }

    #[test]
    fn body_jacobian_zero_column() {
        // Chebyshev columns never vanish on an interval, so the empty run s = 0 is the zero case
        let basis = ModalBasis::new(
            AxisBasis::empty(),
            AxisBasis::first(2),
            AxisBasis::new(vec![1]).unwrap(),
            L,
        )
        .unwrap();
        let c = Config::from_vec(vec![2.0, 1.0, 0.0]);
        let j = body_jacobian(&basis, &c, 0.0, DEFAULT_STEPS).unwrap();
        assert_eq!(j, Matrix6xX::zeros(3));
    }

    #[test]
    fn body_jacobian_straight_identity_basis() {
        let basis = ModalBasis::constant(L).unwrap();
        let c = Config::zeros(3);
        let j = body_jacobian(&basis, &c, L, DEFAULT_STEPS).unwrap();
        let fd = fd_body_jacobian(&basis, &c, L, 1e-6);
        assert!((j.clone() - fd).norm() <= 1e-5 * j.norm());
        assert!((j[(3, 1)] - L * L / 2.0).abs() < 1e-12);
        assert!((j[(1, 1)] - L).abs() < 1e-14);
    }

    #[test]
    fn body_jacobian_matches_fd_off_grid() {
        let basis = spatial_basis();
        let c = Config::from_vec(vec![5.0, -3.0, 2.0, -4.0, 6.0, 1.0, 3.0, -2.0]);
        for s in [0.1234, L] {
            let j = body_jacobian(&basis, &c, s, DEFAULT_STEPS).unwrap();
            let fd = fd_body_jacobian(&basis, &c, s, 1e-6);
            assert!(
                (j.clone() - fd.clone()).norm() <= 1e-5 * j.norm(),
                "s = {s}: {}",
                (j - fd).norm()
            );
        }
    }

    #[test]
    fn kinematics_examples() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let poses =
            forward_kinematics(&basis, &Config::zeros(3), &[0.0, 0.1, L], DEFAULT_STEPS).unwrap();
        for (p, s) in poses.iter().zip([0.0, 0.1, L]) {
            assert!((p.position - Vector3::new(0.0, 0.0, s)).norm() < 1e-15);
        }
        let k = PI / (2.0 * L);
        let poses = forward_kinematics(
            &basis,
            &Config::from_vec(vec![k, 0.0, 0.0]),
            &[L, 0.17],
            DEFAULT_STEPS,
        )
        .unwrap();
        for (p, s) in poses.iter().zip([L, 0.17]) {
            let expected = Vector3::new((1.0 - (k * s).cos()) / k, 0.0, (k * s).sin() / k);
            assert!((p.position - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn modal_families_are_distinct() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let step = PI / (2.0 * L);
        // tip angle is step·∫Tₙ: π/2, 0 and −π/6
        let expected = [PI / 2.0, 0.0, -PI / 6.0];
        let mut tips = Vec::new();
        for (i, want) in expected.iter().enumerate() {
            let mut c = Config::zeros(3);
            c[i] = step;
            let tip = forward_kinematics(&basis, &c, &[L], DEFAULT_STEPS).unwrap()[0];
            let angle = tip.rotation[(0, 2)].atan2(tip.rotation[(2, 2)]);
            assert!((angle - want).abs() < 1e-12, "degree {i}: {angle}");
            tips.push(tip.position);
        }
        // T₁ and T₂ reach nearby tips with different end angles, both leaning to −x
        assert!((tips[0] - tips[1]).norm() > 0.2);
        assert!(tips[1].x < -0.05 && tips[2].x < -0.05);
    }

    #[test]
    fn zero_delta_gives_zero() {
        let (array, basis) = zero_torsion_array();
        let sol = solve_shape(
            &array,
            &basis,
            &Measurement::delta(DVector::zeros(4)),
            &Config::zeros(4),
        )
        .unwrap();
        assert!(sol.c.norm() < 1e-14);
        assert!(sol.diagnostics.linear);
        assert_eq!(sol.diagnostics.iterations, 1);
    }

    #[test]
    fn three_on_one_disk_is_singular() {
        let basis = ModalBasis::new(
            AxisBasis::first(2),
            AxisBasis::first(2),
            AxisBasis::empty(),
            L,
        )
        .unwrap();
        let strings = vec![
            StringSpec::base(cp(0.02, 0.0), L),
            StringSpec::base(cp(0.0, 0.02), 0.5 * L),
            StringSpec::base(cp(-0.02, 0.0), 0.5 * L),
            StringSpec::base(cp(0.0, -0.02), 0.5 * L),
        ];
        let array = SensorArray::simple(strings).unwrap();
        let err = solve_shape(
            &array,
            &basis,
            &Measurement::delta(DVector::zeros(4)),
            &Config::zeros(4),
        )
        .unwrap_err();
        assert!(matches!(err, ShapeError::SingularDesign { .. }));
    }

    #[test]
    fn underdetermined_is_rejected() {
        let basis = ModalBasis::planar(3, L).unwrap();
        let array = SensorArray::simple(vec![StringSpec::base(cp(0.02, 0.0), L)]).unwrap();
        let err = solve_shape(
            &array,
            &basis,
            &Measurement::delta(DVector::zeros(1)),
            &Config::zeros(3),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ShapeError::Underdetermined {
                measurements: 1,
                coefficients: 3
            }
        ));
    }

    #[test]
    fn gauss_newton_recovers_helical_config() {
        let basis = spatial_basis();
        let array = helical_array();
        let truth = Config::from_vec(vec![5.0, -3.0, 2.0, -4.0, 6.0, 1.0, 3.0, -2.0]);
        let meas = Measurement::delta(
            lengths(&array, &basis, &truth, Reference::DeltaFromStraight).unwrap(),
        );
        let sol = solve_shape(&array, &basis, &meas, &Config::zeros(8)).unwrap();
        assert!((sol.c - truth).norm() <= 1e-6);
        assert!(!sol.diagnostics.linear);
    }

    #[test]
    fn gauss_newton_linear_class_converges_in_one_step() {
        let (array, basis) = zero_torsion_array();
        let truth = Config::from_vec(vec![6.0, -2.0, 4.0, 3.0]);
        let target = lengths(&array, &basis, &truth, Reference::Absolute).unwrap();
        let sol = gauss_newton(&array, &basis, &target, &Config::zeros(4)).unwrap();
        assert_eq!(sol.diagnostics.iterations, 1);
        assert!((sol.c - truth).norm() < 1e-10);
    }

    #[test]
    fn quadrature_exact_for_linear_curvature() {
        let basis = ModalBasis::new(
            AxisBasis::first(2),
            AxisBasis::first(2),
            AxisBasis::empty(),
            L,
        )
        .unwrap();
        let strings = vec![StringSpec::base(cp(0.02, -0.01), L)];
        let coarse = SensorArray::new(strings.clone(), vec![], 80).unwrap();
        let fine = SensorArray::new(strings, vec![], 160).unwrap();
        let c = Config::from_vec(vec![4.0, -2.0, 3.0, 2.0]);
        let a = lengths(&coarse, &basis, &c, Reference::Absolute).unwrap()[0];
        let b = lengths(&fine, &basis, &c, Reference::Absolute).unwrap()[0];
        assert!((a - b).abs() <= 1e-15 * b);
    }

    #[test]
    fn quadrature_converges_at_second_order() {
        let strings = vec![StringSpec::base(helix(0.3, 5.0), L)];
        let c = Config::from_vec(vec![4.0, -2.0, 1.0, 3.0, 2.0, -1.0]);
        let basis = ModalBasis::new(
            AxisBasis::first(3),
            AxisBasis::first(3),
            AxisBasis::empty(),
            L,
        )
        .unwrap();
        let len = |n: usize| {
            let a = SensorArray::new(strings.clone(), vec![], n).unwrap();
            lengths(&a, &basis, &c, Reference::Absolute).unwrap()[0]
        };
        let (l80, l159, l317) = (len(80), len(159), len(317));
        let ratio = (l80 - l159) / (l159 - l317);
        assert!((ratio - 4.0).abs() < 0.05, "refinement ratio {ratio}");
        assert!((l80 - l159).abs() <= 1e-5 * l159);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn zero_torsion_jacobian_independent_of_c(c in prop::collection::vec(-20.0..20.0f64, 4)) {
            let (array, basis) = zero_torsion_array();
            let j0 = config_jacobian(&array, &basis, &Config::zeros(4)).unwrap();
            let j = config_jacobian(&array, &basis, &Config::from_vec(c)).unwrap();
            prop_assert!((j - j0).abs().max() <= 1e-12);
        }

        #[test]
        fn linear_round_trip(c in prop::collection::vec(-20.0..20.0f64, 4)) {
            let (array, basis) = zero_torsion_array();
            let truth = Config::from_vec(c);
            let meas = Measurement::delta(lengths(&array, &basis, &truth, Reference::DeltaFromStraight).unwrap());
            let sol = solve_shape(&array, &basis, &meas, &Config::zeros(4)).unwrap();
            prop_assert!((sol.c - truth).norm() <= 1e-8);
        }
    }
}
