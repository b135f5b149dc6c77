//! SO(3)/SE(3) kernel and the fourth-order Magnus integrator for backbone frames.
//!
//! Twists are ordered angular first, then linear: `[ω; v]`. A backbone frame
//! obeys `T'(s) = T(s) η̂(s)` with `η = [u; e₃]`, and one integration step of
//! length `h` is replaced by a single exponential `exp(Ψ)`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, UnitQuaternion, Vector3, Vector6};

/// Below this rotation angle the exponential uses its Taylor branch.
const SMALL_ANGLE: f64 = 1e-8;

/// Gauss–Legendre node offset `√3/6`.
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9;

/// Weight `√3/12` of the commutator term.
const BRACKET_WEIGHT: f64 = 0.144_337_567_297_406_43;

/// A 6-vector `[angular; linear]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist6 {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl Twist6 {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Backbone twist for curvature `u`: `[u; e₃]`.
    pub fn backbone(curvature: Vector3<f64>) -> Self {
        Self::new(curvature, Vector3::z())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Lie bracket `[self, other] = ad(self) other`.
    pub fn bracket(&self, other: &Twist6) -> Twist6 {
        Twist6::new(
            self.angular.cross(&other.angular),
            self.linear.cross(&other.angular) + self.angular.cross(&other.linear),
        )
    }
}

impl Add for Twist6 {
    type Output = Twist6;
    fn add(self, rhs: Twist6) -> Twist6 {
        Twist6::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl Sub for Twist6 {
    type Output = Twist6;
    fn sub(self, rhs: Twist6) -> Twist6 {
        Twist6::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl Neg for Twist6 {
    type Output = Twist6;
    fn neg(self) -> Twist6 {
        Twist6::new(-self.angular, -self.linear)
    }
}

impl Mul<f64> for Twist6 {
    type Output = Twist6;
    fn mul(self, k: f64) -> Twist6 {
        Twist6::new(self.angular * k, self.linear * k)
    }
}

/// Rigid transform of a backbone cross-section frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Self {
        Self { rotation, position }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.position))
    }

    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.position + self.position,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Adjoint map acting on `[ω; v]` twists: `[[R, 0], [p̂R, R]]`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat(&self.position) * self.rotation));
        ad
    }

    /// Unit quaternion of the rotation, `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        [q.w, q.i, q.j, q.k]
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

/// Skew-symmetric matrix of `v`, so that `hat(v) w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// `se(3)` matrix of a twist.
pub fn hat6(t: &Twist6) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&t.angular));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.linear);
    m
}

pub fn vee6(m: &Matrix4<f64>) -> Twist6 {
    let w = m.fixed_view::<3, 3>(0, 0).into_owned();
    Twist6::new(vee(&w), Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]))
}

/// Adjoint representation of `se(3)`: `[[û, 0], [v̂, û]]`.
pub fn ad(t: &Twist6) -> Matrix6<f64> {
    let w = hat(&t.angular);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat(&t.linear));
    m
}

/// Coefficients `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0 - t2 * t4 / 5040.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t2 * t4 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t2 * t4 / 362880.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Closed-form exponential of a twist (Rodrigues rotation and the `V` matrix).
pub fn exp_se3(psi: &Twist6) -> PoseSE3 {
    let theta = psi.angular.norm();
    let (a, b, c) = rodrigues_coefficients(theta);
    let w = hat(&psi.angular);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    PoseSE3::new(rotation, v * psi.linear)
}

/// Matrix form of `Σₖ (−1)ᵏ/(k+1)! adᵏ(Ψ)`.
pub fn dexp_matrix(psi: &Twist6) -> Matrix6<f64> {
    let a = ad(psi);
    let mut term = Matrix6::identity();
    let mut sum = Matrix6::identity();
    for k in 1..40 {
        term = a * term * (-1.0 / (k as f64 + 1.0));
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

/// Right-trivialized derivative of the exponential:
/// `exp(Ψ)⁻¹ d/dε exp(Ψ + ε δ)` at ε = 0.
pub fn dexp_se3(psi: &Twist6, dpsi: &Twist6) -> Twist6 {
    Twist6::from_vector(&(dexp_matrix(psi) * dpsi.to_vector()))
}

/// One Magnus step: the `se(3)` element replacing `[s0, s0 + h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnusTerm {
    pub psi: Twist6,
    pub step: f64,
}

/// Arc lengths of the two Gauss–Legendre collocation points on `[s0, s0 + h]`.
pub fn collocation_points(s0: f64, h: f64) -> (f64, f64) {
    (s0 + (0.5 - GAUSS_OFFSET) * h, s0 + (0.5 + GAUSS_OFFSET) * h)
}

/// Fourth-order Magnus element from the twists at the two collocation points.
///
/// For the right-multiplied equation `T' = T η̂` the commutator enters as
/// `+ √3 h²/12 [η₁, η₂]`, with `η₁` at the earlier node.
pub fn magnus_psi(eta1: &Twist6, eta2: &Twist6, h: f64) -> Twist6 {
    (*eta1 + *eta2) * (0.5 * h) + eta1.bracket(eta2) * (BRACKET_WEIGHT * h * h)
}

/// Magnus step for a curvature field `u(s)`.
pub fn magnus_step<F>(curvature: F, s0: f64, h: f64) -> MagnusTerm
where
    F: Fn(f64) -> Vector3<f64>,
{
    let (s1, s2) = collocation_points(s0, h);
    let eta1 = Twist6::backbone(curvature(s1));
    let eta2 = Twist6::backbone(curvature(s2));
    MagnusTerm {
        psi: magnus_psi(&eta1, &eta2, h),
        step: h,
    }
}

/// Product of exponentials over a uniform grid of `n_steps` steps on `[0, length]`.
///
/// Returns the `n_steps + 1` grid poses, starting with `base`.
pub fn integrate_backbone<F>(
    curvature: F,
    length: f64,
    n_steps: usize,
    base: PoseSE3,
) -> Vec<PoseSE3>
where
    F: Fn(f64) -> Vector3<f64>,
{
    let n = n_steps.max(1);
    let h = length / n as f64;
    let mut poses = Vec::with_capacity(n + 1);
    let mut pose = base;
    poses.push(pose);
    for k in 0..n {
        let term = magnus_step(&curvature, k as f64 * h, h);
        pose = pose.compose(&exp_se3(&term.psi));
        poses.push(pose);
    }
    poses
}
