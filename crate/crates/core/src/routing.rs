//! String routing paths in the backbone cross-section frame and their realizability.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Result, ShapeError};
use crate::modal::{Config, ModalBasis};

/// Default number of arc-length samples for the realizability check.
pub const REALIZABILITY_GRID: usize = 200;

/// Radial offset `r(s) = [r_x(s), r_y(s), 0]` of a string from the backbone.
#[derive(Debug, Clone, PartialEq)]
pub enum RoutingPath {
    ConstantPitch {
        rx: f64,
        ry: f64,
    },
    /// `r_s [cos(ωs + α), sin(ωs + α), 0]`.
    Helical {
        radius: f64,
        omega: f64,
        alpha: f64,
    },
    Tabulated(TabulatedPath),
}

/// Sampled path, interpolated by cubic Hermite segments with centered-difference slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPath {
    s: Vec<f64>,
    r: Vec<[f64; 2]>,
    slope: Vec<[f64; 2]>,
}

impl TabulatedPath {
    pub fn new(samples: Vec<(f64, f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(ShapeError::Invalid(
                "tabulated path needs at least two samples".into(),
            ));
        }
        if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(ShapeError::Invalid(
                "tabulated path arc lengths must increase".into(),
            ));
        }
        if samples
            .iter()
            .any(|(s, x, y)| !(s.is_finite() && x.is_finite() && y.is_finite()))
        {
            return Err(ShapeError::Invalid(
                "tabulated path has non-finite samples".into(),
            ));
        }
        let s: Vec<f64> = samples.iter().map(|p| p.0).collect();
        let r: Vec<[f64; 2]> = samples.iter().map(|p| [p.1, p.2]).collect();
        let n = s.len();
        let slope = (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    _ if i == n - 1 => (n - 2, n - 1),
                    _ => (i - 1, i + 1),
                };
                let ds = s[b] - s[a];
                [(r[b][0] - r[a][0]) / ds, (r[b][1] - r[a][1]) / ds]
            })
            .collect();
        Ok(Self { s, r, slope })
    }

    /// Interpolated value and derivative; constant extrapolation of the end segments.
    fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.s.len();
        let s = s.clamp(self.s[0], self.s[n - 1]);
        let k = match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            i => (i - 1).min(n - 2),
        };
        let h = self.s[k + 1] - self.s[k];
        let t = (s - self.s[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let mut v = [0.0; 2];
        let mut d = [0.0; 2];
        for j in 0..2 {
            let (p0, p1) = (self.r[k][j], self.r[k + 1][j]);
            let (m0, m1) = (self.slope[k][j], self.slope[k + 1][j]);
            v[j] = h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
            d[j] = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1;
        }
        (v, d)
    }
}

impl RoutingPath {
    pub fn radial(&self, s: f64) -> Vector3<f64> {
        match self {
            Self::ConstantPitch { rx, ry } => Vector3::new(*rx, *ry, 0.0),
            Self::Helical {
                radius,
                omega,
                alpha,
            } => {
                let (sn, cs) = (omega * s + alpha).sin_cos();
                Vector3::new(radius * cs, radius * sn, 0.0)
            }
            Self::Tabulated(t) => {
                let (v, _) = t.eval(s);
                Vector3::new(v[0], v[1], 0.0)
            }
        }
    }

    pub fn radial_deriv(&self, s: f64) -> Vector3<f64> {
        match self {
            Self::ConstantPitch { .. } => Vector3::zeros(),
            Self::Helical {
                radius,
                omega,
                alpha,
            } => {
                let (sn, cs) = (omega * s + alpha).sin_cos();
                Vector3::new(-radius * omega * sn, radius * omega * cs, 0.0)
            }
            Self::Tabulated(t) => {
                let (_, d) = t.eval(s);
                Vector3::new(d[0], d[1], 0.0)
            }
        }
    }

    /// True when `r(s)` is constant, so the string runs parallel to the backbone.
    pub fn is_constant_pitch(&self) -> bool {
        match self {
            Self::ConstantPitch { .. } => true,
            Self::Helical { omega, .. } => *omega == 0.0,
            Self::Tabulated(_) => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ConstantPitch { rx, ry } if !(rx.is_finite() && ry.is_finite()) => Err(
                ShapeError::Invalid("constant-pitch radii must be finite".into()),
            ),
            Self::Helical {
                radius,
                omega,
                alpha,
            } if !(*radius > 0.0 && omega.is_finite() && alpha.is_finite()) => Err(
                ShapeError::Invalid(format!("helical path needs r_s > 0, got {radius}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Which end of the backbone the string's measured run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mount {
    /// Runs from the base to the anchor, `[0, s_a]`.
    #[default]
    Base,
    /// Runs from the anchor to the tip, `[s_a, L]`.
    Tip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StringSpec {
    pub path: RoutingPath,
    pub anchor: f64,
    pub mount: Mount,
}

impl StringSpec {
    pub fn new(path: RoutingPath, anchor: f64, mount: Mount) -> Self {
        Self {
            path,
            anchor,
            mount,
        }
    }

    pub fn base(path: RoutingPath, anchor: f64) -> Self {
        Self::new(path, anchor, Mount::Base)
    }

    /// Integration bounds of the string on a segment of length `length`.
    pub fn interval(&self, length: f64) -> (f64, f64) {
        match self.mount {
            Mount::Base => (0.0, self.anchor),
            Mount::Tip => (self.anchor, length),
        }
    }

    pub fn validate(&self, length: f64) -> Result<()> {
        self.path.validate()?;
        if !(0.0..=length).contains(&self.anchor) {
            return Err(ShapeError::Domain {
                s: self.anchor,
                length,
            });
        }
        Ok(())
    }

    /// Realizability over the string's own run.
    pub fn realizable(&self, basis: &ModalBasis, c: &Config, grid: usize) -> Realizability {
        let (a, b) = self.interval(basis.length);
        realizable_on(&self.path, basis, c, a, b, grid)
    }
}

/// Outcome of the tangent-direction check `(w′)ᵀe₃ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realizability {
    pub ok: bool,
    pub margin: f64,
    /// Arc length where the margin is smallest.
    pub at: f64,
}

/// Path velocity in the local frame, `w′ = e₃ − r × u + r′`.
pub fn path_velocity(
    path: &RoutingPath,
    basis: &ModalBasis,
    c: &Config,
    s: f64,
) -> Result<Vector3<f64>> {
    let u = basis.curvature_at(c, s)?;
    Ok(velocity_from_curvature(path, &u, s))
}

pub(crate) fn velocity_from_curvature(
    path: &RoutingPath,
    u: &Vector3<f64>,
    s: f64,
) -> Vector3<f64> {
    Vector3::z() - path.radial(s).cross(u) + path.radial_deriv(s)
}

/// Realizability over the full segment `[0, L]`.
pub fn realizable(
    path: &RoutingPath,
    basis: &ModalBasis,
    c: &Config,
    grid: usize,
) -> Realizability {
    realizable_on(path, basis, c, 0.0, basis.length, grid)
}

fn realizable_on(
    path: &RoutingPath,
    basis: &ModalBasis,
    c: &Config,
    a: f64,
    b: f64,
    grid: usize,
) -> Realizability {
    let n = grid.max(2);
    let mut worst = Realizability {
        ok: true,
        margin: f64::INFINITY,
        at: a,
    };
    for i in 0..n {
        let s = a + (b - a) * i as f64 / (n - 1) as f64;
        let u = basis.curvature_unchecked(c, s);
        let margin = velocity_from_curvature(path, &u, s).z;
        if margin < worst.margin {
            worst.margin = margin;
            worst.at = s;
        }
    }
    worst.ok = worst.margin > 0.0;
    worst
}

/// Helix twist rate for `n_omega` hole steps of `2π/holes` per subsegment.
pub fn twist_rate(n_omega: i32, holes: usize, subsegment: f64) -> f64 {
    n_omega as f64 * (2.0 * PI / holes as f64) / subsegment
}
