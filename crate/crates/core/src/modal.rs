//! Shifted Chebyshev modal basis for backbone curvature, `u(s) = Φ(s) c`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};

/// Modal coefficient vector `c`.
pub type Config = DVector<f64>;

/// Relative slack allowed when an arc length lands just outside `[0, L]` by roundoff.
const DOMAIN_SLACK: f64 = 1e-12;

/// Chebyshev degrees used on one curvature axis.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AxisBasis {
    degrees: Vec<usize>,
}

impl AxisBasis {
    pub fn new(degrees: Vec<usize>) -> Result<Self> {
        if degrees.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ShapeError::Invalid(format!(
                "basis degrees must be strictly increasing, got {degrees:?}"
            )));
        }
        Ok(Self { degrees })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Degrees `0..n`.
    pub fn first(n: usize) -> Self {
        Self {
            degrees: (0..n).collect(),
        }
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    fn max_degree(&self) -> Option<usize> {
        self.degrees.last().copied()
    }
}

impl TryFrom<Vec<usize>> for AxisBasis {
    type Error = ShapeError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AxisBasis> for Vec<usize> {
    fn from(a: AxisBasis) -> Self {
        a.degrees
    }
}

/// Block-diagonal basis `Φ(s) = diag(φ_xᵀ, φ_yᵀ, φ_zᵀ)` on a segment of length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    pub x: AxisBasis,
    pub y: AxisBasis,
    pub z: AxisBasis,
    pub length: f64,
}

impl ModalBasis {
    pub fn new(x: AxisBasis, y: AxisBasis, z: AxisBasis, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(ShapeError::Invalid(format!(
                "segment length must be positive, got {length}"
            )));
        }
        if x.len() + y.len() + z.len() == 0 {
            return Err(ShapeError::Invalid("basis has no columns".into()));
        }
        Ok(Self { x, y, z, length })
    }

    /// Planar bending about local y with degrees `0..n`.
    pub fn planar(n: usize, length: f64) -> Result<Self> {
        Self::new(
            AxisBasis::empty(),
            AxisBasis::first(n),
            AxisBasis::empty(),
            length,
        )
    }

    /// Constant curvature on all three axes (`Φ = I₃`).
    pub fn constant(length: f64) -> Result<Self> {
        Self::new(
            AxisBasis::first(1),
            AxisBasis::first(1),
            AxisBasis::first(1),
            length,
        )
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.y.len() + self.z.len()
    }

    pub fn axes(&self) -> [&AxisBasis; 3] {
        [&self.x, &self.y, &self.z]
    }

    /// First column index of each axis block.
    pub fn offsets(&self) -> [usize; 3] {
        [0, self.x.len(), self.x.len() + self.y.len()]
    }

    pub fn has_torsion(&self) -> bool {
        !self.z.is_empty()
    }

    fn max_degree(&self) -> usize {
        self.axes()
            .iter()
            .filter_map(|a| a.max_degree())
            .max()
            .unwrap_or(0)
    }

    fn check_s(&self, s: f64) -> Result<f64> {
        check_domain(s, self.length)
    }

    pub fn check_config(&self, c: &Config) -> Result<()> {
        if c.len() != self.dim() {
            return Err(ShapeError::Dimension {
                expected: self.dim(),
                got: c.len(),
            });
        }
        Ok(())
    }

    /// `Φ(s)`, a `3 × m` matrix.
    pub fn basis_matrix(&self, s: f64) -> Result<DMatrix<f64>> {
        let s = self.check_s(s)?;
        let t = chebyshev_all(self.max_degree(), shift(s, self.length));
        Ok(self.assemble(&t))
    }

    fn assemble(&self, values: &[f64]) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(3, self.dim());
        let offsets = self.offsets();
        for (row, axis) in self.axes().iter().enumerate() {
            for (k, &n) in axis.degrees().iter().enumerate() {
                phi[(row, offsets[row] + k)] = values[n];
            }
        }
        phi
    }

    /// `u(s) = Φ(s) c`.
    pub fn curvature_at(&self, c: &Config, s: f64) -> Result<Vector3<f64>> {
        self.check_config(c)?;
        let s = self.check_s(s)?;
        Ok(self.curvature_unchecked(c, s))
    }

    /// Curvature without domain or dimension checks, for inner loops.
    pub(crate) fn curvature_unchecked(&self, c: &Config, s: f64) -> Vector3<f64> {
        let t = chebyshev_all(
            self.max_degree(),
            shift(s.clamp(0.0, self.length), self.length),
        );
        let offsets = self.offsets();
        let mut u = Vector3::zeros();
        for (row, axis) in self.axes().iter().enumerate() {
            u[row] = axis
                .degrees()
                .iter()
                .enumerate()
                .map(|(k, &n)| t[n] * c[offsets[row] + k])
                .sum();
        }
        u
    }

    /// Exact `∫ Φ(s) ds` over `[s_from, s_to]`.
    pub fn basis_integral(&self, s_from: f64, s_to: f64) -> Result<DMatrix<f64>> {
        let a = self.check_s(s_from)?;
        let b = self.check_s(s_to)?;
        if s_from > s_to {
            return Err(ShapeError::Interval {
                from: s_from,
                to: s_to,
                length: self.length,
            });
        }
        let degree = self.max_degree();
        let fa = chebyshev_antiderivatives(degree, shift(a, self.length));
        let fb = chebyshev_antiderivatives(degree, shift(b, self.length));
        let scale = 0.5 * self.length;
        let values: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| (y - x) * scale).collect();
        Ok(self.assemble(&values))
    }
}

fn check_domain(s: f64, length: f64) -> Result<f64> {
    let slack = DOMAIN_SLACK * length;
    if !(s >= -slack && s <= length + slack) {
        return Err(ShapeError::Domain { s, length });
    }
    Ok(s.clamp(0.0, length))
}

fn shift(s: f64, length: f64) -> f64 {
    (2.0 * s - length) / length
}

/// `T₀(x) … T_n(x)` by the three-term recurrence.
fn chebyshev_all(n: usize, x: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 2);
    t.push(1.0);
    if n >= 1 {
        t.push(x);
    }
    for k in 2..=n {
        let next = 2.0 * x * t[k - 1] - t[k - 2];
        t.push(next);
    }
    t
}

/// Antiderivatives in `x` of `T₀ … T_n`.
fn chebyshev_antiderivatives(n: usize, x: f64) -> Vec<f64> {
    let t = chebyshev_all(n + 1, x);
    (0..=n)
        .map(|k| match k {
            0 => t[1],
            1 => 0.25 * t[2],
            _ => 0.5 * (t[k + 1] / (k as f64 + 1.0) - t[k - 1] / (k as f64 - 1.0)),
        })
        .collect()
}

/// Shifted Chebyshev polynomial `T_n((2s − L)/L)`.
pub fn chebyshev(n: usize, s: f64, length: f64) -> Result<f64> {
    let s = check_domain(s, length)?;
    Ok(chebyshev_all(n, shift(s, length))[n])
}
