//! Routing design search: planar anchor landscapes and brute-force enumeration of discrete designs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, ShapeError};
use crate::modal::{Config, ModalBasis};
use crate::routing::{twist_rate, Mount, RoutingPath, StringSpec};
use crate::sensing::{body_jacobian, body_jacobians, string_eval, Composite, SensorArray};
use crate::sensitivity::{
    full_map_aleph, noise_amp, pinv, pinv_and_noise_amp, sample_admissible, scale_angular,
    singular_values, ConstraintSet, DesignReport, WorkspaceSamples, PINV_CUTOFF,
};

/// Anchor grid spacing for planar searches, as a fraction of the segment length.
pub const GRID_STEP: f64 = 0.004;

/// Largest design space `brute_force_search` will enumerate by default.
pub const DEFAULT_DESIGN_CAP: usize = 1_000_000;

/// Pitch radius of the end-anchored planar string, as a fraction of the length.
pub const FIXED_RADIUS_FRACTION: f64 = 0.25;

/// Radius pairs `(r₁/L, r₂/L)` of the planar anchor tables.
pub const TABLE_RADII: [[f64; 2]; 4] = [[0.10, -0.10], [0.10, -0.20], [0.20, -0.10], [0.20, -0.20]];

const GOLDEN_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 60;
/// Upper bound on grid points for multi-anchor searches.
const GRID_BUDGET: usize = 150_000;

/// Planar array of constant-pitch strings: free-anchor strings plus one string anchored at the tip.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarDesign {
    pub length: f64,
    /// Pitch radius of the string anchored at `s = L`.
    pub fixed_radius: f64,
    /// Pitch radii of the strings whose anchors are searched.
    pub free_radii: Vec<f64>,
}

impl PlanarDesign {
    /// Fixed string at `r = 0.25 L`.
    pub fn new(length: f64, free_radii: Vec<f64>) -> Self {
        Self {
            length,
            fixed_radius: FIXED_RADIUS_FRACTION * length,
            free_radii,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(ShapeError::Invalid(
                "segment length must be positive".into(),
            ));
        }
        if std::iter::once(&self.fixed_radius)
            .chain(&self.free_radii)
            .any(|r| !r.is_finite() || *r == 0.0)
        {
            return Err(ShapeError::Invalid(
                "planar pitch radii must be finite and non-zero".into(),
            ));
        }
        Ok(())
    }

    /// Number of strings, and of basis terms.
    pub fn p(&self) -> usize {
        self.free_radii.len() + 1
    }

    /// `[T₀, …, T_{p−1}]` on `u_y`.
    pub fn basis(&self) -> Result<ModalBasis> {
        ModalBasis::planar(self.p(), self.length)
    }

    /// Strings with the free anchors at `fractions · L`, the fixed string last.
    pub fn strings(&self, fractions: &[f64]) -> Result<Vec<StringSpec>> {
        if fractions.len() != self.free_radii.len() {
            return Err(ShapeError::Dimension {
                expected: self.free_radii.len(),
                got: fractions.len(),
            });
        }
        let mut out: Vec<StringSpec> = self
            .free_radii
            .iter()
            .zip(fractions)
            .map(|(&rx, &f)| {
                StringSpec::base(RoutingPath::ConstantPitch { rx, ry: 0.0 }, f * self.length)
            })
            .collect();
        out.push(StringSpec::base(
            RoutingPath::ConstantPitch {
                rx: self.fixed_radius,
                ry: 0.0,
            },
            self.length,
        ));
        Ok(out)
    }

    /// Closed-form constant Jacobian, rows `−r_i ∫₀^{s_aᵢ} φ_yᵀ ds`.
    pub fn jacobian(&self, fractions: &[f64]) -> Result<DMatrix<f64>> {
        self.validate()?;
        let basis = self.basis()?;
        let strings = self.strings(fractions)?;
        let mut j = DMatrix::zeros(strings.len(), basis.dim());
        for (k, s) in strings.iter().enumerate() {
            let RoutingPath::ConstantPitch { rx, .. } = s.path else {
                unreachable!("planar strings are constant pitch")
            };
            j.row_mut(k)
                .copy_from(&planar_row(&basis, rx, s.anchor)?.transpose());
        }
        Ok(j)
    }
}

fn planar_row(basis: &ModalBasis, radius: f64, anchor: f64) -> Result<DVector<f64>> {
    let integral = basis.basis_integral(0.0, anchor)?;
    Ok(integral.row(1).transpose() * -radius)
}

/// What a planar anchor search maximizes.
#[derive(Debug, Clone, Copy)]
pub enum PlanarObjective<'a> {
    /// `ℵ(J_ℓc)`.
    ConfigSpace,
    /// `ℵ_g(J_ℓξ(s))` over `samples`.
    FullMap {
        samples: &'a WorkspaceSamples,
        s: f64,
        c_ell: f64,
        n_steps: usize,
    },
}

/// `ℵ(B⁺)` from the Gram matrix `BᵀB`.
fn gram_aleph(gram: &DMatrix<f64>) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let lmax = eig.max();
    let lmin = eig.min().max(0.0);
    let (smax, smin) = (lmax.max(0.0).sqrt(), lmin.sqrt());
    if !(smax > 0.0) || smin <= PINV_CUTOFF * smax {
        return 0.0;
    }
    smin / lmax
}

struct PlanarEvaluator {
    design: PlanarDesign,
    basis: ModalBasis,
    fixed_row: DVector<f64>,
    /// Per-sample `J_ξcᵀ J_ξc` with the angular rows scaled.
    grams: Option<Vec<DMatrix<f64>>>,
}

impl PlanarEvaluator {
    fn new(design: &PlanarDesign, objective: &PlanarObjective) -> Result<Self> {
        design.validate()?;
        let basis = design.basis()?;
        let fixed_row = planar_row(&basis, design.fixed_radius, design.length)?;
        let grams = match *objective {
            PlanarObjective::ConfigSpace => None,
            PlanarObjective::FullMap {
                samples,
                s,
                c_ell,
                n_steps,
            } => {
                if samples.is_empty() {
                    return Err(ShapeError::EmptySamples);
                }
                let g = samples
                    .configs
                    .par_iter()
                    .map(|c| {
                        let jx = scale_angular(&body_jacobian(&basis, c, s, n_steps)?, c_ell);
                        Ok(jx.transpose() * jx)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(g)
            }
        };
        Ok(Self {
            design: design.clone(),
            basis,
            fixed_row,
            grams,
        })
    }

    fn row(&self, string: usize, fraction: f64) -> DVector<f64> {
        let anchor = (fraction * self.design.length).clamp(0.0, self.design.length);
        planar_row(&self.basis, self.design.free_radii[string], anchor)
            .expect("anchor clamped to the segment")
    }

    fn assemble(&self, rows: &[&DVector<f64>]) -> DMatrix<f64> {
        let m = self.basis.dim();
        let mut j = DMatrix::zeros(rows.len() + 1, m);
        for (k, r) in rows.iter().enumerate() {
            j.row_mut(k).copy_from(&r.transpose());
        }
        j.row_mut(rows.len()).copy_from(&self.fixed_row.transpose());
        j
    }

    fn value_of(&self, j: &DMatrix<f64>) -> f64 {
        let Some(grams) = &self.grams else {
            return noise_amp(j);
        };
        let sv = singular_values(j);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        // a truncated pseudoinverse leaves the full map rank deficient
        if !(smax > 0.0) || smin <= PINV_CUTOFF * smax {
            return 0.0;
        }
        let jp = pinv(j);
        let jpt = jp.transpose();
        grams
            .iter()
            .map(|g| gram_aleph(&(&jpt * g * &jp)))
            .sum::<f64>()
            / grams.len() as f64
    }

    fn value(&self, fractions: &[f64]) -> f64 {
        let rows: Vec<DVector<f64>> = fractions
            .iter()
            .enumerate()
            .map(|(i, &f)| self.row(i, f))
            .collect();
        let refs: Vec<&DVector<f64>> = rows.iter().collect();
        self.value_of(&self.assemble(&refs))
    }
}

/// Objective value of a planar design with free anchors at `fractions · L`.
pub fn planar_value(
    design: &PlanarDesign,
    objective: &PlanarObjective,
    fractions: &[f64],
) -> Result<f64> {
    if fractions.len() != design.free_radii.len() {
        return Err(ShapeError::Dimension {
            expected: design.free_radii.len(),
            got: fractions.len(),
        });
    }
    Ok(PlanarEvaluator::new(design, objective)?.value(fractions))
}

/// Objective on a square anchor grid for two free strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    /// Grid coordinates `s_a/L`, shared by both axes.
    pub axis: Vec<f64>,
    /// `values[(i, j)]` at `(s_a1, s_a2) = (axis[i], axis[j])`.
    pub values: DMatrix<f64>,
}

fn grid_axis(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(ShapeError::Invalid(format!(
            "grid step {step} must lie in (0, 0.5]"
        )));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

fn require_two(design: &PlanarDesign) -> Result<()> {
    if design.free_radii.len() != 2 {
        return Err(ShapeError::Dimension {
            expected: 2,
            got: design.free_radii.len(),
        });
    }
    Ok(())
}

fn landscape_with(ev: &PlanarEvaluator, step: f64) -> Result<Landscape> {
    let axis = grid_axis(step)?;
    let n = axis.len();
    let rows1: Vec<DVector<f64>> = axis.iter().map(|&f| ev.row(0, f)).collect();
    let rows2: Vec<DVector<f64>> = axis.iter().map(|&f| ev.row(1, f)).collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| ev.value_of(&ev.assemble(&[&rows1[i], &rows2[j]])))
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(n, n, |i, j| cols[i][j]);
    Ok(Landscape { axis, values })
}

/// Evaluate the objective on the anchor grid `{0, step, …, 1}²`.
pub fn planar_landscape(
    design: &PlanarDesign,
    objective: &PlanarObjective,
    step: f64,
) -> Result<Landscape> {
    require_two(design)?;
    landscape_with(&PlanarEvaluator::new(design, objective)?, step)
}

/// A local maximum in anchor space.
#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// Free anchors as fractions of the length.
    pub anchors: Vec<f64>,
    pub value: f64,
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > GOLDEN_TOL {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coordinate-wise golden-section ascent in a box of half-width `half` around each coordinate.
fn refine(f: &(dyn Fn(&[f64]) -> f64 + Sync), start: &[f64], half: f64) -> Peak {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0f64;
        for d in 0..x.len() {
            let lo = (x[d] - half).max(0.0);
            let hi = (x[d] + half).min(1.0);
            let mut probe = x.clone();
            let (xd, fd) = golden_max(
                |t| {
                    probe[d] = t;
                    f(&probe)
                },
                lo,
                hi,
            );
            if fd > fx {
                moved = moved.max((xd - x[d]).abs());
                x[d] = xd;
                fx = fd;
            }
        }
        if moved < GOLDEN_TOL {
            break;
        }
    }
    Peak {
        anchors: x,
        value: fx,
    }
}

fn dedupe(mut peaks: Vec<Peak>, radius: f64) -> Vec<Peak> {
    peaks.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| a.anchors.partial_cmp(&b.anchors).unwrap())
    });
    let mut kept: Vec<Peak> = Vec::new();
    for p in peaks {
        let close = kept.iter().any(|k| {
            k.anchors
                .iter()
                .zip(&p.anchors)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                < radius
        });
        if !close {
            kept.push(p);
        }
    }
    kept
}

fn grid_maxima(land: &Landscape) -> Vec<(usize, usize)> {
    let n = land.axis.len();
    let v = &land.values;
    let mut out = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let c = v[(i, j)];
            if !(c > 0.0) {
                continue;
            }
            let mut is_max = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let w = v[((i as i64 + di) as usize, (j as i64 + dj) as usize)];
                    // ties go to the first point in scan order
                    let earlier = di < 0 || (di == 0 && dj < 0);
                    if w > c || (earlier && w == c) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((i, j));
            }
        }
    }
    out
}

/// All distinct local maxima over two free anchors, highest first.
///
/// The objective is evaluated on a `GRID_STEP` grid; every interior grid maximum
/// is then polished by coordinate-wise golden-section search.
pub fn planar_peak_search(design: &PlanarDesign, objective: &PlanarObjective) -> Result<Vec<Peak>> {
    require_two(design)?;
    let ev = PlanarEvaluator::new(design, objective)?;
    let land = landscape_with(&ev, GRID_STEP)?;
    Ok(peaks_from(&ev, &land, GRID_STEP))
}

fn peaks_from(ev: &PlanarEvaluator, land: &Landscape, step: f64) -> Vec<Peak> {
    let f = |x: &[f64]| ev.value(x);
    let peaks: Vec<Peak> = grid_maxima(land)
        .into_par_iter()
        .map(|(i, j)| refine(&f, &[land.axis[i], land.axis[j]], step))
        .collect();
    dedupe(peaks, step)
}

/// Grid maxima of a precomputed landscape, refined against the exact objective.
pub fn landscape_peaks(
    design: &PlanarDesign,
    objective: &PlanarObjective,
    land: &Landscape,
) -> Result<Vec<Peak>> {
    require_two(design)?;
    let step = land.axis.get(1).copied().unwrap_or(GRID_STEP);
    Ok(peaks_from(
        &PlanarEvaluator::new(design, objective)?,
        land,
        step,
    ))
}

/// Best placement of any number of free anchors.
///
/// A uniform interior grid (as fine as `GRID_STEP` allows within a fixed budget)
/// seeds a coordinate-wise golden-section ascent from its best point.
pub fn optimize_planar_anchors(design: &PlanarDesign, objective: &PlanarObjective) -> Result<Peak> {
    let ev = PlanarEvaluator::new(design, objective)?;
    let k = design.free_radii.len();
    if k == 0 {
        return Ok(Peak {
            anchors: Vec::new(),
            value: ev.value(&[]),
        });
    }
    let finest = (1.0 / GRID_STEP).round() as usize;
    let mut n = finest;
    while n > 4
        && (n - 1)
            .checked_pow(k as u32)
            .is_none_or(|t| t > GRID_BUDGET)
    {
        n -= 1;
    }
    let axis: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
    let rows: Vec<Vec<DVector<f64>>> = (0..k)
        .map(|s| axis.iter().map(|&f| ev.row(s, f)).collect())
        .collect();
    let total = axis.len().pow(k as u32);
    let decode = |mut idx: usize| {
        let mut out = vec![0usize; k];
        for d in (0..k).rev() {
            out[d] = idx % axis.len();
            idx /= axis.len();
        }
        out
    };
    let (best, _) = (0..total)
        .into_par_iter()
        .map(|t| {
            let ids = decode(t);
            let refs: Vec<&DVector<f64>> =
                ids.iter().enumerate().map(|(s, &i)| &rows[s][i]).collect();
            (t, ev.value_of(&ev.assemble(&refs)))
        })
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let start: Vec<f64> = decode(best).iter().map(|&i| axis[i]).collect();
    let f = |x: &[f64]| ev.value(x);
    Ok(refine(&f, &start, 1.0 / n as f64))
}

/// Percent improvement of `candidate` over `baseline`.
pub fn improvement_beta(candidate: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(ShapeError::Invalid(format!(
            "baseline index must be positive, got {baseline}"
        )));
    }
    Ok((candidate - baseline) / baseline * 100.0)
}

/// Evenly spaced free anchors `i/p`, the fixed string at `L`.
pub fn even_anchors(design: &PlanarDesign) -> Vec<f64> {
    let p = design.p() as f64;
    (1..design.p()).map(|i| i as f64 / p).collect()
}

/// One row of a planar anchor table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// `(r₁/L, r₂/L)`.
    pub radii: [f64; 2],
    /// `(s_a1/L, s_a2/L)`.
    pub anchors: [f64; 2],
    pub value: f64,
    /// Percent improvement over evenly spaced anchors.
    pub beta: f64,
}

/// The two highest peaks for every radius pair in `TABLE_RADII`.
pub fn planar_table(length: f64, objective: &PlanarObjective) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for radii in TABLE_RADII {
        let design = PlanarDesign::new(length, vec![radii[0] * length, radii[1] * length]);
        let ev = PlanarEvaluator::new(&design, objective)?;
        let baseline = ev.value(&even_anchors(&design));
        let land = landscape_with(&ev, GRID_STEP)?;
        let mut peaks = peaks_from(&ev, &land, GRID_STEP);
        peaks.truncate(2);
        peaks.sort_by(|a, b| a.anchors[0].total_cmp(&b.anchors[0]));
        for p in peaks {
            rows.push(TableRow {
                radii,
                anchors: [p.anchors[0], p.anchors[1]],
                value: p.value,
                beta: improvement_beta(p.value, baseline)?,
            });
        }
    }
    Ok(rows)
}

/// Admissible workspace for full-map planar tables.
///
/// Samples live on the three-term planar basis and keep every table radius,
/// plus the fixed string, realizable.
pub fn table_samples(
    length: f64,
    constraints: &ConstraintSet,
    n: usize,
    seed: u64,
) -> Result<WorkspaceSamples> {
    let basis = ModalBasis::planar(3, length)?;
    let mut radii: Vec<f64> = TABLE_RADII.iter().flatten().map(|r| r * length).collect();
    radii.push(FIXED_RADIUS_FRACTION * length);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let paths: Vec<RoutingPath> = radii
        .into_iter()
        .map(|rx| RoutingPath::ConstantPitch { rx, ry: 0.0 })
        .collect();
    sample_admissible(&basis, constraints, &paths, n, seed)
}

/// Path family of a string whose helix twist rate is chosen per design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathTemplate {
    ConstantPitch {
        rx: f64,
        ry: f64,
    },
    /// Twist rate comes from the design's shared `n_ω`.
    Helical {
        radius: f64,
        alpha: f64,
    },
}

impl PathTemplate {
    pub fn path(&self, omega: f64) -> RoutingPath {
        match *self {
            Self::ConstantPitch { rx, ry } => RoutingPath::ConstantPitch { rx, ry },
            Self::Helical { radius, alpha } => RoutingPath::Helical {
                radius,
                omega,
                alpha,
            },
        }
    }

    pub fn is_helical(&self) -> bool {
        matches!(self, Self::Helical { .. })
    }
}

/// Candidate anchors for one string.
#[derive(Debug, Clone, PartialEq)]
pub struct StringChoice {
    pub path: PathTemplate,
    /// Candidate anchor arc lengths.
    pub anchors: Vec<f64>,
    pub mount: Mount,
}

/// Shared helix twist candidates `ω = n_ω · 2π/holes / L_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistChoices {
    pub n_omega: Vec<i32>,
    pub holes: usize,
    pub subsegment_length: f64,
}

impl TwistChoices {
    pub fn rate(&self, k: usize) -> f64 {
        twist_rate(self.n_omega[k], self.holes, self.subsegment_length)
    }
}

/// Discrete routing design space.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub strings: Vec<StringChoice>,
    /// `None` leaves every helix untwisted and adds no enumeration axis.
    pub twist: Option<TwistChoices>,
    /// Arc lengths at which `ℵ_g(J_ℓξ)` is reported.
    pub s_obj: Vec<f64>,
    /// Index into `s_obj` used for ranking.
    pub objective: usize,
    pub epsilon: f64,
    pub cap: usize,
}

impl DesignSpace {
    pub fn validate(&self, length: f64) -> Result<()> {
        if self.strings.is_empty() {
            return Err(ShapeError::Invalid("design space has no strings".into()));
        }
        for (i, s) in self.strings.iter().enumerate() {
            if s.anchors.is_empty() {
                return Err(ShapeError::Invalid(format!(
                    "string {i} has no anchor candidates"
                )));
            }
            if let Some(&a) = s.anchors.iter().find(|a| !(0.0..=length).contains(*a)) {
                return Err(ShapeError::Domain { s: a, length });
            }
        }
        if let Some(t) = &self.twist {
            if t.n_omega.is_empty() || t.holes == 0 || !(t.subsegment_length > 0.0) {
                return Err(ShapeError::Invalid(
                    "twist candidates need at least one n_omega, a positive hole count and subsegment length".into(),
                ));
            }
        }
        if self.s_obj.is_empty() || self.objective >= self.s_obj.len() {
            return Err(ShapeError::Invalid(
                "objective arc length index out of range".into(),
            ));
        }
        if let Some(&s) = self.s_obj.iter().find(|s| !(0.0..=length).contains(*s)) {
            return Err(ShapeError::Domain { s, length });
        }
        if !(self.epsilon >= 0.0) {
            return Err(ShapeError::Invalid("epsilon must be non-negative".into()));
        }
        Ok(())
    }

    fn twist_count(&self) -> usize {
        self.twist.as_ref().map_or(1, |t| t.n_omega.len())
    }

    fn radices(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.strings.iter().map(|s| s.anchors.len()).collect();
        r.push(self.twist_count());
        r
    }

    /// Number of designs, or `TooManyDesigns` beyond the cap.
    pub fn size(&self) -> Result<usize> {
        let size = self
            .radices()
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .unwrap_or(usize::MAX);
        if size > self.cap {
            return Err(ShapeError::TooManyDesigns {
                size,
                cap: self.cap,
            });
        }
        Ok(size)
    }

    /// Design `id` in lexicographic order, the twist choice varying fastest.
    pub fn design(&self, id: usize) -> Design {
        let radices = self.radices();
        let mut digits = vec![0usize; radices.len()];
        let mut rest = id;
        for d in (0..radices.len()).rev() {
            digits[d] = rest % radices[d];
            rest /= radices[d];
        }
        let twist_index = digits.pop().expect("twist axis present");
        let anchors = digits
            .iter()
            .zip(&self.strings)
            .map(|(&a, s)| s.anchors[a])
            .collect();
        let (n_omega, twist_rate) = match &self.twist {
            Some(t) => (Some(t.n_omega[twist_index]), t.rate(twist_index)),
            None => (None, 0.0),
        };
        Design {
            id,
            anchor_indices: digits,
            anchors,
            twist_index,
            n_omega,
            twist_rate,
        }
    }

    fn string_spec(&self, string: usize, anchor: usize, twist: usize) -> StringSpec {
        let choice = &self.strings[string];
        let omega = self.twist.as_ref().map_or(0.0, |t| t.rate(twist));
        StringSpec::new(
            choice.path.path(omega),
            choice.anchors[anchor],
            choice.mount,
        )
    }

    /// Every path a design could use, for realizability during sampling.
    pub fn candidate_paths(&self) -> Vec<RoutingPath> {
        let mut out = Vec::new();
        for s in &self.strings {
            if s.path.is_helical() {
                out.extend(
                    (0..self.twist_count())
                        .map(|t| s.path.path(self.twist.as_ref().map_or(0.0, |c| c.rate(t)))),
                );
            } else {
                out.push(s.path.path(0.0));
            }
        }
        out
    }
}

/// One point of a design space.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub id: usize,
    pub anchor_indices: Vec<usize>,
    pub anchors: Vec<f64>,
    pub twist_index: usize,
    pub n_omega: Option<i32>,
    /// Helix twist rate (rad/m).
    pub twist_rate: f64,
}

/// Measurement structure shared by every design.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayTemplate {
    pub composites: Vec<Composite>,
    pub quadrature_points: usize,
}

/// Sensor array realizing `design`.
pub fn design_array(
    space: &DesignSpace,
    template: &ArrayTemplate,
    design: &Design,
) -> Result<SensorArray> {
    let strings = (0..space.strings.len())
        .map(|i| space.string_spec(i, design.anchor_indices[i], design.twist_index))
        .collect();
    SensorArray::new(
        strings,
        template.composites.clone(),
        template.quadrature_points,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDesign {
    pub design: Design,
    pub report: DesignReport,
}

impl RankedDesign {
    pub fn objective(&self, index: usize) -> f64 {
        self.report.aleph_full[index].1
    }
}

/// Ranked output of a brute-force search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub evaluated: usize,
    /// Non-singular designs first, each group by descending objective then id.
    pub ranked: Vec<RankedDesign>,
}

/// Evaluate every design of `space` over the shared samples and rank them.
///
/// String Jacobian rows are cached per (string, anchor, twist, configuration)
/// and body Jacobians per sample, since neither depends on the other strings.
pub fn brute_force_search(
    space: &DesignSpace,
    template: &ArrayTemplate,
    basis: &ModalBasis,
    samples: &WorkspaceSamples,
    c_ell: f64,
    n_steps: usize,
) -> Result<SearchOutcome> {
    space.validate(basis.length)?;
    if samples.is_empty() {
        return Err(ShapeError::EmptySamples);
    }
    let total = space.size()?;
    for c in &samples.configs {
        basis.check_config(c)?;
    }
    // validates composites once against the shared string count
    let probe = design_array(space, template, &space.design(0))?;
    let m = basis.dim();
    let twists = space.twist_count();

    let mut configs = vec![Config::zeros(m)];
    configs.extend(samples.configs.iter().cloned());
    let nodes = template.quadrature_points;

    // rows[string][anchor][twist][config]
    type Rows = Vec<Vec<Vec<Vec<DVector<f64>>>>>;
    let rows: Rows = space
        .strings
        .iter()
        .enumerate()
        .map(|(i, choice)| {
            (0..choice.anchors.len())
                .map(|a| {
                    let nt = if choice.path.is_helical() { twists } else { 1 };
                    (0..nt)
                        .map(|t| {
                            let spec = space.string_spec(i, a, t);
                            configs
                                .par_iter()
                                .map(|c| {
                                    string_eval(&spec, i, basis, c, nodes, true)
                                        .map(|(_, g)| g.expect("gradient requested"))
                                })
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let body: Vec<Vec<DMatrix<f64>>> = samples
        .configs
        .par_iter()
        .map(|c| {
            Ok(body_jacobians(basis, c, &space.s_obj, n_steps)?
                .into_iter()
                .map(|(_, j)| scale_angular(&j, c_ell))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut ranked: Vec<RankedDesign> = (0..total)
        .into_par_iter()
        .map(|id| {
            let design = space.design(id);
            let jacobian = |k: usize| {
                let per: Vec<DVector<f64>> = (0..space.strings.len())
                    .map(|i| {
                        let t = if space.strings[i].path.is_helical() {
                            design.twist_index
                        } else {
                            0
                        };
                        rows[i][design.anchor_indices[i]][t][k].clone()
                    })
                    .collect();
                probe.combine_rows(&per, m)
            };
            let linear = !basis.has_torsion()
                && space
                    .strings
                    .iter()
                    .all(|s| !s.path.is_helical() || design.twist_rate == 0.0);
            let (straight_pinv, straight) = pinv_and_noise_amp(&jacobian(0));
            let mut aleph_config = straight;
            let mut sums = vec![0.0; space.s_obj.len()];
            for (k, jx) in body.iter().enumerate() {
                let own;
                let jp = if linear {
                    &straight_pinv
                } else {
                    let (p, a) = pinv_and_noise_amp(&jacobian(k + 1));
                    aleph_config = aleph_config.min(a);
                    own = p;
                    &own
                };
                for (q, j) in jx.iter().enumerate() {
                    sums[q] += full_map_aleph(j, jp);
                }
            }
            let n = body.len() as f64;
            RankedDesign {
                report: DesignReport {
                    aleph_config,
                    aleph_full: space
                        .s_obj
                        .iter()
                        .zip(&sums)
                        .map(|(&s, v)| (s, v / n))
                        .collect(),
                    characteristic_length: c_ell,
                    singular: aleph_config < space.epsilon,
                },
                design,
            }
        })
        .collect();

    let q = space.objective;
    ranked.sort_by(|a, b| {
        a.report
            .singular
            .cmp(&b.report.singular)
            .then_with(|| b.objective(q).total_cmp(&a.objective(q)))
            .then_with(|| a.design.id.cmp(&b.design.id))
    });
    Ok(SearchOutcome {
        evaluated: total,
        ranked,
    })
}
