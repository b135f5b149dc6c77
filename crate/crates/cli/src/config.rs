//! JSON robot and design-space descriptions.
//!
//! Lengths are in meters and angles in radians. Any angle may instead be given
//! in degrees through the matching `_deg` key, but not both.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;
use shapesense::modal::{AxisBasis, ModalBasis};
use shapesense::optimizer::{
    ArrayTemplate, DesignSpace, PathTemplate, StringChoice, TwistChoices, DEFAULT_DESIGN_CAP,
};
use shapesense::rodsim::{RodSpec, DEFAULT_MODULUS};
use shapesense::routing::{twist_rate, Mount, RoutingPath, StringSpec, TabulatedPath};
use shapesense::sensing::{Composite, SensorArray, DEFAULT_QUADRATURE, DEFAULT_STEPS};
use shapesense::sensitivity::{ConstraintSet, DiskGeometry, DEFAULT_EPSILON};

pub const SCHEMA_VERSION: u32 = 1;

/// Parse JSON, reporting syntax and schema errors with their line and column.
fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{}:{}:{}: {}", path.display(), e.line(), e.column(), e))
}

fn pick_angle(name: &str, rad: Option<f64>, deg: Option<f64>) -> Result<Option<f64>> {
    match (rad, deg) {
        (Some(_), Some(_)) => bail!("give either `{name}` or `{name}_deg`, not both"),
        (Some(r), None) => Ok(Some(r)),
        (None, Some(d)) => Ok(Some(d.to_radians())),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default)]
    pub x: Vec<usize>,
    #[serde(default)]
    pub y: Vec<usize>,
    #[serde(default)]
    pub z: Vec<usize>,
}

impl BasisConfig {
    pub fn build(&self, length: f64) -> Result<ModalBasis> {
        let axis = |d: &[usize]| -> Result<AxisBasis> {
            if d.is_empty() {
                Ok(AxisBasis::empty())
            } else {
                Ok(AxisBasis::new(d.to_vec())?)
            }
        };
        Ok(ModalBasis::new(
            axis(&self.x)?,
            axis(&self.y)?,
            axis(&self.z)?,
            length,
        )?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    /// Number of disks; disk `k` sits at `k·L/count`, the last at the tip.
    pub count: usize,
    pub height: f64,
    pub radius: f64,
}

/// Routing path. Constant-pitch paths take `rx`/`ry` or a polar `radius` and `angle`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathConfig {
    ConstantPitch {
        rx: Option<f64>,
        ry: Option<f64>,
        radius: Option<f64>,
        angle: Option<f64>,
        angle_deg: Option<f64>,
    },
    Helical {
        radius: f64,
        /// Twist rate in rad/m.
        omega: Option<f64>,
        /// Holes skipped per subsegment; needs `holes` and the disk layout.
        n_omega: Option<i32>,
        holes: Option<usize>,
        alpha: Option<f64>,
        alpha_deg: Option<f64>,
    },
    Tabulated {
        /// `[s, r_x, r_y]` rows.
        samples: Vec<[f64; 3]>,
    },
}

impl PathConfig {
    fn constant_pitch(&self) -> Result<Option<(f64, f64)>> {
        let PathConfig::ConstantPitch {
            rx,
            ry,
            radius,
            angle,
            angle_deg,
        } = self
        else {
            return Ok(None);
        };
        let polar = pick_angle("angle", *angle, *angle_deg)?;
        match (rx.or(*ry), radius) {
            (Some(_), Some(_)) => bail!("give either `rx`/`ry` or `radius`/`angle`, not both"),
            (None, Some(r)) => {
                let a = polar.unwrap_or(0.0);
                Ok(Some((r * a.cos(), r * a.sin())))
            }
            _ => {
                ensure!(polar.is_none(), "`angle` needs `radius`");
                Ok(Some((rx.unwrap_or(0.0), ry.unwrap_or(0.0))))
            }
        }
    }

    fn build(&self, disks: Option<&DiskLayout>) -> Result<RoutingPath> {
        if let Some((rx, ry)) = self.constant_pitch()? {
            return Ok(RoutingPath::ConstantPitch { rx, ry });
        }
        match self {
            PathConfig::Helical {
                radius,
                omega,
                n_omega,
                holes,
                alpha,
                alpha_deg,
            } => {
                let alpha = pick_angle("alpha", *alpha, *alpha_deg)?.unwrap_or(0.0);
                let omega = match (omega, n_omega) {
                    (Some(_), Some(_)) => bail!("give either `omega` or `n_omega`, not both"),
                    (Some(w), None) => *w,
                    (None, Some(n)) => {
                        let holes = holes.context("`n_omega` needs `holes`")?;
                        let d = disks.context("`n_omega` needs the `disks` layout")?;
                        twist_rate(*n, holes, d.subsegment)
                    }
                    (None, None) => 0.0,
                };
                Ok(RoutingPath::Helical {
                    radius: *radius,
                    omega,
                    alpha,
                })
            }
            PathConfig::Tabulated { samples } => Ok(RoutingPath::Tabulated(TabulatedPath::new(
                samples.iter().map(|r| (r[0], r[1], r[2])).collect(),
            )?)),
            PathConfig::ConstantPitch { .. } => unreachable!("handled above"),
        }
    }

    /// Path family for a design search; helix twist comes from the search.
    fn template(&self) -> Result<PathTemplate> {
        if let Some((rx, ry)) = self.constant_pitch()? {
            return Ok(PathTemplate::ConstantPitch { rx, ry });
        }
        match self {
            PathConfig::Helical {
                radius,
                omega,
                n_omega,
                alpha,
                alpha_deg,
                ..
            } => {
                ensure!(
                    omega.is_none() && n_omega.is_none(),
                    "design-space helices take their twist from `twist`, not `omega`/`n_omega`"
                );
                Ok(PathTemplate::Helical {
                    radius: *radius,
                    alpha: pick_angle("alpha", *alpha, *alpha_deg)?.unwrap_or(0.0),
                })
            }
            _ => bail!("design-space strings must be constant-pitch or helical"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MountConfig {
    #[default]
    Base,
    Tip,
}

impl From<MountConfig> for Mount {
    fn from(m: MountConfig) -> Self {
        match m {
            MountConfig::Base => Mount::Base,
            MountConfig::Tip => Mount::Tip,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringConfig {
    pub path: PathConfig,
    /// Anchor arc length in meters.
    pub anchor: Option<f64>,
    /// Anchor disk number, `1..=count`.
    pub anchor_disk: Option<usize>,
    #[serde(default)]
    pub mount: MountConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeConfig {
    pub members: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Scalar or per-axis strain limit.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StrainConfig {
    Uniform(f64),
    PerAxis([f64; 3]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub strain: StrainConfig,
    pub backbone_diameter: f64,
    #[serde(default = "yes")]
    pub realizability: bool,
    /// Apply the disk-collision limit from the `disks` layout.
    #[serde(default = "yes")]
    pub disk_collision: bool,
    /// Bending per subsegment.
    pub bend_limit: Option<f64>,
    pub bend_limit_deg: Option<f64>,
    /// Twist per subsegment.
    pub twist_limit: Option<f64>,
    pub twist_limit_deg: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodConfig {
    pub diameter: f64,
    #[serde(default = "default_modulus")]
    pub elastic_modulus: f64,
}

fn default_modulus() -> f64 {
    DEFAULT_MODULUS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub version: u32,
    #[serde(rename = "L")]
    pub length: f64,
    pub basis: BasisConfig,
    /// Richer basis for synthetic ground truth; defaults to `basis`.
    pub truth_basis: Option<BasisConfig>,
    pub disks: Option<DiskConfig>,
    #[serde(default)]
    pub strings: Vec<StringConfig>,
    #[serde(default)]
    pub composites: Vec<CompositeConfig>,
    pub constraints: Option<ConstraintConfig>,
    pub rod: Option<RodConfig>,
    #[serde(rename = "c_ell")]
    pub c_ell: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_quadrature() -> usize {
    DEFAULT_QUADRATURE
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

#[derive(Debug, Clone, Copy)]
pub struct DiskLayout {
    pub count: usize,
    pub subsegment: f64,
}

impl DiskLayout {
    pub fn position(&self, disk: usize) -> Result<f64> {
        ensure!(
            (1..=self.count).contains(&disk),
            "disk {disk} outside 1..={}",
            self.count
        );
        Ok(disk as f64 * self.subsegment)
    }
}

/// A validated robot description.
#[derive(Debug, Clone)]
pub struct Robot {
    pub config: RobotConfig,
    pub basis: ModalBasis,
    pub truth_basis: ModalBasis,
    pub disks: Option<DiskLayout>,
    pub strings: Vec<StringSpec>,
    pub constraints: Option<ConstraintSet>,
}

impl Robot {
    pub fn load(path: &Path) -> Result<Self> {
        let config: RobotConfig = parse_json(path)?;
        Self::from_config(config)
            .with_context(|| format!("invalid robot description {}", path.display()))
    }

    pub fn from_config(config: RobotConfig) -> Result<Self> {
        ensure!(
            config.version == SCHEMA_VERSION,
            "version: unsupported schema version {} (expected {SCHEMA_VERSION})",
            config.version
        );
        let l = config.length;
        ensure!(
            l.is_finite() && l > 0.0,
            "L: segment length must be positive"
        );
        let basis = config.basis.build(l).context("basis")?;
        let truth_basis = match &config.truth_basis {
            Some(b) => b.build(l).context("truth_basis")?,
            None => basis.clone(),
        };
        let disks = match &config.disks {
            Some(d) => {
                ensure!(d.count > 0, "disks.count: need at least one disk");
                ensure!(
                    d.height > 0.0 && d.radius > 0.0,
                    "disks: height and radius must be positive"
                );
                Some(DiskLayout {
                    count: d.count,
                    subsegment: l / d.count as f64,
                })
            }
            None => None,
        };
        let strings = config
            .strings
            .iter()
            .enumerate()
            .map(|(i, s)| {
                string_spec(s, disks.as_ref(), l).with_context(|| format!("strings[{i}]"))
            })
            .collect::<Result<Vec<_>>>()?;
        ensure!(
            config.c_ell.is_none_or(|c| c > 0.0),
            "c_ell: must be positive"
        );
        ensure!(
            config.quadrature_points >= 2,
            "quadrature_points: need at least two"
        );
        ensure!(config.n_steps >= 1, "n_steps: need at least one step");
        let constraints = match &config.constraints {
            Some(c) => Some(constraint_set(c, &config).context("constraints")?),
            None => None,
        };
        let robot = Self {
            basis,
            truth_basis,
            disks,
            strings,
            constraints,
            config,
        };
        if !robot.strings.is_empty() {
            robot.array().context("strings/composites")?;
        }
        Ok(robot)
    }

    pub fn length(&self) -> f64 {
        self.config.length
    }

    pub fn composites(&self) -> Vec<Composite> {
        self.config
            .composites
            .iter()
            .map(|c| Composite {
                members: c.members.clone(),
                signs: c.signs.clone(),
            })
            .collect()
    }

    pub fn array(&self) -> Result<SensorArray> {
        ensure!(
            !self.strings.is_empty(),
            "strings: the robot has no strings"
        );
        Ok(SensorArray::new(
            self.strings.clone(),
            self.composites(),
            self.config.quadrature_points,
        )?)
    }

    pub fn template(&self) -> ArrayTemplate {
        ArrayTemplate {
            composites: self.composites(),
            quadrature_points: self.config.quadrature_points,
        }
    }

    pub fn constraints(&self) -> Result<&ConstraintSet> {
        self.constraints
            .as_ref()
            .context("constraints: required for this command")
    }

    pub fn c_ell(&self) -> Result<f64> {
        self.config
            .c_ell
            .context("c_ell: required for this command")
    }

    pub fn rod(&self) -> Result<RodSpec> {
        let r = self
            .config
            .rod
            .as_ref()
            .context("rod: required for this command")?;
        let spec = RodSpec {
            length: self.length(),
            diameter: r.diameter,
            elastic_modulus: r.elastic_modulus,
        };
        spec.validate().context("rod")?;
        Ok(spec)
    }

    pub fn paths(&self) -> Vec<RoutingPath> {
        self.strings.iter().map(|s| s.path.clone()).collect()
    }
}

fn resolve_anchor(
    anchor: Option<f64>,
    disk: Option<usize>,
    disks: Option<&DiskLayout>,
) -> Result<f64> {
    match (anchor, disk) {
        (Some(_), Some(_)) => bail!("give either `anchor` or `anchor_disk`, not both"),
        (Some(a), None) => Ok(a),
        (None, Some(k)) => disks
            .context("`anchor_disk` needs the `disks` layout")?
            .position(k),
        (None, None) => bail!("missing `anchor` or `anchor_disk`"),
    }
}

fn string_spec(s: &StringConfig, disks: Option<&DiskLayout>, length: f64) -> Result<StringSpec> {
    let path = s.path.build(disks).context("path")?;
    path.validate().context("path")?;
    let anchor = resolve_anchor(s.anchor, s.anchor_disk, disks)?;
    let spec = StringSpec::new(path, anchor, s.mount.into());
    spec.validate(length).context("anchor")?;
    Ok(spec)
}

fn constraint_set(c: &ConstraintConfig, robot: &RobotConfig) -> Result<ConstraintSet> {
    let strain = match c.strain {
        StrainConfig::Uniform(e) => nalgebra::Vector3::repeat(e),
        StrainConfig::PerAxis(e) => nalgebra::Vector3::from(e),
    };
    let bend_limit = pick_angle("bend_limit", c.bend_limit, c.bend_limit_deg)?;
    let twist_limit = pick_angle("twist_limit", c.twist_limit, c.twist_limit_deg)?;
    let disk = robot.disks.as_ref().map(|d| DiskGeometry {
        height: d.height,
        // a zero-radius disk never touches its neighbour
        radius: if c.disk_collision { d.radius } else { 0.0 },
        subsegment_length: robot.length / d.count as f64,
    });
    let set = ConstraintSet {
        strain_max: strain,
        backbone_diameter: c.backbone_diameter,
        disk,
        realizability: c.realizability,
        bend_limit,
        twist_limit,
    };
    set.validate()?;
    set.bending_limit()?;
    Ok(set)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceConfig {
    pub path: PathConfig,
    pub anchors: Option<Vec<f64>>,
    pub anchor_disks: Option<Vec<usize>>,
    #[serde(default)]
    pub mount: MountConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistConfig {
    pub n_omega: Vec<i32>,
    pub holes: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub version: u32,
    pub strings: Vec<ChoiceConfig>,
    pub twist: Option<TwistConfig>,
    pub s_obj: Option<Vec<f64>>,
    pub s_obj_disks: Option<Vec<usize>>,
    #[serde(default)]
    pub objective: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_samples() -> usize {
    200
}

fn default_cap() -> usize {
    DEFAULT_DESIGN_CAP
}

/// A validated design space bound to its robot.
#[derive(Debug, Clone)]
pub struct Space {
    pub space: DesignSpace,
    pub samples: usize,
}

impl Space {
    pub fn load(path: &Path, robot: &Robot) -> Result<Self> {
        let config: SpaceConfig = parse_json(path)?;
        Self::from_config(&config, robot)
            .with_context(|| format!("invalid design space {}", path.display()))
    }

    pub fn from_config(c: &SpaceConfig, robot: &Robot) -> Result<Self> {
        ensure!(
            c.version == SCHEMA_VERSION,
            "version: unsupported schema version {} (expected {SCHEMA_VERSION})",
            c.version
        );
        let disks = robot.disks;
        let strings = c
            .strings
            .iter()
            .map(|s| {
                let anchors = match (&s.anchors, &s.anchor_disks) {
                    (Some(_), Some(_)) => {
                        bail!("give either `anchors` or `anchor_disks`, not both")
                    }
                    (Some(a), None) => a.clone(),
                    (None, Some(k)) => {
                        let d = disks.context("`anchor_disks` needs the robot's `disks` layout")?;
                        k.iter().map(|&k| d.position(k)).collect::<Result<_>>()?
                    }
                    (None, None) => bail!("missing `anchors` or `anchor_disks`"),
                };
                Ok(StringChoice {
                    path: s.path.template().context("path")?,
                    anchors,
                    mount: s.mount.into(),
                })
            })
            .enumerate()
            .map(|(i, r)| r.with_context(|| format!("strings[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let twist = match &c.twist {
            Some(t) => Some(TwistChoices {
                n_omega: t.n_omega.clone(),
                holes: t.holes,
                subsegment_length: disks
                    .context("twist: needs the robot's `disks` layout")?
                    .subsegment,
            }),
            None => None,
        };
        let s_obj = match (&c.s_obj, &c.s_obj_disks) {
            (Some(_), Some(_)) => bail!("give either `s_obj` or `s_obj_disks`, not both"),
            (Some(s), None) => s.clone(),
            (None, Some(k)) => {
                let d = disks.context("`s_obj_disks` needs the robot's `disks` layout")?;
                k.iter().map(|&k| d.position(k)).collect::<Result<_>>()?
            }
            (None, None) => vec![robot.length()],
        };
        ensure!(c.samples > 0, "samples: need at least one workspace sample");
        let space = DesignSpace {
            strings,
            twist,
            s_obj,
            objective: c.objective,
            epsilon: c.epsilon,
            cap: c.cap,
        };
        space.validate(robot.length())?;
        Ok(Self {
            space,
            samples: c.samples,
        })
    }
}
