//! Synthetic proprioceptive pointing data.
//!
//! A 6-DOF chain (torso yaw, torso pitch, shoulder pitch/roll/yaw, elbow)
//! reaches each of 20 targets on a horizontal line in front of the body via
//! damped least-squares inverse kinematics. The 20 terminal postures plus
//! the rest posture (all joints zero, arm hanging down) are reduced to three
//! principal components and rescaled into `[-1, 1]`, giving the canonical
//! gesture vectors used as network inputs and targets.
//!
//! Frame: origin at the hip, `x` forward, `y` to the robot's left, `z` up.
//! Target 0 is the leftmost point of the line (largest `y`).

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::numerics::{pca_fit, Matrix, Pca};
use crate::{Error, Result};

pub const JOINTS: usize = 6;
pub const POSITIONS: usize = 20;
pub const GESTURE_DIM: usize = 3;
/// Index of the rest (base) posture inside a [`GestureTable`].
pub const BASE_INDEX: usize = POSITIONS;
pub const REQUIRED_VARIANCE: f64 = 0.97;
pub const REACH_TOLERANCE: f64 = 1e-3;

pub type Joints = [f64; JOINTS];
pub type GestureVector = [f64; GESTURE_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkSettings {
    pub iterations: usize,
    pub damping: f64,
    pub initial_pose: Joints,
}

impl Default for IkSettings {
    fn default() -> Self {
        IkSettings {
            iterations: 300,
            damping: 0.02,
            initial_pose: [0.0, 0.0, -0.9, 0.0, 0.0, -0.9],
        }
    }
}

/// Body and workspace dimensions in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmGeometry {
    /// Hip to shoulder height along the torso axis.
    pub torso_height: f64,
    /// Lateral distance of the (right) shoulder from the torso axis.
    pub shoulder_offset: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub line_forward: f64,
    pub line_height: f64,
    pub line_length: f64,
    pub ik: IkSettings,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry {
            torso_height: 0.20,
            shoulder_offset: 0.10,
            upper_arm: 0.15,
            forearm: 0.14,
            line_forward: 0.30,
            line_height: 0.15,
            line_length: 0.30,
            ik: IkSettings::default(),
        }
    }
}

/// Validated arm whose 20 targets are all reachable.
#[derive(Debug, Clone)]
pub struct ArmModel {
    geometry: ArmGeometry,
    targets: Vec<Vector3<f64>>,
    solutions: Vec<Joints>,
}

struct ChainPose {
    tip: Vector3<f64>,
    origins: [Vector3<f64>; JOINTS],
    axes: [Vector3<f64>; JOINTS],
}

impl ArmModel {
    pub fn new(geometry: ArmGeometry) -> Result<Self> {
        let g = &geometry;
        let lengths = [
            ("torso_height", g.torso_height),
            ("upper_arm", g.upper_arm),
            ("forearm", g.forearm),
            ("line_length", g.line_length),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !g.shoulder_offset.is_finite() || g.shoulder_offset < 0.0 {
            return Err(Error::config("shoulder_offset must be non-negative"));
        }
        if g.ik.iterations == 0 || !(g.ik.damping > 0.0) {
            return Err(Error::config("ik needs iterations > 0 and damping > 0"));
        }
        let spacing = g.line_length / (POSITIONS - 1) as f64;
        let targets: Vec<Vector3<f64>> = (0..POSITIONS)
            .map(|i| {
                Vector3::new(
                    g.line_forward,
                    g.line_length / 2.0 - i as f64 * spacing,
                    g.line_height,
                )
            })
            .collect();
        let mut model = ArmModel {
            geometry,
            targets,
            solutions: Vec::with_capacity(POSITIONS),
        };
        for i in 0..POSITIONS {
            let q = model.damped_least_squares(&model.targets[i]);
            let residual = (model.fingertip(&q) - model.targets[i]).norm();
            if !(residual <= REACH_TOLERANCE) {
                return Err(Error::config(format!(
                    "target {i} unreachable: ik residual {residual:.4} m exceeds {REACH_TOLERANCE} m"
                )));
            }
            model.solutions.push(q);
        }
        Ok(model)
    }

    pub fn geometry(&self) -> &ArmGeometry {
        &self.geometry
    }

    pub fn target(&self, index: usize) -> [f64; 3] {
        let t = self.targets[index];
        [t.x, t.y, t.z]
    }

    /// Joint angles placing the fingertip on target `index` (0 = leftmost).
    pub fn solve_pointing(&self, index: usize) -> Result<Joints> {
        self.solutions
            .get(index)
            .copied()
            .ok_or_else(|| Error::invalid(format!("target index {index} outside 0..{POSITIONS}")))
    }

    /// Fingertip position for the given joint angles.
    pub fn forward_kinematics(&self, q: &Joints) -> [f64; 3] {
        let p = self.fingertip(q);
        [p.x, p.y, p.z]
    }

    /// World-frame rotation axis of every joint at pose `q`.
    pub fn joint_axes(&self, q: &Joints) -> [[f64; 3]; JOINTS] {
        self.chain(q).axes.map(|a| [a.x, a.y, a.z])
    }

    fn fingertip(&self, q: &Joints) -> Vector3<f64> {
        self.chain(q).tip
    }

    fn chain(&self, q: &Joints) -> ChainPose {
        let g = &self.geometry;
        let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
        let rot = |axis: &Vector3<f64>, angle: f64| {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), angle)
        };
        let r0 = rot(&z, q[0]);
        let r1 = r0 * rot(&y, q[1]);
        let shoulder = r1 * Vector3::new(0.0, -g.shoulder_offset, g.torso_height);
        let r2 = r1 * rot(&y, q[2]);
        let r3 = r2 * rot(&x, q[3]);
        let r4 = r3 * rot(&z, q[4]);
        let elbow = shoulder + r4 * Vector3::new(0.0, 0.0, -g.upper_arm);
        let r5 = r4 * rot(&y, q[5]);
        let tip = elbow + r5 * Vector3::new(0.0, 0.0, -g.forearm);
        let origin = Vector3::zeros();
        ChainPose {
            tip,
            origins: [origin, origin, shoulder, shoulder, shoulder, elbow],
            axes: [z, r0 * y, r1 * y, r2 * x, r3 * z, r4 * y],
        }
    }

    fn jacobian(&self, q: &Joints) -> (Vector3<f64>, Matrix3x6<f64>) {
        let pose = self.chain(q);
        let mut j = Matrix3x6::zeros();
        for i in 0..JOINTS {
            let col = pose.axes[i].cross(&(pose.tip - pose.origins[i]));
            j.set_column(i, &col);
        }
        (pose.tip, j)
    }

    fn damped_least_squares(&self, target: &Vector3<f64>) -> Joints {
        let ik = &self.geometry.ik;
        let mut q = Vector6::from_row_slice(&ik.initial_pose);
        let lambda2 = ik.damping * ik.damping;
        for _ in 0..ik.iterations {
            let joints: Joints = q.into();
            let (tip, j) = self.jacobian(&joints);
            let err = target - tip;
            let jjt = j * j.transpose() + Matrix3::identity() * lambda2;
            let Some(inv) = jjt.try_inverse() else { break };
            q += j.transpose() * (inv * err);
        }
        q.into()
    }
}

/// Canonical 3-component gesture vectors: 20 pointing postures (index 0..19,
/// left to right) followed by the rest posture at [`BASE_INDEX`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureTable {
    pub vectors: Vec<GestureVector>,
    pub pca: Pca,
    /// Divisor applied to raw projections so every component lies in `[-1, 1]`.
    pub scale: f64,
    pub variance_fraction: f64,
}

#[derive(Serialize, Deserialize)]
struct GestureTableFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    table: GestureTable,
}

const TABLE_FORMAT: &str = "countlab-gesture-table";
const TABLE_VERSION: u32 = 1;

impl GestureTable {
    pub fn position(&self, index: usize) -> GestureVector {
        self.vectors[index]
    }

    pub fn base(&self) -> GestureVector {
        self.vectors[BASE_INDEX]
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Project a joint-space posture with the table's PCA and scale.
    pub fn project_posture(&self, joints: &Joints) -> GestureVector {
        let p = self.pca.project(joints);
        [p[0] / self.scale, p[1] / self.scale, p[2] / self.scale]
    }

    /// Index of the nearest entry (ties to the lower index).
    pub fn nearest(&self, v: &GestureVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.vectors.iter().enumerate() {
            let d = dist2(e, v);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.vectors.len() {
            for j in i + 1..self.vectors.len() {
                best = best.min(dist2(&self.vectors[i], &self.vectors[j]).sqrt());
            }
        }
        best
    }

    /// A component that is strictly monotone over the 20 pointing positions.
    pub fn monotone_component(&self) -> Option<usize> {
        (0..GESTURE_DIM).find(|&c| {
            let col: Vec<f64> = self.vectors[..POSITIONS].iter().map(|v| v[c]).collect();
            col.windows(2).all(|w| w[0] < w[1]) || col.windows(2).all(|w| w[0] > w[1])
        })
    }

    fn validate(&self) -> Result<()> {
        if self.vectors.len() != POSITIONS + 1 {
            return Err(Error::Format(format!(
                "gesture table needs {} entries, found {}",
                POSITIONS + 1,
                self.vectors.len()
            )));
        }
        if self.vectors.iter().flatten().any(|x| !x.is_finite()) || !(self.scale > 0.0) {
            return Err(Error::Format(
                "gesture table holds non-finite values".into(),
            ));
        }
        if !(self.variance_fraction > REQUIRED_VARIANCE) {
            return Err(Error::config(format!(
                "gesture table variance fraction {:.4} not above {REQUIRED_VARIANCE}",
                self.variance_fraction
            )));
        }
        if !(self.min_pairwise_distance() > 0.0) {
            return Err(Error::config(
                "gesture table entries are not pairwise distinct",
            ));
        }
        if self.monotone_component().is_none() {
            return Err(Error::config(
                "no gesture component is monotone across the 20 positions",
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GestureTableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            table: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GestureTableFile = serde_json::from_str(text)?;
        if file.format != TABLE_FORMAT || file.version != TABLE_VERSION {
            return Err(Error::Format(format!(
                "expected {TABLE_FORMAT} v{TABLE_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        file.table.validate()?;
        Ok(file.table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn dist2(a: &GestureVector, b: &GestureVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Reach all 20 targets, add the rest posture, reduce to three principal
/// components and rescale by the global max-abs projection.
pub fn build_gesture_table(arm: &ArmModel) -> Result<GestureTable> {
    let mut postures = Matrix::zeros(POSITIONS + 1, JOINTS);
    for i in 0..POSITIONS {
        postures.row_mut(i).copy_from_slice(&arm.solve_pointing(i)?);
    }
    // row BASE_INDEX stays all-zero: the rest posture

    let pca = pca_fit(&postures, GESTURE_DIM)?;
    let variance_fraction = pca.explained();
    if !(variance_fraction > REQUIRED_VARIANCE) {
        return Err(Error::config(format!(
            "three components carry only {:.2}% of posture variance (need > {:.0}%); adjust arm geometry",
            100.0 * variance_fraction,
            100.0 * REQUIRED_VARIANCE
        )));
    }
    let raw: Vec<Vec<f64>> = (0..=POSITIONS)
        .map(|i| pca.project(postures.row(i)))
        .collect();
    let scale = raw.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let vectors = raw
        .iter()
        .map(|p| [p[0] / scale, p[1] / scale, p[2] / scale])
        .collect();
    let table = GestureTable {
        vectors,
        pca,
        scale,
        variance_fraction,
    };
    table.validate()?;
    Ok(table)
}
