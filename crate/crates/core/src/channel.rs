//! Saleh-Valenzuela channel synthesis with planar array responses.
//!
//! Convention: a transmit array contributes `a(θ, φ)` transposed (never
//! conjugated) to a link, so the BS-user channel `h = c·aᵀ` and the BS-RIS
//! channel `G = c·a_RIS·a_BSᵀ` are steered by the same analog beam
//! `f = conj(a)/√M`.

use crate::scene::{BoundaryWall, Plane, Point3, Scene, SceneError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("LoS angles are undefined between coincident points")]
    CoincidentPoints,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// Direction cosine of `(θ, φ)` along this axis.
    pub fn direction_cosine(self, theta: f64, phi: f64) -> f64 {
        match self {
            Axis::X => theta.sin() * phi.cos(),
            Axis::Y => theta.sin() * phi.sin(),
            Axis::Z => theta.cos(),
        }
    }

    fn component(self, v: [f64; 3]) -> f64 {
        match self {
            Axis::X => v[0],
            Axis::Y => v[1],
            Axis::Z => v[2],
        }
    }
}

impl Plane {
    /// In-plane axes `(α, β)`.
    pub fn axes(self) -> (Axis, Axis) {
        match self {
            Plane::Xy => (Axis::X, Axis::Y),
            Plane::Yz => (Axis::Y, Axis::Z),
            Plane::Xz => (Axis::X, Axis::Z),
        }
    }

    pub fn normal(self) -> Axis {
        match self {
            Plane::Xy => Axis::Z,
            Plane::Yz => Axis::X,
            Plane::Xz => Axis::Y,
        }
    }
}

/// Which side of its plane an array radiates into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Facing {
    Positive,
    Negative,
}

impl Facing {
    pub fn sign(self) -> f64 {
        match self {
            Facing::Positive => 1.0,
            Facing::Negative => -1.0,
        }
    }
}

/// Uniform planar array. Element `(i, k)` sits at `i·δ_α` along α and `k·δ_β`
/// along β; its flat index is `i·D_β + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub plane: Plane,
    pub counts: (usize, usize),
    pub spacing: (f64, f64),
    pub wavelength: f64,
    pub facing: Facing,
}

impl ArrayGeometry {
    pub fn half_wavelength(plane: Plane, counts: (usize, usize), facing: Facing) -> Self {
        ArrayGeometry { plane, counts, spacing: (0.5, 0.5), wavelength: 1.0, facing }
    }

    pub fn len(&self) -> usize {
        self.counts.0 * self.counts.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-element phase increments `(2π/λ)·δ·Ψ` along α and β.
    pub fn phase_steps(&self, theta: f64, phi: f64) -> (f64, f64) {
        let (a, b) = self.plane.axes();
        let k = 2.0 * PI / self.wavelength;
        (k * self.spacing.0 * a.direction_cosine(theta, phi), k * self.spacing.1 * b.direction_cosine(theta, phi))
    }

    /// Unit propagation direction for in-plane direction cosines
    /// `(ψ_α, ψ_β)` on the facing side. Points outside the unit disc are
    /// pulled onto its rim (endfire).
    pub fn direction_from_cosines(&self, psi_a: f64, psi_b: f64) -> (f64, f64) {
        let rho = psi_a.hypot(psi_b);
        let (pa, pb) = if rho > 1.0 { (psi_a / rho, psi_b / rho) } else { (psi_a, psi_b) };
        let pn = self.facing.sign() * (1.0 - pa * pa - pb * pb).max(0.0).sqrt();
        let (a, b) = self.plane.axes();
        let n = self.plane.normal();
        let mut v = [0.0; 3];
        for (axis, value) in [(a, pa), (b, pb), (n, pn)] {
            let slot = match axis {
                Axis::X => 0,
                Axis::Y => 1,
                Axis::Z => 2,
            };
            v[slot] = value;
        }
        direction_angles(v)
    }

    /// Direction cosines of `(θ, φ)` along the array's normal axis.
    pub fn normal_cosine(&self, theta: f64, phi: f64) -> f64 {
        self.plane.normal().direction_cosine(theta, phi)
    }
}

fn direction_angles(v: [f64; 3]) -> (f64, f64) {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let theta = (Axis::Z.component(v) / norm).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    (theta, phi)
}

/// Planar array response: Kronecker product of the α and β ULA responses.
pub fn array_response(geom: &ArrayGeometry, theta: f64, phi: f64) -> DVector<Complex64> {
    let (step_a, step_b) = geom.phase_steps(theta, phi);
    let (da, db) = geom.counts;
    DVector::from_iterator(
        da * db,
        (0..da).flat_map(|i| (0..db).map(move |k| Complex64::cis(i as f64 * step_a + k as f64 * step_b))),
    )
}

/// `(θ, φ)` of the direction from `from` to `to`, in global coordinates.
pub fn los_angles(from: Point3, to: Point3) -> Result<(f64, f64), ChannelError> {
    let d = [to.x - from.x, to.y - from.y, to.z - from.z];
    if d.iter().all(|c| *c == 0.0) {
        return Err(ChannelError::CoincidentPoints);
    }
    Ok(direction_angles(d))
}

/// BS antenna: an `L₁ × L₂` grid of `M₁ × M₂` sub-arrays, one RF chain each.
/// Responses are ordered sub-array by sub-array, sub-array `l = l₁·L₂ + l₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsArray {
    pub subarray: ArrayGeometry,
    pub layout: (usize, usize),
}

impl BsArray {
    pub fn subarrays(&self) -> usize {
        self.layout.0 * self.layout.1
    }

    pub fn elements_per_subarray(&self) -> usize {
        self.subarray.len()
    }

    pub fn len(&self) -> usize {
        self.subarrays() * self.elements_per_subarray()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Geometry of the whole aperture as one planar array.
    pub fn full_geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            counts: (self.layout.0 * self.subarray.counts.0, self.layout.1 * self.subarray.counts.1),
            ..self.subarray
        }
    }

    /// Full-aperture response in sub-array block order.
    pub fn response(&self, theta: f64, phi: f64) -> DVector<Complex64> {
        let local = array_response(&self.subarray, theta, phi);
        let (step_a, step_b) = self.subarray.phase_steps(theta, phi);
        let (m1, m2) = self.subarray.counts;
        let m = local.len();
        let mut out = DVector::zeros(self.len());
        for l1 in 0..self.layout.0 {
            for l2 in 0..self.layout.1 {
                let l = l1 * self.layout.1 + l2;
                let offset = Complex64::cis((l1 * m1) as f64 * step_a + (l2 * m2) as f64 * step_b);
                out.rows_mut(l * m, m).copy_from(&(&local * offset));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// Linear variance of each NLoS gain.
    pub nlos_variance: f64,
    pub nlos_paths: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { path_loss_exponent: 2.0, nlos_variance: 1e-3, nlos_paths: 3 }
    }
}

impl ChannelParams {
    pub fn los_gain(&self, distance: f64) -> f64 {
        distance.powf(-self.path_loss_exponent / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub theta: f64,
    pub phi: f64,
    pub kind: PathKind,
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn nlos_paths<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Vec<PathComponent> {
    (0..params.nlos_paths)
        .map(|_| {
            let gain = complex_normal(rng, params.nlos_variance);
            let theta = rng.random_range(-PI / 2.0..PI / 2.0);
            let phi = rng.random_range(-PI..PI);
            PathComponent { gain, theta, phi, kind: PathKind::Nlos }
        })
        .collect()
}

/// RIS on a side wall, centered at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisMount {
    pub position: Point3,
    pub wall: BoundaryWall,
    pub geometry: ArrayGeometry,
}

impl RisMount {
    /// RIS with half-wavelength elements facing into the room.
    pub fn on_wall(position: Point3, wall: BoundaryWall, counts: (usize, usize)) -> Self {
        let facing = match wall {
            BoundaryWall::West | BoundaryWall::South => Facing::Positive,
            BoundaryWall::East | BoundaryWall::North => Facing::Negative,
        };
        RisMount { position, wall, geometry: ArrayGeometry::half_wavelength(wall.ris_plane(), counts, facing) }
    }
}

/// One synthesized vector channel plus the geometry that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLink {
    pub vector: DVector<Complex64>,
    pub los: bool,
    pub los_angles: (f64, f64),
}

fn vector_link<R: Rng + ?Sized>(
    response: impl Fn(f64, f64) -> DVector<Complex64>,
    from: Point3,
    to: Point3,
    los: bool,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<VectorLink, ChannelError> {
    let angles = los_angles(from, to)?;
    let mut v = response(angles.0, angles.1);
    let c0 = if los { params.los_gain(from.distance(to)) } else { 0.0 };
    v *= Complex64::new(c0, 0.0);
    let paths = nlos_paths(params, rng);
    if !paths.is_empty() {
        let norm = 1.0 / (paths.len() as f64).sqrt();
        for p in paths {
            v += response(p.theta, p.phi) * (p.gain * norm);
        }
    }
    Ok(VectorLink { vector: v, los, los_angles: angles })
}

/// Direct BS-user channel, length `L·M`.
pub fn synth_bs_user<R: Rng + ?Sized>(
    scene: &Scene,
    bs: &BsArray,
    params: &ChannelParams,
    user: Point3,
    rng: &mut R,
) -> Result<VectorLink, ChannelError> {
    let los = scene.has_direct_los(user.xy())?;
    vector_link(|t, p| bs.response(t, p), scene.bs_position, user, los, params, rng)
}

/// RIS-user channel, length `N`.
pub fn synth_ris_user<R: Rng + ?Sized>(
    scene: &Scene,
    ris: &RisMount,
    params: &ChannelParams,
    user: Point3,
    rng: &mut R,
) -> Result<VectorLink, ChannelError> {
    if let Some(index) = scene.obstacle_containing(user.xy()) {
        return Err(SceneError::InsideObstacle { x: user.x, y: user.y, index }.into());
    }
    let los = !scene.segment_blocked(ris.position.xy(), user.xy(), None);
    vector_link(|t, p| array_response(&ris.geometry, t, p), ris.position, user, los, params, rng)
}

/// LoS angles of a BS-RIS link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsRisAngles {
    /// Direction from the RIS toward the BS, `(θ^(r,0), φ^(r,0))`.
    pub arrival: (f64, f64),
    /// Direction from the BS toward the RIS, `(θ^(t,0), φ^(t,0))`.
    pub departure: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLink {
    pub matrix: DMatrix<Complex64>,
    pub los: bool,
    pub los_gain: f64,
    pub angles: BsRisAngles,
}

/// BS-RIS channel, `N × L·M`.
pub fn synth_bs_ris<R: Rng + ?Sized>(
    scene: &Scene,
    bs: &BsArray,
    ris: &RisMount,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<MatrixLink, ChannelError> {
    let bs_pos = scene.bs_position;
    let angles =
        BsRisAngles { arrival: los_angles(ris.position, bs_pos)?, departure: los_angles(bs_pos, ris.position)? };
    let los = !scene.segment_blocked(bs_pos.xy(), ris.position.xy(), None);
    let c0 = if los { params.los_gain(bs_pos.distance(ris.position)) } else { 0.0 };
    let outer = |arr: (f64, f64), dep: (f64, f64)| {
        array_response(&ris.geometry, arr.0, arr.1) * bs.response(dep.0, dep.1).transpose()
    };
    let mut g = outer(angles.arrival, angles.departure) * Complex64::new(c0, 0.0);
    if params.nlos_paths > 0 {
        let norm = 1.0 / (params.nlos_paths as f64).sqrt();
        for _ in 0..params.nlos_paths {
            let gain = complex_normal(rng, params.nlos_variance);
            let arr = (rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-PI..PI));
            let dep = (rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-PI..PI));
            g += outer(arr, dep) * (gain * norm);
        }
    }
    Ok(MatrixLink { matrix: g, los, los_gain: c0, angles })
}

/// All channels of one drop: `h_(k,0)`, `h_(k,j)` and `G_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub direct: Vec<VectorLink>,
    /// Indexed `[user][ris]`.
    pub ris_user: Vec<Vec<VectorLink>>,
    pub bs_ris: Vec<MatrixLink>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn ris_count(&self) -> usize {
        self.bs_ris.len()
    }

    /// Same drop with every RIS removed.
    pub fn without_ris(&self) -> Self {
        ChannelRealization {
            direct: self.direct.clone(),
            ris_user: vec![Vec::new(); self.direct.len()],
            bs_ris: Vec::new(),
        }
    }

    /// Flattened entries, one row per complex coefficient:
    /// `link,user,ris,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ChannelError> {
        let io = crate::placement::csv_io;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link", "user", "ris", "row", "col", "re", "im"]).map_err(io)?;
        let mut row = |link: &str, k: String, j: String, r: usize, c: usize, v: Complex64| {
            w.write_record([
                link.to_string(),
                k,
                j,
                r.to_string(),
                c.to_string(),
                format!("{:.17e}", v.re),
                format!("{:.17e}", v.im),
            ])
        };
        for (k, h) in self.direct.iter().enumerate() {
            for (c, v) in h.vector.iter().enumerate() {
                row("bs-user", k.to_string(), String::new(), 0, c, *v).map_err(io)?;
            }
        }
        for (k, links) in self.ris_user.iter().enumerate() {
            for (j, h) in links.iter().enumerate() {
                for (c, v) in h.vector.iter().enumerate() {
                    row("ris-user", k.to_string(), j.to_string(), 0, c, *v).map_err(io)?;
                }
            }
        }
        for (j, g) in self.bs_ris.iter().enumerate() {
            for r in 0..g.matrix.nrows() {
                for c in 0..g.matrix.ncols() {
                    row("bs-ris", String::new(), j.to_string(), r, c, g.matrix[(r, c)]).map_err(io)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws every channel of a drop. Draw order is fixed: direct links per
/// user, then RIS-user links per user and RIS, then BS-RIS links per RIS.
pub fn synthesize<R: Rng + ?Sized>(
    scene: &Scene,
    bs: &BsArray,
    ris: &[RisMount],
    users: &[Point3],
    params: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    let direct = users.iter().map(|&u| synth_bs_user(scene, bs, params, u, rng)).collect::<Result<Vec<_>, _>>()?;
    let ris_user = users
        .iter()
        .map(|&u| ris.iter().map(|m| synth_ris_user(scene, m, params, u, rng)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let bs_ris = ris.iter().map(|m| synth_bs_ris(scene, bs, m, params, rng)).collect::<Result<Vec<_>, _>>()?;
    Ok(ChannelRealization { direct, ris_user, bs_ris })
}
