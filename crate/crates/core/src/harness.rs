//! Scenario configuration, random drops and Monte Carlo sweeps.

use crate::beamforming::{zero_forcing, BsCodebook};
use crate::channel::{ArrayGeometry, BsArray, ChannelParams, Facing};
use crate::placement::{
    build_candidate_set_tangent, build_candidate_set_uniform, CandidateSet, CellMask, CoverageEvaluator,
    PlacementError, PlacementResult,
};
use crate::protocol::{assign, evaluate_plan, plan_all, LinkBudget, ProtocolError, ScanReport, Scheme, SystemConfig};
use crate::scene::{Obstacle, Plane, Point2, Point3, RoomBounds, Scene, SceneError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Attempts per obstacle or user before giving up on rejection sampling.
const MAX_DRAWS: usize = 100_000;
/// Clearance kept between obstacles and the BS.
const BS_CLEARANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("could not serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("rejection sampling gave up after {MAX_DRAWS} draws ({0})")]
    Sampling(&'static str),
    #[error("trial {trial}: {source}")]
    Trial { trial: u64, source: Box<HarnessError> },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleKind {
    Circle,
    Wall,
}

impl fmt::Display for ObstacleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObstacleKind::Circle => "circle",
            ObstacleKind::Wall => "wall",
        })
    }
}

/// How RIS positions are chosen in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMethod {
    /// Full search over the fine uniform candidate grid.
    Optimal,
    /// Full search over the tangent candidate set.
    Proposed,
    /// Greedy search over the tangent candidate set.
    Greedy,
    /// Uniform draws over the perimeter.
    Random,
}

impl fmt::Display for PlacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementMethod::Optimal => "optimal",
            PlacementMethod::Proposed => "proposed",
            PlacementMethod::Greedy => "greedy",
            PlacementMethod::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig { x: 10.0, y: 10.0, z: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsConfig {
    pub position: [f64; 3],
    pub plane: Plane,
    /// `(L₁, L₂)`
    pub subarrays: [usize; 2],
    /// `(M₁, M₂)`
    pub elements: [usize; 2],
}

impl Default for BsConfig {
    fn default() -> Self {
        BsConfig { position: [5.0, 5.0, 3.0], plane: Plane::Xy, subarrays: [2, 1], elements: [4, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    pub kind: ObstacleKind,
    pub count: usize,
    pub radius: [f64; 2],
    pub length: [f64; 2],
    pub angle: [f64; 2],
    /// Fixed obstacle list used for every trial instead of random draws.
    pub fixed: Option<Vec<Obstacle>>,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        ObstacleConfig {
            kind: ObstacleKind::Circle,
            count: 5,
            radius: [0.5, 1.5],
            length: [1.0, 7.3],
            angle: [0.0, PI],
            fixed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisConfig {
    pub count: usize,
    /// `(N₁, N₂)`
    pub elements: [usize; 2],
    pub length: f64,
    pub height: f64,
    pub footprint_samples: usize,
}

impl Default for RisConfig {
    fn default() -> Self {
        RisConfig { count: 2, elements: [8, 8], length: 0.5, height: 1.5, footprint_samples: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub count: usize,
    pub height: f64,
}

impl Default for UserConfig {
    fn default() -> Self {
        UserConfig { count: 2, height: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    /// `(V₁, V₂)`
    pub bs: [usize; 2],
    /// `(W₁, W₂)`
    pub ris: [usize; 2],
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig { bs: [16, 16], ris: [64, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub path_loss_exponent: f64,
    pub nlos_variance_db: f64,
    pub nlos_paths: usize,
    pub wavelength: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { path_loss_exponent: 2.0, nlos_variance_db: -30.0, nlos_paths: 3, wavelength: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub trials: u64,
    pub seed: u64,
    /// RIS counts of the coverage sweep.
    pub ris_counts: Vec<usize>,
    /// `P/N₀` points of the rate sweep, dB.
    pub snr_db: Vec<f64>,
    /// Coverage raster cell size, m.
    pub grid: f64,
    /// Spacing of the uniform candidate grid, m.
    pub uniform_spacing: f64,
    pub coverage_methods: Vec<PlacementMethod>,
    pub rate_methods: Vec<PlacementMethod>,
    pub schemes: Vec<Scheme>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            trials: 200,
            seed: 1,
            ris_counts: vec![0, 1, 2, 3, 4],
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            grid: 0.05,
            uniform_spacing: 0.1,
            coverage_methods: vec![
                PlacementMethod::Optimal,
                PlacementMethod::Proposed,
                PlacementMethod::Greedy,
                PlacementMethod::Random,
            ],
            rate_methods: vec![PlacementMethod::Optimal, PlacementMethod::Proposed, PlacementMethod::Random],
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

/// Everything a sweep needs. Omitted fields take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: RoomConfig,
    pub bs: BsConfig,
    pub obstacles: ObstacleConfig,
    pub ris: RisConfig,
    pub users: UserConfig,
    pub codebook: CodebookConfig,
    pub channel: ChannelConfig,
    pub sweep: SweepConfig,
}

fn check(ok: bool, msg: &str) -> Result<(), HarnessError> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Config(msg.to_string()))
    }
}

fn ordered_range(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let o = &self.obstacles;
        check(o.radius[0] > 0.0 && ordered_range(o.radius), "obstacles.radius must be an increasing positive range")?;
        check(o.length[0] > 0.0 && ordered_range(o.length), "obstacles.length must be an increasing positive range")?;
        check(ordered_range(o.angle), "obstacles.angle must be an increasing range")?;
        let [l1, l2] = self.bs.subarrays;
        let [m1, m2] = self.bs.elements;
        check(l1 * l2 > 0 && m1 * m2 > 0, "bs.subarrays and bs.elements must be positive")?;
        check(self.users.count <= l1 * l2, "users.count must not exceed the number of BS sub-arrays")?;
        check(self.ris.elements[0] * self.ris.elements[1] > 0, "ris.elements must be positive")?;
        check(self.ris.height >= 0.0 && self.ris.height <= self.room.z, "ris.height must lie within the room")?;
        check(self.users.height >= 0.0 && self.users.height <= self.room.z, "users.height must lie within the room")?;
        check(self.codebook.bs.iter().chain(&self.codebook.ris).all(|&v| v > 0), "codebook sizes must be positive")?;
        check(
            self.channel.nlos_variance_db.is_finite() || self.channel.nlos_variance_db == f64::NEG_INFINITY,
            "channel.nlos_variance_db must be a number",
        )?;
        check(self.channel.wavelength > 0.0, "channel.wavelength must be positive")?;
        check(self.channel.path_loss_exponent >= 0.0, "channel.path_loss_exponent must be nonnegative")?;
        let s = &self.sweep;
        check(s.trials > 0, "sweep.trials must be positive")?;
        check(s.grid > 0.0, "sweep.grid must be positive")?;
        check(s.uniform_spacing > 0.0, "sweep.uniform_spacing must be positive")?;
        check(s.snr_db.iter().all(|v| v.is_finite()), "sweep.snr_db entries must be finite")?;
        self.base_scene()?;
        Ok(())
    }

    /// The room and BS without obstacles.
    pub fn base_scene(&self) -> Result<Scene, HarnessError> {
        let [x, y, z] = self.bs.position;
        let mut scene = Scene::new(
            RoomBounds { x: self.room.x, y: self.room.y, z: self.room.z },
            Point3::new(x, y, z),
            Vec::new(),
            self.ris.length,
        )?;
        scene.bs_plane = self.bs.plane;
        scene.footprint_samples = self.ris.footprint_samples;
        scene.validate()?;
        Ok(scene)
    }

    pub fn system(&self) -> SystemConfig {
        let lambda = self.channel.wavelength;
        let facing = if self.bs.position[2] >= self.room.z / 2.0 { Facing::Negative } else { Facing::Positive };
        SystemConfig {
            bs: BsArray {
                subarray: ArrayGeometry {
                    plane: self.bs.plane,
                    counts: (self.bs.elements[0], self.bs.elements[1]),
                    spacing: (lambda / 2.0, lambda / 2.0),
                    wavelength: lambda,
                    facing,
                },
                layout: (self.bs.subarrays[0], self.bs.subarrays[1]),
            },
            ris_elements: (self.ris.elements[0], self.ris.elements[1]),
            ris_height: self.ris.height,
            bs_codebook: (self.codebook.bs[0], self.codebook.bs[1]),
            ris_codebook: (self.codebook.ris[0], self.codebook.ris[1]),
            channel: ChannelParams {
                path_loss_exponent: self.channel.path_loss_exponent,
                nlos_variance: 10f64.powf(self.channel.nlos_variance_db / 10.0),
                nlos_paths: self.channel.nlos_paths,
            },
        }
    }

    fn obstacle_kind_label(&self) -> String {
        match &self.obstacles.fixed {
            Some(_) => "fixed".to_string(),
            None => self.obstacles.kind.to_string(),
        }
    }

    fn obstacle_count(&self) -> usize {
        self.obstacles.fixed.as_ref().map_or(self.obstacles.count, Vec::len)
    }
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Scene = 0,
    Users = 1,
    Channel = 2,
    RandomPlacement = 3,
    RisPhases = 4,
}

/// `(master seed, trial)` pair; each purpose gets its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeed {
    pub master: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master: u64, trial: u64) -> Self {
        TrialSeed { master, trial }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream((self.trial << 3) | purpose as u64);
        rng
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Random obstacles, resampling any that leave the room or touch the BS.
pub fn generate_scene(cfg: &ScenarioConfig, seed: TrialSeed) -> Result<Scene, HarnessError> {
    let base = cfg.base_scene()?;
    if let Some(fixed) = &cfg.obstacles.fixed {
        return Ok(base.with_obstacles(fixed.clone())?);
    }
    let mut rng = seed.rng(Purpose::Scene);
    let bounds = base.bounds;
    let bs = base.bs_2d();
    let o = &cfg.obstacles;
    let mut obstacles = Vec::with_capacity(o.count);
    for _ in 0..o.count {
        let mut draws = 0;
        let obstacle = loop {
            draws += 1;
            if draws > MAX_DRAWS {
                return Err(HarnessError::Sampling("obstacle"));
            }
            let (x, y) = (rng.random_range(0.0..bounds.x), rng.random_range(0.0..bounds.y));
            let candidate = match o.kind {
                ObstacleKind::Circle => Obstacle::circle(x, y, uniform(&mut rng, o.radius)),
                ObstacleKind::Wall => Obstacle::wall(x, y, uniform(&mut rng, o.length), uniform(&mut rng, o.angle)),
            };
            let (lo, hi) = candidate.bounding_box();
            if bounds.contains(lo) && bounds.contains(hi) && candidate.distance_to(bs) > BS_CLEARANCE {
                break candidate;
            }
        };
        obstacles.push(obstacle);
    }
    Ok(base.with_obstacles(obstacles)?)
}

/// `count` users uniform over the free floor at the configured height.
pub fn generate_users(cfg: &ScenarioConfig, scene: &Scene, seed: TrialSeed) -> Result<Vec<Point3>, HarnessError> {
    let mut rng = seed.rng(Purpose::Users);
    (0..cfg.users.count)
        .map(|_| {
            for _ in 0..MAX_DRAWS {
                let p = Point2::new(rng.random_range(0.0..scene.bounds.x), rng.random_range(0.0..scene.bounds.y));
                if !scene.is_occupied(p) {
                    return Ok(p.lift(cfg.users.height));
                }
            }
            Err(HarnessError::Sampling("user"))
        })
        .collect()
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub method: PlacementMethod,
    pub scheme: Option<Scheme>,
    pub ris_count: usize,
    pub obstacles: usize,
    pub obstacle_type: String,
    pub snr_db: Option<f64>,
    pub coverage_norm: f64,
    pub sum_rate: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 10] =
    ["trial", "seed", "method", "scheme", "J", "I", "obstacle_type", "snr_db", "coverage_norm", "sum_rate_bps_hz"];

impl TrialRecord {
    pub fn fields(&self) -> [String; 10] {
        [
            self.trial.to_string(),
            self.seed.to_string(),
            self.method.to_string(),
            self.scheme.map(|s| s.to_string()).unwrap_or_default(),
            self.ris_count.to_string(),
            self.obstacles.to_string(),
            self.obstacle_type.clone(),
            self.snr_db.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.9}", self.coverage_norm),
            self.sum_rate.map(|v| format!("{v:.9}")).unwrap_or_default(),
        ]
    }
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Candidate sets and their coverage masks for one scene.
pub struct PlacementContext<'a> {
    pub evaluator: CoverageEvaluator<'a>,
    tangent: Option<(CandidateSet, Vec<CellMask>)>,
    uniform: Option<(CandidateSet, Vec<CellMask>)>,
}

impl<'a> PlacementContext<'a> {
    pub fn new(cfg: &ScenarioConfig, scene: &'a Scene, methods: &[PlacementMethod]) -> Result<Self, HarnessError> {
        let evaluator = CoverageEvaluator::new(scene, cfg.sweep.grid)?;
        let wants = |m: &[PlacementMethod]| methods.iter().any(|x| m.contains(x));
        let tangent = if wants(&[PlacementMethod::Proposed, PlacementMethod::Greedy]) {
            let set = build_candidate_set_tangent(scene)?;
            let masks = evaluator.candidate_masks(&set)?;
            Some((set, masks))
        } else {
            None
        };
        let uniform = if wants(&[PlacementMethod::Optimal]) {
            let set = build_candidate_set_uniform(scene, cfg.sweep.uniform_spacing)?;
            let masks = evaluator.candidate_masks(&set)?;
            Some((set, masks))
        } else {
            None
        };
        Ok(PlacementContext { evaluator, tangent, uniform })
    }

    /// Places up to `count` RISs; fewer when the candidate set is smaller.
    pub fn place<R: Rng + ?Sized>(
        &self,
        method: PlacementMethod,
        count: usize,
        rng: &mut R,
    ) -> Result<PlacementResult, HarnessError> {
        let pool = |p: &'_ Option<(CandidateSet, Vec<CellMask>)>| p.as_ref().cloned().expect("candidate set prepared");
        Ok(match method {
            PlacementMethod::Optimal => {
                let (set, masks) = pool(&self.uniform);
                self.evaluator.full_search_with(&set, &masks, count.min(set.len()))?
            }
            PlacementMethod::Proposed => {
                let (set, masks) = pool(&self.tangent);
                self.evaluator.full_search_with(&set, &masks, count.min(set.len()))?
            }
            PlacementMethod::Greedy => {
                let (set, masks) = pool(&self.tangent);
                self.evaluator.greedy_search_with(&set, &masks, count.min(set.len()))?
            }
            PlacementMethod::Random => self.evaluator.random_placement(count, rng)?,
        })
    }
}

fn run_trials<T: Send>(
    trials: u64,
    workers: usize,
    f: impl Fn(u64) -> Result<Vec<T>, HarnessError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let per_trial: Vec<Result<Vec<T>, HarnessError>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| f(t).map_err(|e| HarnessError::Trial { trial: t, source: Box::new(e) }))
            .collect()
    });
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Coverage of every configured placement method for every RIS count.
pub fn coverage_trial(cfg: &ScenarioConfig, trial: u64) -> Result<Vec<TrialRecord>, HarnessError> {
    let seed = TrialSeed::new(cfg.sweep.seed, trial);
    let scene = generate_scene(cfg, seed)?;
    let methods = &cfg.sweep.coverage_methods;
    let ctx = PlacementContext::new(cfg, &scene, methods)?;
    let mut rng = seed.rng(Purpose::RandomPlacement);
    let mut rows = Vec::new();
    for &count in &cfg.sweep.ris_counts {
        for &method in methods {
            let placed = ctx.place(method, count, &mut rng)?;
            rows.push(TrialRecord {
                trial,
                seed: cfg.sweep.seed,
                method,
                scheme: None,
                ris_count: count,
                obstacles: cfg.obstacle_count(),
                obstacle_type: cfg.obstacle_kind_label(),
                snr_db: None,
                coverage_norm: placed.normalized_coverage,
                sum_rate: None,
            });
        }
    }
    Ok(rows)
}

pub fn coverage_sweep(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<TrialRecord>, HarnessError> {
    cfg.validate()?;
    run_trials(cfg.sweep.trials, workers, |t| coverage_trial(cfg, t))
}

/// Sum rates of every scheme, placement method and SNR point for one trial.
/// All placement methods share the trial's users and channel stream.
pub fn rate_trial(cfg: &ScenarioConfig, bs_book: &BsCodebook, trial: u64) -> Result<Vec<TrialRecord>, HarnessError> {
    let seed = TrialSeed::new(cfg.sweep.seed, trial);
    let scene = generate_scene(cfg, seed)?;
    let methods = &cfg.sweep.rate_methods;
    let ctx = PlacementContext::new(cfg, &scene, methods)?;
    let users = generate_users(cfg, &scene, seed)?;
    let system = cfg.system();
    let mut placement_rng = seed.rng(Purpose::RandomPlacement);
    let mut rows = Vec::new();
    for &method in methods {
        let placed = ctx.place(method, cfg.ris.count, &mut placement_rng)?;
        let drop = system.drop(&scene, &placed.positions, &users, &mut seed.rng(Purpose::Channel))?;
        let plans = plan_all(&drop, &system, bs_book, &cfg.sweep.schemes, &mut seed.rng(Purpose::RisPhases))?;
        for &snr in &cfg.sweep.snr_db {
            let budget = LinkBudget::from_snr_db(snr);
            for plan in &plans {
                let result = evaluate_plan(plan, &drop, budget)?;
                rows.push(TrialRecord {
                    trial,
                    seed: cfg.sweep.seed,
                    method,
                    scheme: Some(plan.scheme),
                    ris_count: placed.positions.len(),
                    obstacles: cfg.obstacle_count(),
                    obstacle_type: cfg.obstacle_kind_label(),
                    snr_db: Some(snr),
                    coverage_norm: placed.normalized_coverage,
                    sum_rate: Some(result.sum_rate),
                });
            }
        }
    }
    Ok(rows)
}

pub fn rate_sweep(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<TrialRecord>, HarnessError> {
    cfg.validate()?;
    let bs_book = cfg.system().build_bs_codebook();
    run_trials(cfg.sweep.trials, workers, |t| rate_trial(cfg, &bs_book, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScene {
    pub trial: u64,
    pub scene: Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub scenes: Vec<TrialScene>,
}

pub fn generate_scenes(cfg: &ScenarioConfig) -> Result<SceneFile, HarnessError> {
    let scenes = (0..cfg.sweep.trials)
        .map(|trial| Ok(TrialScene { trial, scene: generate_scene(cfg, TrialSeed::new(cfg.sweep.seed, trial))? }))
        .collect::<Result<_, HarnessError>>()?;
    Ok(SceneFile { scenes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Quick invariant suite over a few seeded drops of `cfg`.
pub fn selfcheck(cfg: &ScenarioConfig) -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut out = Vec::new();
    let empty = cfg.base_scene()?;
    let cov = CoverageEvaluator::new(&empty, cfg.sweep.grid)?.evaluate(&[])?.normalized_coverage;
    out.push(outcome("empty room is fully covered", cov == 1.0, format!("coverage {cov}")));

    let mut monotone = true;
    let mut in_range = true;
    for trial in 0..3 {
        let scene = generate_scene(cfg, TrialSeed::new(cfg.sweep.seed, trial))?;
        let ctx = PlacementContext::new(cfg, &scene, &[PlacementMethod::Proposed])?;
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let covs: Vec<f64> = (0..4)
            .map(|j| ctx.place(PlacementMethod::Proposed, j, &mut rng).map(|p| p.normalized_coverage))
            .collect::<Result<_, _>>()?;
        monotone &= covs.windows(2).all(|w| w[1] >= w[0]);
        in_range &= covs.iter().all(|c| (0.0..=1.0).contains(c));
    }
    out.push(outcome("full-search coverage grows with RIS count", monotone, String::new()));
    out.push(outcome("normalized coverage within [0, 1]", in_range, String::new()));

    let system = cfg.system();
    let bs = system.bs;
    let m = bs.elements_per_subarray();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sweep.seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (t, p) = (rng.random_range(PI / 2.0..PI), rng.random_range(-PI..PI));
        let h = bs.response(t, p);
        let f = crate::beamforming::steering_beam(&bs.subarray, t, p);
        let gains: Vec<f64> = (0..bs.subarrays()).map(|l| h.rows(l * m, m).dot(&f).norm_sqr()).collect();
        for g in &gains {
            worst = worst.max((g - gains[0]).abs() / gains[0]);
        }
    }
    out.push(outcome("LoS gain identical on every sub-array", worst < 1e-9, format!("max deviation {worst:e}")));

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = DMatrix::from_fn(2, 2, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let Ok(f) = zero_forcing(&w) else { continue };
        let g = &w * &f.matrix;
        worst = worst.max(g[(0, 1)].norm() / g[(0, 0)].norm()).max(g[(1, 0)].norm() / g[(1, 1)].norm());
    }
    out.push(outcome("zero-forcing nulls interference", worst < 1e-9, format!("max leakage {worst:e}")));

    let mut valid = true;
    for _ in 0..100 {
        let (k, j) = (rng.random_range(1..4), rng.random_range(0..4));
        let scan = ScanReport {
            direct: (0..k).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect(),
            ris: (0..k)
                .map(|_| (0..j).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect())
                .collect(),
        };
        let a = assign(&scan);
        let mut used = vec![false; j];
        for l in &a.links {
            if let crate::protocol::Link::Ris(r) = *l {
                valid &= !used[r];
                used[r] = true;
            }
        }
        let mut order = a.order.clone();
        order.sort_unstable();
        valid &= order == (0..k).collect::<Vec<_>>();
    }
    out.push(outcome("each RIS serves at most one user", valid, String::new()));

    let mut tiny = cfg.clone();
    tiny.sweep.trials = 1;
    tiny.sweep.snr_db = vec![20.0];
    tiny.codebook = CodebookConfig { bs: [4, 4], ris: [8, 8] };
    tiny.sweep.rate_methods = vec![PlacementMethod::Proposed];
    let a = rate_sweep(&tiny, 1)?;
    let b = rate_sweep(&tiny, 2)?;
    let nonneg = a.iter().all(|r| r.sum_rate.is_some_and(|v| v >= 0.0));
    out.push(outcome("rate sweep is reproducible", a == b, String::new()));
    out.push(outcome("sum rates are nonnegative", nonneg, String::new()));
    Ok(out)
}
