//! Beam scanning, sub-array/RIS assignment and the benchmark schemes.

use crate::beamforming::{
    build_bs_codebook, build_ris_codebook, effective_channel, reflection_vector, sinr, steering_beam, zero_forcing,
    AnalogConfig, BeamSource, BeamformingError, BsCodebook, RisCodebook, SubarrayBeam,
};
use crate::channel::{
    synthesize, ArrayGeometry, BsArray, ChannelError, ChannelParams, ChannelRealization, Facing, RisMount,
};
use crate::scene::{Plane, Point2, Point3, Scene, SceneError};
use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{users} users exceed {subarrays} BS sub-arrays")]
    TooManyUsers { users: usize, subarrays: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Beamforming(#[from] BeamformingError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Transmit power and noise power, both linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub power: f64,
    pub noise: f64,
}

impl LinkBudget {
    /// `P/N₀` in dB with `N₀ = 1`.
    pub fn from_snr_db(db: f64) -> Self {
        LinkBudget { power: 10f64.powf(db / 10.0), noise: 1.0 }
    }
}

/// Antenna, RIS, codebook and channel parameters shared by every drop.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub bs: BsArray,
    pub ris_elements: (usize, usize),
    pub ris_height: f64,
    pub bs_codebook: (usize, usize),
    pub ris_codebook: (usize, usize),
    pub channel: ChannelParams,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            bs: BsArray {
                subarray: ArrayGeometry::half_wavelength(Plane::Xy, (4, 4), Facing::Negative),
                layout: (2, 1),
            },
            ris_elements: (8, 8),
            ris_height: 1.5,
            bs_codebook: (16, 16),
            ris_codebook: (64, 64),
            channel: ChannelParams::default(),
        }
    }
}

impl SystemConfig {
    /// Mounts an RIS at each boundary point.
    pub fn mounts(&self, scene: &Scene, positions: &[Point2]) -> Result<Vec<RisMount>, ProtocolError> {
        positions
            .iter()
            .map(|&q| {
                let wall = scene.bounds.wall_of(q).ok_or(SceneError::NotOnBoundary { x: q.x, y: q.y })?;
                Ok(RisMount::on_wall(q.lift(self.ris_height), wall, self.ris_elements))
            })
            .collect()
    }

    pub fn drop<R: Rng + ?Sized>(
        &self,
        scene: &Scene,
        ris_positions: &[Point2],
        users: &[Point3],
        rng: &mut R,
    ) -> Result<Drop, ProtocolError> {
        let ris = self.mounts(scene, ris_positions)?;
        let channels = synthesize(scene, &self.bs, &ris, users, &self.channel, rng)?;
        Ok(Drop { ris, users: users.to_vec(), channels })
    }

    pub fn build_bs_codebook(&self) -> BsCodebook {
        build_bs_codebook(&self.bs.subarray, self.bs_codebook.0, self.bs_codebook.1)
    }

    pub fn build_ris_codebooks(&self, drop: &Drop) -> Vec<RisCodebook> {
        drop.ris
            .iter()
            .zip(&drop.channels.bs_ris)
            .map(|(m, g)| build_ris_codebook(&m.geometry, g.angles.arrival, self.ris_codebook.0, self.ris_codebook.1))
            .collect()
    }
}

/// One channel realization with the RISs and users that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub ris: Vec<RisMount>,
    pub users: Vec<Point3>,
    pub channels: ChannelRealization,
}

impl Drop {
    pub fn without_ris(&self) -> Drop {
        Drop { ris: Vec::new(), users: self.users.clone(), channels: self.channels.without_ris() }
    }
}

/// Candidate BS beams seen during the direct scan.
pub trait DirectBeams: Sync {
    fn count(&self) -> usize;
    fn beam(&self, user: usize, index: usize) -> &DVector<Complex64>;
    /// Beam `index` when placed on `subarray`.
    fn beam_on(&self, user: usize, index: usize, _subarray: usize) -> &DVector<Complex64> {
        self.beam(user, index)
    }
    fn source(&self, user: usize, index: usize) -> BeamSource;
}

impl DirectBeams for BsCodebook {
    fn count(&self) -> usize {
        self.len()
    }

    fn beam(&self, _user: usize, index: usize) -> &DVector<Complex64> {
        &self.beams[index]
    }

    fn source(&self, _user: usize, index: usize) -> BeamSource {
        BeamSource::Codebook(index)
    }
}

/// Constant-modulus vector co-phasing every entry of `h`, scaled by
/// `1/sqrt(len)`. Entries where `h` vanishes get phase 0.
pub fn matched_beam(h: DVectorView<Complex64>) -> DVector<Complex64> {
    let scale = 1.0 / (h.len() as f64).sqrt();
    h.map(|v| if v.norm() > 0.0 { v.conj() / v.norm() * scale } else { Complex64::new(scale, 0.0) })
}

/// Coherent beams from exact CSI: one per user and sub-array, matched to
/// that sub-array's block of the direct channel.
pub struct ExactBeams {
    beams: Vec<Vec<DVector<Complex64>>>,
}

impl ExactBeams {
    pub fn new(bs: &BsArray, real: &ChannelRealization) -> Self {
        let m = bs.elements_per_subarray();
        let beams = real
            .direct
            .iter()
            .map(|h| (0..bs.subarrays()).map(|l| matched_beam(h.vector.rows(l * m, m))).collect())
            .collect();
        ExactBeams { beams }
    }
}

impl DirectBeams for ExactBeams {
    fn count(&self) -> usize {
        1
    }

    fn beam(&self, user: usize, _index: usize) -> &DVector<Complex64> {
        &self.beams[user][0]
    }

    fn beam_on(&self, user: usize, _index: usize, subarray: usize) -> &DVector<Complex64> {
        &self.beams[user][subarray]
    }

    fn source(&self, _user: usize, _index: usize) -> BeamSource {
        BeamSource::Matched
    }
}

/// Candidate reflections seen during the RIS scan.
pub trait ReflectionSet: Sync {
    fn count(&self, ris: usize) -> usize;
    fn reflection(&self, user: usize, ris: usize, index: usize) -> &DVector<Complex64>;
}

impl ReflectionSet for &[RisCodebook] {
    fn count(&self, ris: usize) -> usize {
        self[ris].len()
    }

    fn reflection(&self, _user: usize, ris: usize, index: usize) -> &DVector<Complex64> {
        &self[ris].reflections[index]
    }
}

/// Coherent reflections from exact CSI: for each user and RIS, the phases
/// that align every reflected element with the direct term of the RIS scan.
pub struct ExactReflections {
    per_user: Vec<Vec<DVector<Complex64>>>,
}

impl ExactReflections {
    pub fn new(real: &ChannelRealization, bs: &BsArray) -> Self {
        let m = bs.elements_per_subarray();
        let per_user = (0..real.users())
            .map(|k| {
                real.bs_ris
                    .iter()
                    .zip(&real.ris_user[k])
                    .map(|(g, h)| {
                        let (t, p) = g.angles.departure;
                        let steer = steering_beam(&bs.subarray, t, p);
                        let direct = real.direct[k].vector.rows(0, m).dot(&steer);
                        let reference =
                            if direct.norm() > 0.0 { direct / direct.norm() } else { Complex64::new(1.0, 0.0) };
                        let path = h.vector.component_mul(&(&g.matrix * first_subarray(bs, &steer)));
                        path.map(|v| if v.norm() > 0.0 { reference * v.conj() / v.norm() } else { reference })
                    })
                    .collect()
            })
            .collect();
        ExactReflections { per_user }
    }
}

impl ReflectionSet for ExactReflections {
    fn count(&self, _ris: usize) -> usize {
        1
    }

    fn reflection(&self, user: usize, ris: usize, _index: usize) -> &DVector<Complex64> {
        &self.per_user[user][ris]
    }
}

/// A single fixed reflection per RIS, shared by all users.
pub struct FixedReflections {
    pub reflections: Vec<DVector<Complex64>>,
}

impl FixedReflections {
    /// i.i.d. uniform phases on every element.
    pub fn random<R: Rng + ?Sized>(ris: &[RisMount], rng: &mut R) -> Self {
        let reflections = ris
            .iter()
            .map(|m| {
                let phases: Vec<f64> = (0..m.geometry.len()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
                reflection_vector(&phases)
            })
            .collect();
        FixedReflections { reflections }
    }
}

impl ReflectionSet for FixedReflections {
    fn count(&self, _ris: usize) -> usize {
        1
    }

    fn reflection(&self, _user: usize, ris: usize, _index: usize) -> &DVector<Complex64> {
        &self.reflections[ris]
    }
}

/// Reported SNRs: `direct[k][i]` and `ris[k][j][i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanReport {
    pub direct: Vec<Vec<f64>>,
    pub ris: Vec<Vec<Vec<f64>>>,
}

impl ScanReport {
    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn ris_count(&self) -> usize {
        self.ris.first().map_or(0, Vec::len)
    }
}

fn first_subarray(bs: &BsArray, beam: &DVector<Complex64>) -> DVector<Complex64> {
    let mut x = DVector::zeros(bs.len());
    x.rows_mut(0, beam.len()).copy_from(beam);
    x
}

/// Direct scan: each beam on sub-array 0 only, every RIS off.
pub fn bs_beam_scan(
    real: &ChannelRealization,
    bs: &BsArray,
    beams: &dyn DirectBeams,
    budget: LinkBudget,
) -> Vec<Vec<f64>> {
    let m = bs.elements_per_subarray();
    (0..real.users())
        .map(|k| {
            let h = real.direct[k].vector.rows(0, m);
            (0..beams.count()).map(|i| budget.power * h.dot(beams.beam(k, i)).norm_sqr() / budget.noise).collect()
        })
        .collect()
}

/// RIS scan: sub-array 0 steered at RIS `j`, only RIS `j` on, direct path
/// included.
pub fn ris_beam_scan(
    real: &ChannelRealization,
    bs: &BsArray,
    reflections: &dyn ReflectionSet,
    budget: LinkBudget,
) -> Vec<Vec<Vec<f64>>> {
    let feeds: Vec<DVector<Complex64>> = real
        .bs_ris
        .iter()
        .map(|g| {
            let (t, p) = g.angles.departure;
            let x = first_subarray(bs, &steering_beam(&bs.subarray, t, p));
            &g.matrix * x
        })
        .collect();
    let m = bs.elements_per_subarray();
    (0..real.users())
        .map(|k| {
            (0..real.ris_count())
                .map(|j| {
                    let (t, p) = real.bs_ris[j].angles.departure;
                    let direct = real.direct[k].vector.rows(0, m).dot(&steering_beam(&bs.subarray, t, p));
                    let path = real.ris_user[k][j].vector.component_mul(&feeds[j]);
                    (0..reflections.count(j))
                        .map(|i| {
                            let y = direct + path.dot(reflections.reflection(k, j, i));
                            budget.power * y.norm_sqr() / budget.noise
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn scan(
    real: &ChannelRealization,
    bs: &BsArray,
    beams: &dyn DirectBeams,
    reflections: &dyn ReflectionSet,
    budget: LinkBudget,
) -> ScanReport {
    ScanReport { direct: bs_beam_scan(real, bs, beams, budget), ris: ris_beam_scan(real, bs, reflections, budget) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Direct,
    Ris(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Per user.
    pub links: Vec<Link>,
    /// Users in the order they were assigned; position = sub-array index.
    pub order: Vec<usize>,
}

impl Assignment {
    /// `u_k ∈ [0 : J]`, with 0 for the direct link and `j + 1` for RIS `j`.
    pub fn vector(&self) -> Vec<usize> {
        self.links
            .iter()
            .map(|l| match l {
                Link::Direct => 0,
                Link::Ris(j) => j + 1,
            })
            .collect()
    }
}

fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    values.iter().copied().enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if v <= b => best,
        _ if v.is_nan() => best,
        _ => Some((i, v)),
    })
}

/// SNR-greedy assignment. Each round the best remaining direct report
/// competes with the best remaining (user, RIS) report; the direct link wins
/// ties. Within a round ties go to the lowest user, then RIS, then index.
pub fn assign(scan: &ScanReport) -> Assignment {
    let k_total = scan.users();
    let j_total = scan.ris_count();
    let mut user_free = vec![true; k_total];
    let mut ris_free = vec![true; j_total];
    let mut links = vec![Link::Direct; k_total];
    let mut order = Vec::with_capacity(k_total);
    for _ in 0..k_total {
        let mut direct: Option<(usize, f64)> = None;
        let mut via: Option<(usize, usize, f64)> = None;
        for k in (0..k_total).filter(|&k| user_free[k]) {
            if let Some((_, v)) = argmax(&scan.direct[k]) {
                if direct.is_none_or(|(_, b)| v > b) {
                    direct = Some((k, v));
                }
            }
            for j in (0..j_total).filter(|&j| ris_free[j]) {
                if let Some((_, v)) = argmax(&scan.ris[k][j]) {
                    if via.is_none_or(|(_, _, b)| v > b) {
                        via = Some((k, j, v));
                    }
                }
            }
        }
        let direct_value = direct.map_or(f64::NEG_INFINITY, |d| d.1);
        let k = match via {
            Some((k, j, v)) if v > direct_value => {
                links[k] = Link::Ris(j);
                ris_free[j] = false;
                k
            }
            _ => match direct {
                Some((k, _)) => k,
                // Empty reports: hand out the remaining users in index order.
                None => (0..k_total).find(|&k| user_free[k]).expect("a free user remains"),
            },
        };
        user_free[k] = false;
        order.push(k);
    }
    Assignment { links, order }
}

/// What one user was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub subarray: usize,
    pub link: Link,
    /// Scan index of the chosen beam (direct) or reflection (RIS).
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub analog: AnalogConfig,
    pub reflections: Vec<Option<DVector<Complex64>>>,
    /// Per user.
    pub choices: Vec<Choice>,
}

/// Turns an assignment into analog beams and RIS states. Sub-array `r` goes
/// to the `r`-th assigned user; unused sub-arrays and RISs stay off.
pub fn configure(
    assignment: &Assignment,
    scan: &ScanReport,
    bs: &BsArray,
    real: &ChannelRealization,
    beams: &dyn DirectBeams,
    reflections: &dyn ReflectionSet,
) -> Result<Configuration, ProtocolError> {
    let users = assignment.links.len();
    let subarrays = bs.subarrays();
    if users > subarrays {
        return Err(ProtocolError::TooManyUsers { users, subarrays });
    }
    let mut analog = AnalogConfig::inactive(subarrays, bs.elements_per_subarray());
    let mut refl = vec![None; real.ris_count()];
    let mut choices = vec![Choice { subarray: 0, link: Link::Direct, index: None }; users];
    for (slot, &k) in assignment.order.iter().enumerate() {
        let link = assignment.links[k];
        let (beam, index) = match link {
            Link::Direct => {
                let index = argmax(&scan.direct[k]).map(|a| a.0);
                let beam =
                    index.map(|i| SubarrayBeam { beam: beams.beam_on(k, i, slot).clone(), source: beams.source(k, i) });
                (beam, index)
            }
            Link::Ris(j) => {
                let (theta, phi) = real.bs_ris[j].angles.departure;
                let index = argmax(&scan.ris[k][j]).map(|a| a.0);
                if let Some(i) = index {
                    refl[j] = Some(reflections.reflection(k, j, i).clone());
                }
                let beam = SubarrayBeam {
                    beam: steering_beam(&bs.subarray, theta, phi),
                    source: BeamSource::Steered { theta, phi },
                };
                (Some(beam), index)
            }
        };
        analog.beams[slot] = beam;
        choices[k] = Choice { subarray: slot, link, index };
    }
    Ok(Configuration { analog, reflections: refl, choices })
}

/// ZF over users whose effective channel is nonzero; the rest get rate 0.
/// Power stays split `P/K` over all `K` users.
pub fn evaluate(
    real: &ChannelRealization,
    config: &Configuration,
    budget: LinkBudget,
) -> Result<(DMatrix<Complex64>, Vec<f64>), ProtocolError> {
    let w = effective_channel(real, &config.analog, &config.reflections);
    let k_total = w.nrows();
    let active: Vec<usize> = (0..k_total).filter(|&k| w.row(k).norm() > 0.0).collect();
    let mut out = vec![0.0; k_total];
    if !active.is_empty() {
        let sub = w.select_rows(active.iter());
        let f = zero_forcing(&sub)?;
        let power = budget.power * active.len() as f64 / k_total as f64;
        for (k, s) in active.iter().zip(sinr(&sub, &f, power, budget.noise)) {
            out[*k] = s;
        }
    }
    Ok((w, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    UpperBound,
    RndCoefficient,
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::UpperBound, Scheme::RndCoefficient, Scheme::NoRis];

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.to_string() == s)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Proposed => "proposed",
            Scheme::UpperBound => "upper-bound",
            Scheme::RndCoefficient => "rnd-coefficient",
            Scheme::NoRis => "no-ris",
        })
    }
}

/// Scan, assignment and configuration of one scheme on one drop. The
/// configuration does not depend on `P`, so one plan serves a whole SNR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub scheme: Scheme,
    pub scan: ScanReport,
    pub assignment: Assignment,
    pub config: Configuration,
}

impl Plan {
    pub fn new(
        scheme: Scheme,
        real: &ChannelRealization,
        bs: &BsArray,
        beams: &dyn DirectBeams,
        reflections: &dyn ReflectionSet,
    ) -> Result<Plan, ProtocolError> {
        let scan = scan(real, bs, beams, reflections, LinkBudget { power: 1.0, noise: 1.0 });
        let assignment = assign(&scan);
        let config = configure(&assignment, &scan, bs, real, beams, reflections)?;
        Ok(Plan { scheme, scan, assignment, config })
    }

    pub fn evaluate(&self, real: &ChannelRealization, budget: LinkBudget) -> Result<SchemeResult, ProtocolError> {
        let (effective, sinr) = evaluate(real, &self.config, budget)?;
        let sum_rate = sinr.iter().map(|s| (1.0 + s).log2()).sum();
        Ok(SchemeResult {
            scheme: self.scheme,
            assignment: self.assignment.clone(),
            choices: self.config.choices.clone(),
            effective,
            sinr,
            sum_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub assignment: Assignment,
    pub choices: Vec<Choice>,
    pub effective: DMatrix<Complex64>,
    /// Linear, per user.
    pub sinr: Vec<f64>,
    /// bits/s/Hz
    pub sum_rate: f64,
}

impl SchemeResult {
    pub const CSV_HEADER: [&'static str; 8] =
        ["seed", "scheme", "method", "J", "I", "snr_db", "sinr_db", "sum_rate_bps_hz"];

    /// One CSV row; per-user SINRs are `;`-separated.
    pub fn csv_record(&self, seed: u64, method: &str, ris: usize, obstacles: usize, snr_db: f64) -> Vec<String> {
        let sinr = self.sinr.iter().map(|s| format!("{:.6}", 10.0 * s.log10())).collect::<Vec<_>>().join(";");
        vec![
            seed.to_string(),
            self.scheme.to_string(),
            method.to_string(),
            ris.to_string(),
            obstacles.to_string(),
            format!("{snr_db}"),
            sinr,
            format!("{:.9}", self.sum_rate),
        ]
    }
}

pub fn plan_proposed(
    drop: &Drop,
    bs: &BsArray,
    bs_book: &BsCodebook,
    ris_books: &[RisCodebook],
) -> Result<Plan, ProtocolError> {
    Plan::new(Scheme::Proposed, &drop.channels, bs, bs_book, &ris_books)
}

pub fn plan_upper_bound(drop: &Drop, bs: &BsArray) -> Result<Plan, ProtocolError> {
    let beams = ExactBeams::new(bs, &drop.channels);
    Plan::new(Scheme::UpperBound, &drop.channels, bs, &beams, &ExactReflections::new(&drop.channels, bs))
}

pub fn plan_rnd_coefficient(
    drop: &Drop,
    bs: &BsArray,
    bs_book: &BsCodebook,
    phases: &FixedReflections,
) -> Result<Plan, ProtocolError> {
    Plan::new(Scheme::RndCoefficient, &drop.channels, bs, bs_book, phases)
}

/// Plans for a drop with its RISs removed; evaluate against
/// `drop.channels.without_ris()`.
pub fn plan_no_ris(drop: &Drop, bs: &BsArray, bs_book: &BsCodebook) -> Result<Plan, ProtocolError> {
    let none: &[RisCodebook] = &[];
    Plan::new(Scheme::NoRis, &drop.channels.without_ris(), bs, bs_book, &none)
}

pub fn run_proposed(
    drop: &Drop,
    bs: &BsArray,
    bs_book: &BsCodebook,
    ris_books: &[RisCodebook],
    budget: LinkBudget,
) -> Result<SchemeResult, ProtocolError> {
    plan_proposed(drop, bs, bs_book, ris_books)?.evaluate(&drop.channels, budget)
}

pub fn run_upper_bound(drop: &Drop, bs: &BsArray, budget: LinkBudget) -> Result<SchemeResult, ProtocolError> {
    plan_upper_bound(drop, bs)?.evaluate(&drop.channels, budget)
}

pub fn run_rnd_coefficient(
    drop: &Drop,
    bs: &BsArray,
    bs_book: &BsCodebook,
    phases: &FixedReflections,
    budget: LinkBudget,
) -> Result<SchemeResult, ProtocolError> {
    plan_rnd_coefficient(drop, bs, bs_book, phases)?.evaluate(&drop.channels, budget)
}

pub fn run_no_ris(
    drop: &Drop,
    bs: &BsArray,
    bs_book: &BsCodebook,
    budget: LinkBudget,
) -> Result<SchemeResult, ProtocolError> {
    plan_no_ris(drop, bs, bs_book)?.evaluate(&drop.channels.without_ris(), budget)
}

/// Plans every requested scheme on one drop. The random reflections are drawn
/// from `rng` only when the rnd-coefficient scheme is requested.
pub fn plan_all<R: Rng + ?Sized>(
    drop: &Drop,
    system: &SystemConfig,
    bs_book: &BsCodebook,
    schemes: &[Scheme],
    rng: &mut R,
) -> Result<Vec<Plan>, ProtocolError> {
    let ris_books = if schemes.contains(&Scheme::Proposed) { system.build_ris_codebooks(drop) } else { Vec::new() };
    let phases = schemes.contains(&Scheme::RndCoefficient).then(|| FixedReflections::random(&drop.ris, rng));
    schemes
        .iter()
        .map(|s| match s {
            Scheme::Proposed => plan_proposed(drop, &system.bs, bs_book, &ris_books),
            Scheme::UpperBound => plan_upper_bound(drop, &system.bs),
            Scheme::RndCoefficient => {
                plan_rnd_coefficient(drop, &system.bs, bs_book, phases.as_ref().expect("phases drawn"))
            }
            Scheme::NoRis => plan_no_ris(drop, &system.bs, bs_book),
        })
        .collect()
}

/// Evaluates a plan against the channels it was built for.
pub fn evaluate_plan(plan: &Plan, drop: &Drop, budget: LinkBudget) -> Result<SchemeResult, ProtocolError> {
    if plan.scheme == Scheme::NoRis {
        plan.evaluate(&drop.channels.without_ris(), budget)
    } else {
        plan.evaluate(&drop.channels, budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{received_snr, ris_phase_matrix, Reflections};
    use crate::channel::array_response;
    use crate::scene::{BoundaryWall, Obstacle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(direct: Vec<Vec<f64>>, ris: Vec<Vec<Vec<f64>>>) -> ScanReport {
        ScanReport { direct, ris }
    }

    fn quiet() -> SystemConfig {
        SystemConfig {
            bs_codebook: (8, 8),
            ris_codebook: (16, 16),
            channel: ChannelParams { nlos_variance: 0.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn assign_examples() {
        let a = assign(&report(vec![vec![3.0, 10.0]], vec![vec![vec![5.0]]]));
        assert_eq!(a.vector(), vec![0]);
        let a = assign(&report(vec![vec![1.0], vec![2.0]], vec![vec![vec![10.0]], vec![vec![9.0]]]));
        assert_eq!(a.vector(), vec![1, 0]);
        assert_eq!(a.order, vec![0, 1]);
        let a = assign(&report(vec![vec![4.0]], vec![vec![vec![4.0]]]));
        assert_eq!(a.vector(), vec![0]);
    }

    #[test]
    fn assign_without_ris() {
        let a = assign(&report(vec![vec![1.0], vec![5.0], vec![3.0]], vec![vec![]; 3]));
        assert_eq!(a.vector(), vec![0, 0, 0]);
        assert_eq!(a.order, vec![1, 2, 0]);
    }

    #[test]
    fn assign_intra_round_ties_go_to_lowest_user() {
        let a =
            assign(&report(vec![vec![1.0], vec![1.0]], vec![vec![vec![7.0], vec![7.0]], vec![vec![7.0], vec![7.0]]]));
        assert_eq!(a.links, vec![Link::Ris(0), Link::Ris(1)]);
        assert_eq!(a.order, vec![0, 1]);
    }

    #[test]
    fn configure_examples() {
        let cfg = quiet();
        let scene = Scene::default_room();
        let users = [Point3::new(8.0, 2.0, 1.0)];
        let drop = cfg
            .drop(&scene, &[Point2::new(0.0, 3.0), Point2::new(10.0, 7.0)], &users, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let book = cfg.build_bs_codebook();
        let ris_books = cfg.build_ris_codebooks(&drop);

        let mut direct = vec![vec![0.0; book.len()]];
        direct[0][7] = 1.0;
        let scan = report(direct, vec![vec![vec![0.0; 256], vec![0.0; 256]]]);
        let a = Assignment { links: vec![Link::Direct], order: vec![0] };
        let c = configure(&a, &scan, &cfg.bs, &drop.channels, &book, &ris_books.as_slice()).unwrap();
        assert_eq!(c.analog.beams[0].as_ref().unwrap().beam, book.beams[7]);
        assert!(c.analog.beams[1].is_none());
        assert!(c.reflections.iter().all(Option::is_none));

        let mut scan = scan;
        scan.ris[0][1][42] = 3.0;
        let a = Assignment { links: vec![Link::Ris(1)], order: vec![0] };
        let c = configure(&a, &scan, &cfg.bs, &drop.channels, &book, &ris_books.as_slice()).unwrap();
        let (t, p) = drop.channels.bs_ris[1].angles.departure;
        assert_eq!(c.analog.beams[0].as_ref().unwrap().beam, steering_beam(&cfg.bs.subarray, t, p));
        assert!(c.reflections[0].is_none());
        assert_eq!(c.reflections[1].as_ref().unwrap(), &ris_books[1].reflections[42]);
        assert_eq!(c.choices[0].index, Some(42));
    }

    #[test]
    fn configure_maps_subarrays_in_assignment_order() {
        let cfg = quiet();
        let users = [Point3::new(8.0, 2.0, 1.0), Point3::new(2.0, 8.0, 1.0)];
        let drop = cfg.drop(&Scene::default_room(), &[], &users, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let book = cfg.build_bs_codebook();
        let scan = report(vec![vec![1.0; 64], vec![2.0; 64]], vec![vec![]; 2]);
        let a = assign(&scan);
        assert_eq!(a.order, vec![1, 0]);
        let none: &[RisCodebook] = &[];
        let c = configure(&a, &scan, &cfg.bs, &drop.channels, &book, &none).unwrap();
        assert_eq!(c.choices[1].subarray, 0);
        assert_eq!(c.choices[0].subarray, 1);
    }

    #[test]
    fn configure_rejects_more_users_than_subarrays() {
        let cfg = quiet();
        let users = [Point3::new(8.0, 2.0, 1.0), Point3::new(2.0, 8.0, 1.0), Point3::new(2.0, 2.0, 1.0)];
        let drop = cfg.drop(&Scene::default_room(), &[], &users, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let book = cfg.build_bs_codebook();
        let none: &[RisCodebook] = &[];
        let scan = scan(&drop.channels, &cfg.bs, &book, &none, LinkBudget::from_snr_db(0.0));
        let a = assign(&scan);
        assert!(matches!(
            configure(&a, &scan, &cfg.bs, &drop.channels, &book, &none),
            Err(ProtocolError::TooManyUsers { users: 3, subarrays: 2 })
        ));
    }

    #[test]
    fn bs_scan_picks_best_beam_and_matches_received_snr() {
        let cfg = quiet();
        let users = [Point3::new(8.0, 9.0, 1.0)];
        let drop = cfg.drop(&Scene::default_room(), &[], &users, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let book = cfg.build_bs_codebook();
        let budget = LinkBudget::from_snr_db(10.0);
        let snr = bs_beam_scan(&drop.channels, &cfg.bs, &book, budget);
        assert_eq!((snr.len(), snr[0].len()), (1, 64));
        // Exhaustive oracle: LoS gain of each beam on the first sub-array.
        let (t, p) = drop.channels.direct[0].los_angles;
        let a = array_response(&cfg.bs.subarray, t, p);
        let gains: Vec<f64> = book.beams.iter().map(|b| a.dot(b).norm_sqr()).collect();
        let oracle = gains.iter().enumerate().fold(0, |b, (i, &g)| if g > gains[b] { i } else { b });
        assert_eq!(argmax(&snr[0]).unwrap().0, oracle);
        for i in [0, 13, oracle] {
            let x = first_subarray(&cfg.bs, &book.beams[i]);
            let direct = received_snr(&drop.channels, &x, &[], budget.power, budget.noise, 0);
            assert!((snr[0][i] - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn blocked_user_scans_zero() {
        let cfg = quiet();
        let scene = Scene::default_room().with_obstacles(vec![Obstacle::circle(5.0, 2.5, 1.0)]).unwrap();
        let users = [Point3::new(5.0, 0.5, 1.0)];
        // RIS at (5, 10) cannot see the user either.
        let drop = cfg.drop(&scene, &[Point2::new(5.0, 10.0)], &users, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let book = cfg.build_bs_codebook();
        let ris_books = cfg.build_ris_codebooks(&drop);
        let s = scan(&drop.channels, &cfg.bs, &book, &ris_books.as_slice(), LinkBudget::from_snr_db(20.0));
        assert!(s.direct[0].iter().all(|&v| v == 0.0));
        assert!(s.ris[0][0].iter().all(|&v| v == 0.0));
        assert_eq!((s.ris.len(), s.ris[0].len(), s.ris[0][0].len()), (1, 1, 256));
        let r = run_proposed(&drop, &cfg.bs, &book, &ris_books, LinkBudget::from_snr_db(20.0)).unwrap();
        assert_eq!(r.sum_rate, 0.0);
    }

    #[test]
    fn ris_scan_picks_reflection_toward_user() {
        let cfg = quiet();
        let scene = Scene::default_room().with_obstacles(vec![Obstacle::circle(5.0, 2.5, 1.0)]).unwrap();
        let users = [Point3::new(5.0, 0.5, 1.0)];
        let drop = cfg.drop(&scene, &[Point2::new(0.0, 2.0)], &users, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(drop.channels.ris_user[0][0].los && drop.channels.bs_ris[0].los);
        let ris_books = cfg.build_ris_codebooks(&drop);
        let s = ris_beam_scan(&drop.channels, &cfg.bs, &ris_books.as_slice(), LinkBudget::from_snr_db(0.0));
        // Oracle: reflection whose phase-sum with the exact-angle reflection is largest.
        let m = &drop.ris[0];
        let ideal = reflection_vector(&ris_phase_matrix(
            &m.geometry,
            drop.channels.bs_ris[0].angles.arrival,
            drop.channels.ris_user[0][0].los_angles,
        ));
        let score: Vec<f64> = ris_books[0].reflections.iter().map(|r| r.dotc(&ideal).norm()).collect();
        let oracle = score.iter().enumerate().fold(0, |b, (i, &g)| if g > score[b] { i } else { b });
        assert_eq!(argmax(&s[0][0]).unwrap().0, oracle);
        // Against received_snr with only this RIS active.
        let (t, p) = drop.channels.bs_ris[0].angles.departure;
        let x = first_subarray(&cfg.bs, &steering_beam(&cfg.bs.subarray, t, p));
        let refl: Vec<Option<DVector<Complex64>>> = vec![Some(ris_books[0].reflections[oracle].clone())];
        let v = received_snr(&drop.channels, &x, &refl as &Reflections, 1.0, 1.0, 0);
        assert!((v - s[0][0][oracle]).abs() < 1e-12 * v);
    }

    #[test]
    fn open_room_rate_is_positive_and_ris_free() {
        let cfg = SystemConfig { bs_codebook: (8, 8), ris_codebook: (16, 16), ..Default::default() };
        let users = [Point3::new(1.0, 1.0, 1.0), Point3::new(9.0, 8.0, 1.0)];
        let drop = cfg.drop(&Scene::default_room(), &[], &users, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let book = cfg.build_bs_codebook();
        let budget = LinkBudget::from_snr_db(20.0);
        let r = run_proposed(&drop, &cfg.bs, &book, &[], budget).unwrap();
        assert!(r.sum_rate > 0.0);
        let n = run_no_ris(&drop, &cfg.bs, &book, budget).unwrap();
        assert_eq!(r.sum_rate, n.sum_rate);
    }

    #[test]
    fn all_direct_los_matches_no_ris() {
        let cfg = quiet();
        let users = [Point3::new(2.0, 3.0, 1.0), Point3::new(8.0, 6.0, 1.0)];
        let drop = cfg
            .drop(
                &Scene::default_room(),
                &[Point2::new(0.0, 9.0), Point2::new(10.0, 1.0)],
                &users,
                &mut ChaCha8Rng::seed_from_u64(3),
            )
            .unwrap();
        let book = cfg.build_bs_codebook();
        let books = cfg.build_ris_codebooks(&drop);
        let budget = LinkBudget::from_snr_db(20.0);
        let r = run_proposed(&drop, &cfg.bs, &book, &books, budget).unwrap();
        if r.assignment.links.iter().all(|l| *l == Link::Direct) {
            let n = run_no_ris(&drop, &cfg.bs, &book, budget).unwrap();
            assert!((r.sum_rate - n.sum_rate).abs() < 1e-12);
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(&s.to_string()), Some(s));
        }
        assert_eq!(Scheme::parse("bogus"), None);
    }

    #[test]
    fn mounts_require_boundary_points() {
        let cfg = quiet();
        let err = cfg.mounts(&Scene::default_room(), &[Point2::new(3.0, 3.0)]).unwrap_err();
        assert!(matches!(err, ProtocolError::Scene(SceneError::NotOnBoundary { .. })));
        let m = cfg.mounts(&Scene::default_room(), &[Point2::new(10.0, 3.0)]).unwrap();
        assert_eq!(m[0].wall, BoundaryWall::East);
        assert_eq!(m[0].position.z, 1.5);
    }

    #[test]
    fn csv_record_layout() {
        let r = SchemeResult {
            scheme: Scheme::NoRis,
            assignment: Assignment { links: vec![Link::Direct], order: vec![0] },
            choices: vec![],
            effective: DMatrix::zeros(1, 2),
            sinr: vec![10.0],
            sum_rate: 11f64.log2(),
        };
        let rec = r.csv_record(7, "random", 0, 5, 20.0);
        assert_eq!(rec.len(), SchemeResult::CSV_HEADER.len());
        assert_eq!(rec[1], "no-ris");
        assert_eq!(rec[6], "10.000000");
    }

    #[test]
    fn exact_scan_dominates_codebook_scan() {
        let cfg = SystemConfig { bs_codebook: (8, 8), ris_codebook: (16, 16), ..Default::default() };
        let scene = Scene::default_room()
            .with_obstacles(vec![Obstacle::circle(5.0, 2.5, 1.0), Obstacle::circle(3.0, 7.0, 0.8)])
            .unwrap();
        let book = cfg.build_bs_codebook();
        let budget = LinkBudget::from_snr_db(10.0);
        let best = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let users =
                [Point3::new(5.0, 0.5, 1.0), Point3::new(rng.random_range(5.5..9.5), rng.random_range(0.5..9.5), 1.0)];
            let drop = cfg.drop(&scene, &[Point2::new(0.0, 2.0), Point2::new(10.0, 6.0)], &users, &mut rng).unwrap();
            let books = cfg.build_ris_codebooks(&drop);
            let coded = scan(&drop.channels, &cfg.bs, &book, &books.as_slice(), budget);
            let beams = ExactBeams::new(&cfg.bs, &drop.channels);
            let exact = scan(&drop.channels, &cfg.bs, &beams, &ExactReflections::new(&drop.channels, &cfg.bs), budget);
            for k in 0..2 {
                assert!(exact.direct[k][0] >= best(&coded.direct[k]) * (1.0 - 1e-12));
                for j in 0..2 {
                    assert!(exact.ris[k][j][0] >= best(&coded.ris[k][j]) * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn matched_beam_reaches_equal_gain_bound() {
        let h = DVector::from_vec(vec![
            Complex64::new(3.0, 4.0),
            Complex64::new(0.0, -2.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]);
        let f = matched_beam(h.rows(0, 4));
        assert!(f.iter().all(|v| (v.norm() - 0.5).abs() < 1e-15));
        // (5 + 2 + 0 + 1) / 2
        assert!((h.dot(&f) - Complex64::new(4.0, 0.0)).norm() < 1e-12);
    }
}
