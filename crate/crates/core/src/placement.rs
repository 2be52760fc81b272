//! RIS candidate positions, coverage maps and placement search.
//!
//! Coverage is evaluated on a raster of cell centers. For the searches each
//! candidate is reduced once to a bitset over the cells the BS cannot see,
//! after which the coverage of any subset is a popcount of a union.

use crate::scene::{BoundaryWall, Point2, Scene, SceneError, EPS_GEO};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use thiserror::Error;

/// Candidates closer than this are merged.
pub const EPS_DUP: f64 = 1e-6;

pub const DEFAULT_GRID: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("need {requested} RIS positions but only {available} candidates exist")]
    TooFewCandidates { requested: usize, available: usize },
    #[error("candidate spacing {0} m must be positive and no longer than the shortest wall")]
    BadSpacing(f64),
    #[error("grid resolution {0} m must be positive")]
    BadResolution(f64),
    #[error("BS lies inside obstacle {0}")]
    BsInsideObstacle(usize),
    #[error("RIS positions {0} and {1} coincide")]
    DuplicatePosition(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Point2,
    pub wall: BoundaryWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CandidateOrigin {
    Tangent,
    Uniform { spacing: f64 },
}

/// Candidate RIS positions, ordered clockwise from the (0, 0) corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub origin: CandidateOrigin,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.candidates.iter().map(|c| c.position).collect()
    }

    /// `wall,x,y` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PlacementError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["wall", "x", "y"]).map_err(csv_io)?;
        for c in &self.candidates {
            w.write_record([
                c.wall.index().to_string(),
                format!("{:.9}", c.position.x),
                format!("{:.9}", c.position.y),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn from_points(scene: &Scene, points: Vec<Point2>, origin: CandidateOrigin) -> Self {
        let bounds = &scene.bounds;
        let mut keyed: Vec<(f64, Candidate)> = points
            .into_iter()
            .filter_map(|p| {
                let wall = bounds.wall_of(p)?;
                let s = bounds.perimeter_position(p)?;
                Some((s, Candidate { position: p, wall }))
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut candidates: Vec<Candidate> = Vec::with_capacity(keyed.len());
        for (_, c) in keyed {
            if candidates.iter().all(|k| k.position.distance(c.position) >= EPS_DUP) {
                candidates.push(c);
            }
        }
        CandidateSet { candidates, origin }
    }
}

pub(crate) fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Tangent-based candidate set: for every obstacle, the two rays from the BS
/// that bound its shadow are extended to the walls, and each wall hit is kept
/// if the BS sees it.
pub fn build_candidate_set_tangent(scene: &Scene) -> Result<CandidateSet, PlacementError> {
    let bs = scene.bs_2d();
    let mut points = Vec::with_capacity(2 * scene.obstacles.len());
    for (i, obstacle) in scene.obstacles.iter().enumerate() {
        if obstacle.contains(bs) || obstacle.distance_to(bs) <= EPS_GEO {
            return Err(PlacementError::BsInsideObstacle(i));
        }
        for dir in shadow_edge_directions(bs, obstacle) {
            let hit = scene.bounds.ray_exit(bs, dir);
            if !scene.segment_blocked(bs, hit, None) {
                points.push(hit);
            }
        }
    }
    Ok(CandidateSet::from_points(scene, points, CandidateOrigin::Tangent))
}

/// Unit directions of the two rays from `from` that graze `obstacle`.
pub fn shadow_edge_directions(from: Point2, obstacle: &crate::scene::Obstacle) -> [Point2; 2] {
    use crate::scene::Obstacle;
    match *obstacle {
        Obstacle::Circle { center, radius } => {
            let d = center - from;
            let dist = d.norm();
            let base = d.y.atan2(d.x);
            let half = (radius / dist).clamp(-1.0, 1.0).asin();
            let unit = |a: f64| Point2::new(a.cos(), a.sin());
            [unit(base - half), unit(base + half)]
        }
        Obstacle::Wall { .. } => {
            let (a, b) = obstacle.wall_endpoints().expect("wall");
            let da = a - from;
            let db = b - from;
            [da * (1.0 / da.norm()), db * (1.0 / db.norm())]
        }
    }
}

/// Boundary quantized every `spacing` meters, starting at (0, 0).
pub fn build_candidate_set_uniform(scene: &Scene, spacing: f64) -> Result<CandidateSet, PlacementError> {
    let b = &scene.bounds;
    if spacing.is_nan() || spacing <= 0.0 || spacing > b.x.min(b.y) + EPS_GEO {
        return Err(PlacementError::BadSpacing(spacing));
    }
    let ratio = b.perimeter() / spacing;
    let count = if (ratio - ratio.round()).abs() < 1e-9 { ratio.round() } else { ratio.floor() } as usize;
    let points = (0..count).map(|k| b.point_at_perimeter(k as f64 * spacing).0).collect();
    Ok(CandidateSet::from_points(scene, points, CandidateOrigin::Uniform { spacing }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Obstacle,
    BsCovered,
    RisCovered(usize),
    Uncovered,
}

impl CellState {
    /// Numeric code used in CSV grids: -1 obstacle, 0 uncovered, 1 BS, 2 + j RIS j.
    pub fn code(self) -> i64 {
        match self {
            CellState::Obstacle => -1,
            CellState::Uncovered => 0,
            CellState::BsCovered => 1,
            CellState::RisCovered(j) => 2 + j as i64,
        }
    }
}

/// Raster of cell centers `((i + 0.5) r, (j + 0.5) r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(scene: &Scene, resolution: f64) -> Result<Self, PlacementError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(PlacementError::BadResolution(resolution));
        }
        let cells = |len: f64| ((len / resolution) - 1e-9).ceil().max(1.0) as usize;
        Ok(Grid { resolution, nx: cells(scene.bounds.x), ny: cells(scene.bounds.y) })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, idx: usize) -> Point2 {
        let (ix, iy) = (idx % self.nx, idx / self.nx);
        Point2::new((ix as f64 + 0.5) * self.resolution, (iy as f64 + 0.5) * self.resolution)
    }

    pub fn cell_area(&self) -> f64 {
        self.resolution * self.resolution
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub grid: Grid,
    /// Row-major, `y` index outer.
    pub cells: Vec<CellState>,
}

impl CoverageMap {
    pub fn count(&self, pred: impl Fn(CellState) -> bool) -> usize {
        self.cells.iter().filter(|&&c| pred(c)).count()
    }

    pub fn free_area(&self) -> f64 {
        self.count(|c| c != CellState::Obstacle) as f64 * self.grid.cell_area()
    }

    pub fn bs_area(&self) -> f64 {
        self.count(|c| c == CellState::BsCovered) as f64 * self.grid.cell_area()
    }

    pub fn ris_area(&self, j: usize) -> f64 {
        self.count(|c| c == CellState::RisCovered(j)) as f64 * self.grid.cell_area()
    }

    pub fn covered_area(&self) -> f64 {
        self.count(|c| matches!(c, CellState::BsCovered | CellState::RisCovered(_))) as f64 * self.grid.cell_area()
    }

    pub fn normalized(&self) -> f64 {
        let free = self.count(|c| c != CellState::Obstacle);
        if free == 0 {
            return 0.0;
        }
        self.count(|c| matches!(c, CellState::BsCovered | CellState::RisCovered(_))) as f64 / free as f64
    }

    /// One CSV line per grid row (increasing y) of state codes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PlacementError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.cells.chunks(self.grid.nx) {
            w.write_record(row.iter().map(|c| c.code().to_string())).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bitset over the shadow cells of a [`CoverageEvaluator`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask(Vec<u64>);

impl CellMask {
    fn zeros(bits: usize) -> Self {
        CellMask(vec![0; bits.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn union_with(&mut self, other: &CellMask) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= *b;
        }
    }

    /// `|other \ self|`
    fn gain(&self, other: &CellMask) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (b & !a).count_ones() as usize).sum()
    }
}

/// Precomputed BS visibility for one scene and grid.
pub struct CoverageEvaluator<'a> {
    scene: &'a Scene,
    grid: Grid,
    states: Vec<CellState>,
    free_cells: usize,
    bs_cells: usize,
    /// Grid indices of free cells without direct BS LoS.
    shadow: Vec<usize>,
}

impl<'a> CoverageEvaluator<'a> {
    pub fn new(scene: &'a Scene, resolution: f64) -> Result<Self, PlacementError> {
        let grid = Grid::new(scene, resolution)?;
        let bs = scene.bs_2d();
        let states: Vec<CellState> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let p = grid.center(i);
                if scene.is_occupied(p) {
                    CellState::Obstacle
                } else if scene.segment_blocked(bs, p, None) {
                    CellState::Uncovered
                } else {
                    CellState::BsCovered
                }
            })
            .collect();
        let free_cells = states.iter().filter(|&&s| s != CellState::Obstacle).count();
        let bs_cells = states.iter().filter(|&&s| s == CellState::BsCovered).count();
        let shadow = (0..grid.len()).filter(|&i| states[i] == CellState::Uncovered).collect();
        Ok(CoverageEvaluator { scene, grid, states, free_cells, bs_cells, shadow })
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn free_cells(&self) -> usize {
        self.free_cells
    }

    pub fn bs_cells(&self) -> usize {
        self.bs_cells
    }

    pub fn shadow_cells(&self) -> usize {
        self.shadow.len()
    }

    /// Shadow cells an RIS at `q` brings into coverage.
    pub fn ris_mask(&self, q: Point2) -> Result<CellMask, PlacementError> {
        let scene = self.scene;
        let bs = scene.bs_2d();
        let lit: Vec<Point2> =
            scene.footprint_sample_points(q)?.into_iter().filter(|&r| !scene.segment_blocked(bs, r, None)).collect();
        let mut mask = CellMask::zeros(self.shadow.len());
        if lit.is_empty() {
            return Ok(mask);
        }
        for (bit, &cell) in self.shadow.iter().enumerate() {
            let p = self.grid.center(cell);
            if lit.iter().any(|&r| !scene.segment_blocked(r, p, None)) {
                mask.set(bit);
            }
        }
        Ok(mask)
    }

    pub fn candidate_masks(&self, candidates: &CandidateSet) -> Result<Vec<CellMask>, PlacementError> {
        candidates.candidates.par_iter().map(|c| self.ris_mask(c.position)).collect()
    }

    fn normalized(&self, covered_cells: usize) -> f64 {
        if self.free_cells == 0 {
            0.0
        } else {
            covered_cells as f64 / self.free_cells as f64
        }
    }

    fn result(
        &self,
        positions: Vec<Point2>,
        indices: Option<Vec<usize>>,
        shadow_covered: usize,
        method: SearchMethod,
    ) -> PlacementResult {
        let covered = self.bs_cells + shadow_covered;
        PlacementResult {
            positions,
            candidate_indices: indices,
            covered_cells: covered,
            coverage_area: covered as f64 * self.grid.cell_area(),
            normalized_coverage: self.normalized(covered),
            method,
        }
    }

    /// Coverage of an arbitrary set of RIS positions.
    pub fn evaluate(&self, positions: &[Point2]) -> Result<PlacementResult, PlacementError> {
        check_distinct(positions)?;
        let mut union = CellMask::zeros(self.shadow.len());
        for &q in positions {
            union.union_with(&self.ris_mask(q)?);
        }
        Ok(self.result(positions.to_vec(), None, union.count(), SearchMethod::Given))
    }

    pub fn coverage_map(&self, positions: &[Point2]) -> Result<CoverageMap, PlacementError> {
        check_distinct(positions)?;
        let masks: Vec<CellMask> = positions.iter().map(|&q| self.ris_mask(q)).collect::<Result<_, _>>()?;
        let mut cells = self.states.clone();
        for (bit, &cell) in self.shadow.iter().enumerate() {
            if let Some(j) = masks.iter().position(|m| m.get(bit)) {
                cells[cell] = CellState::RisCovered(j);
            }
        }
        Ok(CoverageMap { grid: self.grid, cells })
    }

    /// Exact maximum-coverage subset of size `count`. Ties go to the
    /// lexicographically first subset of candidate indices.
    pub fn full_search(&self, candidates: &CandidateSet, count: usize) -> Result<PlacementResult, PlacementError> {
        let masks = self.candidate_masks(candidates)?;
        self.full_search_with(candidates, &masks, count)
    }

    /// [`Self::full_search`] with masks from [`Self::candidate_masks`].
    pub fn full_search_with(
        &self,
        candidates: &CandidateSet,
        masks: &[CellMask],
        count: usize,
    ) -> Result<PlacementResult, PlacementError> {
        check_count(candidates, count)?;
        let (best, covered) = branch_and_bound(masks, self.shadow.len(), count);
        Ok(self.result(
            best.iter().map(|&i| candidates.candidates[i].position).collect(),
            Some(best),
            covered,
            SearchMethod::Full,
        ))
    }

    /// `count` rounds of largest marginal gain, ties to the lowest index.
    pub fn greedy_search(&self, candidates: &CandidateSet, count: usize) -> Result<PlacementResult, PlacementError> {
        let masks = self.candidate_masks(candidates)?;
        self.greedy_search_with(candidates, &masks, count)
    }

    pub fn greedy_search_with(
        &self,
        candidates: &CandidateSet,
        masks: &[CellMask],
        count: usize,
    ) -> Result<PlacementResult, PlacementError> {
        check_count(candidates, count)?;
        let (chosen, covered) = greedy(masks, self.shadow.len(), count);
        Ok(self.result(
            chosen.iter().map(|&i| candidates.candidates[i].position).collect(),
            Some(chosen),
            covered,
            SearchMethod::Greedy,
        ))
    }

    /// `count` distinct positions drawn uniformly over the perimeter.
    pub fn random_placement<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<PlacementResult, PlacementError> {
        let positions = random_boundary_points(self.scene, count, rng);
        let mut res = self.evaluate(&positions)?;
        res.method = SearchMethod::Random;
        Ok(res)
    }
}

pub fn random_boundary_points<R: Rng + ?Sized>(scene: &Scene, count: usize, rng: &mut R) -> Vec<Point2> {
    let perimeter = scene.bounds.perimeter();
    let mut positions: Vec<Point2> = Vec::with_capacity(count);
    while positions.len() < count {
        let (p, _) = scene.bounds.point_at_perimeter(rng.random_range(0.0..perimeter));
        if positions.iter().all(|q| q.distance(p) >= EPS_DUP) {
            positions.push(p);
        }
    }
    positions
}

fn check_count(candidates: &CandidateSet, count: usize) -> Result<(), PlacementError> {
    if candidates.len() < count {
        return Err(PlacementError::TooFewCandidates { requested: count, available: candidates.len() });
    }
    Ok(())
}

fn check_distinct(positions: &[Point2]) -> Result<(), PlacementError> {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if positions[i].distance(positions[j]) < EPS_DUP {
                return Err(PlacementError::DuplicatePosition(i, j));
            }
        }
    }
    Ok(())
}

/// Exact maximum coverage with the lexicographically first optimal subset.
///
/// The optimal value is found first on the candidates that no other
/// candidate dominates, starting from the greedy value. A second pass over
/// all candidates then stops at the first subset, in lexicographic order,
/// that reaches it.
fn branch_and_bound(masks: &[CellMask], bits: usize, count: usize) -> (Vec<usize>, usize) {
    if count == 0 {
        return (Vec::new(), 0);
    }
    let (_, greedy_value) = greedy(masks, bits, count);
    let kept = undominated(masks);
    let target = if count >= kept.len() {
        let mut union = CellMask::zeros(bits);
        for &i in &kept {
            union.union_with(&masks[i]);
        }
        union.count()
    } else {
        // Only the value matters here, so visit large masks first.
        let mut kept = kept;
        kept.sort_by_key(|&i| std::cmp::Reverse(masks[i].count()));
        let reduced: Vec<CellMask> = kept.iter().map(|&i| masks[i].clone()).collect();
        let mut search = Search::new(&reduced, bits, count, greedy_value, false);
        search.run();
        search.best.map_or(greedy_value, |b| b.1)
    };
    let mut search = Search::new(masks, bits, count, target, true);
    // A member of the first optimal subset cannot be swapped for an unused,
    // lower-indexed candidate that covers everything it covers.
    search.requires = (0..masks.len()).map(|c| (0..c).filter(|&t| is_subset(&masks[c], &masks[t])).collect()).collect();
    search.run();
    search.best.expect("the optimal value is reachable")
}

/// Indices of masks not contained in another mask; among equal masks the
/// lowest index is kept.
fn undominated(masks: &[CellMask]) -> Vec<usize> {
    (0..masks.len())
        .filter(|&i| {
            !(0..masks.len()).any(|j| j != i && is_subset(&masks[i], &masks[j]) && (j < i || masks[i] != masks[j]))
        })
        .collect()
}

fn is_subset(a: &CellMask, b: &CellMask) -> bool {
    a.0.iter().zip(&b.0).all(|(x, y)| x & !y == 0)
}

/// Depth-first enumeration in lexicographic order. A subset is accepted when
/// it reaches `floor` (the first one only) or beats the incumbent. With
/// `stop_at_floor` the search ends at the first accepted subset. Candidate
/// `c` is only picked once every index in `requires[c]` has been picked.
struct Search<'m> {
    masks: &'m [CellMask],
    bits: usize,
    count: usize,
    floor: usize,
    stop_at_floor: bool,
    best: Option<(Vec<usize>, usize)>,
    chosen: Vec<usize>,
    done: bool,
    requires: Vec<Vec<usize>>,
    /// `suffix[c]` = union of masks `c..`.
    suffix: Vec<CellMask>,
}

impl<'m> Search<'m> {
    fn new(masks: &'m [CellMask], bits: usize, count: usize, floor: usize, stop_at_floor: bool) -> Self {
        let mut suffix = vec![CellMask::zeros(bits); masks.len() + 1];
        for c in (0..masks.len()).rev() {
            let mut u = suffix[c + 1].clone();
            u.union_with(&masks[c]);
            suffix[c] = u;
        }
        Search {
            masks,
            bits,
            count,
            floor,
            stop_at_floor,
            best: None,
            chosen: Vec::with_capacity(count),
            done: false,
            requires: Vec::new(),
            suffix,
        }
    }

    fn run(&mut self) {
        self.descend(0, &CellMask::zeros(self.bits), 0, self.count);
    }

    fn eligible(&self, c: usize) -> bool {
        self.requires.get(c).is_none_or(|r| r.iter().all(|t| self.chosen.contains(t)))
    }

    fn accepts(&self, value: usize) -> bool {
        match &self.best {
            None => value >= self.floor,
            Some((_, b)) => value > *b,
        }
    }

    fn accept(&mut self, value: usize) {
        self.best = Some((self.chosen.clone(), value));
        self.done = self.stop_at_floor || value == self.bits;
    }

    fn descend(&mut self, start: usize, union: &CellMask, covered: usize, remaining: usize) {
        let n = self.masks.len();
        if remaining == 0 {
            if self.accepts(covered) {
                self.accept(covered);
            }
            return;
        }
        if !self.accepts(covered + union.gain(&self.suffix[start])) {
            return;
        }
        let gains: Vec<usize> = (start..n).map(|c| union.gain(&self.masks[c])).collect();
        if remaining == 1 {
            for (off, &g) in gains.iter().enumerate() {
                if self.accepts(covered + g) && self.eligible(start + off) {
                    self.chosen.push(start + off);
                    self.accept(covered + g);
                    self.chosen.pop();
                    if self.done {
                        return;
                    }
                }
            }
            return;
        }
        // after[off] = sum of the (remaining - 1) largest gains strictly after off.
        let k = remaining - 1;
        let mut after = vec![0usize; gains.len()];
        let mut top: Vec<usize> = Vec::with_capacity(k + 1);
        for off in (0..gains.len()).rev() {
            after[off] = top.iter().sum();
            let pos = top.partition_point(|&x| x >= gains[off]);
            top.insert(pos, gains[off]);
            top.truncate(k);
        }
        let last = n - remaining;
        for c in start..=last {
            let off = c - start;
            if !self.accepts(covered + gains[off] + after[off]) || !self.eligible(c) {
                continue;
            }
            let mut next = union.clone();
            next.union_with(&self.masks[c]);
            self.chosen.push(c);
            self.descend(c + 1, &next, covered + gains[off], remaining - 1);
            self.chosen.pop();
            if self.done {
                return;
            }
        }
    }
}

fn greedy(masks: &[CellMask], bits: usize, count: usize) -> (Vec<usize>, usize) {
    let mut union = CellMask::zeros(bits);
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut covered = 0;
    for _ in 0..count {
        let mut pick: Option<(usize, usize)> = None;
        for (c, m) in masks.iter().enumerate() {
            if chosen.contains(&c) {
                continue;
            }
            let g = union.gain(m);
            if pick.is_none_or(|(_, best)| g > best) {
                pick = Some((c, g));
            }
        }
        let (c, g) = pick.expect("count <= candidates");
        union.union_with(&masks[c]);
        covered += g;
        chosen.push(c);
    }
    (chosen, covered)
}

/// Convenience wrapper building an evaluator at `resolution`.
pub fn coverage_map(scene: &Scene, ris_positions: &[Point2], resolution: f64) -> Result<CoverageMap, PlacementError> {
    CoverageEvaluator::new(scene, resolution)?.coverage_map(ris_positions)
}

pub fn full_search(
    scene: &Scene,
    candidates: &CandidateSet,
    count: usize,
    resolution: f64,
) -> Result<PlacementResult, PlacementError> {
    CoverageEvaluator::new(scene, resolution)?.full_search(candidates, count)
}

pub fn greedy_search(
    scene: &Scene,
    candidates: &CandidateSet,
    count: usize,
    resolution: f64,
) -> Result<PlacementResult, PlacementError> {
    CoverageEvaluator::new(scene, resolution)?.greedy_search(candidates, count)
}

pub fn random_placement<R: Rng + ?Sized>(
    scene: &Scene,
    count: usize,
    rng: &mut R,
    resolution: f64,
) -> Result<PlacementResult, PlacementError> {
    CoverageEvaluator::new(scene, resolution)?.random_placement(count, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Full,
    Greedy,
    Random,
    Given,
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMethod::Full => "full",
            SearchMethod::Greedy => "greedy",
            SearchMethod::Random => "random",
            SearchMethod::Given => "given",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub positions: Vec<Point2>,
    /// Indices into the candidate set, when the positions came from one.
    pub candidate_indices: Option<Vec<usize>>,
    pub covered_cells: usize,
    /// m^2
    pub coverage_area: f64,
    pub normalized_coverage: f64,
    pub method: SearchMethod,
}

/// Pluggable placement strategy.
pub trait PlacementSelector {
    fn select(
        &self,
        evaluator: &CoverageEvaluator<'_>,
        candidates: &CandidateSet,
        count: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<PlacementResult, PlacementError>;
}

pub struct FullSearch;
pub struct GreedySearch;
pub struct RandomSelector;

impl PlacementSelector for FullSearch {
    fn select(
        &self,
        evaluator: &CoverageEvaluator<'_>,
        candidates: &CandidateSet,
        count: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<PlacementResult, PlacementError> {
        evaluator.full_search(candidates, count)
    }
}

impl PlacementSelector for GreedySearch {
    fn select(
        &self,
        evaluator: &CoverageEvaluator<'_>,
        candidates: &CandidateSet,
        count: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<PlacementResult, PlacementError> {
        evaluator.greedy_search(candidates, count)
    }
}

/// Ignores the candidate set and draws from the whole perimeter.
impl PlacementSelector for RandomSelector {
    fn select(
        &self,
        evaluator: &CoverageEvaluator<'_>,
        _candidates: &CandidateSet,
        count: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<PlacementResult, PlacementError> {
        evaluator.random_placement(count, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Obstacle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle_scene() -> Scene {
        Scene::default_room().with_obstacles(vec![Obstacle::circle(5.0, 2.5, 1.0)]).unwrap()
    }

    #[test]
    fn tangent_set_empty_without_obstacles() {
        let q = build_candidate_set_tangent(&Scene::default_room()).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn tangent_set_single_circle() {
        let q = build_candidate_set_tangent(&circle_scene()).unwrap();
        assert_eq!(q.len(), 2);
        let tan = 1.0 / 5.25f64.sqrt();
        // Clockwise order visits the south wall from east to west.
        let expect = [Point2::new(5.0 + 5.0 * tan, 0.0), Point2::new(5.0 - 5.0 * tan, 0.0)];
        for (c, e) in q.candidates.iter().zip(expect) {
            assert!(c.position.distance(e) < 1e-9, "{:?} vs {:?}", c.position, e);
            assert_eq!(c.wall, BoundaryWall::South);
        }
        // Independent check: each ray's distance to the center equals the radius.
        let bs = Point2::new(5.0, 5.0);
        let center = Point2::new(5.0, 2.5);
        for c in &q.candidates {
            let d = c.position - bs;
            let dist = d.cross(center - bs).abs() / d.norm();
            assert!((dist - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shadowed_obstacle_contributes_nothing() {
        // Small circle hidden entirely behind a larger one.
        let scene = Scene::default_room()
            .with_obstacles(vec![Obstacle::circle(5.0, 3.0, 1.2), Obstacle::circle(5.0, 1.0, 0.3)])
            .unwrap();
        let q = build_candidate_set_tangent(&scene).unwrap();
        assert_eq!(q.len(), 2);
        let only_big = build_candidate_set_tangent(
            &Scene::default_room().with_obstacles(vec![Obstacle::circle(5.0, 3.0, 1.2)]).unwrap(),
        )
        .unwrap();
        assert_eq!(q, only_big);
    }

    #[test]
    fn bs_inside_obstacle_rejected() {
        let scene = Scene::default_room().with_obstacles(vec![Obstacle::circle(5.0, 5.2, 1.0)]).unwrap();
        assert!(matches!(build_candidate_set_tangent(&scene), Err(PlacementError::BsInsideObstacle(0))));
    }

    #[test]
    fn wall_rays_pass_through_endpoints() {
        let scene = Scene::default_room()
            .with_obstacles(vec![Obstacle::wall_between(Point2::new(4.0, 2.0), Point2::new(6.0, 2.0))])
            .unwrap();
        let q = build_candidate_set_tangent(&scene).unwrap();
        let pos = q.positions();
        assert_eq!(pos.len(), 2);
        // Rays from (5,5) through (6,2) and (4,2) reach y = 0 at x = 6 + 2/3 and 4 - 2/3.
        assert!(pos[0].distance(Point2::new(6.0 + 2.0 / 3.0, 0.0)) < 1e-9);
        assert!(pos[1].distance(Point2::new(4.0 - 2.0 / 3.0, 0.0)) < 1e-9);
    }

    #[test]
    fn uniform_counts() {
        let s = Scene::default_room();
        assert_eq!(build_candidate_set_uniform(&s, 10.0).unwrap().len(), 4);
        assert_eq!(build_candidate_set_uniform(&s, 1.0).unwrap().len(), 40);
        assert_eq!(build_candidate_set_uniform(&s, 0.1).unwrap().len(), 400);
        assert!(build_candidate_set_uniform(&s, 10.5).is_err());
        assert!(build_candidate_set_uniform(&s, 0.0).is_err());
        let four = build_candidate_set_uniform(&s, 10.0).unwrap();
        let walls: Vec<_> = four.candidates.iter().map(|c| c.wall).collect();
        assert_eq!(walls, vec![BoundaryWall::West, BoundaryWall::North, BoundaryWall::East, BoundaryWall::South]);
    }

    #[test]
    fn empty_room_full_coverage() {
        let m = coverage_map(&Scene::default_room(), &[], DEFAULT_GRID).unwrap();
        assert_eq!(m.normalized(), 1.0);
        assert!((m.covered_area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn ris_adds_coverage_behind_circle() {
        let scene = circle_scene();
        let q = build_candidate_set_tangent(&scene).unwrap();
        let bare = coverage_map(&scene, &[], 0.05).unwrap().normalized();
        let with = coverage_map(&scene, &[q.candidates[1].position], 0.05).unwrap().normalized();
        assert!(bare < 1.0);
        assert!(with > bare);
    }

    #[test]
    fn map_states_are_consistent() {
        let scene = circle_scene();
        let q = Point2::new(0.0, 5.0);
        let m = coverage_map(&scene, &[q], 0.25).unwrap();
        for (i, state) in m.cells.iter().enumerate() {
            let p = m.grid.center(i);
            match state {
                CellState::Obstacle => assert!(scene.is_occupied(p)),
                CellState::BsCovered => assert!(scene.has_direct_los(p).unwrap()),
                CellState::RisCovered(0) => {
                    assert!(!scene.has_direct_los(p).unwrap());
                    assert!(scene.has_ris_los(q, p).unwrap());
                }
                CellState::Uncovered => {
                    assert!(!scene.has_direct_los(p).unwrap());
                    assert!(!scene.has_ris_los(q, p).unwrap());
                }
                other => panic!("unexpected state {other:?}"),
            }
        }
    }

    #[test]
    fn full_search_edge_cases() {
        let scene = circle_scene();
        let ev = CoverageEvaluator::new(&scene, 0.1).unwrap();
        let q = build_candidate_set_tangent(&scene).unwrap();
        let zero = ev.full_search(&q, 0).unwrap();
        assert!(zero.positions.is_empty());
        assert_eq!(zero.covered_cells, ev.bs_cells());
        assert!(matches!(ev.full_search(&q, 3), Err(PlacementError::TooFewCandidates { .. })));
    }

    #[test]
    fn full_search_prefers_lit_candidate() {
        let scene = circle_scene();
        let ev = CoverageEvaluator::new(&scene, 0.1).unwrap();
        // (5, 0) sits in the circle's shadow; (0, 2) is visible from the BS.
        let cands = CandidateSet {
            candidates: vec![
                Candidate { position: Point2::new(0.0, 2.0), wall: BoundaryWall::West },
                Candidate { position: Point2::new(5.0, 0.0), wall: BoundaryWall::South },
            ],
            origin: CandidateOrigin::Tangent,
        };
        assert_eq!(ev.ris_mask(Point2::new(5.0, 0.0)).unwrap().count(), 0);
        let r = ev.full_search(&cands, 1).unwrap();
        assert_eq!(r.candidate_indices, Some(vec![0]));
    }

    fn toy_masks(bits: &[&[usize]], width: usize) -> Vec<CellMask> {
        bits.iter()
            .map(|set| {
                let mut m = CellMask::zeros(width);
                for &b in *set {
                    m.set(b);
                }
                m
            })
            .collect()
    }

    #[test]
    fn greedy_trajectory_hand_traced() {
        // A = {0..5}, B = {0..3} ∪ {6,7}, C = {4,5,6,7,8}.
        // Round 1: gains 6, 6, 5 -> A (lowest index among ties).
        // Round 2: B adds {6,7} = 2, C adds {6,7,8} = 3 -> C. Total 9.
        // The optimum pair is also {A, C} with 9 cells.
        let masks = toy_masks(&[&[0, 1, 2, 3, 4, 5], &[0, 1, 2, 3, 6, 7], &[4, 5, 6, 7, 8]], 9);
        assert_eq!(greedy(&masks, 9, 2), (vec![0, 2], 9));
        assert_eq!(branch_and_bound(&masks, 9, 2), (vec![0, 2], 9));
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // Greedy takes the big middle set first, the optimum is the two halves.
        let masks = toy_masks(&[&[0, 1, 2, 3], &[4, 5, 6, 7], &[1, 2, 3, 4, 5, 6]], 8);
        assert_eq!(greedy(&masks, 8, 2).1, 7);
        assert_eq!(branch_and_bound(&masks, 8, 2), (vec![0, 1], 8));
    }

    #[test]
    fn branch_and_bound_breaks_ties_lexicographically() {
        let masks = toy_masks(&[&[0], &[1], &[0], &[1]], 2);
        assert_eq!(branch_and_bound(&masks, 2, 2), (vec![0, 1], 2));
        let masks = toy_masks(&[&[], &[], &[]], 1);
        assert_eq!(branch_and_bound(&masks, 1, 2), (vec![0, 1], 0));
    }

    fn brute_force(masks: &[CellMask], bits: usize, count: usize) -> (Vec<usize>, usize) {
        fn rec(
            masks: &[CellMask],
            bits: usize,
            start: usize,
            left: usize,
            cur: &mut Vec<usize>,
            best: &mut Option<(Vec<usize>, usize)>,
        ) {
            if left == 0 {
                let mut u = CellMask::zeros(bits);
                for &i in cur.iter() {
                    u.union_with(&masks[i]);
                }
                let v = u.count();
                if best.as_ref().is_none_or(|b| v > b.1) {
                    *best = Some((cur.clone(), v));
                }
                return;
            }
            for c in start..masks.len() {
                cur.push(c);
                rec(masks, bits, c + 1, left - 1, cur, best);
                cur.pop();
            }
        }
        let mut best = None;
        rec(masks, bits, 0, count, &mut Vec::new(), &mut best);
        best.unwrap()
    }

    proptest::proptest! {
        #[test]
        fn branch_and_bound_matches_enumeration(
            raw in proptest::collection::vec(proptest::collection::vec(0usize..12, 0..6), 1..10),
            count in 1usize..5,
            dup in 0usize..10,
        ) {
            let mut sets: Vec<Vec<usize>> = raw;
            // Force duplicate and nested masks.
            let d = dup % sets.len();
            sets.push(sets[d].clone());
            let mut sub = sets[d].clone();
            sub.truncate(sub.len() / 2);
            sets.insert(0, sub);
            let count = count.min(sets.len());
            let slices: Vec<&[usize]> = sets.iter().map(|s| s.as_slice()).collect();
            let masks = toy_masks(&slices, 12);
            proptest::prop_assert_eq!(branch_and_bound(&masks, 12, count), brute_force(&masks, 12, count));
        }
    }

    #[test]
    fn random_placement_is_reproducible() {
        let scene = circle_scene();
        let ev = CoverageEvaluator::new(&scene, 0.2).unwrap();
        let a = ev.random_placement(3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ev.random_placement(3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for p in &a.positions {
            assert!(scene.bounds.wall_of(*p).is_some());
        }
        let none = ev.random_placement(0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(none.covered_cells, ev.bs_cells());
    }

    #[test]
    fn duplicate_positions_rejected() {
        let scene = circle_scene();
        let ev = CoverageEvaluator::new(&scene, 0.5).unwrap();
        let p = Point2::new(0.0, 3.0);
        assert!(matches!(ev.evaluate(&[p, p]), Err(PlacementError::DuplicatePosition(0, 1))));
    }

    #[test]
    fn candidate_csv() {
        let q = build_candidate_set_tangent(&circle_scene()).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "wall,x,y");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("3,7.18"));
    }
}
