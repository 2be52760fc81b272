//! Analog codebooks, RIS reflection, effective channels and ZF precoding.

use crate::channel::{array_response, ArrayGeometry, ChannelRealization};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

/// Condition number above which ZF reports a singular channel.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum BeamformingError {
    #[error("effective channel is rank deficient (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("{users} users exceed {subarrays} sub-arrays")]
    TooManyUsers { users: usize, subarrays: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unit-norm phase-only beam `conj(a(θ, φ))/√M`.
pub fn steering_beam(geom: &ArrayGeometry, theta: f64, phi: f64) -> DVector<Complex64> {
    let scale = 1.0 / (geom.len() as f64).sqrt();
    array_response(geom, theta, phi).map(|v| v.conj() * scale)
}

/// Directions on a uniform `d₁ × d₂` grid of in-plane direction cosines,
/// `ψ_i = −1 + (2i + 1)/d`, on the array's facing side. Index `i₁·d₂ + i₂`.
pub fn codebook_directions(geom: &ArrayGeometry, d1: usize, d2: usize) -> Vec<(f64, f64)> {
    let psi = |i: usize, d: usize| -1.0 + (2 * i + 1) as f64 / d as f64;
    (0..d1)
        .flat_map(|i1| (0..d2).map(move |i2| (i1, i2)))
        .map(|(i1, i2)| geom.direction_from_cosines(psi(i1, d1), psi(i2, d2)))
        .collect()
}

fn write_vectors<W: Write>(
    out: W,
    angles: &[(f64, f64)],
    vectors: &[DVector<Complex64>],
) -> Result<(), BeamformingError> {
    let io = |e: csv::Error| BeamformingError::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "theta", "phi", "element", "re", "im"]).map_err(io)?;
    for (i, (v, (t, p))) in vectors.iter().zip(angles).enumerate() {
        for (n, c) in v.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format!("{t:.12}"),
                format!("{p:.12}"),
                n.to_string(),
                format!("{:.12}", c.re),
                format!("{:.12}", c.im),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsCodebook {
    pub beams: Vec<DVector<Complex64>>,
    pub angles: Vec<(f64, f64)>,
    pub size: (usize, usize),
}

impl BsCodebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BeamformingError> {
        write_vectors(out, &self.angles, &self.beams)
    }
}

pub fn build_bs_codebook(geom: &ArrayGeometry, v1: usize, v2: usize) -> BsCodebook {
    let angles = codebook_directions(geom, v1, v2);
    let beams = angles.iter().map(|&(t, p)| steering_beam(geom, t, p)).collect();
    BsCodebook { beams, angles, size: (v1, v2) }
}

/// Phases that undo the arrival profile from `arrival` and re-radiate toward
/// `target`, wrapped into `[0, 2π)`. Both directions point away from the RIS.
pub fn ris_phase_matrix(geom: &ArrayGeometry, arrival: (f64, f64), target: (f64, f64)) -> Vec<f64> {
    let (ta, tb) = geom.phase_steps(target.0, target.1);
    let (ra, rb) = geom.phase_steps(arrival.0, arrival.1);
    let (n1, n2) = geom.counts;
    (0..n1)
        .flat_map(|i| (0..n2).map(move |k| (i, k)))
        .map(|(i, k)| (-(i as f64 * (ta + ra) + k as f64 * (tb + rb))).rem_euclid(2.0 * PI))
        .collect()
}

/// Diagonal of `Σ` for the given phases.
pub fn reflection_vector(phases: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(phases.len(), phases.iter().map(|&s| Complex64::cis(s)))
}

/// Reflection codebook of one RIS; it depends on that RIS's arrival angles.
#[derive(Debug, Clone, PartialEq)]
pub struct RisCodebook {
    pub reflections: Vec<DVector<Complex64>>,
    pub targets: Vec<(f64, f64)>,
    pub arrival: (f64, f64),
    pub size: (usize, usize),
}

impl RisCodebook {
    pub fn len(&self) -> usize {
        self.reflections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflections.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BeamformingError> {
        write_vectors(out, &self.targets, &self.reflections)
    }
}

pub fn build_ris_codebook(geom: &ArrayGeometry, arrival: (f64, f64), w1: usize, w2: usize) -> RisCodebook {
    let targets = codebook_directions(geom, w1, w2);
    let reflections = targets.iter().map(|&t| reflection_vector(&ris_phase_matrix(geom, arrival, t))).collect();
    RisCodebook { reflections, targets, arrival, size: (w1, w2) }
}

/// Where a sub-array's beam came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamSource {
    Codebook(usize),
    Steered {
        theta: f64,
        phi: f64,
    },
    /// Phase-matched to a known channel.
    Matched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubarrayBeam {
    pub beam: DVector<Complex64>,
    pub source: BeamSource,
}

/// Block-diagonal analog precoder; `None` marks an inactive sub-array.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogConfig {
    pub subarray_len: usize,
    pub beams: Vec<Option<SubarrayBeam>>,
}

impl AnalogConfig {
    pub fn inactive(subarrays: usize, subarray_len: usize) -> Self {
        AnalogConfig { subarray_len, beams: vec![None; subarrays] }
    }

    pub fn subarrays(&self) -> usize {
        self.beams.len()
    }

    /// Dense `L·M × L` matrix `F_A`.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let m = self.subarray_len;
        let mut f = DMatrix::zeros(m * self.beams.len(), self.beams.len());
        for (l, b) in self.beams.iter().enumerate() {
            if let Some(b) = b {
                f.view_mut((l * m, l), (m, 1)).copy_from(&b.beam);
            }
        }
        f
    }
}

/// Per-RIS reflection diagonals; `None` is the all-zero (off) state.
pub type Reflections = [Option<DVector<Complex64>>];

/// `h_(k,0) + Σ_j (h_(k,j) ⊙ σ_j)ᵀ G_j` as a length `L·M` vector.
pub fn cascaded_channel(real: &ChannelRealization, k: usize, reflections: &Reflections) -> DVector<Complex64> {
    let mut h = real.direct[k].vector.clone();
    for (j, r) in reflections.iter().enumerate() {
        if let Some(r) = r {
            let scaled = real.ris_user[k][j].vector.component_mul(r);
            h += real.bs_ris[j].matrix.tr_mul(&scaled);
        }
    }
    h
}

/// Effective channel `W` (K × L).
pub fn effective_channel(
    real: &ChannelRealization,
    analog: &AnalogConfig,
    reflections: &Reflections,
) -> DMatrix<Complex64> {
    let m = analog.subarray_len;
    let mut w = DMatrix::zeros(real.users(), analog.subarrays());
    for k in 0..real.users() {
        let h = cascaded_channel(real, k, reflections);
        for (l, b) in analog.beams.iter().enumerate() {
            if let Some(b) = b {
                w[(k, l)] = h.rows(l * m, m).dot(&b.beam);
            }
        }
    }
    w
}

/// `P·|h·x|²/N₀` for user `k`.
pub fn received_snr(
    real: &ChannelRealization,
    x: &DVector<Complex64>,
    reflections: &Reflections,
    power: f64,
    noise: f64,
    k: usize,
) -> f64 {
    power * cascaded_channel(real, k, reflections).dot(x).norm_sqr() / noise
}

/// `F_D` (L × K) with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder {
    pub matrix: DMatrix<Complex64>,
}

/// Column-normalized `Wᴴ(WWᴴ)⁻¹`.
pub fn zero_forcing(w: &DMatrix<Complex64>) -> Result<DigitalPrecoder, BeamformingError> {
    let (k, l) = w.shape();
    if k == 0 {
        return Ok(DigitalPrecoder { matrix: DMatrix::zeros(l, 0) });
    }
    if k > l {
        return Err(BeamformingError::Singular { condition: f64::INFINITY });
    }
    let sv = w.clone().singular_values();
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(BeamformingError::Singular { condition });
    }
    let wh = w.adjoint();
    let gram_inv = (w * &wh).try_inverse().ok_or(BeamformingError::Singular { condition })?;
    let mut f = wh * gram_inv;
    for mut col in f.column_iter_mut() {
        let n = col.norm();
        col /= Complex64::new(n, 0.0);
    }
    Ok(DigitalPrecoder { matrix: f })
}

/// Per-user SINR with power split equally: `P/K` per stream.
pub fn sinr(w: &DMatrix<Complex64>, f: &DigitalPrecoder, power: f64, noise: f64) -> Vec<f64> {
    let k = w.nrows();
    let g = w * &f.matrix;
    let p = power / k as f64;
    (0..k)
        .map(|u| {
            let signal = p * g[(u, u)].norm_sqr();
            let interference: f64 = (0..g.ncols()).filter(|&j| j != u).map(|j| p * g[(u, j)].norm_sqr()).sum();
            signal / (interference + noise)
        })
        .collect()
}

/// Sum rate in bits/s/Hz.
pub fn sum_rate(w: &DMatrix<Complex64>, f: &DigitalPrecoder, power: f64, noise: f64) -> f64 {
    sinr(w, f, power, noise).iter().map(|s| (1.0 + s).log2()).sum()
}
