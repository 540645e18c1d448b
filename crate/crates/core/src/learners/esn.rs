//! Echo state network for `LocationPreview`.
//!
//! A fixed random reservoir (sparse recurrent weights rescaled to a target
//! spectral radius, dense input weights) is driven by per-step trajectory
//! features with the leaky update
//!
//! ```text
//! state' = (1 − a)·state + a·tanh(W_in·[1; u] + W·state)
//! ```
//!
//! Only the linear readout `W_out` is trained, by ridge regression on the
//! extended states `[state; u; 1]` collected at every step. Its first K rows
//! score the destination stations, the last row predicts the remaining
//! seconds to arrival.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, normalize_raw_scores, LearnError};
use crate::domain::{GpsTrajectory, StationId, StationMap, Timestamp, TrajectoryPoint};
use crate::linalg::{self, LinalgError};
use crate::rng::{self, stream};

/// Relative normal-equations residual above which a readout solve is
/// rejected as numerically singular.
const READOUT_RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub n_reservoir: usize,
    pub spectral_radius: f64,
    pub connectivity: f64,
    pub input_scaling: f64,
    pub leak_rate: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
    /// Leading steps of each trajectory left out of readout training.
    pub washout: usize,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_reservoir: 100,
            spectral_radius: 0.9,
            connectivity: 0.1,
            input_scaling: 1.0,
            leak_rate: 0.3,
            ridge_lambda: 1e-6,
            seed: 0,
            washout: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_owned()));
        if self.n_reservoir == 0 {
            return bad("n_reservoir must be positive");
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return bad("spectral_radius must lie in (0, 1)");
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return bad("connectivity must lie in (0, 1]");
        }
        if !(self.input_scaling > 0.0 && self.input_scaling.is_finite()) {
            return bad("input_scaling must be positive");
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return bad("leak_rate must lie in (0, 1]");
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad("ridge_lambda must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SparseRepr {
    n: usize,
    /// `(row, col, value)` triples in row-major order.
    entries: Vec<(usize, usize, f64)>,
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseRepr", into = "SparseRepr")]
pub struct SparseMatrix {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TryFrom<SparseRepr> for SparseMatrix {
    type Error = String;

    fn try_from(r: SparseRepr) -> Result<Self, String> {
        let mut entries = r.entries;
        if entries.iter().any(|&(i, j, _)| i >= r.n || j >= r.n) {
            return Err("sparse entry out of bounds".into());
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Ok(Self::from_triples(r.n, &entries))
    }
}

impl From<SparseMatrix> for SparseRepr {
    fn from(m: SparseMatrix) -> Self {
        SparseRepr {
            n: m.n,
            entries: m.triples(),
        }
    }
}

impl SparseMatrix {
    /// `triples` must be sorted by row.
    fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut row_start = vec![0; n + 1];
        for &(i, _, _) in triples {
            row_start[i + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Self {
            n,
            row_start,
            cols: triples.iter().map(|t| t.1).collect(),
            vals: triples.iter().map(|t| t.2).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                (self.row_start[i]..self.row_start[i + 1])
                    .map(move |k| (i, self.cols[k], self.vals[k]))
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triples() {
            m[(i, j)] = v;
        }
        m
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        (self.row_start[i]..self.row_start[i + 1])
            .map(|k| self.vals[k] * x[self.cols[k]])
            .sum()
    }

    fn scale(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }
}

/// The untrained part of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub config: ReservoirConfig,
    pub input_dim: usize,
    /// Row-major `n_reservoir × (input_dim + 1)`; column 0 multiplies the
    /// constant bias input.
    pub w_in: Vec<f64>,
    pub w: SparseMatrix,
}

/// Draws the input and recurrent weights and rescales `W` to the configured
/// spectral radius.
pub fn init_reservoir(config: &ReservoirConfig, input_dim: usize) -> Result<Reservoir, LearnError> {
    config.validate()?;
    let n = config.n_reservoir;
    let mut rng = rng::keyed(
        config.seed,
        &[stream::RESERVOIR, n as u64, input_dim as u64],
    );
    let mut triples = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < config.connectivity {
                let mut v = rng.random_range(-1.0..1.0);
                while v == 0.0 {
                    v = rng.random_range(-1.0..1.0);
                }
                triples.push((i, j, v));
            }
        }
    }
    let mut w = SparseMatrix::from_triples(n, &triples);
    let radius =
        linalg::spectral_radius(&w.to_dense()).map_err(|_| LearnError::SpectralRadiusFailure)?;
    if radius <= f64::EPSILON {
        return Err(LearnError::SpectralRadiusFailure);
    }
    w.scale(config.spectral_radius / radius);

    let w_in = (0..n * (input_dim + 1))
        .map(|_| rng.random_range(-1.0..=1.0) * config.input_scaling)
        .collect();
    Ok(Reservoir {
        config: config.clone(),
        input_dim,
        w_in,
        w,
    })
}

impl Reservoir {
    pub fn n(&self) -> usize {
        self.config.n_reservoir
    }

    /// One leaky-integrator update.
    pub fn step(&self, state: &[f64], u: &[f64]) -> Result<Vec<f64>, LearnError> {
        let n = self.n();
        if state.len() != n {
            return Err(LearnError::DimensionMismatch {
                expected: n,
                got: state.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(LearnError::DimensionMismatch {
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let a = self.config.leak_rate;
        let cols = self.input_dim + 1;
        Ok((0..n)
            .map(|i| {
                let row = &self.w_in[i * cols..(i + 1) * cols];
                let drive = row[0] + row[1..].iter().zip(u).map(|(w, v)| w * v).sum::<f64>();
                let pre = drive + self.w.row_dot(i, state);
                (1.0 - a) * state[i] + a * pre.tanh()
            })
            .collect())
    }

    /// States after each input, starting from the zero state.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LearnError> {
        let mut state = vec![0.0; self.n()];
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            state = self.step(&state, u)?;
            out.push(state.clone());
        }
        Ok(out)
    }
}

pub fn reservoir_step(
    reservoir: &Reservoir,
    state: &[f64],
    u: &[f64],
) -> Result<Vec<f64>, LearnError> {
    reservoir.step(state, u)
}

/// Per-step trajectory features plus a standardization fitted on training
/// data.
///
/// Raw features per point: Δx, Δy from the previous point (m), speed (m/s),
/// heading sin and cos, then the distance to every station (km). The first
/// point has zero displacement, zero speed and heading (0, 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoder {
    pub stations: StationMap,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl SequenceEncoder {
    pub fn raw_dim(n_stations: usize) -> usize {
        5 + n_stations
    }

    /// Encoder that passes raw features through unchanged.
    pub fn identity(stations: StationMap) -> Self {
        let d = Self::raw_dim(stations.len());
        Self {
            stations,
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    /// Standardizes each feature to zero mean, unit variance over all
    /// training steps. Constant features are left unscaled.
    pub fn fit(stations: StationMap, trajectories: &[GpsTrajectory]) -> Self {
        let d = Self::raw_dim(stations.len());
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0usize;
        let id = Self::identity(stations);
        for tr in trajectories {
            for f in id.raw_features(&tr.points) {
                for j in 0..d {
                    sum[j] += f[j];
                    sq[j] += f[j] * f[j];
                }
                count += 1;
            }
        }
        if count == 0 {
            return id;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / count as f64 - m * m).max(0.0);
                if var.sqrt() > 1e-9 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            stations: id.stations,
            mean,
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn raw_features(&self, points: &[TrajectoryPoint]) -> Vec<Vec<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let (dx, dy, speed, hs, hc) = if k == 0 {
                    (0.0, 0.0, 0.0, 0.0, 0.0)
                } else {
                    let prev = &points[k - 1];
                    let dx = p.pos.x - prev.pos.x;
                    let dy = p.pos.y - prev.pos.y;
                    let len = dx.hypot(dy);
                    let dt = (p.t - prev.t).max(1) as f64;
                    if len > 0.0 {
                        (dx, dy, len / dt, dy / len, dx / len)
                    } else {
                        (dx, dy, 0.0, 0.0, 0.0)
                    }
                };
                let mut f = vec![dx, dy, speed, hs, hc];
                f.extend(
                    self.stations
                        .stations()
                        .iter()
                        .map(|s| s.position.distance(&p.pos) / 1000.0),
                );
                f
            })
            .collect()
    }

    pub fn encode(&self, points: &[TrajectoryPoint]) -> Vec<Vec<f64>> {
        self.raw_features(points)
            .into_iter()
            .map(|f| {
                f.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `(K + 1) × (n_reservoir + input_dim + 1)`.
    pub weights: Vec<f64>,
    /// `‖(XᵀX + λI) W − XᵀY‖∞` of the training solve.
    pub normal_residual: f64,
    pub n_train_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsnModel {
    pub reservoir: Reservoir,
    pub encoder: SequenceEncoder,
    pub readout: Option<Readout>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrefixPrediction {
    pub probabilities: Vec<f64>,
    pub index: usize,
    pub destination: StationId,
    pub remaining_seconds: f64,
    pub expected_arrival_time: Timestamp,
}

impl EsnModel {
    pub fn new(reservoir: Reservoir, encoder: SequenceEncoder) -> Result<Self, LearnError> {
        if reservoir.input_dim != encoder.dim() {
            return Err(LearnError::DimensionMismatch {
                expected: encoder.dim(),
                got: reservoir.input_dim,
            });
        }
        Ok(Self {
            reservoir,
            encoder,
            readout: None,
        })
    }

    pub fn class_labels(&self) -> Vec<StationId> {
        self.encoder.stations.ids()
    }

    pub fn n_classes(&self) -> usize {
        self.encoder.stations.len()
    }

    fn extended_states(&self, points: &[TrajectoryPoint]) -> Result<Vec<Vec<f64>>, LearnError> {
        let inputs = self.encoder.encode(points);
        let states = self.reservoir.run(&inputs)?;
        Ok(states
            .into_iter()
            .zip(inputs)
            .map(|(mut s, u)| {
                s.extend(u);
                s.push(1.0);
                s
            })
            .collect())
    }

    /// The ridge system `(X, Y)` assembled from training trajectories.
    pub fn readout_system(
        &self,
        trajectories: &[GpsTrajectory],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), LearnError> {
        let k = self.n_classes();
        let washout = self.reservoir.config.washout;
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<Vec<f64>> = Vec::new();
        for tr in trajectories {
            let truth = tr.truth.as_ref().ok_or_else(|| {
                LearnError::InsufficientData(format!(
                    "trajectory {} has no ground truth",
                    tr.trip_id
                ))
            })?;
            let class = self
                .encoder
                .stations
                .index_of(&truth.destination)
                .ok_or_else(|| LearnError::UnknownStation(truth.destination.clone()))?;
            for (step, ext) in self.extended_states(&tr.points)?.into_iter().enumerate() {
                if step < washout {
                    continue;
                }
                let mut target = vec![0.0; k + 1];
                target[class] = 1.0;
                target[k] = (truth.arrival_time - tr.points[step].t) as f64;
                xs.push(ext);
                ys.push(target);
            }
        }
        if xs.is_empty() {
            return Err(LearnError::InsufficientData(
                "no training steps after washout".into(),
            ));
        }
        let p = xs[0].len();
        let x = DMatrix::from_fn(xs.len(), p, |i, j| xs[i][j]);
        let y = DMatrix::from_fn(ys.len(), k + 1, |i, j| ys[i][j]);
        Ok((x, y))
    }

    pub fn predict_prefix(
        &self,
        points: &[TrajectoryPoint],
    ) -> Result<PrefixPrediction, LearnError> {
        let readout = self.readout.as_ref().ok_or(LearnError::UntrainedModel)?;
        if points.len() < 2 {
            return Err(LearnError::InsufficientData(
                "a prefix needs at least 2 points".into(),
            ));
        }
        let ext = self
            .extended_states(points)?
            .pop()
            .expect("non-empty prefix");
        if ext.len() != readout.cols {
            return Err(LearnError::DimensionMismatch {
                expected: readout.cols,
                got: ext.len(),
            });
        }
        let out: Vec<f64> = (0..readout.rows)
            .map(|r| {
                readout.weights[r * readout.cols..(r + 1) * readout.cols]
                    .iter()
                    .zip(&ext)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect();
        let k = self.n_classes();
        let probabilities = normalize_raw_scores(&out[..k])?;
        let index = argmax(&probabilities);
        let remaining = out[k].max(0.0);
        let last = points.last().expect("non-empty").t;
        Ok(PrefixPrediction {
            destination: self.encoder.stations.get(index).id.clone(),
            index,
            probabilities,
            remaining_seconds: remaining,
            expected_arrival_time: last + remaining.round() as Timestamp,
        })
    }
}

/// Trains the readout; the reservoir and encoder are copied unchanged.
pub fn train_esn(model: &EsnModel, trajectories: &[GpsTrajectory]) -> Result<EsnModel, LearnError> {
    if trajectories.is_empty() {
        return Err(LearnError::InsufficientData(
            "no training trajectories".into(),
        ));
    }
    let (x, y) = model.readout_system(trajectories)?;
    let lambda = model.reservoir.config.ridge_lambda;
    let w = linalg::ridge_solve(&x, &y, lambda).map_err(|e| match e {
        LinalgError::Singular | LinalgError::NoConvergence => LearnError::SingularSystem,
    })?;
    let residual = linalg::ridge_residual(&x, &y, &w, lambda);
    let scale = x.tr_mul(&y).amax().max(1.0);
    if !(residual / scale <= READOUT_RESIDUAL_TOLERANCE) {
        return Err(LearnError::SingularSystem);
    }
    let wt = w.transpose();
    let weights = (0..wt.nrows())
        .flat_map(|r| (0..wt.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| wt[(r, c)])
        .collect();
    let mut trained = model.clone();
    trained.readout = Some(Readout {
        rows: wt.nrows(),
        cols: wt.ncols(),
        weights,
        normal_residual: residual,
        n_train_steps: x.nrows(),
    });
    Ok(trained)
}

/// Fits the input standardization, draws the reservoir and trains the readout.
pub fn fit_location_preview(
    config: &ReservoirConfig,
    stations: &StationMap,
    trajectories: &[GpsTrajectory],
) -> Result<EsnModel, LearnError> {
    let encoder = SequenceEncoder::fit(stations.clone(), trajectories);
    let reservoir = init_reservoir(config, encoder.dim())?;
    train_esn(&EsnModel::new(reservoir, encoder)?, trajectories)
}

/// Runs the model on the first `fraction_observed` of a trajectory.
pub fn predict_from_prefix(
    model: &EsnModel,
    trajectory: &GpsTrajectory,
    fraction_observed: f64,
) -> Result<PrefixPrediction, LearnError> {
    if !(fraction_observed > 0.0 && fraction_observed <= 1.0) {
        return Err(LearnError::InvalidConfig(
            "fraction_observed must lie in (0, 1]".into(),
        ));
    }
    model.predict_prefix(&trajectory.prefix(fraction_observed).points)
}
