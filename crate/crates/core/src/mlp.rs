//! One-hidden-layer sigmoid network mapping total load to per-link flows,
//! trained online by backpropagation with momentum.
//!
//! The input is `load / ΣC`; output `j` is a fraction of link `j`'s
//! capacity, so every prediction lies in `[0, C_j]`. Hidden nodes carry a
//! bias, output nodes do not.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::NetworkTopology;
use crate::search::rng_from_seed;

pub const MODEL_MAGIC: &str = "flowopt-mlp";
pub const MODEL_VERSION: &str = "v1";

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Per hidden node: `[input weight, bias]`.
    pub hidden_weights: Vec<[f64; 2]>,
    /// Per output node: one weight per hidden node.
    pub output_weights: Vec<Vec<f64>>,
    /// Load normalization bounds `(min, max)`, kbps.
    pub input_scale: (f64, f64),
    /// Per-output denormalization factor (link capacity), kbps.
    pub output_scale: Vec<f64>,
}

/// Activations of one forward pass, in normalized units.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: f64,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Same shape as the model weights; used for gradients and momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDeltas {
    pub hidden: Vec<[f64; 2]>,
    pub output: Vec<Vec<f64>>,
}

impl WeightDeltas {
    pub fn zeros_like(model: &MlpModel) -> Self {
        WeightDeltas {
            hidden: vec![[0.0; 2]; model.hidden_size()],
            output: vec![vec![0.0; model.hidden_size()]; model.output_size()],
        }
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.hidden
            .iter()
            .flat_map(|h| h.iter().copied())
            .chain(self.output.iter().flat_map(|o| o.iter().copied()))
    }

    fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.hidden
            .iter_mut()
            .flat_map(|h| h.iter_mut())
            .chain(self.output.iter_mut().flat_map(|o| o.iter_mut()))
    }
}

impl MlpModel {
    /// All-zero weights for `hidden` hidden nodes, scaled for `topology`.
    pub fn zeros(topology: &NetworkTopology, hidden: usize) -> Self {
        MlpModel {
            hidden_weights: vec![[0.0; 2]; hidden],
            output_weights: vec![vec![0.0; hidden]; topology.link_count()],
            input_scale: (0.0, topology.total_capacity()),
            output_scale: topology.capacities(),
        }
    }

    /// Weights uniform in `range`.
    pub fn random<R: Rng + ?Sized>(
        topology: &NetworkTopology,
        hidden: usize,
        range: (f64, f64),
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(topology, hidden);
        for w in m.weights_mut() {
            *w = rng.gen_range(range.0..=range.1);
        }
        m
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_weights.len()
    }

    pub fn output_size(&self) -> usize {
        self.output_weights.len()
    }

    /// Weight count: `2 H + O H`.
    pub fn weight_count(&self) -> usize {
        2 * self.hidden_size() + self.output_size() * self.hidden_size()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.hidden_weights
            .iter()
            .flat_map(|h| h.iter().copied())
            .chain(self.output_weights.iter().flat_map(|o| o.iter().copied()))
    }

    pub fn weights_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.hidden_weights
            .iter_mut()
            .flat_map(|h| h.iter_mut())
            .chain(self.output_weights.iter_mut().flat_map(|o| o.iter_mut()))
    }

    pub fn normalize_input(&self, load_kbps: f64) -> f64 {
        let (lo, hi) = self.input_scale;
        (load_kbps - lo) / (hi - lo)
    }

    /// Forward pass on a normalized input.
    pub fn activations(&self, x: f64) -> Activations {
        let hidden: Vec<f64> = self
            .hidden_weights
            .iter()
            .map(|[w, b]| sigmoid(w * x + b))
            .collect();
        let output = self
            .output_weights
            .iter()
            .map(|row| sigmoid(row.iter().zip(&hidden).map(|(v, h)| v * h).sum()))
            .collect();
        Activations {
            input: x,
            hidden,
            output,
        }
    }

    /// Predicted flows in kbps. Loads outside the training range extrapolate.
    pub fn forward(&self, load_kbps: f64) -> Vec<f64> {
        self.activations(self.normalize_input(load_kbps))
            .output
            .iter()
            .zip(&self.output_scale)
            .map(|(o, s)| o * s)
            .collect()
    }

    /// [`forward`](Self::forward), optionally rescaled to sum exactly to the
    /// load. Rescaling can push a link past its capacity; callers that need
    /// feasibility should check the result.
    pub fn predict(&self, load_kbps: f64, renormalize: bool) -> Vec<f64> {
        let mut flows = self.forward(load_kbps);
        if renormalize {
            let total: f64 = flows.iter().sum();
            if total > 0.0 {
                flows.iter_mut().for_each(|f| *f *= load_kbps / total);
            }
        }
        flows
    }

    /// Targets in normalized units (fraction of capacity).
    pub fn normalize_targets(&self, flows_kbps: &[f64]) -> Vec<f64> {
        flows_kbps
            .iter()
            .zip(&self.output_scale)
            .map(|(f, s)| f / s)
            .collect()
    }

    /// Half the squared error on normalized outputs.
    pub fn loss(&self, x: f64, target: &[f64]) -> f64 {
        0.5 * self
            .activations(x)
            .output
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t).powi(2))
            .sum::<f64>()
    }

    /// Gradient of [`loss`](Self::loss) with respect to every weight.
    pub fn gradient(&self, x: f64, target: &[f64]) -> WeightDeltas {
        let act = self.activations(x);
        let out_delta: Vec<f64> = act
            .output
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * o * (1.0 - o))
            .collect();
        let output = out_delta
            .iter()
            .map(|d| act.hidden.iter().map(|h| d * h).collect())
            .collect();
        let hidden = act
            .hidden
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let back: f64 = out_delta
                    .iter()
                    .zip(&self.output_weights)
                    .map(|(d, row)| d * row[k])
                    .sum();
                let dh = back * h * (1.0 - h);
                [dh * x, dh]
            })
            .collect();
        WeightDeltas { hidden, output }
    }

    fn check_dims(&self) -> Result<()> {
        if self.hidden_weights.is_empty() || self.output_weights.is_empty() {
            return Err(Error::MalformedModel("empty layer".into()));
        }
        for row in &self.output_weights {
            if row.len() != self.hidden_size() {
                return Err(Error::DimensionMismatch {
                    expected: self.hidden_size(),
                    found: row.len(),
                });
            }
        }
        if self.output_scale.len() != self.output_size() {
            return Err(Error::DimensionMismatch {
                expected: self.output_size(),
                found: self.output_scale.len(),
            });
        }
        Ok(())
    }

    /// Checks the model predicts one flow per link of `topology`.
    pub fn check_topology(&self, topology: &NetworkTopology) -> Result<()> {
        if self.output_size() != topology.link_count() {
            return Err(Error::DimensionMismatch {
                expected: topology.link_count(),
                found: self.output_size(),
            });
        }
        Ok(())
    }

    /// Text form: magic and version, layer sizes, scales, then one weight row
    /// per hidden node (`weight bias`) and per output node.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = f64>| {
            v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
        writeln!(s, "1 {} {}", self.hidden_size(), self.output_size()).unwrap();
        let scales = [self.input_scale.0, self.input_scale.1]
            .into_iter()
            .chain(self.output_scale.iter().copied());
        writeln!(s, "{}", join(&mut scales.into_iter())).unwrap();
        for h in &self.hidden_weights {
            writeln!(s, "{}", join(&mut h.iter().copied())).unwrap();
        }
        for o in &self.output_weights {
            writeln!(s, "{}", join(&mut o.iter().copied())).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        parse_model(text)
    }
}

fn parse_floats(line: &str, what: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::MalformedModel(format!(
                "bad number {tok:?} in {what}"
            ))),
        })
        .collect()
}

/// Parses the text model format written by [`MlpModel::to_text`].
pub fn parse_model(text: &str) -> Result<MlpModel> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedModel("empty file".into()))?;
    let mut head = header.split_whitespace();
    match (head.next(), head.next(), head.next()) {
        (Some(MODEL_MAGIC), Some(MODEL_VERSION), None) => {}
        (Some(MODEL_MAGIC), Some(v), None) => return Err(Error::ModelVersion(v.to_string())),
        _ => return Err(Error::MalformedModel(format!("bad header {header:?}"))),
    }

    let sizes_line = lines
        .next()
        .ok_or_else(|| Error::MalformedModel("missing layer sizes".into()))?;
    let sizes: Vec<usize> = sizes_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::MalformedModel(format!("bad layer sizes {sizes_line:?}")))?;
    let (hidden, outputs) = match sizes[..] {
        [1, h, o] if h > 0 && o > 0 => (h, o),
        [n, _, _] if n != 1 => {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: n,
            })
        }
        _ => {
            return Err(Error::MalformedModel(format!(
                "bad layer sizes {sizes_line:?}"
            )))
        }
    };

    let scales_line = lines
        .next()
        .ok_or_else(|| Error::MalformedModel("missing scales".into()))?;
    let scales = parse_floats(scales_line, "scales")?;
    if scales.len() != 2 + outputs {
        return Err(Error::DimensionMismatch {
            expected: 2 + outputs,
            found: scales.len(),
        });
    }
    let input_scale = (scales[0], scales[1]);
    if !(input_scale.0 < input_scale.1) {
        return Err(Error::MalformedModel("input scale needs min < max".into()));
    }
    let output_scale = scales[2..].to_vec();
    if output_scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::MalformedModel(
            "output scales must be positive".into(),
        ));
    }

    let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != hidden + outputs {
        return Err(Error::DimensionMismatch {
            expected: hidden + outputs,
            found: rows.len(),
        });
    }
    let mut hidden_weights = Vec::with_capacity(hidden);
    for row in &rows[..hidden] {
        match parse_floats(row, "hidden row")?[..] {
            [w, b] => hidden_weights.push([w, b]),
            ref other => {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    found: other.len(),
                })
            }
        }
    }
    let mut output_weights = Vec::with_capacity(outputs);
    for row in &rows[hidden..] {
        let w = parse_floats(row, "output row")?;
        if w.len() != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                found: w.len(),
            });
        }
        output_weights.push(w);
    }
    let model = MlpModel {
        hidden_weights,
        output_weights,
        input_scale,
        output_scale,
    };
    model.check_dims()?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_text())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub weight_init_range: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    /// 7 hidden nodes, learning rate 0.9, momentum 0.2, 5000 epochs,
    /// weights uniform in `[-0.5, 0.5]`.
    fn default() -> Self {
        TrainConfig {
            hidden: 7,
            learning_rate: 0.9,
            momentum: 0.2,
            max_epochs: 5000,
            weight_init_range: (-0.5, 0.5),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.max_epochs < 1 || self.hidden < 1 {
            return Err(Error::InvalidConfig(
                "need at least one epoch and one hidden node".into(),
            ));
        }
        if !(self.weight_init_range.0 <= self.weight_init_range.1) {
            return Err(Error::InvalidConfig("bad weight init range".into()));
        }
        Ok(())
    }
}

/// One online update toward `target` (normalized units):
/// `Δ = -lr · ∇E + momentum · Δ_prev`. `velocity` holds `Δ_prev` on entry and
/// the applied `Δ` on return.
pub fn backprop_step_normalized(
    model: &mut MlpModel,
    x: f64,
    target: &[f64],
    config: &TrainConfig,
    velocity: &mut WeightDeltas,
) {
    let grad = model.gradient(x, target);
    for (v, g) in velocity.flat_mut().zip(grad.flat()) {
        *v = -config.learning_rate * g + config.momentum * *v;
    }
    for (w, v) in model.weights_mut().zip(velocity.flat()) {
        *w += v;
    }
}

/// [`backprop_step_normalized`] on a `(load, flows)` sample in kbps.
pub fn backprop_step(
    model: &mut MlpModel,
    sample: (f64, &[f64]),
    config: &TrainConfig,
    velocity: &mut WeightDeltas,
) {
    let x = model.normalize_input(sample.0);
    let t = model.normalize_targets(sample.1);
    backprop_step_normalized(model, x, &t, config, velocity);
}

/// Mean over samples and outputs of the squared normalized error.
pub fn mean_squared_error(model: &MlpModel, samples: &[(f64, Vec<f64>)]) -> f64 {
    let mut sum = 0.0;
    for (load, flows) in samples {
        let out = model.activations(model.normalize_input(*load)).output;
        let target = model.normalize_targets(flows);
        sum += out
            .iter()
            .zip(&target)
            .map(|(o, t)| (o - t).powi(2))
            .sum::<f64>();
    }
    sum / (samples.len() * model.output_size()) as f64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Training MSE of the freshly initialized model.
    pub initial_mse: f64,
    /// Training MSE after each epoch.
    pub epoch_mse: Vec<f64>,
}

/// Online training with a reshuffle every epoch.
pub fn train(
    topology: &NetworkTopology,
    samples: &[(f64, Vec<f64>)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (_, flows) in samples {
        if flows.len() != topology.link_count() {
            return Err(Error::DimensionMismatch {
                expected: topology.link_count(),
                found: flows.len(),
            });
        }
    }
    let mut rng = rng_from_seed(config.seed);
    let mut model = MlpModel::random(topology, config.hidden, config.weight_init_range, &mut rng);
    let normalized: Vec<(f64, Vec<f64>)> = samples
        .iter()
        .map(|(l, f)| (model.normalize_input(*l), model.normalize_targets(f)))
        .collect();
    let initial_mse = mean_squared_error(&model, samples);
    let mut velocity = WeightDeltas::zeros_like(&model);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_mse = Vec::with_capacity(config.max_epochs);
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, t) = &normalized[i];
            backprop_step_normalized(&mut model, *x, t, config, &mut velocity);
        }
        epoch_mse.push(mean_squared_error(&model, samples));
    }
    Ok(TrainOutcome {
        model,
        initial_mse,
        epoch_mse,
    })
}
