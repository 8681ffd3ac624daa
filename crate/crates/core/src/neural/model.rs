use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::layers::{Dropout, Gelu, LayerNorm, Linear, Mode, NetRng, Param};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::features::{adapted_width, feature_matrix, FeatureKind};

/// Bottleneck residual block: `x + up(dropout(gelu(down(x))))`.
///
/// The up-projection starts at zero so a fresh block is the identity map.
#[derive(Debug, Clone)]
pub struct AdapterBlock {
    pub down: Linear,
    act: Gelu,
    drop: Dropout,
    pub up: Linear,
}

impl AdapterBlock {
    pub fn new(name: &str, dim: usize, bottleneck: usize, dropout: f64, rng: &mut NetRng) -> Self {
        Self {
            down: Linear::new(&format!("{name}.down"), dim, bottleneck, rng),
            act: Gelu::default(),
            drop: Dropout::new(dropout),
            up: Linear::zeros(&format!("{name}.up"), bottleneck, dim),
        }
    }

    pub fn from_linears(down: Linear, up: Linear, dropout: f64) -> Self {
        assert_eq!(down.outputs(), up.inputs());
        assert_eq!(down.inputs(), up.outputs());
        Self {
            down,
            act: Gelu::default(),
            drop: Dropout::new(dropout),
            up,
        }
    }

    pub fn dim(&self) -> usize {
        self.down.inputs()
    }

    pub fn bottleneck(&self) -> usize {
        self.down.outputs()
    }

    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(self.dim(), x.ncols())?;
        Ok(x + &self.up.infer(&self.act.infer(&self.down.infer(x))))
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode, rng: &mut NetRng) -> Array2<f64> {
        let h = self.down.forward(x);
        let h = self.act.forward(&h);
        let h = self.drop.forward(&h, mode, rng);
        x + &self.up.forward(&h)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let dh = self.up.backward(dy);
        let dh = self.drop.backward(&dh);
        let dh = self.act.backward(&dh);
        dy + &self.down.backward(&dh)
    }

    fn params(&self) -> Vec<&Param> {
        [self.down.params(), self.up.params()].concat()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.down.params_mut();
        p.extend(self.up.params_mut());
        p
    }
}

/// Layer norm, then linear, GELU and dropout.
#[derive(Debug, Clone)]
struct HiddenBlock {
    norm: LayerNorm,
    linear: Linear,
    act: Gelu,
    drop: Dropout,
}

/// Hidden blocks of `[layer norm -> linear -> GELU -> dropout]` followed by a
/// linear output layer.
#[derive(Debug, Clone)]
pub struct MlpHead {
    hidden: Vec<HiddenBlock>,
    pub out: Linear,
}

impl MlpHead {
    pub fn new(
        name: &str,
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        dropout: f64,
        rng: &mut NetRng,
    ) -> Self {
        let mut blocks = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for (i, &h) in hidden.iter().enumerate() {
            let prefix = format!("{name}.hidden{i}");
            blocks.push(HiddenBlock {
                norm: LayerNorm::new(&format!("{prefix}.norm"), width),
                linear: Linear::new(&format!("{prefix}.linear"), width, h, rng),
                act: Gelu::default(),
                drop: Dropout::new(dropout),
            });
            width = h;
        }
        Self {
            hidden: blocks,
            out: Linear::new(&format!("{name}.out"), width, outputs, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.out.inputs(), |b| b.linear.inputs())
    }

    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(self.inputs(), x.ncols())?;
        let mut h = x.clone();
        for b in &self.hidden {
            h = b.act.infer(&b.linear.infer(&b.norm.infer(&h)));
        }
        Ok(self.out.infer(&h))
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode, rng: &mut NetRng) -> Array2<f64> {
        let mut h = x.clone();
        for b in &mut self.hidden {
            h = b.norm.forward(&h);
            h = b.linear.forward(&h);
            h = b.act.forward(&h);
            h = b.drop.forward(&h, mode, rng);
        }
        self.out.forward(&h)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let mut d = self.out.backward(dy);
        for b in self.hidden.iter_mut().rev() {
            d = b.drop.backward(&d);
            d = b.act.backward(&d);
            d = b.linear.backward(&d);
            d = b.norm.backward(&d);
        }
        d
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = Vec::new();
        for b in &self.hidden {
            p.extend(b.norm.params());
            p.extend(b.linear.params());
        }
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for b in &mut self.hidden {
            p.extend(b.norm.params_mut());
            p.extend(b.linear.params_mut());
        }
        p.extend(self.out.params_mut());
        p
    }
}

/// Dropout on `[e1 | e2]` followed by a single linear layer.
#[derive(Debug, Clone)]
pub struct LinearHead {
    drop: Dropout,
    pub out: Linear,
}

/// Separate adapters for each side, then an MLP over
/// `[e1' | e2' | e1 | e2 | e1 - e2 | e1 * e2 | C | E | M]`. The comparison
/// part uses the raw embeddings.
#[derive(Debug, Clone)]
pub struct AdapterModel {
    pub adapter1: AdapterBlock,
    pub adapter2: AdapterBlock,
    pub head: MlpHead,
}

impl AdapterModel {
    pub fn dim(&self) -> usize {
        self.adapter1.dim()
    }

    /// The head's input for one batch.
    pub fn adapted_features(&self, e1: &Array2<f64>, e2: &Array2<f64>) -> Result<Array2<f64>> {
        let a1 = self.adapter1.infer(e1)?;
        let a2 = self.adapter2.infer(e2)?;
        let enriched = feature_matrix(FeatureKind::Enriched, e1, e2)?;
        Ok(concatenate![Axis(1), a1, a2, enriched])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Linear head with input dropout on plain features.
    LinearHead,
    /// Adapter blocks plus MLP head on adapted, enriched features.
    Adapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub dim: usize,
    pub outputs: usize,
    pub bottleneck: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl NetworkSpec {
    pub fn for_task(architecture: Architecture, task: Task, dim: usize, config: &TrainConfig) -> Self {
        Self {
            architecture,
            dim,
            outputs: outputs_for(task),
            bottleneck: config.bottleneck,
            hidden: config.hidden.clone(),
            dropout: config.dropout,
        }
    }

    pub fn input_width(&self) -> usize {
        match self.architecture {
            Architecture::LinearHead => FeatureKind::Plain.width(self.dim),
            Architecture::Adapter => adapted_width(self.dim),
        }
    }
}

pub fn outputs_for(task: Task) -> usize {
    match task {
        Task::Ogwic => 4,
        Task::Diswic => 1,
    }
}

/// Training hyperparameters. Defaults: 10 epochs, lr 1e-4, batch 32,
/// dropout 0.2, AdamW(0.9, 0.999, 1e-8, wd 0.01), bottleneck 64, hidden
/// `[512, 256]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub bottleneck: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-4,
            batch_size: 32,
            dropout: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            bottleneck: 64,
            hidden: vec![512, 256],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("train config: {what}")));
        if self.epochs == 0 || self.batch_size == 0 || self.bottleneck == 0 {
            return bad("epochs, batch_size and bottleneck must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("learning_rate and weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("betas must be in [0, 1) and epsilon positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        Ok(())
    }

    pub fn adamw(&self) -> super::optim::AdamWConfig {
        super::optim::AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Body {
    Linear(LinearHead),
    Adapter(AdapterModel),
}

/// A network over embedding pairs: either architecture, one output per
/// class (OGWiC) or a single score (DisWiC).
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    body: Body,
}

fn check_width(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl Network {
    pub fn new(spec: NetworkSpec, rng: &mut NetRng) -> Result<Self> {
        if spec.dim == 0 || spec.outputs == 0 {
            return Err(Error::InvalidInput("network dim and outputs must be positive".into()));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::InvalidInput("dropout must be in [0, 1)".into()));
        }
        let body = match spec.architecture {
            Architecture::LinearHead => Body::Linear(LinearHead {
                drop: Dropout::new(spec.dropout),
                out: Linear::new("linear.out", spec.input_width(), spec.outputs, rng),
            }),
            Architecture::Adapter => Body::Adapter(AdapterModel {
                adapter1: AdapterBlock::new("adapter1", spec.dim, spec.bottleneck, spec.dropout, rng),
                adapter2: AdapterBlock::new("adapter2", spec.dim, spec.bottleneck, spec.dropout, rng),
                head: MlpHead::new(
                    "head",
                    spec.input_width(),
                    &spec.hidden,
                    spec.outputs,
                    spec.dropout,
                    rng,
                ),
            }),
        };
        Ok(Self { spec, body })
    }

    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self> {
        Self::new(spec, &mut NetRng::seed_from_u64(seed))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn adapter_model(&self) -> Option<&AdapterModel> {
        match &self.body {
            Body::Adapter(m) => Some(m),
            Body::Linear(_) => None,
        }
    }

    pub fn adapter_model_mut(&mut self) -> Option<&mut AdapterModel> {
        match &mut self.body {
            Body::Adapter(m) => Some(m),
            Body::Linear(_) => None,
        }
    }

    fn check_inputs(&self, e1: &Array2<f64>, e2: &Array2<f64>) -> Result<()> {
        check_width(self.spec.dim, e1.ncols())?;
        check_width(self.spec.dim, e2.ncols())?;
        check_width(e1.nrows(), e2.nrows())
    }

    /// Evaluation-mode outputs, shape (batch, outputs).
    pub fn infer(&self, e1: &Array2<f64>, e2: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(e1, e2)?;
        match &self.body {
            Body::Linear(m) => {
                let x = feature_matrix(FeatureKind::Plain, e1, e2)?;
                Ok(m.out.infer(&x))
            }
            Body::Adapter(m) => m.head.infer(&m.adapted_features(e1, e2)?),
        }
    }

    /// Forward pass caching activations for [`Network::backward`].
    pub fn forward(
        &mut self,
        e1: &Array2<f64>,
        e2: &Array2<f64>,
        mode: Mode,
        rng: &mut NetRng,
    ) -> Result<Array2<f64>> {
        self.check_inputs(e1, e2)?;
        match &mut self.body {
            Body::Linear(m) => {
                let x = feature_matrix(FeatureKind::Plain, e1, e2)?;
                let x = m.drop.forward(&x, mode, rng);
                Ok(m.out.forward(&x))
            }
            Body::Adapter(m) => {
                let a1 = m.adapter1.forward(e1, mode, rng);
                let a2 = m.adapter2.forward(e2, mode, rng);
                let enriched = feature_matrix(FeatureKind::Enriched, e1, e2)?;
                let fa = concatenate![Axis(1), a1, a2, enriched];
                Ok(m.head.forward(&fa, mode, rng))
            }
        }
    }

    /// Backpropagates `d loss / d output`, accumulating parameter gradients.
    /// Embeddings are frozen inputs, so no input gradient is returned.
    pub fn backward(&mut self, d_output: &Array2<f64>) {
        match &mut self.body {
            Body::Linear(m) => {
                let dx = m.out.backward(d_output);
                m.drop.backward(&dx);
            }
            Body::Adapter(m) => {
                let d = m.adapter1.dim();
                let dfa = m.head.backward(d_output);
                m.adapter1.backward(&dfa.slice(s![.., 0..d]).to_owned());
                m.adapter2.backward(&dfa.slice(s![.., d..2 * d]).to_owned());
            }
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match &self.body {
            Body::Linear(m) => m.out.params(),
            Body::Adapter(m) => {
                let mut p = m.adapter1.params();
                p.extend(m.adapter2.params());
                p.extend(m.head.params());
                p
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.body {
            Body::Linear(m) => m.out.params_mut(),
            Body::Adapter(m) => {
                let mut p = m.adapter1.params_mut();
                p.extend(m.adapter2.params_mut());
                p.extend(m.head.params_mut());
                p
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rng: &mut NetRng, shape: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
    }

    fn small_spec(architecture: Architecture, task: Task, dropout: f64) -> NetworkSpec {
        NetworkSpec {
            architecture,
            dim: 6,
            outputs: outputs_for(task),
            bottleneck: 3,
            hidden: vec![10, 5],
            dropout,
        }
    }

    #[test]
    fn adapter_is_identity_at_init() {
        let mut rng = NetRng::seed_from_u64(1);
        let block = AdapterBlock::new("a", 8, 4, 0.2, &mut rng);
        let x = random(&mut rng, (5, 8));
        assert_eq!(block.infer(&x).unwrap(), x);
    }

    #[test]
    fn adapter_with_identity_projections() {
        let mut rng = NetRng::seed_from_u64(2);
        let eye = Array2::eye(4);
        let block = AdapterBlock::from_linears(
            Linear::from_values("d", eye.clone(), Array2::zeros((1, 4))),
            Linear::from_values("u", eye, Array2::zeros((1, 4))),
            0.0,
        );
        let x = random(&mut rng, (3, 4));
        let expected = &x + &x.mapv(super::super::layers::gelu);
        assert_eq!(block.infer(&x).unwrap(), expected);
        assert!(block.infer(&random(&mut rng, (3, 5))).is_err());
    }

    #[test]
    fn shapes_and_modes() {
        let mut rng = NetRng::seed_from_u64(3);
        let e1 = random(&mut rng, (7, 6));
        let e2 = random(&mut rng, (7, 6));
        for arch in [Architecture::LinearHead, Architecture::Adapter] {
            let mut net = Network::new(small_spec(arch, Task::Ogwic, 0.2), &mut rng).unwrap();
            let a = net.infer(&e1, &e2).unwrap();
            assert_eq!(a.dim(), (7, 4));
            assert_eq!(net.infer(&e1, &e2).unwrap(), a);
            let b = net.forward(&e1, &e2, Mode::Eval, &mut rng).unwrap();
            assert_eq!(a, b);
            assert!(net.infer(&random(&mut rng, (7, 5)), &e2).is_err());

            let mut net = Network::new(small_spec(arch, Task::Diswic, 0.0), &mut rng).unwrap();
            let eval = net.infer(&e1, &e2).unwrap();
            let train = net.forward(&e1, &e2, Mode::Train, &mut rng).unwrap();
            assert_eq!(eval.dim(), (7, 1));
            assert_eq!(eval, train);
        }
    }

    #[test]
    fn fresh_adapter_model_equals_head_on_duplicated_embeddings() {
        let mut rng = NetRng::seed_from_u64(4);
        let net = Network::new(small_spec(Architecture::Adapter, Task::Ogwic, 0.2), &mut rng).unwrap();
        let e1 = random(&mut rng, (4, 6));
        let e2 = random(&mut rng, (4, 6));
        let enriched = feature_matrix(FeatureKind::Enriched, &e1, &e2).unwrap();
        let x = concatenate![Axis(1), e1, e2, enriched];
        let head = &net.adapter_model().unwrap().head;
        assert_eq!(net.infer(&e1, &e2).unwrap(), head.infer(&x).unwrap());
    }

    #[test]
    fn input_widths() {
        let c = TrainConfig::default();
        assert_eq!(NetworkSpec::for_task(Architecture::Adapter, Task::Ogwic, 768, &c).input_width(), 4611);
        assert_eq!(NetworkSpec::for_task(Architecture::LinearHead, Task::Diswic, 768, &c).input_width(), 1536);
        assert!(c.validate().is_ok());
        assert!(TrainConfig { dropout: 1.0, ..c.clone() }.validate().is_err());
    }
}
