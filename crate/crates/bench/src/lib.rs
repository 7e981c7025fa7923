//! Fixtures shared by the benchmarks under `benches/`.

use gcnssl::model::{l2_penalty, masked_cross_entropy};
use gcnssl::ssl::fused_link_loss;
use gcnssl::synthetic::{generate, SyntheticConfig};
use gcnssl::{
    build_ssl_input, AdamConfig, AdamState, GcnModel, Graph, ModelConfig, ModelInput, Result, Rng,
    SplitKind, SslConfig, SslInput, Strategy, Tape,
};

/// A graph with the node, edge and feature counts of Cora.
pub fn cora_sized() -> Graph {
    generate(&SyntheticConfig::cora_sized(), 0).expect("valid synthetic settings")
}

/// Everything one pretraining epoch touches.
pub struct PretrainFixture {
    pub model: GcnModel<f32>,
    pub ssl: SslInput<f32>,
    pub input: ModelInput<f32>,
    pub adam: AdamState<f32>,
    pub rng: Rng,
}

impl PretrainFixture {
    pub fn new(g: &Graph) -> Result<Self> {
        let model = GcnModel::encoder(g.num_features(), ModelConfig::default(), &mut Rng::new(1))?;
        let ssl = build_ssl_input(g, &SslConfig::uniform(Strategy::Both, 0.4), &Rng::new(2))?;
        let input = ModelInput::from_ssl(&ssl);
        let adam = AdamState::new(AdamConfig::default(), model.store());
        Ok(Self {
            model,
            ssl,
            input,
            adam,
            rng: Rng::new(3),
        })
    }

    /// Forward, backward and optimizer step with the full N × N loss.
    pub fn epoch(&mut self) -> Result<f32> {
        let mut tape = Tape::new();
        let h = self.model.encode(&mut tape, &self.input, &mut self.rng, true)?;
        let link = fused_link_loss(&mut tape, h, &self.ssl.target, self.ssl.positive_weight)?;
        let decay = l2_penalty(&mut tape, self.model.store(), &self.model.penalized(false), 5e-4)?;
        let total = tape.add(link, decay)?;
        tape.backward(total, self.model.store_mut())?;
        self.adam.step(self.model.store_mut())?;
        tape.value(link).item()
    }
}

/// Everything one fine-tuning epoch touches.
pub struct FinetuneFixture<'g> {
    pub graph: &'g Graph,
    pub model: GcnModel<f32>,
    pub input: ModelInput<f32>,
    pub adam: AdamState<f32>,
    pub rng: Rng,
}

impl<'g> FinetuneFixture<'g> {
    pub fn new(graph: &'g Graph) -> Result<Self> {
        let model = GcnModel::classifier(
            graph.num_features(),
            graph.num_classes(),
            ModelConfig::default(),
            &mut Rng::new(1),
        )?;
        let adam = AdamState::new(AdamConfig::default(), model.store());
        Ok(Self {
            graph,
            input: ModelInput::from_graph(graph),
            model,
            adam,
            rng: Rng::new(3),
        })
    }

    pub fn epoch(&mut self) -> Result<f32> {
        let mut tape = Tape::new();
        let p = self.model.classify(&mut tape, &self.input, &mut self.rng, true)?;
        let train = self.graph.split().nodes(SplitKind::Train);
        let ce = masked_cross_entropy(&mut tape, p, self.graph.labels(), train)?;
        tape.backward(ce, self.model.store_mut())?;
        self.adam.step(self.model.store_mut())?;
        tape.value(ce).item()
    }
}
