//! JSON model files.

use std::fs;
use std::path::Path;

use cutset::circuit::compile;
use cutset::numerics::log_sum_exp;
use cutset::{ChowLiuTree, CutsetNetwork, LearnerConfig, Mixture, Node, ScoreConfig, ScoreKind, WeightedDataset};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// A learned model: a single network or a mixture of networks.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Cnet(CutsetNetwork),
    Mixture(Mixture),
}

impl Model {
    pub fn scope(&self) -> &[usize] {
        match self {
            Model::Cnet(net) => net.scope(),
            Model::Mixture(mix) => mix.scope(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Cnet(_) => "cnet",
            Model::Mixture(_) => "mixture",
        }
    }

    pub fn log_density(&self, x: &[u8]) -> cutset::Result<f64> {
        match self {
            Model::Cnet(net) => net.log_density(x),
            Model::Mixture(mix) => mix.log_density(x),
        }
    }

    pub fn log_likelihood(&self, data: &WeightedDataset) -> cutset::Result<f64> {
        match self {
            Model::Cnet(net) => net.log_likelihood(data),
            Model::Mixture(mix) => mix.log_likelihood(data),
        }
    }

    /// Per-row log-densities computed on the compiled circuits.
    pub fn circuit_log_densities(&self, data: &WeightedDataset) -> cutset::Result<Vec<f64>> {
        match self {
            Model::Cnet(net) => {
                let circuit = compile(net);
                data.rows().map(|x| circuit.log_eval(x)).collect()
            }
            Model::Mixture(mix) => {
                let circuits: Vec<_> = mix.components().iter().map(compile).collect();
                data.rows()
                    .map(|x| {
                        let terms = circuits
                            .iter()
                            .zip(mix.weights())
                            .map(|(c, &a)| Ok(if a == 0.0 { f64::NEG_INFINITY } else { a.ln() + c.log_eval(x)? }))
                            .collect::<cutset::Result<Vec<_>>>()?;
                        log_sum_exp(&terms)
                    })
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        match self {
            Model::Cnet(net) => net.sample(rng),
            Model::Mixture(mix) => mix.sample(rng),
        }
    }

    /// Completes the unobserved cells. For a mixture, the best completion
    /// among the per-component MPEs under the mixture density.
    pub fn mpe(&self, evidence: &[Option<u8>]) -> (Vec<u8>, f64) {
        match self {
            Model::Cnet(net) => net.mpe_fixed(evidence),
            Model::Mixture(mix) => {
                let mut best: Option<(Vec<u8>, f64)> = None;
                for component in mix.components() {
                    let (x, _) = component.mpe_fixed(evidence);
                    let score = mix.log_density(&x).expect("completion spans the scope");
                    if best.as_ref().map_or(true, |(_, s)| score > *s) {
                        best = Some((x, score));
                    }
                }
                best.expect("a mixture has at least one component")
            }
        }
    }

    /// Parameter count of the compiled circuit(s), plus the mixing weights.
    pub fn param_count(&self) -> usize {
        match self {
            Model::Cnet(net) => net.param_count(),
            Model::Mixture(mix) => mix.param_count(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: Option<String>,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub config: LearnerConfig,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct FileRecord {
    format_version: u32,
    score: ScoreRecord,
    model: ModelRecord,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    kind: String,
    alpha: f64,
    beta: f64,
    lambda: usize,
    root_dataset_size: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelRecord {
    Cnet { network: NetworkRecord },
    Mixture { weights: Vec<f64>, components: Vec<NetworkRecord> },
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    scope: Vec<usize>,
    root: NodeRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum NodeRecord {
    Decision {
        var: usize,
        weights: [f64; 2],
        children: Box<[NodeRecord; 2]>,
    },
    Leaf {
        variables: Vec<usize>,
        /// Local index of each variable's parent.
        parents: Vec<Option<usize>>,
        /// One `[p(0), p(1)]` row per parent value; a single row at the root.
        cpt: Vec<Vec<[f64; 2]>>,
    },
}

fn node_record(node: &Node) -> NodeRecord {
    match node {
        Node::Decision { var, weights, children } => NodeRecord::Decision {
            var: *var,
            weights: *weights,
            children: Box::new([node_record(&children[0]), node_record(&children[1])]),
        },
        Node::Leaf(tree) => NodeRecord::Leaf {
            variables: tree.variable_ids().to_vec(),
            parents: tree.parents().to_vec(),
            cpt: tree.cpt().to_vec(),
        },
    }
}

fn node_from(record: NodeRecord) -> cutset::Result<Node> {
    Ok(match record {
        NodeRecord::Decision { var, weights, children } => {
            let [c0, c1] = *children;
            Node::decision(var, weights, node_from(c0)?, node_from(c1)?)
        }
        NodeRecord::Leaf { variables, parents, cpt } => Node::Leaf(ChowLiuTree::from_parts(variables, parents, cpt)?),
    })
}

fn network_record(net: &CutsetNetwork) -> NetworkRecord {
    NetworkRecord {
        scope: net.scope().to_vec(),
        root: node_record(net.root()),
    }
}

fn network_from(record: NetworkRecord) -> cutset::Result<CutsetNetwork> {
    CutsetNetwork::new(record.scope, node_from(record.root)?)
}

impl ModelFile {
    pub fn new(model: Model, config: LearnerConfig, provenance: Provenance) -> Self {
        Self { model, config, provenance }
    }

    pub fn to_json(&self) -> String {
        let score = &self.config.score;
        let record = FileRecord {
            format_version: FORMAT_VERSION,
            score: ScoreRecord {
                kind: match score.kind {
                    ScoreKind::Bd => "bd".into(),
                    ScoreKind::Bic => "bic".into(),
                },
                alpha: score.alpha,
                beta: score.beta,
                lambda: self.config.lambda,
                root_dataset_size: score.root_dataset_size,
            },
            model: match &self.model {
                Model::Cnet(net) => ModelRecord::Cnet { network: network_record(net) },
                Model::Mixture(mix) => ModelRecord::Mixture {
                    weights: mix.weights().to_vec(),
                    components: mix.components().iter().map(network_record).collect(),
                },
            },
            provenance: self.provenance.clone(),
        };
        let mut text = serde_json::to_string_pretty(&record).expect("model records are serializable");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let record: FileRecord =
            serde_json::from_str(text).map_err(|e| CliError::Io(format!("malformed model file: {e}")))?;
        if record.format_version != FORMAT_VERSION {
            return Err(CliError::Io(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                record.format_version
            )));
        }
        let s = record.score;
        let kind = match s.kind.as_str() {
            "bd" => ScoreKind::Bd,
            "bic" => ScoreKind::Bic,
            other => return Err(CliError::Io(format!("unknown score kind {other:?}"))),
        };
        let config = LearnerConfig {
            score: ScoreConfig {
                kind,
                alpha: s.alpha,
                beta: s.beta,
                root_dataset_size: s.root_dataset_size,
            },
            lambda: s.lambda,
        };
        let model = match record.model {
            ModelRecord::Cnet { network } => network_from(network).map(Model::Cnet),
            ModelRecord::Mixture { weights, components } => components
                .into_iter()
                .map(network_from)
                .collect::<cutset::Result<Vec<_>>>()
                .and_then(|c| Mixture::new(c, weights))
                .map(Model::Mixture),
        }
        .map_err(|e| CliError::Io(format!("invalid model: {e}")))?;
        Ok(Self {
            model,
            config,
            provenance: record.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> CliResult<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
