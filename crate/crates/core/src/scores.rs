//! Structure scores for cutset networks.
//!
//! Both scores decompose over the nodes of a network: every decision node
//! and every leaf contributes one local term computed from the data routed to
//! it. Greedy search only ever needs the terms of a leaf and of the cut that
//! would replace it.

use crate::clt::{self, ChowLiuTree};
use crate::cnet::{CutsetNetwork, Node};
use crate::data::{PairStats, WeightedDataset};
use crate::error::{Error, Result};
use crate::numerics::{log_dirichlet_binary, xlogy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// Bayesian-Dirichlet log marginal likelihood.
    Bd,
    /// Log-likelihood at smoothed ML parameters minus `ln|D| / 2` per free
    /// parameter, counting the leaf trees' parameters.
    Bic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreConfig {
    pub kind: ScoreKind,
    /// Equivalent sample size of every Dirichlet prior.
    pub alpha: f64,
    /// Laplace smoothing for BIC parameter estimates.
    pub beta: f64,
    /// Size of the full training set, the base of the BIC penalty. `None`
    /// takes the total weight of the dataset handed to the learner or scorer.
    pub root_dataset_size: Option<f64>,
}

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 0.01;

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::bd(DEFAULT_ALPHA)
    }
}

impl ScoreConfig {
    pub fn bd(alpha: f64) -> Self {
        Self {
            kind: ScoreKind::Bd,
            alpha,
            beta: DEFAULT_BETA,
            root_dataset_size: None,
        }
    }

    pub fn bic(beta: f64) -> Self {
        Self {
            kind: ScoreKind::Bic,
            alpha: DEFAULT_ALPHA,
            beta,
            root_dataset_size: None,
        }
    }

    pub fn with_root_dataset_size(mut self, size: f64) -> Self {
        self.root_dataset_size = Some(size);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScoreKind::Bd if !(self.alpha > 0.0 && self.alpha.is_finite()) => {
                Err(Error::invalid(format!("BD score needs alpha > 0, got {}", self.alpha)))
            }
            ScoreKind::Bic if !(self.beta >= 0.0 && self.beta.is_finite()) => {
                Err(Error::invalid(format!("BIC score needs beta >= 0, got {}", self.beta)))
            }
            ScoreKind::Bic if self.root_dataset_size.is_some_and(|n| !(n > 0.0)) => Err(
                Error::invalid("BIC score needs a positive root dataset size"),
            ),
            _ => Ok(()),
        }
    }

    /// Pins the BIC penalty base to `total` unless it is already set.
    pub(crate) fn resolved(mut self, total: f64) -> Self {
        if self.root_dataset_size.is_none() {
            self.root_dataset_size = Some(total);
        }
        self
    }

    /// Pseudo-count added to each outcome when estimating parameters: the
    /// posterior mean for BD, Laplace smoothing for BIC.
    pub fn smoothing(&self) -> f64 {
        match self.kind {
            ScoreKind::Bd => 0.5 * self.alpha,
            ScoreKind::Bic => self.beta,
        }
    }

    /// `ln|D| / 2`. Sizes below one sample are treated as one.
    fn penalty_per_param(&self) -> f64 {
        0.5 * self.root_dataset_size.unwrap_or(1.0).max(1.0).ln()
    }

    /// Local score of a leaf tree on its routed data.
    pub(crate) fn leaf_term(&self, tree: &ChowLiuTree, stats: &PairStats) -> f64 {
        match self.kind {
            ScoreKind::Bd => tree.bd_score_from_stats(stats, self.alpha),
            ScoreKind::Bic => {
                let refit = refit_tree(tree, stats, self.beta);
                refit.log_likelihood_from_stats(stats) - self.penalty_per_param() * tree.param_count() as f64
            }
        }
    }

    /// Local score of a decision node given the weight routed to each branch.
    pub(crate) fn decision_term(&self, counts: [f64; 2]) -> f64 {
        match self.kind {
            ScoreKind::Bd => log_dirichlet_binary(counts, self.alpha),
            ScoreKind::Bic => {
                let w = clt::smoothed_row(counts, self.beta);
                xlogy(counts[0], w[0]) + xlogy(counts[1], w[1]) - self.penalty_per_param()
            }
        }
    }
}

/// Weighted counts routed to the two branches of a decision node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SumNodeCounts {
    pub n0: f64,
    pub n1: f64,
}

impl SumNodeCounts {
    pub fn total(&self) -> f64 {
        self.n0 + self.n1
    }

    pub(crate) fn as_array(&self) -> [f64; 2] {
        [self.n0, self.n1]
    }
}

/// BD term of one decision node: a `Dirichlet(alpha/2, alpha/2)` prior over
/// its branch weights, marginalized against the routed counts.
pub fn bd_sum_node(counts: SumNodeCounts, alpha: f64) -> f64 {
    log_dirichlet_binary(counts.as_array(), alpha)
}

fn refit_tree(tree: &ChowLiuTree, stats: &PairStats, beta: f64) -> ChowLiuTree {
    let cpt = (0..tree.n_vars())
        .map(|v| match tree.parents()[v] {
            None => vec![clt::smoothed_row(stats.marginal(v), beta)],
            Some(u) => {
                let t = stats.table(v, u);
                (0..2).map(|pv| clt::smoothed_row([t[0][pv], t[1][pv]], beta)).collect()
            }
        })
        .collect();
    ChowLiuTree::from_parts(tree.variable_ids().to_vec(), tree.parents().to_vec(), cpt)
        .expect("refit keeps the structure")
}

fn check_net_scope(net: &CutsetNetwork, data: &WeightedDataset) -> Result<()> {
    if net.scope() != data.variable_ids() {
        return Err(Error::ScopeMismatch {
            expected: net.scope().to_vec(),
            found: data.variable_ids().to_vec(),
        });
    }
    Ok(())
}

/// Local score terms of every node in preorder (decision before its
/// children, branch 0 before branch 1). Their sum is the network score.
pub fn score_terms(net: &CutsetNetwork, data: &WeightedDataset, cfg: &ScoreConfig) -> Result<Vec<f64>> {
    check_net_scope(net, data)?;
    cfg.validate()?;
    let cfg = cfg.resolved(data.total_weight());
    let mut terms = Vec::new();
    collect_terms(net.root(), data, &cfg, &mut terms)?;
    Ok(terms)
}

fn collect_terms(node: &Node, data: &WeightedDataset, cfg: &ScoreConfig, out: &mut Vec<f64>) -> Result<()> {
    match node {
        Node::Leaf(tree) => {
            out.push(cfg.leaf_term(tree, &PairStats::from_dataset(data)));
        }
        Node::Decision { var, children, .. } => {
            let col = data.column_of(*var)?;
            let parts = data.split_column(col);
            out.push(cfg.decision_term([parts[0].total_weight(), parts[1].total_weight()]));
            collect_terms(&children[0], &parts[0], cfg, out)?;
            collect_terms(&children[1], &parts[1], cfg, out)?;
        }
    }
    Ok(())
}

/// Exact BD log marginal likelihood of the network structure.
pub fn bd_cnet(net: &CutsetNetwork, data: &WeightedDataset, alpha: f64) -> Result<f64> {
    let terms = score_terms(net, data, &ScoreConfig::bd(alpha))?;
    Ok(terms.iter().sum())
}

/// BIC score with parameters re-estimated on `data` and the corrected
/// parameter count.
pub fn bic_cnet(net: &CutsetNetwork, data: &WeightedDataset, cfg: &ScoreConfig) -> Result<f64> {
    if cfg.kind != ScoreKind::Bic {
        return Err(Error::invalid("bic_cnet needs a BIC score config"));
    }
    let terms = score_terms(net, data, cfg)?;
    Ok(terms.iter().sum())
}

/// Score of a network under either configured score.
pub fn score_cnet(net: &CutsetNetwork, data: &WeightedDataset, cfg: &ScoreConfig) -> Result<f64> {
    Ok(score_terms(net, data, cfg)?.iter().sum())
}

/// A candidate cut of a leaf, with the child artifacts needed if accepted.
#[derive(Clone, Debug)]
pub(crate) struct CutCandidate {
    pub var: usize,
    pub delta: f64,
    /// Sum of the magnitudes of the terms `delta` was computed from.
    pub magnitude: f64,
    pub counts: [f64; 2],
    pub children: [ChowLiuTree; 2],
    pub child_terms: [f64; 2],
    pub parts: [WeightedDataset; 2],
}

/// Relative size below which a score change is indistinguishable from
/// rounding.
pub const CUT_TOLERANCE: f64 = 1e-12;

impl CutCandidate {
    /// Whether the cut improves the score by more than rounding error.
    pub fn improves(&self) -> bool {
        self.delta > CUT_TOLERANCE * self.magnitude
    }
}

/// Replaces a leaf on `data` by a decision on local column `col` with two
/// freshly learned child trees. `cfg` must be resolved.
pub(crate) fn evaluate_cut(data: &WeightedDataset, col: usize, leaf_term: f64, cfg: &ScoreConfig) -> CutCandidate {
    let var = data.variable_ids()[col];
    let parts = data.split_column(col);
    let counts = [parts[0].total_weight(), parts[1].total_weight()];
    let learn = |part: &WeightedDataset| {
        let stats = PairStats::from_dataset(part);
        let tree = clt::fit(part.variable_ids().to_vec(), &stats, cfg.smoothing());
        let term = cfg.leaf_term(&tree, &stats);
        (tree, term)
    };
    let (t0, s0) = learn(&parts[0]);
    let (t1, s1) = learn(&parts[1]);
    let decision = cfg.decision_term(counts);
    let delta = decision + s0 + s1 - leaf_term;
    CutCandidate {
        var,
        delta,
        magnitude: decision.abs() + s0.abs() + s1.abs() + leaf_term.abs(),
        counts,
        children: [t0, t1],
        child_terms: [s0, s1],
        parts,
    }
}

/// Change in the configured score when `leaf` (fit to `leaf_data`) is
/// replaced by a decision on `var` with two child trees learned from the
/// restricted data.
pub fn cut_score_delta(leaf: &ChowLiuTree, leaf_data: &WeightedDataset, var: usize, cfg: &ScoreConfig) -> Result<f64> {
    if leaf.variable_ids() != leaf_data.variable_ids() {
        return Err(Error::ScopeMismatch {
            expected: leaf.variable_ids().to_vec(),
            found: leaf_data.variable_ids().to_vec(),
        });
    }
    if leaf.n_vars() < 2 {
        return Err(Error::invalid("a cut needs a leaf over at least two variables"));
    }
    cfg.validate()?;
    let col = leaf_data.column_of(var)?;
    let cfg = cfg.resolved(leaf_data.total_weight());
    let leaf_term = cfg.leaf_term(leaf, &PairStats::from_dataset(leaf_data));
    Ok(evaluate_cut(leaf_data, col, leaf_term, &cfg).delta)
}
