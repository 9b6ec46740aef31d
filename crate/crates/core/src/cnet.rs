//! Cutset networks and the score-guided greedy learner.

use rand::Rng;

use crate::clt::{self, ChowLiuTree};
use crate::data::{PairStats, WeightedDataset};
use crate::error::{Error, Result};
use crate::numerics::entropy_unchecked;
use crate::par;
use crate::scores::{evaluate_cut, CutCandidate, ScoreConfig, SumNodeCounts};

/// A node of a cutset network.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Branches on a variable; `weights[k]` and `children[k]` belong to the
    /// branch where the variable takes value `k`.
    Decision {
        var: usize,
        weights: [f64; 2],
        children: Box<[Node; 2]>,
    },
    Leaf(ChowLiuTree),
}

impl Node {
    pub fn decision(var: usize, weights: [f64; 2], child0: Node, child1: Node) -> Self {
        Node::Decision {
            var,
            weights,
            children: Box::new([child0, child1]),
        }
    }

    fn for_each_preorder<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        if let Node::Decision { children, .. } = self {
            children[0].for_each_preorder(f);
            children[1].for_each_preorder(f);
        }
    }
}

/// A binary decision tree over variables with Chow-Liu trees at the leaves.
///
/// Assignments passed to evaluation methods are aligned with [`scope`].
///
/// [`scope`]: CutsetNetwork::scope
#[derive(Clone, Debug, PartialEq)]
pub struct CutsetNetwork {
    scope: Vec<usize>,
    root: Node,
}

impl CutsetNetwork {
    /// Validates and wraps a node tree over `scope`.
    pub fn new(scope: Vec<usize>, root: Node) -> Result<Self> {
        if scope.is_empty() || scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("network scope must be nonempty and strictly ascending"));
        }
        validate(&root, &scope)?;
        Ok(Self { scope, root })
    }

    /// Network consisting of a single leaf.
    pub fn leaf(tree: ChowLiuTree) -> Self {
        Self {
            scope: tree.variable_ids().to_vec(),
            root: Node::Leaf(tree),
        }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn n_vars(&self) -> usize {
        self.scope.len()
    }

    pub fn decision_count(&self) -> usize {
        let mut n = 0;
        self.root.for_each_preorder(&mut |node| {
            if matches!(node, Node::Decision { .. }) {
                n += 1;
            }
        });
        n
    }

    /// Leaf trees in preorder.
    pub fn leaves(&self) -> Vec<&ChowLiuTree> {
        let mut out = Vec::new();
        self.root.for_each_preorder(&mut |node| {
            if let Node::Leaf(t) = node {
                out.push(t);
            }
        });
        out
    }

    pub fn depth(&self) -> usize {
        fn go(node: &Node) -> usize {
            match node {
                Node::Leaf(_) => 0,
                Node::Decision { children, .. } => 1 + go(&children[0]).max(go(&children[1])),
            }
        }
        go(&self.root)
    }

    /// Independent parameter count: one per decision node plus `2d - 1` per
    /// leaf tree over `d` variables.
    pub fn param_count(&self) -> usize {
        self.decision_count() + self.leaves().iter().map(|t| t.param_count()).sum::<usize>()
    }

    /// The count that ignores leaf parameters (decision nodes only).
    pub fn decision_only_param_count(&self) -> usize {
        self.decision_count()
    }

    #[inline]
    pub(crate) fn position(&self, var: usize) -> usize {
        position_in(&self.scope, var)
    }

    fn check_assignment(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.n_vars() {
            return Err(Error::invalid(format!(
                "assignment has {} values, network has {} variables",
                x.len(),
                self.n_vars()
            )));
        }
        if x.iter().any(|&v| v > 1) {
            return Err(Error::invalid("assignment values must be 0 or 1"));
        }
        Ok(())
    }

    /// Log-density of a full assignment.
    pub fn log_density(&self, x: &[u8]) -> Result<f64> {
        self.check_assignment(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[u8]) -> f64 {
        let mut lp = 0.0;
        let mut node = &self.root;
        loop {
            match node {
                Node::Decision { var, weights, children } => {
                    let k = x[self.position(*var)] as usize;
                    lp += weights[k].ln();
                    node = &children[k];
                }
                Node::Leaf(tree) => {
                    let vars = tree.variable_ids();
                    return lp + tree.log_prob_with(|k| x[self.position(vars[k])]);
                }
            }
        }
    }

    /// Weighted log-likelihood of a dataset over the network scope.
    pub fn log_likelihood(&self, data: &WeightedDataset) -> Result<f64> {
        if data.variable_ids() != self.scope.as_slice() {
            return Err(Error::ScopeMismatch {
                expected: self.scope.clone(),
                found: data.variable_ids().to_vec(),
            });
        }
        let per_row = par::map_range(data.n_rows(), |r| {
            let w = data.weights()[r];
            if w == 0.0 {
                0.0
            } else {
                w * self.log_density_unchecked(data.row(r))
            }
        });
        Ok(per_row.iter().sum())
    }

    /// Draws one assignment: branch by weights, then sample the leaf tree.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        let mut x = vec![0u8; self.n_vars()];
        let mut node = &self.root;
        loop {
            match node {
                Node::Decision { var, weights, children } => {
                    let k = usize::from(rng.gen::<f64>() >= weights[0]);
                    x[self.position(*var)] = k as u8;
                    node = &children[k];
                }
                Node::Leaf(tree) => {
                    let local = tree.sample(rng);
                    for (k, &var) in tree.variable_ids().iter().enumerate() {
                        x[self.position(var)] = local[k];
                    }
                    return x;
                }
            }
        }
    }

    /// Most probable completion of `(variable, value)` evidence.
    ///
    /// Observed decision variables are followed; unobserved ones take the
    /// branch maximizing `ln w_k` plus the child's MPE value, preferring
    /// branch 0 on ties. Leaves are solved exactly by max-product. The
    /// returned score is the log-density of the returned assignment.
    pub fn mpe(&self, evidence: &[(usize, u8)]) -> Result<(Vec<u8>, f64)> {
        let mut fixed = vec![None; self.n_vars()];
        for &(var, value) in evidence {
            let pos = self
                .scope
                .binary_search(&var)
                .map_err(|_| Error::UnknownVariable(var))?;
            if value > 1 {
                return Err(Error::invalid(format!("evidence value {value} is not binary")));
            }
            fixed[pos] = Some(value);
        }
        Ok(self.mpe_fixed(&fixed))
    }

    /// MPE with evidence aligned to the scope.
    pub fn mpe_fixed(&self, fixed: &[Option<u8>]) -> (Vec<u8>, f64) {
        let mut x = vec![0u8; self.n_vars()];
        let (_, settings) = self.mpe_node(&self.root, fixed);
        for (pos, value) in settings {
            x[pos] = value;
        }
        let score = self.log_density_unchecked(&x);
        (x, score)
    }

    fn mpe_node(&self, node: &Node, fixed: &[Option<u8>]) -> (f64, Vec<(usize, u8)>) {
        match node {
            Node::Leaf(tree) => {
                let vars = tree.variable_ids();
                let local: Vec<_> = vars.iter().map(|&v| fixed[self.position(v)]).collect();
                let (assignment, score) = tree.mpe_local(&local);
                let settings = vars
                    .iter()
                    .zip(assignment)
                    .map(|(&v, value)| (self.position(v), value))
                    .collect();
                (score, settings)
            }
            Node::Decision { var, weights, children } => {
                let pos = self.position(*var);
                let branch = |k: usize| {
                    let (s, mut settings) = self.mpe_node(&children[k], fixed);
                    settings.push((pos, k as u8));
                    (weights[k].ln() + s, settings)
                };
                match fixed[pos] {
                    Some(k) => branch(k as usize),
                    None => {
                        let b0 = branch(0);
                        let b1 = branch(1);
                        if b1.0 > b0.0 {
                            b1
                        } else {
                            b0
                        }
                    }
                }
            }
        }
    }

    /// Weighted branch counts of every decision node, in preorder.
    pub fn routed_counts(&self, data: &WeightedDataset) -> Result<Vec<SumNodeCounts>> {
        if data.variable_ids() != self.scope.as_slice() {
            return Err(Error::ScopeMismatch {
                expected: self.scope.clone(),
                found: data.variable_ids().to_vec(),
            });
        }
        fn go(node: &Node, data: &WeightedDataset, out: &mut Vec<SumNodeCounts>) {
            if let Node::Decision { var, children, .. } = node {
                let col = data.column_of(*var).expect("validated scope");
                let parts = data.split_column(col);
                out.push(SumNodeCounts {
                    n0: parts[0].total_weight(),
                    n1: parts[1].total_weight(),
                });
                go(&children[0], &parts[0], out);
                go(&children[1], &parts[1], out);
            }
        }
        let mut out = Vec::new();
        go(&self.root, data, &mut out);
        Ok(out)
    }
}

/// Position of `var` in a sorted scope. Contiguous scopes are indexed
/// directly.
#[inline]
pub(crate) fn position_in(scope: &[usize], var: usize) -> usize {
    let first = scope[0];
    if scope[scope.len() - 1] - first == scope.len() - 1 {
        var - first
    } else {
        scope.binary_search(&var).expect("variable in scope")
    }
}

fn validate(node: &Node, scope: &[usize]) -> Result<()> {
    match node {
        Node::Leaf(tree) => {
            if tree.variable_ids() != scope {
                return Err(Error::ScopeMismatch {
                    expected: scope.to_vec(),
                    found: tree.variable_ids().to_vec(),
                });
            }
            Ok(())
        }
        Node::Decision { var, weights, children } => {
            let pos = scope
                .binary_search(var)
                .map_err(|_| Error::invalid(format!("decision variable {var} repeated on a path or outside scope")))?;
            if weights.iter().any(|w| !(*w >= 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("decision weights {weights:?} are not normalized")));
            }
            let mut rest = scope.to_vec();
            rest.remove(pos);
            if rest.is_empty() {
                return Err(Error::invalid("decision leaves no variables for its leaves"));
            }
            validate(&children[0], &rest)?;
            validate(&children[1], &rest)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub score: ScoreConfig,
    /// Number of candidate variables scored at each leaf.
    pub lambda: usize,
}

pub const DEFAULT_LAMBDA: usize = 10;

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            score: ScoreConfig::default(),
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl LearnerConfig {
    pub fn new(score: ScoreConfig) -> Self {
        Self {
            score,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 1 {
            return Err(Error::invalid("lambda must be at least 1"));
        }
        self.score.validate()
    }
}

/// One accepted cut, in depth-first order of the final network.
#[derive(Clone, Debug, PartialEq)]
pub struct CutRecord {
    pub var: usize,
    pub depth: usize,
    pub delta: f64,
}

/// What happened during learning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnTrace {
    /// Score of the single-tree model on the full data.
    pub initial_score: f64,
    pub cuts: Vec<CutRecord>,
}

impl LearnTrace {
    /// Global score after each accepted cut, in trace order.
    pub fn score_path(&self) -> Vec<f64> {
        let mut s = self.initial_score;
        self.cuts
            .iter()
            .map(|c| {
                s += c.delta;
                s
            })
            .collect()
    }

    pub fn final_score(&self) -> f64 {
        self.initial_score + self.cuts.iter().map(|c| c.delta).sum::<f64>()
    }
}

/// Information gain of conditioning on `var`: drop in the mean per-variable
/// entropy.
pub fn information_gain(data: &WeightedDataset, var: usize) -> Result<f64> {
    if data.n_vars() < 2 {
        return Err(Error::invalid("information gain needs at least two variables"));
    }
    let col = data.column_of(var)?;
    Ok(information_gains(&PairStats::from_dataset(data))[col])
}

/// Gains of every local column from one pass of pair statistics.
pub(crate) fn information_gains(stats: &PairStats) -> Vec<f64> {
    let d = stats.n_vars();
    let total = stats.total;
    if !(total > 0.0) {
        return vec![0.0; d];
    }
    let mean_entropy = |counts: &dyn Fn(usize) -> [f64; 2]| -> f64 {
        (0..d).map(|v| entropy_unchecked(&counts(v))).sum::<f64>() / d as f64
    };
    let base = mean_entropy(&|v| stats.marginal(v));
    (0..d)
        .map(|i| {
            let mut expected = 0.0;
            for value in 0..2 {
                let size = stats.marginal(i)[value];
                if size > 0.0 {
                    let h = mean_entropy(&|v| {
                        if v == i {
                            [size * (1 - value) as f64, size * value as f64]
                        } else {
                            let t = stats.table(i, v);
                            [t[value][0], t[value][1]]
                        }
                    });
                    expected += size / total * h;
                }
            }
            base - expected
        })
        .collect()
}

/// The `lambda` variables with the largest information gain, ties to the
/// lower variable id.
pub fn select_best_candidates(data: &WeightedDataset, lambda: usize) -> Result<Vec<usize>> {
    if data.n_vars() < 2 {
        return Err(Error::invalid("candidate selection needs at least two variables"));
    }
    let cols = top_candidates(&PairStats::from_dataset(data), lambda);
    Ok(cols.into_iter().map(|c| data.variable_ids()[c]).collect())
}

fn top_candidates(stats: &PairStats, lambda: usize) -> Vec<usize> {
    let gains = information_gains(stats);
    let mut cols: Vec<usize> = (0..gains.len()).collect();
    cols.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    cols.truncate(lambda);
    cols
}

/// Outcome of scoring every candidate cut of one leaf.
#[derive(Clone, Debug)]
pub struct BestCut {
    pub var: usize,
    pub delta: f64,
    pub children: [ChowLiuTree; 2],
    pub parts: [WeightedDataset; 2],
    pub(crate) child_terms: [f64; 2],
    pub(crate) counts: [f64; 2],
}

/// Scores a cut on each candidate and returns the best one if it improves
/// the score by more than rounding error. Equal deltas go to the lower
/// variable id.
pub fn select_best_cut(leaf_data: &WeightedDataset, candidates: &[usize], cfg: &LearnerConfig) -> Result<Option<BestCut>> {
    cfg.validate()?;
    if leaf_data.n_vars() < 2 {
        return Err(Error::invalid("a cut needs a leaf over at least two variables"));
    }
    let cols = candidates
        .iter()
        .map(|&v| leaf_data.column_of(v))
        .collect::<Result<Vec<_>>>()?;
    let score = cfg.score.resolved(leaf_data.total_weight());
    let stats = PairStats::from_dataset(leaf_data);
    let leaf = clt::fit(leaf_data.variable_ids().to_vec(), &stats, score.smoothing());
    let leaf_term = score.leaf_term(&leaf, &stats);
    Ok(best_cut(leaf_data, &cols, leaf_term, &score))
}

fn best_cut(data: &WeightedDataset, cols: &[usize], leaf_term: f64, score: &ScoreConfig) -> Option<BestCut> {
    let mut sorted = cols.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let evaluated: Vec<CutCandidate> = par::map(&sorted, |&c| evaluate_cut(data, c, leaf_term, score));
    let mut best: Option<CutCandidate> = None;
    for cand in evaluated {
        // Ascending variable order, so a strict comparison keeps the lower id.
        if cand.improves() && best.as_ref().map_or(true, |b| cand.delta > b.delta) {
            best = Some(cand);
        }
    }
    best.map(|c| BestCut {
        var: c.var,
        delta: c.delta,
        children: c.children,
        parts: c.parts,
        child_terms: c.child_terms,
        counts: c.counts,
    })
}

/// Learns a cutset network by greedy score-guided conditioning.
pub fn learn_cnet(data: &WeightedDataset, cfg: &LearnerConfig) -> Result<CutsetNetwork> {
    learn_cnet_traced(data, cfg).map(|(net, _)| net)
}

/// [`learn_cnet`] that also reports the accepted cuts.
pub fn learn_cnet_traced(data: &WeightedDataset, cfg: &LearnerConfig) -> Result<(CutsetNetwork, LearnTrace)> {
    cfg.validate()?;
    if data.n_vars() == 0 {
        return Err(Error::invalid("cannot learn a network over zero variables"));
    }
    let total = data.total_weight();
    if !(total > 0.0) {
        return Err(Error::invalid("cannot learn from a dataset with zero total weight"));
    }
    let score = cfg.score.resolved(total);
    let stats = PairStats::from_dataset(data);
    let tree = clt::fit(data.variable_ids().to_vec(), &stats, score.smoothing());
    let term = score.leaf_term(&tree, &stats);
    let (root, cuts) = grow(data.clone(), tree, term, &score, cfg.lambda, 0);
    let net = CutsetNetwork {
        scope: data.variable_ids().to_vec(),
        root,
    };
    debug_assert!(validate(&net.root, &net.scope).is_ok());
    Ok((
        net,
        LearnTrace {
            initial_score: term,
            cuts,
        },
    ))
}

fn grow(
    data: WeightedDataset,
    tree: ChowLiuTree,
    term: f64,
    score: &ScoreConfig,
    lambda: usize,
    depth: usize,
) -> (Node, Vec<CutRecord>) {
    if data.n_vars() < 2 || !(data.total_weight() > 0.0) {
        return (Node::Leaf(tree), Vec::new());
    }
    let candidates = top_candidates(&PairStats::from_dataset(&data), lambda);
    let Some(cut) = best_cut(&data, &candidates, term, score) else {
        return (Node::Leaf(tree), Vec::new());
    };
    drop(data);
    let weights = clt::smoothed_row(cut.counts, score.smoothing());
    let [t0, t1] = cut.children;
    let [d0, d1] = cut.parts;
    let [s0, s1] = cut.child_terms;
    let ((n0, c0), (n1, c1)) = par::join(
        || grow(d0, t0, s0, score, lambda, depth + 1),
        || grow(d1, t1, s1, score, lambda, depth + 1),
    );
    let mut cuts = Vec::with_capacity(1 + c0.len() + c1.len());
    cuts.push(CutRecord {
        var: cut.var,
        depth,
        delta: cut.delta,
    });
    cuts.extend(c0);
    cuts.extend(c1);
    (Node::decision(cut.var, weights, n0, n1), cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clt::learn_clt;
    use crate::scores::{bd_cnet, score_cnet, ScoreKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bernoulli_leaf(var: usize, p1: f64) -> Node {
        Node::Leaf(ChowLiuTree::from_parts(vec![var], vec![None], vec![vec![[1.0 - p1, p1]]]).unwrap())
    }

    fn all_assignments(d: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1u32 << d).map(move |m| (0..d).map(|k| ((m >> k) & 1) as u8).collect())
    }

    #[test]
    fn information_gain_examples() {
        let d = WeightedDataset::from_rows(&[[0, 0], [1, 1]]).unwrap();
        assert!((information_gain(&d, 0).unwrap() - 2f64.ln()).abs() < 1e-15);

        let constant = WeightedDataset::from_rows(&[[0, 0], [0, 1], [0, 1]]).unwrap();
        assert!(information_gain(&constant, 0).unwrap().abs() < 1e-15);

        let single = WeightedDataset::from_rows(&[[0], [1]]).unwrap();
        assert!(information_gain(&single, 0).is_err());
    }

    #[test]
    fn information_gain_matches_restriction_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cells: Vec<u8> = (0..5 * 60).map(|_| rng.gen_range(0..2)).collect();
        let weights: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..2.0)).collect();
        let d = WeightedDataset::new(cells, weights, (0..5).collect()).unwrap();
        let mean_h = |ds: &WeightedDataset| -> f64 {
            // Restricted datasets drop the conditioning column, which has
            // zero entropy there; the mean still divides by all 5 variables.
            let mut h = 0.0;
            for v in ds.variable_ids() {
                let col = ds.column_of(*v).unwrap();
                let mut c = [0.0; 2];
                for (row, w) in ds.rows().zip(ds.weights()) {
                    c[row[col] as usize] += w;
                }
                h += entropy_unchecked(&c);
            }
            h / 5.0
        };
        for var in 0..5 {
            let total = d.total_weight();
            let mut expected = mean_h(&d);
            for value in 0..2 {
                let r = d.restrict(var, value).unwrap();
                expected -= r.total_weight() / total * mean_h(&r);
            }
            let got = information_gain(&d, var).unwrap();
            assert!((got - expected).abs() < 1e-12, "{var}: {got} vs {expected}");
        }
    }

    #[test]
    fn candidate_selection() {
        let d = WeightedDataset::from_rows(&[[0, 0, 1], [1, 1, 1]]).unwrap();
        let all = select_best_candidates(&d, 10).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(*all.last().unwrap(), 2);
        assert_eq!(select_best_candidates(&d, 1).unwrap(), vec![0]);

        let flat = WeightedDataset::from_rows(&[[0, 0, 0], [0, 0, 0]]).unwrap();
        assert_eq!(select_best_candidates(&flat, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn single_variable_data_is_one_leaf() {
        let d = WeightedDataset::from_rows(&[[0], [1], [1]]).unwrap();
        let net = learn_cnet(&d, &LearnerConfig::default()).unwrap();
        assert_eq!(net.decision_count(), 0);
        assert_eq!(net.leaves().len(), 1);
    }

    #[test]
    fn zero_weight_is_an_error() {
        let d = WeightedDataset::new(vec![0, 1], vec![0.0], vec![0, 1]).unwrap();
        assert!(learn_cnet(&d, &LearnerConfig::default()).is_err());
    }

    #[test]
    fn depth_one_density_by_definition() {
        let t0 = ChowLiuTree::from_parts(vec![1], vec![None], vec![vec![[0.2, 0.8]]]).unwrap();
        let t1 = ChowLiuTree::from_parts(vec![1], vec![None], vec![vec![[0.6, 0.4]]]).unwrap();
        let net = CutsetNetwork::new(vec![0, 1], Node::decision(0, [0.3, 0.7], Node::Leaf(t0), Node::Leaf(t1))).unwrap();
        let got = net.log_density(&[0, 1]).unwrap();
        assert!((got - (0.3f64.ln() + 0.8f64.ln())).abs() < 1e-15);
        let got = net.log_density(&[1, 0]).unwrap();
        assert!((got - (0.7f64.ln() + 0.6f64.ln())).abs() < 1e-15);
        assert!(net.log_density(&[1]).is_err());
    }

    #[test]
    fn rejects_repeated_decision_variable() {
        let inner = Node::decision(0, [0.5, 0.5], bernoulli_leaf(1, 0.5), bernoulli_leaf(1, 0.5));
        assert!(CutsetNetwork::new(vec![0, 1], Node::decision(0, [0.5, 0.5], inner.clone(), inner)).is_err());
        assert!(CutsetNetwork::new(vec![0, 1], Node::decision(0, [0.5, 0.6], bernoulli_leaf(1, 0.5), bernoulli_leaf(1, 0.5))).is_err());
    }

    fn two_regime(rng: &mut ChaCha8Rng, n: usize, d: usize) -> WeightedDataset {
        let mut cells = Vec::with_capacity(n * d);
        for _ in 0..n {
            let regime: u8 = rng.gen_range(0..2);
            cells.push(regime);
            let mut prev = rng.gen_range(0..2u8);
            for v in 1..d {
                let x = if regime == 0 {
                    // chain: copy previous with prob 0.9
                    if rng.gen_bool(0.9) { prev } else { 1 - prev }
                } else if v % 2 == 0 {
                    u8::from(rng.gen_bool(0.85))
                } else {
                    u8::from(rng.gen_bool(0.1))
                };
                cells.push(x);
                prev = x;
            }
        }
        WeightedDataset::new(cells, vec![1.0; n], (0..d).collect()).unwrap()
    }

    #[test]
    fn two_regime_data_cuts_on_regime_variable() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = two_regime(&mut rng, 512, 6);
        let candidates: Vec<usize> = (0..6).collect();
        let cut = select_best_cut(&d, &candidates, &LearnerConfig::default()).unwrap().unwrap();
        assert_eq!(cut.var, 0);
    }

    #[test]
    fn learned_densities_normalize_and_trace_is_consistent() {
        for (seed, kind) in [(1, ScoreKind::Bd), (2, ScoreKind::Bic), (3, ScoreKind::Bd)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = two_regime(&mut rng, 600, 8);
            let cfg = LearnerConfig::new(match kind {
                ScoreKind::Bd => ScoreConfig::bd(0.1),
                ScoreKind::Bic => ScoreConfig::bic(0.01),
            });
            let (net, trace) = learn_cnet_traced(&d, &cfg).unwrap();
            assert!(net.decision_count() > 0);
            assert_eq!(trace.cuts.len(), net.decision_count());
            assert!(trace.cuts.iter().all(|c| c.delta > 0.0));
            let total: f64 = all_assignments(8).map(|x| net.log_density(&x).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
            let direct = score_cnet(&net, &d, &cfg.score).unwrap();
            assert!(
                (direct - trace.final_score()).abs() <= 1e-9 * direct.abs(),
                "{direct} vs {}",
                trace.final_score()
            );
            let single = learn_clt(&d, cfg.score.smoothing()).unwrap();
            let single_score = score_cnet(&CutsetNetwork::leaf(single), &d, &cfg.score).unwrap();
            assert!((single_score - trace.initial_score).abs() <= 1e-12 * single_score.abs());
            assert!(direct > single_score);
        }
    }

    #[test]
    fn learning_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = two_regime(&mut rng, 400, 7);
        let a = learn_cnet(&d, &LearnerConfig::default()).unwrap();
        let b = learn_cnet(&d, &LearnerConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mpe_against_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = two_regime(&mut rng, 300, 8);
        let net = learn_cnet(&d, &LearnerConfig::default()).unwrap();
        for _ in 0..30 {
            let mut evidence: Vec<(usize, u8)> = Vec::new();
            for v in 0..8 {
                if rng.gen_bool(0.3) {
                    evidence.push((v, rng.gen_range(0..2)));
                }
            }
            let (x, score) = net.mpe(&evidence).unwrap();
            assert_eq!(score, net.log_density(&x).unwrap());
            for &(v, value) in &evidence {
                assert_eq!(x[v], value);
            }
            let best = all_assignments(8)
                .filter(|y| evidence.iter().all(|&(v, value)| y[v] == value))
                .map(|y| net.log_density(&y).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(score <= best + 1e-12);
            assert!((score - best).abs() < 1e-12, "{score} vs {best}");
        }
        let full: Vec<(usize, u8)> = (0..8).map(|v| (v, (v % 2) as u8)).collect();
        let (x, score) = net.mpe(&full).unwrap();
        assert_eq!(x, vec![0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(score, net.log_density(&x).unwrap());
        assert!(net.mpe(&[(42, 0)]).is_err());
    }

    #[test]
    fn sampling_follows_branch_weights() {
        let net = CutsetNetwork::new(
            vec![0, 1],
            Node::decision(0, [0.25, 0.75], bernoulli_leaf(1, 1.0), bernoulli_leaf(1, 0.0)),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 20_000;
        let mut ones = 0;
        for _ in 0..n {
            let x = net.sample(&mut rng);
            assert_eq!(x[1], 1 - x[0]);
            ones += x[0] as usize;
        }
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.015);
    }

    #[test]
    fn routed_counts_partition_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = two_regime(&mut rng, 500, 6);
        let net = learn_cnet(&d, &LearnerConfig::default()).unwrap();
        let counts = net.routed_counts(&d).unwrap();
        assert_eq!(counts.len(), net.decision_count());
        assert!((counts[0].total() - d.total_weight()).abs() < 1e-12);
        let _ = bd_cnet(&net, &d, 0.1).unwrap();
    }

    #[test]
    fn reparametrizing_cut_is_rejected() {
        // A cut on the root of a two-variable tree yields the same
        // distribution, score terms and parameter count as the tree itself,
        // so its score change is zero up to rounding.
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(50..500);
            let rows: Vec<[u8; 2]> = (0..n)
                .map(|_| {
                    let a = u8::from(rng.gen_bool(0.4));
                    let b = if rng.gen_bool(0.85) { a } else { 1 - a };
                    [a, b]
                })
                .collect();
            let d = WeightedDataset::from_rows(&rows).unwrap();
            for score in [ScoreConfig::bd(0.1), ScoreConfig::bic(0.01)] {
                let cfg = LearnerConfig::new(score);
                assert!(select_best_cut(&d, &[0], &cfg).unwrap().is_none(), "seed {seed}");
            }
        }
    }
}
