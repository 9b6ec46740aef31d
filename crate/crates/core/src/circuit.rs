//! Explicit sum-product circuits compiled from cutset networks.
//!
//! Nodes are stored in topological order: every input id is smaller than the
//! id of the node consuming it, and the root is the last node.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::clt::ChowLiuTree;
use crate::cnet::{position_in, CutsetNetwork, Node};
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp_unchecked;

#[derive(Clone, Debug, PartialEq)]
pub enum CircuitNode {
    Sum { inputs: Vec<usize>, weights: Vec<f64> },
    Product { inputs: Vec<usize> },
    /// `[x_var == value]`.
    Indicator { var: usize, value: u8 },
    /// `p^x (1 - p)^(1 - x)` for `x = x_var`.
    Bernoulli { var: usize, p: f64 },
}

impl CircuitNode {
    pub fn inputs(&self) -> &[usize] {
        match self {
            CircuitNode::Sum { inputs, .. } | CircuitNode::Product { inputs } => inputs,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    nodes: Vec<CircuitNode>,
    scopes: Vec<Vec<usize>>,
    variables: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CircuitSize {
    pub nodes: usize,
    pub edges: usize,
    /// `k - 1` per sum with `k` inputs, one per Bernoulli leaf.
    pub params: usize,
}

impl Circuit {
    /// Validates a node list whose last node is the root.
    pub fn new(nodes: Vec<CircuitNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("a circuit needs at least one node"));
        }
        let mut scopes: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
        let mut used = vec![false; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            let scope = match node {
                CircuitNode::Indicator { var, value } => {
                    if *value > 1 {
                        return Err(Error::invalid(format!("indicator {id} has non-binary value")));
                    }
                    vec![*var]
                }
                CircuitNode::Bernoulli { var, p } => {
                    if !(0.0..=1.0).contains(p) {
                        return Err(Error::invalid(format!("Bernoulli leaf {id} has p = {p}")));
                    }
                    vec![*var]
                }
                CircuitNode::Sum { inputs, weights } => {
                    if inputs.is_empty() || inputs.len() != weights.len() {
                        return Err(Error::invalid(format!("sum {id} needs one weight per input")));
                    }
                    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                        return Err(Error::invalid(format!("sum {id} weights are not normalized")));
                    }
                    union_scope(id, inputs, &scopes)?
                }
                CircuitNode::Product { inputs } => {
                    if inputs.is_empty() {
                        return Err(Error::invalid(format!("product {id} has no inputs")));
                    }
                    union_scope(id, inputs, &scopes)?
                }
            };
            for &i in node.inputs() {
                used[i] = true;
            }
            scopes.push(scope);
        }
        let root = nodes.len() - 1;
        if let Some(orphan) = (0..root).find(|&i| !used[i]) {
            return Err(Error::invalid(format!("node {orphan} is not reachable from the root")));
        }
        let variables = scopes[root].clone();
        Ok(Self {
            nodes,
            scopes,
            variables,
        })
    }

    pub fn nodes(&self) -> &[CircuitNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn scope(&self, id: usize) -> &[usize] {
        &self.scopes[id]
    }

    /// Variables of the root, sorted. Assignments are aligned with this.
    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    /// Log-value of every node for one full assignment.
    pub fn log_values(&self, x: &[u8]) -> Result<Vec<f64>> {
        if x.len() != self.variables.len() {
            return Err(Error::invalid(format!(
                "assignment has {} values, circuit has {} variables",
                x.len(),
                self.variables.len()
            )));
        }
        Ok(self.log_values_unchecked(x))
    }

    fn log_values_unchecked(&self, x: &[u8]) -> Vec<f64> {
        let value = |var: usize| x[position_in(&self.variables, var)];
        let mut out: Vec<f64> = Vec::with_capacity(self.nodes.len());
        let mut terms = Vec::new();
        for node in &self.nodes {
            let v = match node {
                CircuitNode::Indicator { var, value: want } => {
                    if value(*var) == *want {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                CircuitNode::Bernoulli { var, p } => {
                    if value(*var) == 1 {
                        p.ln()
                    } else {
                        (1.0 - p).ln()
                    }
                }
                CircuitNode::Product { inputs } => inputs.iter().map(|&i| out[i]).sum(),
                CircuitNode::Sum { inputs, weights } => {
                    terms.clear();
                    terms.extend(inputs.iter().zip(weights).map(|(&i, w)| w.ln() + out[i]));
                    log_sum_exp_unchecked(&terms)
                }
            };
            out.push(v);
        }
        out
    }

    /// Log-density at the root.
    pub fn log_eval(&self, x: &[u8]) -> Result<f64> {
        Ok(*self.log_values(x)?.last().unwrap())
    }

    /// Every sum's inputs share one scope.
    pub fn check_smooth(&self) -> bool {
        self.nodes.iter().all(|node| match node {
            CircuitNode::Sum { inputs, .. } => {
                let first = &self.scopes[inputs[0]];
                inputs.iter().all(|&i| &self.scopes[i] == first)
            }
            _ => true,
        })
    }

    /// Every product's inputs have pairwise disjoint scopes.
    pub fn check_decomposable(&self) -> bool {
        self.nodes.iter().all(|node| match node {
            CircuitNode::Product { inputs } => {
                let mut seen = BTreeSet::new();
                inputs
                    .iter()
                    .all(|&i| self.scopes[i].iter().all(|v| seen.insert(*v)))
            }
            _ => true,
        })
    }

    /// At most one input of every sum is nonzero, for each given assignment
    /// or, with `None`, for all assignments (up to 20 variables).
    pub fn check_deterministic(&self, samples: Option<&[Vec<u8>]>) -> Result<bool> {
        let d = self.variables.len();
        let check = |x: &[u8]| {
            let values = self.log_values_unchecked(x);
            self.nodes.iter().all(|node| match node {
                CircuitNode::Sum { inputs, .. } => {
                    inputs.iter().filter(|&&i| values[i] > f64::NEG_INFINITY).count() <= 1
                }
                _ => true,
            })
        };
        match samples {
            Some(rows) => {
                for x in rows {
                    if x.len() != d {
                        return Err(Error::invalid("sample length differs from circuit variable count"));
                    }
                    if !check(x) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            None => {
                if d > 20 {
                    return Err(Error::invalid(format!(
                        "exhaustive determinism check over {d} variables; pass samples instead"
                    )));
                }
                let mut x = vec![0u8; d];
                for mask in 0u32..(1u32 << d) {
                    for (k, slot) in x.iter_mut().enumerate() {
                        *slot = ((mask >> k) & 1) as u8;
                    }
                    if !check(&x) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    pub fn size(&self) -> CircuitSize {
        let mut size = CircuitSize {
            nodes: self.nodes.len(),
            edges: 0,
            params: 0,
        };
        for node in &self.nodes {
            size.edges += node.inputs().len();
            size.params += match node {
                CircuitNode::Sum { inputs, .. } => inputs.len() - 1,
                CircuitNode::Bernoulli { .. } => 1,
                _ => 0,
            };
        }
        size
    }

    /// Text dump, one node per line in topological order:
    /// `id TYPE scope [weights|p=..|var=val|-] inputs`, lists comma-separated
    /// and `-` for an empty field.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: fmt::Display>(items: &[T]) -> String {
            if items.is_empty() {
                return "-".into();
            }
            let mut s = String::new();
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{item}");
            }
            s
        }
        for (id, node) in self.nodes.iter().enumerate() {
            let scope = list(&self.scopes[id]);
            let (kind, payload) = match node {
                CircuitNode::Sum { weights, .. } => ("SUM", list(weights)),
                CircuitNode::Product { .. } => ("PRODUCT", "-".to_string()),
                CircuitNode::Indicator { var, value } => ("INDICATOR", format!("{var}={value}")),
                CircuitNode::Bernoulli { p, .. } => ("BERNOULLI", format!("p={p}")),
            };
            writeln!(f, "{id} {kind} {scope} {payload} {}", list(node.inputs()))?;
        }
        Ok(())
    }
}

fn union_scope(id: usize, inputs: &[usize], scopes: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut set = BTreeSet::new();
    for &i in inputs {
        if i >= id {
            return Err(Error::invalid(format!(
                "node {id} reads node {i}; inputs must precede their consumer"
            )));
        }
        set.extend(scopes[i].iter().copied());
    }
    Ok(set.into_iter().collect())
}

struct Builder {
    nodes: Vec<CircuitNode>,
    indicators: HashMap<(usize, u8), usize>,
}

impl Builder {
    fn push(&mut self, node: CircuitNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn indicator(&mut self, var: usize, value: u8) -> usize {
        if let Some(&id) = self.indicators.get(&(var, value)) {
            return id;
        }
        let id = self.push(CircuitNode::Indicator { var, value });
        self.indicators.insert((var, value), id);
        id
    }

    fn tree(&mut self, tree: &ChowLiuTree) -> usize {
        let d = tree.n_vars();
        let vars = tree.variable_ids();
        let mut children = vec![Vec::new(); d];
        for (v, p) in tree.parents().iter().enumerate() {
            if let Some(u) = p {
                children[*u].push(v);
            }
        }
        // sums[v][u]: distribution of v's subtree given its parent takes u.
        let mut sums: Vec<[usize; 2]> = vec![[usize::MAX; 2]; d];
        let mut pending: Vec<usize> = Vec::with_capacity(d);
        // Reverse BFS order so children are compiled before parents.
        let mut order = vec![tree.root()];
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            order.extend(children[v].iter().copied());
        }
        for &v in order.iter().rev() {
            let mut branch = [0usize; 2];
            for x in 0..2u8 {
                let ind = self.indicator(vars[v], x);
                branch[x as usize] = if children[v].is_empty() {
                    ind
                } else {
                    pending.clear();
                    pending.push(ind);
                    pending.extend(children[v].iter().map(|&c| sums[c][x as usize]));
                    self.push(CircuitNode::Product {
                        inputs: pending.clone(),
                    })
                };
            }
            let rows = &tree.cpt()[v];
            for (u, row) in rows.iter().enumerate() {
                sums[v][u] = self.push(CircuitNode::Sum {
                    inputs: branch.to_vec(),
                    weights: row.to_vec(),
                });
            }
        }
        sums[tree.root()][0]
    }

    fn node(&mut self, node: &Node) -> usize {
        match node {
            Node::Leaf(tree) => self.tree(tree),
            Node::Decision { var, weights, children } => {
                let mut branch = [0usize; 2];
                for k in 0..2u8 {
                    let sub = self.node(&children[k as usize]);
                    let ind = self.indicator(*var, k);
                    branch[k as usize] = self.push(CircuitNode::Product { inputs: vec![ind, sub] });
                }
                self.push(CircuitNode::Sum {
                    inputs: branch.to_vec(),
                    weights: weights.to_vec(),
                })
            }
        }
    }
}

/// Compiles a cutset network into a smooth, decomposable, deterministic
/// circuit computing the same density.
pub fn compile(net: &CutsetNetwork) -> Circuit {
    let mut builder = Builder {
        nodes: Vec::new(),
        indicators: HashMap::new(),
    };
    let root = builder.node(net.root());
    debug_assert_eq!(root + 1, builder.nodes.len());
    Circuit::new(builder.nodes).expect("compiled circuit is valid by construction")
}

/// Decisions taken by `x`: `(decision id, branch)` pairs, where decision ids
/// number decision nodes in preorder (branch 0 subtree before branch 1).
pub fn induced_path(net: &CutsetNetwork, x: &[u8]) -> Result<Vec<(usize, u8)>> {
    if x.len() != net.n_vars() {
        return Err(Error::invalid(format!(
            "assignment has {} values, network has {} variables",
            x.len(),
            net.n_vars()
        )));
    }
    fn decisions(node: &Node) -> usize {
        match node {
            Node::Leaf(_) => 0,
            Node::Decision { children, .. } => 1 + decisions(&children[0]) + decisions(&children[1]),
        }
    }
    let mut path = Vec::new();
    let mut node = net.root();
    let mut id = 0;
    while let Node::Decision { var, children, .. } = node {
        let k = x[net.position(*var)];
        if k > 1 {
            return Err(Error::invalid("assignment values must be 0 or 1"));
        }
        path.push((id, k));
        id += 1;
        if k == 1 {
            id += decisions(&children[0]);
        }
        node = &children[k as usize];
    }
    Ok(path)
}
