//! Chow-Liu trees: learning, scoring and inference.

use std::cmp::Ordering;

use rand::Rng;

use crate::data::{PairStats, PairTable, WeightedDataset};
use crate::error::{Error, Result};
use crate::numerics::{log_dirichlet_binary, xlogy};

/// A tree-shaped Bayesian network over binary variables.
///
/// `parent` and the CPT layout use local positions into `variable_ids`.
/// The root's CPT has a single row; every other variable has one row per
/// parent value. Each row is `(p(x = 0 | u), p(x = 1 | u))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChowLiuTree {
    variable_ids: Vec<usize>,
    parent: Vec<Option<usize>>,
    cpt: Vec<Vec<[f64; 2]>>,
    // Derived: root-first traversal order, children lists and log-CPTs.
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
    log_cpt: Vec<[[f64; 2]; 2]>,
}

impl ChowLiuTree {
    /// Assembles a tree from explicit parts and validates it.
    pub fn from_parts(
        variable_ids: Vec<usize>,
        parent: Vec<Option<usize>>,
        cpt: Vec<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let d = variable_ids.len();
        if d == 0 {
            return Err(Error::invalid("a Chow-Liu tree needs at least one variable"));
        }
        if variable_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("tree variable ids must be strictly ascending"));
        }
        if parent.len() != d || cpt.len() != d {
            return Err(Error::invalid("parent map and CPT list must cover every variable"));
        }
        let roots = parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::invalid(format!("tree has {roots} roots, expected 1")));
        }
        let mut children = vec![Vec::new(); d];
        for (v, p) in parent.iter().enumerate() {
            match *p {
                Some(u) if u >= d || u == v => {
                    return Err(Error::invalid(format!("variable {v} has invalid parent {u}")))
                }
                Some(u) => children[u].push(v),
                None => {}
            }
        }
        let root = parent.iter().position(|p| p.is_none()).unwrap();
        let mut order = Vec::with_capacity(d);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            order.extend(children[v].iter().copied());
        }
        if order.len() != d {
            return Err(Error::invalid("parent pointers do not form a connected tree"));
        }
        for (v, rows) in cpt.iter().enumerate() {
            let expected = if parent[v].is_some() { 2 } else { 1 };
            if rows.len() != expected {
                return Err(Error::invalid(format!(
                    "variable {v} has {} CPT rows, expected {expected}",
                    rows.len()
                )));
            }
            for row in rows {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row[0] + row[1] - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("CPT row {row:?} of variable {v} is not normalized")));
                }
            }
        }
        let log_cpt = cpt
            .iter()
            .map(|rows| {
                let r0 = rows[0];
                let r1 = *rows.last().unwrap();
                [[r0[0].ln(), r0[1].ln()], [r1[0].ln(), r1[1].ln()]]
            })
            .collect();
        Ok(Self {
            variable_ids,
            parent,
            cpt,
            order,
            children,
            log_cpt,
        })
    }

    pub fn variable_ids(&self) -> &[usize] {
        &self.variable_ids
    }

    pub fn n_vars(&self) -> usize {
        self.variable_ids.len()
    }

    /// Parent of each local variable, as a local position.
    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn cpt(&self) -> &[Vec<[f64; 2]>] {
        &self.cpt
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    /// Undirected edges as sorted `(global, global)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| {
                p.map(|u| {
                    let (a, b) = (self.variable_ids[u], self.variable_ids[v]);
                    (a.min(b), a.max(b))
                })
            })
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Number of free parameters: one for the root, two for every other
    /// variable.
    pub fn param_count(&self) -> usize {
        2 * self.n_vars() - 1
    }

    #[inline]
    fn log_theta(&self, v: usize, parent_value: u8, value: u8) -> f64 {
        self.log_cpt[v][parent_value as usize][value as usize]
    }

    /// Log-probability of an assignment; `value(k)` yields local variable k.
    pub(crate) fn log_prob_with(&self, value: impl Fn(usize) -> u8) -> f64 {
        let mut lp = 0.0;
        for v in 0..self.n_vars() {
            let u = self.parent[v].map_or(0, &value);
            lp += self.log_theta(v, u, value(v));
        }
        lp
    }

    /// Log-probability of one assignment aligned with `variable_ids`.
    pub fn log_prob(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n_vars() {
            return Err(Error::invalid(format!(
                "assignment has {} values, tree has {} variables",
                x.len(),
                self.n_vars()
            )));
        }
        Ok(self.log_prob_with(|k| x[k]))
    }

    fn check_scope(&self, data: &WeightedDataset) -> Result<()> {
        if data.variable_ids() != self.variable_ids.as_slice() {
            return Err(Error::ScopeMismatch {
                expected: self.variable_ids.clone(),
                found: data.variable_ids().to_vec(),
            });
        }
        Ok(())
    }

    /// Weighted log-likelihood of a dataset over exactly this tree's scope.
    pub fn log_likelihood(&self, data: &WeightedDataset) -> Result<f64> {
        self.check_scope(data)?;
        let mut ll = 0.0;
        for (row, &w) in data.rows().zip(data.weights()) {
            if w != 0.0 {
                ll += w * self.log_prob_with(|k| row[k]);
            }
        }
        Ok(ll)
    }

    /// Bayesian-Dirichlet log marginal likelihood of the tree structure.
    ///
    /// Every CPT row gets a `Dirichlet(alpha / 2, alpha / 2)` prior; the stored
    /// parameters are not used.
    pub fn bd_score(&self, data: &WeightedDataset, alpha: f64) -> Result<f64> {
        self.check_scope(data)?;
        if !(alpha > 0.0) {
            return Err(Error::Domain {
                function: "bd_score",
                value: alpha,
            });
        }
        Ok(self.bd_score_from_stats(&PairStats::from_dataset(data), alpha))
    }

    pub(crate) fn bd_score_from_stats(&self, stats: &PairStats, alpha: f64) -> f64 {
        let mut score = 0.0;
        for v in 0..self.n_vars() {
            match self.parent[v] {
                None => score += log_dirichlet_binary(stats.marginal(v), alpha),
                Some(u) => {
                    let table = stats.table(v, u);
                    for pv in 0..2 {
                        score += log_dirichlet_binary([table[0][pv], table[1][pv]], alpha);
                    }
                }
            }
        }
        score
    }

    /// Log-likelihood computed from sufficient statistics.
    pub(crate) fn log_likelihood_from_stats(&self, stats: &PairStats) -> f64 {
        let mut ll = 0.0;
        for v in 0..self.n_vars() {
            match self.parent[v] {
                None => {
                    let m = stats.marginal(v);
                    ll += xlogy(m[0], self.cpt[v][0][0]) + xlogy(m[1], self.cpt[v][0][1]);
                }
                Some(u) => {
                    let table = stats.table(v, u);
                    for pv in 0..2 {
                        for x in 0..2 {
                            ll += xlogy(table[x][pv], self.cpt[v][pv][x]);
                        }
                    }
                }
            }
        }
        ll
    }

    /// Ancestral sample aligned with `variable_ids`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        let mut x = vec![0u8; self.n_vars()];
        for &v in &self.order {
            let u = self.parent[v].map_or(0, |p| x[p] as usize);
            let p1 = self.cpt[v][u][1];
            x[v] = u8::from(rng.gen::<f64>() < p1);
        }
        x
    }

    /// Most probable completion of the evidence, exact by max-product.
    ///
    /// Evidence is a list of `(global variable, value)` pairs. Ties prefer 0.
    pub fn mpe(&self, evidence: &[(usize, u8)]) -> Result<(Vec<u8>, f64)> {
        let mut fixed = vec![None; self.n_vars()];
        for &(var, value) in evidence {
            let k = self
                .variable_ids
                .binary_search(&var)
                .map_err(|_| Error::UnknownVariable(var))?;
            if value > 1 {
                return Err(Error::invalid(format!("evidence value {value} is not binary")));
            }
            fixed[k] = Some(value);
        }
        Ok(self.mpe_local(&fixed))
    }

    /// Max-product on local positions; `fixed[k]` clamps variable k.
    pub(crate) fn mpe_local(&self, fixed: &[Option<u8>]) -> (Vec<u8>, f64) {
        let d = self.n_vars();
        // up[v][x]: best log-score of v's subtree given x_v = x.
        let mut up = vec![[0.0f64; 2]; d];
        // best[c][u]: argmax value of child c given its parent takes u.
        let mut best = vec![[0u8; 2]; d];
        for &v in self.order.iter().rev() {
            for x in 0..2u8 {
                if fixed[v].is_some_and(|f| f != x) {
                    up[v][x as usize] = f64::NEG_INFINITY;
                    continue;
                }
                let mut s = 0.0;
                for &c in &self.children[v] {
                    let (arg, val) = self.best_child_value(c, x, &up);
                    best[c][x as usize] = arg;
                    s += val;
                }
                up[v][x as usize] = s;
            }
        }
        let root = self.order[0];
        let (root_value, score) = self.best_child_value(root, 0, &up);
        let mut x = vec![0u8; d];
        x[root] = root_value;
        for &v in &self.order[1..] {
            let u = self.parent[v].unwrap();
            x[v] = best[v][x[u] as usize];
        }
        (x, score)
    }

    fn best_child_value(&self, v: usize, parent_value: u8, up: &[[f64; 2]]) -> (u8, f64) {
        let s0 = self.log_theta(v, parent_value, 0) + up[v][0];
        let s1 = self.log_theta(v, parent_value, 1) + up[v][1];
        // NaN never arises: log-CPT entries are finite or -inf and up is never +inf.
        if s1 > s0 {
            (1, s1)
        } else {
            (0, s0)
        }
    }
}

/// Empirical mutual information (nats) of two variables from raw weighted
/// counts.
pub fn mutual_information(data: &WeightedDataset, i: usize, j: usize) -> Result<f64> {
    let table = data.pair_counts(i, j)?;
    let total = data.total_weight();
    if !(total > 0.0) {
        return Err(Error::invalid("mutual information of a dataset with zero total weight"));
    }
    Ok(mi_from_table(&table, total))
}

pub(crate) fn mi_from_table(table: &PairTable, total: f64) -> f64 {
    if !(total > 0.0) {
        return 0.0;
    }
    let row = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let col = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let n = table[a][b];
            if n > 0.0 {
                mi += n / total * (n * total / (row[a] * col[b])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Learns a Chow-Liu tree: a maximum spanning tree over pairwise mutual
/// information, rooted at the lowest variable, with CPT entries
/// `(n(x, u) + beta) / (n(u) + 2 beta)`.
pub fn learn_clt(data: &WeightedDataset, beta: f64) -> Result<ChowLiuTree> {
    if data.n_vars() == 0 {
        return Err(Error::invalid("cannot learn a tree over zero variables"));
    }
    if !(beta >= 0.0) || beta.is_infinite() {
        return Err(Error::Domain {
            function: "learn_clt",
            value: beta,
        });
    }
    Ok(fit(data.variable_ids().to_vec(), &PairStats::from_dataset(data), beta))
}

/// Maximum spanning tree edges (local positions) of the MI-weighted complete
/// graph. Equal weights prefer the lexicographically smaller pair.
pub(crate) fn spanning_tree(stats: &PairStats) -> Vec<(usize, usize)> {
    let d = stats.n_vars();
    let mut edges = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            edges.push((mi_from_table(&stats.table(i, j), stats.total), i, j));
        }
    }
    edges.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => (a.1, a.2).cmp(&(b.1, b.2)),
        ord => ord,
    });
    let mut sets = DisjointSets::new(d);
    let mut tree = Vec::with_capacity(d.saturating_sub(1));
    for (_, i, j) in edges {
        if sets.union(i, j) {
            tree.push((i, j));
            if tree.len() + 1 == d {
                break;
            }
        }
    }
    tree
}

pub(crate) fn fit(variable_ids: Vec<usize>, stats: &PairStats, beta: f64) -> ChowLiuTree {
    let d = variable_ids.len();
    let edges = spanning_tree(stats);
    let mut adjacent = vec![Vec::new(); d];
    for &(i, j) in &edges {
        adjacent[i].push(j);
        adjacent[j].push(i);
    }
    for list in &mut adjacent {
        list.sort_unstable();
    }
    let mut parent = vec![None; d];
    let mut seen = vec![false; d];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &c in &adjacent[v] {
            if !seen[c] {
                seen[c] = true;
                parent[c] = Some(v);
                queue.push_back(c);
            }
        }
    }
    let cpt = (0..d)
        .map(|v| match parent[v] {
            None => vec![smoothed_row(stats.marginal(v), beta)],
            Some(u) => {
                let table = stats.table(v, u);
                (0..2)
                    .map(|pv| smoothed_row([table[0][pv], table[1][pv]], beta))
                    .collect()
            }
        })
        .collect();
    ChowLiuTree::from_parts(variable_ids, parent, cpt).expect("learned tree is valid by construction")
}

/// `(n_x + beta) / (n + 2 beta)`, or `(0.5, 0.5)` when that is undefined.
pub(crate) fn smoothed_row(counts: [f64; 2], beta: f64) -> [f64; 2] {
    let denom = counts[0] + counts[1] + 2.0 * beta;
    if !(denom > 0.0) {
        return [0.5, 0.5];
    }
    let p1 = ((counts[1] + beta) / denom).clamp(0.0, 1.0);
    [1.0 - p1, p1]
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
