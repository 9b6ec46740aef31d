//! Mixtures of cutset networks learned by structural EM.

use rand::Rng;

use crate::cnet::{learn_cnet, CutsetNetwork, LearnerConfig};
use crate::data::WeightedDataset;
use crate::error::{Error, Result};
use crate::numerics::{entropy_unchecked, log_sum_exp_unchecked};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    components: Vec<CutsetNetwork>,
    weights: Vec<f64>,
}

impl Mixture {
    pub fn new(components: Vec<CutsetNetwork>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::invalid("a mixture needs one weight per component and at least one component"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights {weights:?} are not normalized")));
        }
        let scope = components[0].scope();
        if components.iter().any(|c| c.scope() != scope) {
            return Err(Error::invalid("mixture components must share one scope"));
        }
        Ok(Self { components, weights })
    }

    pub fn single(net: CutsetNetwork) -> Self {
        Self {
            components: vec![net],
            weights: vec![1.0],
        }
    }

    pub fn components(&self) -> &[CutsetNetwork] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn scope(&self) -> &[usize] {
        self.components[0].scope()
    }

    /// `ln a_k + ln p_k(x)` for every component.
    fn joint_terms(&self, x: &[u8]) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, &a)| if a == 0.0 { f64::NEG_INFINITY } else { a.ln() + c.log_density_unchecked(x) })
            .collect()
    }

    pub fn log_density(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.scope().len() {
            return Err(Error::invalid("assignment length differs from mixture scope"));
        }
        Ok(log_sum_exp_unchecked(&self.joint_terms(x)))
    }

    pub fn log_likelihood(&self, data: &WeightedDataset) -> Result<f64> {
        check_scope(self.scope(), data)?;
        let per_row = par::map_range(data.n_rows(), |r| {
            let w = data.weights()[r];
            if w == 0.0 {
                0.0
            } else {
                w * log_sum_exp_unchecked(&self.joint_terms(data.row(r)))
            }
        });
        Ok(per_row.iter().sum())
    }

    /// Mean log-likelihood per unit of sample weight.
    pub fn mean_log_likelihood(&self, data: &WeightedDataset) -> Result<f64> {
        Ok(self.log_likelihood(data)? / data.total_weight())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = self.k() - 1;
        for (k, &a) in self.weights.iter().enumerate() {
            acc += a;
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.components[chosen].sample(rng)
    }

    pub fn param_count(&self) -> usize {
        self.k() - 1 + self.components.iter().map(|c| c.param_count()).sum::<usize>()
    }
}

fn check_scope(scope: &[usize], data: &WeightedDataset) -> Result<()> {
    if data.variable_ids() != scope {
        return Err(Error::ScopeMismatch {
            expected: scope.to_vec(),
            found: data.variable_ids().to_vec(),
        });
    }
    Ok(())
}

/// Row-major `n x K` responsibility matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::invalid("responsibility matrix shape does not match K"));
        }
        for row in values.chunks(k) {
            if row.iter().any(|g| !(0.0..=1.0).contains(g)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("responsibility row {row:?} is not a distribution")));
            }
        }
        Ok(Self { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k)
    }
}

/// Partitions the rows into `k` clusters by k-means (k-means++ seeding,
/// squared Euclidean distance, sample weights as multiplicities).
///
/// When there are fewer distinct rows than clusters the rows are dealt
/// round-robin instead. Empty clusters come back as empty datasets.
pub fn kmeans_init<R: Rng + ?Sized>(data: &WeightedDataset, k: usize, rng: &mut R) -> Result<Vec<WeightedDataset>> {
    let assignment = kmeans_assign(data, k, rng)?;
    Ok(partition(data, &assignment, k))
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

pub(crate) fn kmeans_assign<R: Rng + ?Sized>(data: &WeightedDataset, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    let n = data.n_rows();
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let mut distinct: Vec<&[u8]> = data.rows().collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < k {
        return Ok((0..n).map(|r| r % k).collect());
    }

    let d = data.n_vars();
    let weights = data.weights();
    let dist = |row: &[u8], c: &[f64]| -> f64 {
        row.iter().zip(c).map(|(&x, &m)| (x as f64 - m).powi(2)).sum()
    };

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = sample_index(weights, rng).unwrap_or(0);
    centroids.push(data.row(first).iter().map(|&x| x as f64).collect());
    let mut nearest: Vec<f64> = (0..n).map(|r| dist(data.row(r), &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = nearest.iter().zip(weights).map(|(d2, w)| d2 * w).collect();
        let next = match sample_index(&scores, rng) {
            Some(i) => i,
            // Every weighted row already coincides with a centroid.
            None => (0..n).find(|&r| nearest[r] > 0.0).unwrap_or(0),
        };
        let c: Vec<f64> = data.row(next).iter().map(|&x| x as f64).collect();
        for r in 0..n {
            nearest[r] = nearest[r].min(dist(data.row(r), &c));
        }
        centroids.push(c);
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        assignment = par::map_range(n, |r| {
            let row = data.row(r);
            let mut best = (f64::INFINITY, 0);
            for (j, c) in centroids.iter().enumerate() {
                let d2 = dist(row, c);
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            best.1
        });
        let mut sums = vec![vec![0.0; d]; k];
        let mut mass = vec![0.0; k];
        for (r, &j) in assignment.iter().enumerate() {
            let w = weights[r];
            mass[j] += w;
            for (s, &x) in sums[j].iter_mut().zip(data.row(r)) {
                *s += w * x as f64;
            }
        }
        let mut movement: f64 = 0.0;
        for j in 0..k {
            if mass[j] > 0.0 {
                let updated: Vec<f64> = sums[j].iter().map(|s| s / mass[j]).collect();
                movement = movement.max(dist_f(&updated, &centroids[j]));
                centroids[j] = updated;
            }
        }
        if movement.sqrt() < KMEANS_TOL {
            break;
        }
    }
    Ok(assignment)
}

fn dist_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index drawn proportionally to nonnegative scores; `None` if all are zero.
fn sample_index<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            acc += s;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last
}

fn partition(data: &WeightedDataset, assignment: &[usize], k: usize) -> Vec<WeightedDataset> {
    let d = data.n_vars();
    let mut cells = vec![Vec::new(); k];
    let mut weights = vec![Vec::new(); k];
    for (r, &j) in assignment.iter().enumerate() {
        cells[j].extend_from_slice(data.row(r));
        weights[j].push(data.weights()[r]);
    }
    cells
        .into_iter()
        .zip(weights)
        .map(|(c, w)| {
            debug_assert_eq!(c.len(), w.len() * d);
            WeightedDataset::new(c, w, data.variable_ids().to_vec()).expect("rows come from a valid dataset")
        })
        .collect()
}

/// Posterior component memberships of every row.
pub fn e_step(mixture: &Mixture, data: &WeightedDataset) -> Result<Responsibilities> {
    check_scope(mixture.scope(), data)?;
    let k = mixture.k();
    let rows = par::map_range(data.n_rows(), |r| {
        let terms = mixture.joint_terms(data.row(r));
        let norm = log_sum_exp_unchecked(&terms);
        if norm == f64::NEG_INFINITY {
            return Err(Error::ImpossibleRow { row: r });
        }
        Ok(terms.iter().map(|t| (t - norm).exp()).collect::<Vec<_>>())
    });
    let mut values = Vec::with_capacity(data.n_rows() * k);
    for row in rows {
        let row = row?;
        let sum: f64 = row.iter().sum();
        values.extend(row.iter().map(|g| (g / sum).clamp(0.0, 1.0)));
    }
    Ok(Responsibilities { k, values })
}

/// Re-estimates mixing weights and relearns every component from
/// responsibility-weighted samples.
///
/// A component with zero total responsibility is relearned from the single
/// row whose responsibility vector has the highest entropy.
pub fn m_step(data: &WeightedDataset, resp: &Responsibilities, cfg: &LearnerConfig) -> Result<Mixture> {
    if resp.n_rows() != data.n_rows() {
        return Err(Error::invalid("responsibility rows differ from dataset rows"));
    }
    let k = resp.k();
    let total = data.total_weight();
    if !(total > 0.0) {
        return Err(Error::invalid("cannot fit a mixture to zero total weight"));
    }
    let component_weights: Vec<Vec<f64>> = (0..k)
        .map(|j| data.weights().iter().zip(resp.rows()).map(|(w, g)| w * g[j]).collect())
        .collect();
    let mut mix: Vec<f64> = component_weights
        .iter()
        .map(|cw| (cw.iter().sum::<f64>() / total).max(0.0))
        .collect();
    let norm: f64 = mix.iter().sum();
    for a in &mut mix {
        *a /= norm;
    }

    let components = par::map_range(k, |j| -> Result<CutsetNetwork> {
        let weighted = data.with_weights(component_weights[j].clone())?;
        if weighted.total_weight() > 0.0 {
            learn_cnet(&weighted, cfg)
        } else {
            learn_cnet(&fallback_row(data, resp), cfg)
        }
    });
    Mixture::new(components.into_iter().collect::<Result<Vec<_>>>()?, mix)
}

fn fallback_row(data: &WeightedDataset, resp: &Responsibilities) -> WeightedDataset {
    let mut best = (f64::NEG_INFINITY, 0);
    for (r, g) in resp.rows().enumerate() {
        let h = entropy_unchecked(g);
        if h > best.0 {
            best = (h, r);
        }
    }
    WeightedDataset::new(data.row(best.1).to_vec(), vec![1.0], data.variable_ids().to_vec())
        .expect("row of a valid dataset")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemConfig {
    pub components: usize,
    pub max_iters: usize,
    /// Stop once the per-sample train log-likelihood improves by less.
    pub tol: f64,
}

impl SemConfig {
    pub fn new(components: usize) -> Self {
        Self {
            components,
            max_iters: 100,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SemResult {
    /// The iterate with the best train log-likelihood.
    pub mixture: Mixture,
    /// Per-sample train log-likelihood of the k-means initialization.
    pub init_log_likelihood: f64,
    /// Per-sample train log-likelihood after each EM iteration.
    pub history: Vec<f64>,
    pub best_log_likelihood: f64,
    /// 0 for the initialization, `i` for the i-th EM iterate.
    pub best_iteration: usize,
}

/// Structural EM: k-means initialization, then alternating E and M steps.
pub fn learn_sem<R: Rng + ?Sized>(
    data: &WeightedDataset,
    sem: &SemConfig,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<SemResult> {
    cfg.validate()?;
    let total = data.total_weight();
    if !(total > 0.0) {
        return Err(Error::invalid("cannot fit a mixture to zero total weight"));
    }
    let k = sem.components;
    let clusters = kmeans_init(data, k, rng)?;
    let cluster_weights: Vec<f64> = clusters.iter().map(|c| c.total_weight()).collect();
    let components = par::map(&clusters, |c| {
        if c.total_weight() > 0.0 {
            learn_cnet(c, cfg)
        } else {
            learn_cnet(data, cfg)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mix: Vec<f64> = cluster_weights.iter().map(|w| w / total).collect();
    let norm: f64 = mix.iter().sum();
    let init = Mixture::new(components, mix.iter().map(|a| a / norm).collect())?;

    let init_ll = init.mean_log_likelihood(data)?;
    let mut best = (init_ll, 0usize, init.clone());
    let mut current = init;
    let mut previous = init_ll;
    let mut history = Vec::new();
    for iter in 1..=sem.max_iters {
        let resp = e_step(&current, data)?;
        let next = m_step(data, &resp, cfg)?;
        let ll = next.mean_log_likelihood(data)?;
        history.push(ll);
        if ll > best.0 {
            best = (ll, iter, next.clone());
        }
        if ll - previous < sem.tol {
            break;
        }
        previous = ll;
        current = next;
    }
    Ok(SemResult {
        mixture: best.2,
        init_log_likelihood: init_ll,
        history,
        best_log_likelihood: best.0,
        best_iteration: best.1,
    })
}
