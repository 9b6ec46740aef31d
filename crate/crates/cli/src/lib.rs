//! Commands behind the `cutset` binary.

pub mod model_file;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cutset::mixture::{learn_sem, SemConfig};
use cutset::scores::score_cnet;
use cutset::{compile, learn_cnet, CutsetNetwork, LearnerConfig, WeightedDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use model_file::{Model, ModelFile, Provenance};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, bad arguments. Exit code 2.
    Io(String),
    /// Anything that goes wrong after the inputs were accepted. Exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cutset::Error> for CliError {
    fn from(e: cutset::Error) -> Self {
        match e {
            cutset::Error::Io { .. } | cutset::Error::Parse { .. } => CliError::Io(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn write_output(path: Option<&Path>, text: &str) -> CliResult<Option<String>> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(None)
        }
        None => Ok(Some(text.to_string())),
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Learns one network on the whole training file and writes it to `out`.
/// Returns the stats report.
pub fn cmd_learn(train: &Path, cfg: &LearnerConfig, out: &Path) -> CliResult<String> {
    let data = WeightedDataset::load_csv(train)?;
    cfg.validate()?;
    let start = Instant::now();
    let net = learn_cnet(&data, cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = learn_report(&net, &data, cfg, elapsed)?;
    let file = ModelFile::new(
        Model::Cnet(net),
        *cfg,
        Provenance {
            dataset: Some(dataset_name(train)),
            seed: None,
            wall_time_s: elapsed,
        },
    );
    file.save(out)?;
    Ok(report)
}

fn learn_report(net: &CutsetNetwork, data: &WeightedDataset, cfg: &LearnerConfig, elapsed: f64) -> CliResult<String> {
    let ll = net.log_likelihood(data)?;
    let score = score_cnet(net, data, &cfg.score)?;
    let mut s = String::new();
    writeln!(s, "train_ll_per_sample {}", ll / data.total_weight()).unwrap();
    writeln!(s, "score {score}").unwrap();
    writeln!(s, "decisions {}", net.decision_count()).unwrap();
    writeln!(s, "leaves {}", net.leaves().len()).unwrap();
    writeln!(s, "depth {}", net.depth()).unwrap();
    writeln!(s, "params {}", net.param_count()).unwrap();
    writeln!(s, "wall_time_s {elapsed:.3}").unwrap();
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub train_ll: f64,
    pub valid_ll: f64,
    pub time_s: f64,
}

/// Learns one model per `K`, picks the best by mean validation
/// log-likelihood (ties to the smaller `K`) and writes it to `out`.
///
/// `K = 1` is a single network. Each `K` draws from its own generator
/// seeded with `seed`, so the sweep does not depend on list order.
pub fn cmd_learn_mixture(
    train: &Path,
    valid: &Path,
    ks: &[usize],
    cfg: &LearnerConfig,
    seed: u64,
    out: &Path,
) -> CliResult<(String, Vec<SweepRow>)> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Io("the K list must hold positive integers".into()));
    }
    cfg.validate()?;
    let train_data = WeightedDataset::load_csv(train)?;
    let valid_data = WeightedDataset::load_csv(valid)?;
    if valid_data.n_vars() != train_data.n_vars() {
        return Err(CliError::Io(format!(
            "validation data has {} columns, training data {}",
            valid_data.n_vars(),
            train_data.n_vars()
        )));
    }

    let mut rows = Vec::new();
    let mut best: Option<(f64, usize, Model, f64)> = None;
    for &k in ks {
        let start = Instant::now();
        let model = if k == 1 {
            Model::Cnet(learn_cnet(&train_data, cfg)?)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Model::Mixture(learn_sem(&train_data, &SemConfig::new(k), cfg, &mut rng)?.mixture)
        };
        let time_s = start.elapsed().as_secs_f64();
        let train_ll = model.log_likelihood(&train_data)? / train_data.total_weight();
        let valid_ll = model.log_likelihood(&valid_data)? / valid_data.total_weight();
        rows.push(SweepRow { k, train_ll, valid_ll, time_s });
        let better = match &best {
            None => true,
            Some((v, bk, _, _)) => valid_ll > *v || (valid_ll == *v && k < *bk),
        };
        if better {
            best = Some((valid_ll, k, model, time_s));
        }
    }
    let (_, chosen, model, time_s) = best.expect("non-empty K list");

    let mut s = String::from("k,train_ll,valid_ll,time_s\n");
    for r in &rows {
        writeln!(s, "{},{},{},{:.3}", r.k, r.train_ll, r.valid_ll, r.time_s).unwrap();
    }
    writeln!(s, "selected_k {chosen}").unwrap();

    ModelFile::new(
        model,
        *cfg,
        Provenance {
            dataset: Some(dataset_name(train)),
            seed: Some(seed),
            wall_time_s: time_s,
        },
    )
    .save(out)?;
    Ok((s, rows))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_ll: f64,
    pub total_ll: f64,
    pub rows: usize,
    /// Largest per-row gap between circuit and direct evaluation.
    pub circuit_max_abs_diff: Option<f64>,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "mean_ll {}", self.mean_ll)?;
        writeln!(f, "total_ll {}", self.total_ll)?;
        writeln!(f, "rows {}", self.rows)?;
        if let Some(diff) = self.circuit_max_abs_diff {
            writeln!(f, "circuit_max_abs_diff {diff:e}")?;
        }
        Ok(())
    }
}

pub const CIRCUIT_TOLERANCE: f64 = 1e-10;

/// Test log-likelihood in nats. With `via_circuit` every row is also
/// evaluated on the compiled circuit and must agree within
/// [`CIRCUIT_TOLERANCE`].
pub fn cmd_eval(model_path: &Path, data_path: &Path, via_circuit: bool) -> CliResult<EvalReport> {
    let file = ModelFile::load(model_path)?;
    let data = WeightedDataset::load_csv(data_path)?;
    check_columns(&file.model, data.n_vars())?;
    let total_ll = file.model.log_likelihood(&data)?;
    let circuit_max_abs_diff = if via_circuit {
        let via = file.model.circuit_log_densities(&data)?;
        let mut worst: f64 = 0.0;
        for (r, c) in via.iter().enumerate() {
            let direct = file.model.log_density(data.row(r))?;
            let gap = if direct == *c { 0.0 } else { (direct - c).abs() };
            if !(gap <= CIRCUIT_TOLERANCE) {
                return Err(CliError::Runtime(format!(
                    "row {r}: circuit gives {c}, direct evaluation {direct}"
                )));
            }
            worst = worst.max(gap);
        }
        Some(worst)
    } else {
        None
    };
    Ok(EvalReport {
        mean_ll: total_ll / data.total_weight(),
        total_ll,
        rows: data.n_rows(),
        circuit_max_abs_diff,
    })
}

fn check_columns(model: &Model, columns: usize) -> CliResult<()> {
    if columns != model.scope().len() {
        return Err(CliError::Io(format!(
            "data has {columns} columns, the model {}",
            model.scope().len()
        )));
    }
    Ok(())
}

/// Draws `n` rows. Returns the CSV text when `out` is `None`.
pub fn cmd_sample(model_path: &Path, n: usize, seed: u64, out: Option<&Path>) -> CliResult<Option<String>> {
    let file = ModelFile::load(model_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..n {
        write_row(&mut text, &file.model.sample(&mut rng));
        text.push('\n');
    }
    write_output(out, &text)
}

fn write_row(text: &mut String, x: &[u8]) {
    for (i, v) in x.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        text.push(if *v == 1 { '1' } else { '0' });
    }
}

/// Parses an evidence file: comma-separated `0`, `1` or `?` cells.
pub fn parse_evidence(text: &str) -> CliResult<Vec<Vec<Option<u8>>>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| match cell.trim() {
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                "?" => Ok(None),
                other => Err(CliError::Io(format!("line {}: bad evidence cell {other:?}", idx + 1))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(CliError::Io(format!("line {}: expected {first} cells, found {}", idx + 1, row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Completes every evidence row; each output row ends with its log-density.
pub fn cmd_mpe(model_path: &Path, evidence_path: &Path, out: Option<&Path>) -> CliResult<Option<String>> {
    let file = ModelFile::load(model_path)?;
    let text = fs::read_to_string(evidence_path).map_err(|e| CliError::Io(format!("{}: {e}", evidence_path.display())))?;
    let evidence = parse_evidence(&text)?;
    let mut out_text = String::new();
    for row in &evidence {
        check_columns(&file.model, row.len())?;
        let (x, score) = file.model.mpe(row);
        write_row(&mut out_text, &x);
        writeln!(out_text, ",{score}").unwrap();
    }
    write_output(out, &out_text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchMethod {
    Bd,
    Bic,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Bd => "bd",
            BenchMethod::Bic => "bic",
        }
    }

    fn config(self) -> LearnerConfig {
        match self {
            BenchMethod::Bd => LearnerConfig::default(),
            BenchMethod::Bic => LearnerConfig::new(cutset::ScoreConfig::bic(cutset::scores::DEFAULT_BETA)),
        }
    }
}

pub const BENCH_HEADER: &str = "dataset,method,train_time_s,test_ll,circuit_params";

/// Benchmarks every dataset triplet `<name>.ts.data`, `<name>.valid.data`,
/// `<name>.test.data` in `dir`. Training uses the train and validation
/// files together. With `timing` off the time column reads `NA`, which
/// makes the output byte-stable.
pub fn cmd_bench(dir: &Path, methods: &[BenchMethod], timing: bool, out: Option<&Path>) -> CliResult<Option<String>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_suffix(".ts.data") {
            names.push(name.to_string());
        }
    }
    names.sort();
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let mut text = format!("{BENCH_HEADER}\n");
    for name in &names {
        let path = |suffix: &str| -> PathBuf { dir.join(format!("{name}.{suffix}.data")) };
        let mut train = WeightedDataset::load_csv(path("ts"))?;
        let valid_path = path("valid");
        if valid_path.exists() {
            train = concat(&train, &WeightedDataset::load_csv(&valid_path)?)?;
        }
        let test = WeightedDataset::load_csv(path("test"))?;
        if test.n_vars() != train.n_vars() {
            return Err(CliError::Io(format!("{name}: test and train column counts differ")));
        }
        for &method in &methods {
            let start = Instant::now();
            let net = learn_cnet(&train, &method.config())?;
            let elapsed = start.elapsed().as_secs_f64();
            let test_ll = net.log_likelihood(&test)? / test.total_weight();
            let params = compile(&net).size().params;
            let time = if timing { format!("{elapsed:.4}") } else { "NA".into() };
            writeln!(text, "{name},{},{time},{test_ll},{params}", method.name()).unwrap();
        }
    }
    write_output(out, &text)
}

fn concat(a: &WeightedDataset, b: &WeightedDataset) -> CliResult<WeightedDataset> {
    if a.n_vars() != b.n_vars() {
        return Err(CliError::Io("train and validation column counts differ".into()));
    }
    let mut cells = Vec::with_capacity((a.n_rows() + b.n_rows()) * a.n_vars());
    for row in a.rows().chain(b.rows()) {
        cells.extend_from_slice(row);
    }
    let weights = a.weights().iter().chain(b.weights()).copied().collect();
    Ok(WeightedDataset::new(cells, weights, a.variable_ids().to_vec())?)
}
