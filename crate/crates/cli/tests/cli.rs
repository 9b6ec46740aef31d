use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cutset::{learn_cnet, CutsetNetwork, LearnerConfig, Mixture, WeightedDataset};
use cutset_cli::{cmd_eval, parse_evidence, Model, ModelFile, Provenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn cutset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutset")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cutset(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Rows from a two-regime source: x0 picks which half of the variables is
/// copied from a shared coin.
fn synthetic(n: usize, d: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..n {
        let regime = rng.gen_bool(0.4);
        let coin = rng.gen_bool(0.5);
        let mut row = vec![u8::from(regime)];
        for v in 1..d {
            let tied = (v % 2 == 1) == regime;
            let bit = if tied && rng.gen_bool(0.9) { coin } else { rng.gen_bool(0.3) };
            row.push(u8::from(bit));
        }
        let cells: Vec<String> = row.iter().map(|b| b.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn field(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

#[test]
fn missing_file_exits_with_two() {
    let out = cutset(&["learn", "/no/such/file.data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.data"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cutset(&["learn"]).status.code(), Some(2));
    assert_eq!(cutset(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "bad.data", "0,1\n1,7\n");
    let out = cutset(&["learn", p(&train)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn learn_then_eval_with_both_scores() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(600, 8, 1));
    let test = write(dir.path(), "test.data", &synthetic(300, 8, 2));
    for score in ["bd", "bic"] {
        let model = dir.path().join(format!("{score}.json"));
        let report = ok(&["learn", p(&train), "--score", score, "--beta", "0.01", "-o", p(&model)]);
        for key in ["train_ll_per_sample", "score", "decisions", "leaves", "params", "wall_time_s"] {
            field(&report, key);
        }
        let file = ModelFile::load(&model).unwrap();
        assert_eq!(
            format!("{:?}", file.config.score.kind).to_lowercase(),
            score,
        );

        let eval = ok(&["eval", p(&model), p(&test), "--via-circuit"]);
        let mean = field(&eval, "mean_ll");
        assert!((field(&eval, "total_ll") / 300.0 - mean).abs() < 1e-9);
        assert!(field(&eval, "circuit_max_abs_diff") <= 1e-10);
    }
}

#[test]
fn eval_of_one_row_is_its_log_density() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(400, 6, 3));
    let model = dir.path().join("m.json");
    ok(&["learn", p(&train), "-o", p(&model)]);
    let row = write(dir.path(), "row.data", "1,0,1,1,0,0\n");
    let report = cmd_eval(&model, &row, false).unwrap();
    let file = ModelFile::load(&model).unwrap();
    let direct = file.model.log_density(&[1, 0, 1, 1, 0, 0]).unwrap();
    assert_eq!(report.mean_ll, direct);
    assert_eq!(report.total_ll, direct);
}

fn learned(seed: u64) -> (CutsetNetwork, WeightedDataset) {
    let text = synthetic(500, 7, seed);
    let data = WeightedDataset::parse_csv(&text).unwrap();
    (learn_cnet(&data, &LearnerConfig::default()).unwrap(), data)
}

#[test]
fn model_file_round_trip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (net, data) = learned(4);
    let (other, _) = learned(5);
    let models = [
        Model::Cnet(net.clone()),
        Model::Mixture(Mixture::new(vec![net, other], vec![0.3, 0.7]).unwrap()),
    ];
    for model in models {
        let file = ModelFile::new(
            model,
            LearnerConfig::default(),
            Provenance {
                dataset: Some("synthetic".into()),
                seed: Some(9),
                wall_time_s: 0.123456789,
            },
        );
        let path = dir.path().join("m.json");
        file.save(&path).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(loaded, file);
        loaded.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        for x in data.rows() {
            let a = file.model.log_density(x).unwrap();
            let b = loaded.model.log_density(x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn bad_model_files_are_rejected() {
    assert!(ModelFile::from_json("{}").is_err());
    let (net, _) = learned(6);
    let text = ModelFile::new(Model::Cnet(net), LearnerConfig::default(), Provenance::default()).to_json();
    let bumped = text.replace("\"format_version\": 1", "\"format_version\": 99");
    assert!(ModelFile::from_json(&bumped).is_err());
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["model"]["network"]["scope"] = serde_json::json!([]);
    let err = ModelFile::from_json(&value.to_string()).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    let data = write(dir.path(), "x.data", "0,1\n");
    let out = cutset(&["eval", p(&bad), p(&data)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_component_mixture_evaluates_like_its_component() {
    let dir = TempDir::new().unwrap();
    let (net, _) = learned(7);
    let test = write(dir.path(), "test.data", &synthetic(200, 7, 8));
    let single = dir.path().join("single.json");
    let mix = dir.path().join("mix.json");
    ModelFile::new(Model::Cnet(net.clone()), LearnerConfig::default(), Provenance::default())
        .save(&single)
        .unwrap();
    ModelFile::new(Model::Mixture(Mixture::single(net)), LearnerConfig::default(), Provenance::default())
        .save(&mix)
        .unwrap();
    assert_eq!(ok(&["eval", p(&single), p(&test)]), ok(&["eval", p(&mix), p(&test)]));
    let via = ok(&["eval", p(&mix), p(&test), "--via-circuit"]);
    assert!(field(&via, "circuit_max_abs_diff") <= 1e-10);
}

#[test]
fn mixture_sweep_with_k_one_matches_learn() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(500, 8, 10));
    let valid = write(dir.path(), "valid.data", &synthetic(200, 8, 11));
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&["learn", p(&train), "-o", p(&a)]);
    let report = ok(&["learn-mixture", p(&train), p(&valid), "-k", "1", "-o", p(&b)]);
    assert!(report.contains("selected_k 1"));
    let a = ModelFile::load(&a).unwrap();
    let b = ModelFile::load(&b).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.config, b.config);
}

#[test]
fn mixture_sweep_keeps_the_best_validation_score() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(600, 8, 12));
    let valid = write(dir.path(), "valid.data", &synthetic(300, 8, 13));
    let out = dir.path().join("m.json");
    let report = ok(&["learn-mixture", p(&train), p(&valid), "-k", "2,5", "--seed", "3", "-o", p(&out)]);
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("k,train_ll,valid_ll,time_s"));
    let rows: Vec<(usize, f64)> = lines
        .by_ref()
        .take(2)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            assert_eq!(cells.len(), 4);
            cells[3].parse::<f64>().unwrap();
            (cells[0].parse().unwrap(), cells[2].parse().unwrap())
        })
        .collect();
    let chosen: usize = field(&report, "selected_k") as usize;
    let chosen_ll = rows.iter().find(|r| r.0 == chosen).unwrap().1;
    assert!(rows.iter().all(|r| chosen_ll >= r.1));

    let file = ModelFile::load(&out).unwrap();
    let Model::Mixture(mix) = &file.model else { panic!("expected a mixture") };
    assert_eq!(mix.k(), chosen);
    assert_eq!(file.provenance.seed, Some(3));
}

#[test]
fn sampling_is_seeded_and_shaped() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(300, 6, 14));
    let model = dir.path().join("m.json");
    ok(&["learn", p(&train), "-o", p(&model)]);
    let a = ok(&["sample", p(&model), "-n", "25", "--seed", "1"]);
    let b = ok(&["sample", p(&model), "-n", "25", "--seed", "1"]);
    let c = ok(&["sample", p(&model), "-n", "25", "--seed", "2"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let parsed = WeightedDataset::parse_csv(&a).unwrap();
    assert_eq!((parsed.n_rows(), parsed.n_vars()), (25, 6));

    let out = dir.path().join("s.csv");
    ok(&["sample", p(&model), "-n", "25", "--seed", "1", "-o", p(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap(), a);
}

#[test]
fn mpe_respects_evidence() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(500, 8, 15));
    let model = dir.path().join("m.json");
    ok(&["learn", p(&train), "-o", p(&model)]);
    let evidence = "1,0,1,1,0,0,1,0\n?,?,?,?,?,?,?,?\n1,0,1,0,?,?,?,?\n0,1,1,1,?,?,?,?\n";
    let ev = write(dir.path(), "ev.csv", evidence);
    let out = ok(&["mpe", p(&model), p(&ev)]);
    let file = ModelFile::load(&model).unwrap();
    let parsed = parse_evidence(evidence).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("1,0,1,1,0,0,1,0,"));
    for (line, ev) in lines.iter().zip(&parsed) {
        let cells: Vec<&str> = line.split(',').collect();
        let x: Vec<u8> = cells[..8].iter().map(|c| c.parse().unwrap()).collect();
        for (v, e) in x.iter().zip(ev) {
            if let Some(e) = e {
                assert_eq!(v, e);
            }
        }
        let score: f64 = cells[8].parse().unwrap();
        assert_eq!(score, file.model.log_density(&x).unwrap());
    }
    let Model::Cnet(net) = &file.model else { unreachable!() };
    let (free, _) = net.mpe_fixed(&[None; 8]);
    let unconditional: Vec<u8> = lines[1].split(',').take(8).map(|c| c.parse().unwrap()).collect();
    assert_eq!(unconditional, free);
}

#[test]
fn bad_evidence_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "train.data", &synthetic(100, 4, 16));
    let model = dir.path().join("m.json");
    ok(&["learn", p(&train), "-o", p(&model)]);
    let ev = write(dir.path(), "ev.csv", "1,x,0,0\n");
    assert_eq!(cutset(&["mpe", p(&model), p(&ev)]).status.code(), Some(2));
    let ev = write(dir.path(), "ev.csv", "1,0,0\n");
    assert_eq!(cutset(&["mpe", p(&model), p(&ev)]).status.code(), Some(2));
}

#[test]
fn bench_on_empty_directory_is_just_the_header() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["bench", p(dir.path())]);
    assert_eq!(out, "dataset,method,train_time_s,test_ll,circuit_params\n");
}

#[test]
fn bench_rows_and_determinism() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.ts.data", &synthetic(400, 8, 17));
    write(dir.path(), "toy.valid.data", &synthetic(100, 8, 18));
    write(dir.path(), "toy.test.data", &synthetic(200, 8, 19));
    let csv = dir.path().join("bench.csv");
    ok(&["bench", p(dir.path()), "-o", p(&csv)]);
    let first = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = first.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("toy,bd,") && rows[1].starts_with("toy,bic,"));
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert!(cells[2].parse::<f64>().unwrap() >= 0.0);
        assert!(cells[3].parse::<f64>().unwrap() < 0.0);
        assert!(cells[4].parse::<usize>().unwrap() >= 15);
    }

    let a = ok(&["bench", p(dir.path()), "--no-timing"]);
    let b = ok(&["bench", p(dir.path()), "--no-timing"]);
    assert_eq!(a, b);
    assert!(a.lines().skip(1).all(|l| l.split(',').nth(2) == Some("NA")));
}
