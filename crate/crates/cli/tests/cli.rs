use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nornet::model::LayerFamily;
use nornet_cli::config::RunConfig;
use nornet_cli::run::{CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};
use nornet_cli::{cmd_sweep, exit, RunSpec};
use tempfile::TempDir;

fn nornet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nornet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TREC_SYNTH: &str = "task = \"trec\"\n[model]\nlayer = { family = \"ma\" }\nhidden = 8\nembedding_dim = 16\n\
    [train]\nmax_epochs = 2\n[data]\nsynthetic = { kind = \"question\", train_size = 60, dev_size = 20 }\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn budget_prints_published_sizes() {
    let o = nornet(&["budget", "--task", "sst", "--family", "irnn", "--budget", "200000"]);
    assert_eq!(o.status.code(), Some(exit::OK));
    assert!(stdout(&o).starts_with("h=212 count="), "{}", stdout(&o));
    let o = nornet(&["budget", "--task", "sst", "--family", "lstm", "--budget", "800000"]);
    assert!(stdout(&o).starts_with("h=213 "));
    assert!(stdout(&o).contains("delta="));
}

#[test]
fn tiny_budget_fails() {
    let o = nornet(&["budget", "--task", "sst", "--family", "irnn", "--budget", "10"]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("budget below minimum"), "{}", stderr(&o));
}

#[test]
fn budget_table_csv() {
    let o = nornet(&["budget", "--table", "--csv"]);
    assert_eq!(o.status.code(), Some(exit::OK));
    let text = stdout(&o);
    assert!(text.starts_with("task,budget,family,hidden,count,delta,published,flag\n"));
    assert_eq!(text.lines().count(), 1 + 63);
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    for family in ["ma", "gate"] {
        let o = nornet(&["gradcheck", "--family", family, "--hidden", "4", "--steps", "3"]);
        assert_eq!(o.status.code(), Some(exit::OK), "{family}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }
    let o = nornet(&["gradcheck", "--family", "ma", "--hidden", "4", "--steps", "3", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(exit::GRADCHECK_FAILED));
    assert!(stdout(&o).contains("FAIL"));
    let o = nornet(&["gradcheck", "--hidden", "9"]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TREC_SYNTH);
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = nornet(&["train", "--config", &cfg, "--seed", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
        for f in [CONFIG_FILE, METRICS_FILE, CHECKPOINT_FILE] {
            assert!(out.join(f).exists(), "{f}");
        }
        logs.push(fs::read_to_string(out.join(METRICS_FILE)).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    assert!(logs[0].starts_with("epoch,train_loss,dev_metric,lr\n"));

    // the echoed config alone reproduces the run
    let echo = tmp.path().join("a").join(CONFIG_FILE);
    let again = tmp.path().join("c");
    let o = nornet(&["train", "--config", echo.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(again.join(METRICS_FILE)).unwrap(), logs[0]);

    let o = nornet(&["eval", "--run", tmp.path().join("a").to_str().unwrap(), "--split", "dev"]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    let dev: f64 = stdout(&o).trim().parse().unwrap();
    let best = logs[0]
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(dev, best);
}

#[test]
fn files_on_disk_train_and_evaluate() {
    let tmp = TempDir::new().unwrap();
    let lines: Vec<String> = (0..40)
        .map(|i| match i % 3 {
            0 => format!("LOC:city Where is town{i} ?"),
            1 => format!("HUM:ind Who wrote book{i} ?"),
            _ => format!("NUM:count How many cats{i} are there ?"),
        })
        .collect();
    fs::write(tmp.path().join("train.txt"), lines.join("\n")).unwrap();
    fs::write(tmp.path().join("test.txt"), lines[..9].join("\n")).unwrap();
    fs::write(tmp.path().join("vec.txt"), "where 1 0 0 0\nwho 0 1 0 0\nhow 0 0 1 0\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "task = \"trec\"\n[model]\nlayer = { family = \"gate\" }\nhidden = 16\nembedding_dim = 4\n\
         [train]\nmax_epochs = 30\nlearning_rate = 0.02\ndropout = 0.0\ntarget_metric = 1.0\n\
         [data]\ntrain = \"train.txt\"\ntest = \"test.txt\"\nembeddings = \"vec.txt\"\n",
    );
    let out = tmp.path().join("run");
    let o = nornet(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    assert!(stdout(&o).contains("test 1.0000"), "{}", stdout(&o));
    let o = nornet(&["eval", "--run", out.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "1.000000");
}

#[test]
fn missing_data_path_is_named() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("absent.tsv");
    let o = nornet(&[
        "train",
        "--task",
        "sst",
        "--train",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("absent.tsv"), "{}", stderr(&o));
}

#[test]
fn malformed_corpus_line_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("t.tsv"), "3\tgood movie\n9\tbad label\n").unwrap();
    let cfg = write_config(tmp.path(), "task = \"sst\"\n[data]\ntrain = \"t.tsv\"\n");
    let o = nornet(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("t.tsv:2:"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_file_and_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "task = \"trec\"\n[train]\nbatchsize = 4\n");
    let o = nornet(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let err = stderr(&o);
    assert!(err.contains("run.toml") && err.contains("batchsize"), "{err}");
}

#[test]
fn exploding_run_reports_numeric_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "task = \"sst\"\n[model]\nlayer = { family = \"irnn\" }\nhidden = 8\nembedding_dim = 8\n\
         [train]\nlearning_rate = 1e300\nmax_epochs = 3\ndropout = 0.0\n\
         [data]\nembedding_std = 1e10\nsynthetic = { kind = \"keyword\", train_size = 40 }\n",
    );
    let o = nornet(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::NUMERIC), "{}{}", stdout(&o), stderr(&o));
}

fn sweep_spec(dir: &Path) -> RunSpec {
    let text = "task = \"sst\"\n[model]\nlayer = { family = \"ma\" }\nhidden = 6\nembedding_dim = 8\n\
                [train]\nmax_epochs = 2\nlearning_rate = 0.01\n\
                [data]\nsynthetic = { kind = \"keyword\", train_size = 40, dev_size = 20 }\n";
    let origin = dir.join("run.toml");
    RunSpec::new(&RunConfig::parse(text, &origin).unwrap(), &origin, dir.join("sweep")).unwrap()
}

#[test]
fn sweep_single_seed_has_zero_std() {
    let tmp = TempDir::new().unwrap();
    let t = cmd_sweep(&sweep_spec(tmp.path()), &[5], &[], 1).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].mean, t.rows[0].runs[0].1);
    assert_eq!(t.rows[0].std, 0.0);
}

#[test]
fn sweep_mean_is_bounded_and_repeatable() {
    let tmp = TempDir::new().unwrap();
    let spec = sweep_spec(tmp.path());
    let families = [LayerFamily::MA, LayerFamily::Irnn];
    let a = cmd_sweep(&spec, &[1, 2, 3], &families, 3).unwrap();
    for row in &a.rows {
        let vals: Vec<f64> = row.runs.iter().map(|r| r.1).collect();
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo - 1e-12 <= row.mean && row.mean <= hi + 1e-12);
        assert_eq!(row.runs.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3]);
    }
    let b = cmd_sweep(&spec, &[1, 2, 3], &families, 1).unwrap();
    assert_eq!(a, b);
    assert!(tmp.path().join("sweep/sweep.csv").exists());
    assert!(tmp.path().join("sweep/irnn/seed-2").join(METRICS_FILE).exists());
}

#[test]
fn sweep_command_prints_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TREC_SYNTH);
    let out = tmp.path().join("s");
    let o = nornet(&["sweep", "--config", &cfg, "--seeds", "1,2", "--jobs", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    assert!(stdout(&o).contains("MA-NOR"), "{}", stdout(&o));
}
