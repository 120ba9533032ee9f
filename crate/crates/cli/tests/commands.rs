use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use enscal::{load_dataset, CsvSchema, VariableKind};

fn enscal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enscal"))
        .args(args)
        .env_remove("ENSCAL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample.csv")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a config for the bundled sample into `dir` with `extra` appended.
fn config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "version = 1\ndata = {:?}\nvariable = \"real_line\"\nmethod = \"emos_normal\"\noutput_dir = \"out\"\n{extra}",
        sample()
    );
    fs::write(&path, text).unwrap();
    path
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn calibrate_on_sample_writes_one_score_row() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "training_length = 20\n");
    let out = enscal(&["calibrate", "-c", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let scores = lines(&dir.path().join("out/scores.csv"));
    assert_eq!(scores.len(), 2);
    assert!(scores[1].starts_with("emos_normal,20,20,"));
    for f in ["cases.csv", "models.txt", "hist_rank.csv", "hist_pit.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn calibrate_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "training_length = 15\n");
    let read_all = || {
        [
            "scores.csv",
            "cases.csv",
            "models.txt",
            "hist_rank.csv",
            "hist_pit.csv",
        ]
        .map(|f| fs::read(dir.path().join("out").join(f)).unwrap())
    };
    assert!(enscal(&["calibrate", "-c", cfg.to_str().unwrap()])
        .status
        .success());
    let first = read_all();
    assert!(enscal(&["calibrate", "-c", cfg.to_str().unwrap()])
        .status
        .success());
    assert_eq!(first, read_all());
}

#[test]
fn unknown_config_key_exits_2_naming_it() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "training_length = 20\nwindow_size = 3\n");
    let out = enscal(&["calibrate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("window_size"), "{}", stderr(&out));
}

#[test]
fn output_dir_override_from_environment() {
    let dir = TempDir::new().unwrap();
    let elsewhere = dir.path().join("elsewhere");
    let cfg = config(dir.path(), "training_length = 20\n");
    let out = Command::new(env!("CARGO_BIN_EXE_enscal"))
        .args(["calibrate", "-c", cfg.to_str().unwrap()])
        .env("ENSCAL_OUTPUT_DIR", &elsewhere)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(elsewhere.join("scores.csv").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_data_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "date,station,obs,m1,m2\n2012-01-01,A,1.0,oops,2\n").unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "version = 1\ndata = \"bad.csv\"\nvariable = \"real_line\"\nmethod = \"raw\"\ntraining_length = 1\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = enscal(&["calibrate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sweep_rows_and_argmin() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "lengths = [10, 12]\n");
    let out = enscal(&["sweep", "-c", cfg.to_str().unwrap(), "--jobs", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let scores = lines(&dir.path().join("out/scores.csv"));
    assert_eq!(scores.len(), 4);
    let argmin = lines(&dir.path().join("out/argmin.csv"));
    assert_eq!(argmin[0], "score,opt_length,opt_value");
    let names: Vec<&str> = argmin[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["crps", "mae_median", "rmse_mean"]);
}

#[test]
fn sweep_with_reversed_range_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "lengths = [12, 10]\n");
    let out = enscal(&["sweep", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lengths"));
}

fn write_cases(dir: &Path, rows: &[(usize, &str)]) -> PathBuf {
    let path = dir.join("cases.csv");
    let mut text = String::from("date,station,obs,crps,median,mean,lower,upper,pit,rank\n");
    for (i, (rank, pit)) in rows.iter().enumerate() {
        text.push_str(&format!("2012-04-01,S{i},0,0,0,0,0,0,{pit},{rank}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn counts(csv: &[u8]) -> Vec<u64> {
    String::from_utf8_lossy(csv)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn rank_histogram_of_each_rank_once() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<(usize, &str)> = (1..=12).map(|r| (r, "")).collect();
    let cases = write_cases(dir.path(), &rows);
    let out = enscal(&[
        "hist",
        "--kind",
        "rank",
        "--bins",
        "12",
        cases.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(counts(&out.stdout), vec![1; 12]);
}

#[test]
fn pit_histogram_of_constant_half() {
    let dir = TempDir::new().unwrap();
    let rows = vec![(1, "0.5"); 7];
    let cases = write_cases(dir.path(), &rows);
    let out = enscal(&[
        "hist",
        "--kind",
        "pit",
        "--bins",
        "11",
        cases.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut want = vec![0; 11];
    want[5] = 7;
    assert_eq!(counts(&out.stdout), want);
}

#[test]
fn hist_rejects_empty_and_missing_columns() {
    let dir = TempDir::new().unwrap();
    let empty = write_cases(dir.path(), &[]);
    let out = enscal(&["hist", "--kind", "rank", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let no_pit = dir.path().join("nopit.csv");
    fs::write(&no_pit, "date,station,rank\n2012-04-01,A,1\n").unwrap();
    let out = enscal(&["hist", "--kind", "pit", no_pit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("pit"));
}

#[test]
fn synth_round_trips_and_reports_oracle() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("synth.csv");
    let args = [
        "synth",
        "--scenario",
        "emos_normal",
        "--seed",
        "42",
        "--n-dates",
        "300",
        "--stations",
        "10",
        "--members",
        "9",
        "--out",
    ];
    let out = enscal(&[&args[..], &[path.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("generator mean CRPS ="), "{summary}");
    let ds = load_dataset(
        fs::File::open(&path).unwrap(),
        &CsvSchema::default(),
        VariableKind::RealLine,
    )
    .unwrap();
    assert_eq!(ds.cases().len(), 3000);
    assert_eq!(ds.member_count(), 9);

    let first = fs::read(&path).unwrap();
    assert!(enscal(&[&args[..], &[path.to_str().unwrap()]].concat())
        .status
        .success());
    assert_eq!(first, fs::read(&path).unwrap());
}

#[test]
fn synth_rejects_unknown_parameter() {
    let out = enscal(&["synth", "--scenario", "bma_gamma", "--param", "nope=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn underdispersive_raw_rank_histogram_is_u_shaped() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("raw.csv");
    let out = enscal(&[
        "synth",
        "--scenario",
        "underdispersive_raw",
        "--seed",
        "3",
        "--n-dates",
        "60",
        "--stations",
        "10",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "version = 1\ndata = \"raw.csv\"\nvariable = \"real_line\"\nmethod = \"raw\"\ntraining_length = 10\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = enscal(&["calibrate", "-c", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!dir.path().join("out/hist_pit.csv").exists());
    let c = counts(&fs::read(dir.path().join("out/hist_rank.csv")).unwrap());
    let avg = c.iter().sum::<u64>() as f64 / c.len() as f64;
    assert!((c[0] + c[c.len() - 1]) as f64 > 2.0 * avg, "{c:?}");
}
