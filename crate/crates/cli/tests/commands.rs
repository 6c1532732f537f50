mod common;

use std::path::Path;
use std::process::Command;

use common::{dpn, dpn_ok, exit_code, read_csv};
use dpn_cli::checkpoint::{Checkpoint, ModelKind};
use dpn_cli::commands::initial_network;
use dpn_cli::config::{PartialSettings, TrainSettings};
use dpn_cli::dataset::load_labeled;
use dpn_cli::manifest::RunManifest;
use dpn_cli::report::EvalReport;
use dpn_cli::CliError;
use dpn_core::data::{true_posterior, GaussianMixtureSpec};
use dpn_core::dirichlet::Categorical;
use dpn_core::measures::Measure;
use dpn_core::net::{Activation, Mlp};

const USAGE: i32 = CliError::EXIT_USAGE as i32;
const PARSE: i32 = CliError::EXIT_PARSE as i32;
const NUMERIC: i32 = CliError::EXIT_NUMERIC as i32;
const IO: i32 = CliError::EXIT_IO as i32;

fn small_gen(dir: &Path, sigma: &str) {
    dpn_ok(
        dir,
        &["gen", "--sigma", sigma, "--per-class", "60", "--seed", "3"],
    );
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dpn_ok(d, &["gen", "--sigma", "1", "--seed", "7", "--out", "a"]);
    dpn_ok(d, &["gen", "--sigma", "1", "--seed", "7", "--out", "b"]);
    dpn_ok(d, &["gen", "--sigma", "1", "--seed", "8", "--out", "c"]);
    for f in ["train.csv", "test.csv", "ood_train.csv", "ood_test.csv"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
        assert_ne!(read(d.join("a").join(f)), read(d.join("c").join(f)), "{f}");
    }
    let m = RunManifest::load(&d.join("a/manifest.json")).unwrap();
    assert_eq!(m.command, "gen");
    assert_eq!(m.seed, 7);
    assert_eq!(m.artifacts.len(), 4);
    assert_eq!(m.config["sigma"], 1.0);

    let (header, rows) = read_csv(&d.join("a/train.csv"));
    assert_eq!(header, ["x0", "x1", "label"]);
    assert_eq!(rows.len(), 3000);
    let (header, rows) = read_csv(&d.join("a/ood_test.csv"));
    assert_eq!(header, ["x0", "x1"]);
    assert_eq!(rows.len(), 3000);
}

#[test]
fn gen_usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(exit_code(d, &["gen"]), USAGE);
    assert_eq!(exit_code(d, &["gen", "--sigma", "-1"]), USAGE);
    assert_eq!(
        exit_code(d, &["gen", "--sigma", "1", "--classes", "4"]),
        USAGE
    );
    assert_eq!(exit_code(d, &["frobnicate"]), USAGE);

    std::fs::write(d.join("file"), "x").unwrap();
    let out = dpn(d, &["gen", "--sigma", "1", "--out", "file/sub"]);
    assert_eq!(out.status.code(), Some(IO));
    assert!(String::from_utf8_lossy(&out.stderr).contains("file/sub"));
}

#[test]
fn out_dir_defaults_to_env_then_out() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dpn_ok(d, &["gen", "--sigma", "1", "--per-class", "5"]);
    assert!(d.join("out/train.csv").exists());
    let status = Command::new(env!("CARGO_BIN_EXE_dpn"))
        .current_dir(d)
        .env("DPN_OUT_DIR", "elsewhere")
        .args(["gen", "--sigma", "1", "--per-class", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(d.join("elsewhere/test.csv").exists());
}

fn bayes_error(path: &Path, spec: &GaussianMixtureSpec) -> f64 {
    let data = load_labeled(path, Some(3)).unwrap();
    let wrong = data
        .rows()
        .zip(data.labels())
        .filter(|(x, &l)| {
            Categorical::new(true_posterior(spec, x).unwrap())
                .unwrap()
                .argmax()
                != l
        })
        .count();
    wrong as f64 / data.len() as f64
}

#[test]
fn overlap_grows_with_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dpn_ok(d, &["gen", "--sigma", "1", "--out", "s1"]);
    dpn_ok(d, &["gen", "--sigma", "4", "--out", "s4"]);
    let spec = |sigma| GaussianMixtureSpec {
        sigma,
        ..Default::default()
    };
    let e1 = bayes_error(&d.join("s1/test.csv"), &spec(1.0));
    let e4 = bayes_error(&d.join("s4/test.csv"), &spec(4.0));
    assert!(e1 < 0.01, "{e1}");
    assert!(e4 > 0.2, "{e4}");
}

#[test]
fn zero_epochs_leave_the_initialisation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_gen(d, "1");
    dpn_ok(
        d,
        &[
            "train",
            "dpn",
            "--data",
            "out/train.csv",
            "--ood",
            "out/ood_train.csv",
            "--epochs",
            "0",
            "--seed",
            "5",
        ],
    );
    let ckpt = Checkpoint::load(&d.join("out/dpn.json")).unwrap();
    let settings = TrainSettings::resolve(
        PartialSettings {
            epochs: Some(0),
            seed: Some(5),
            ..Default::default()
        },
        ModelKind::Dpn,
    )
    .unwrap();
    let data = load_labeled(&d.join("out/train.csv"), None).unwrap();
    assert_eq!(ckpt.net, initial_network(&settings, &data).unwrap());
    let (_, rows) = read_csv(&d.join("out/dpn.history.csv"));
    assert!(rows.is_empty());
}

#[test]
fn training_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_gen(d, "4");
    let args = |out: &'static str| {
        [
            "train",
            "dpn",
            "--data",
            "out/train.csv",
            "--ood",
            "out/ood_train.csv",
            "--epochs",
            "5",
            "--keep-prob",
            "0.8",
            "--seed",
            "11",
            "--out",
            out,
        ]
    };
    dpn_ok(d, &args("a.json"));
    dpn_ok(d, &args("b.json"));
    assert_eq!(read(d.join("a.json")), read(d.join("b.json")));
    assert_eq!(read(d.join("a.history.csv")), read(d.join("b.history.csv")));
    let (header, rows) = read_csv(&d.join("a.history.csv"));
    assert_eq!(header, ["epoch", "lr", "loss", "in_kl", "ce", "ood_kl"]);
    assert_eq!(rows.len(), 5);

    let m = RunManifest::load(&d.join("a.manifest.json")).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.config["settings"]["keep_prob"], 0.8);
    assert_eq!(m.artifacts, ["a.json", "a.history.csv"]);
}

#[test]
fn large_target_precision_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_gen(d, "1");
    dpn_ok(
        d,
        &[
            "train",
            "dpn",
            "--data",
            "out/train.csv",
            "--ood",
            "out/ood_train.csv",
            "--alpha0",
            "1000",
            "--ce-weight",
            "0.0",
            "--epochs",
            "2",
        ],
    );
    let m = RunManifest::load(&d.join("out/dpn.manifest.json")).unwrap();
    assert_eq!(m.config["settings"]["alpha0"], 1000.0);
    assert_eq!(m.config["settings"]["ce_weight"], 0.0);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_gen(d, "1");
    std::fs::write(
        d.join("c.toml"),
        "epochs = 4\nschedule = \"one_cycle\"\nlr = 0.002\nhidden = [12]\n",
    )
    .unwrap();
    dpn_ok(
        d,
        &[
            "train",
            "dnn",
            "--data",
            "out/train.csv",
            "--config",
            "c.toml",
            "--epochs",
            "3",
        ],
    );
    let (_, rows) = read_csv(&d.join("out/dnn.history.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "0.002");
    let ckpt = Checkpoint::load(&d.join("out/dnn.json")).unwrap();
    assert_eq!(ckpt.kind, ModelKind::Dnn);
    assert_eq!(ckpt.net.layers()[0].outputs, 12);

    std::fs::write(d.join("bad.toml"), "epochs = [\n").unwrap();
    assert_eq!(
        exit_code(
            d,
            &[
                "train",
                "dnn",
                "--data",
                "out/train.csv",
                "--config",
                "bad.toml"
            ]
        ),
        PARSE
    );
}

#[test]
fn train_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_gen(d, "1");
    let data = ["--data", "out/train.csv"];
    let code = |extra: &[&str]| exit_code(d, &[&["train"], extra, &data[..]].concat());
    assert_eq!(code(&["dnn", "--alpha0", "100"]), USAGE);
    assert_eq!(code(&["dnn", "--ood", "out/ood_train.csv"]), USAGE);
    assert_eq!(code(&["dpn", "--smoothing", "0.5"]), USAGE);
    assert_eq!(code(&["dpn", "--keep-prob", "0"]), USAGE);
    assert_eq!(code(&["dpn", "--cycle-len", "3"]), USAGE);
    assert_eq!(code(&["svm"]), USAGE);
    assert_eq!(exit_code(d, &["train", "dpn"]), USAGE);
    assert_eq!(exit_code(d, &["train", "dpn", "--data", "nowhere.csv"]), IO);
    assert_eq!(
        exit_code(d, &["train", "dpn", "--data", "out/ood_train.csv"]),
        PARSE
    );

    let out = dpn(
        d,
        &[
            "train",
            "dnn",
            "--data",
            "out/train.csv",
            "--lr",
            "1e300",
            "--optimizer",
            "momentum",
        ],
    );
    assert_eq!(out.status.code(), Some(NUMERIC));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-finite loss"), "{err}");
    assert!(!d.join("out/dnn.json").exists());
}

/// Small trained DPN and DNN under `d/out`.
fn trained(d: &Path) {
    small_gen(d, "1");
    dpn_ok(
        d,
        &[
            "train",
            "dpn",
            "--data",
            "out/train.csv",
            "--ood",
            "out/ood_train.csv",
            "--epochs",
            "20",
        ],
    );
    dpn_ok(
        d,
        &[
            "train",
            "dnn",
            "--data",
            "out/train.csv",
            "--epochs",
            "5",
            "--keep-prob",
            "0.5",
        ],
    );
}

#[test]
fn eval_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);

    let out = dpn_ok(
        d,
        &[
            "eval",
            "ood",
            "--model",
            "out/dpn.json",
            "--data",
            "out/test.csv",
            "--ood",
            "out/ood_test.csv",
            "--source",
            "dpn",
        ],
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(
        table.contains("D.Ent.") && table.contains("AUROC"),
        "{table}"
    );
    let report = EvalReport::load(&d.join("out/report_ood_dpn.json")).unwrap();
    for m in Measure::ALL {
        let pair = report.metric(m).unwrap_or_else(|| panic!("{m} missing"));
        assert!((0.0..=1.0).contains(&pair.auroc) && (0.0..=1.0).contains(&pair.aupr));
    }
    assert_eq!((report.positives, report.negatives), (180, 180));
    assert!(report.config.balance);
    assert!(d.join("out/report_ood_dpn.manifest.json").exists());

    // Unbalanced: 180 in-domain against 120 out-of-distribution points.
    dpn_ok(
        d,
        &[
            "gen",
            "--sigma",
            "1",
            "--per-class",
            "60",
            "--ood-test",
            "120",
            "--seed",
            "3",
            "--out",
            "u",
        ],
    );
    let args = [
        "eval",
        "ood",
        "--model",
        "out/dpn.json",
        "--data",
        "u/test.csv",
        "--ood",
        "u/ood_test.csv",
        "--source",
        "dnn",
    ];
    dpn_ok(d, &[&args[..], &["--out", "bal.json"]].concat());
    dpn_ok(
        d,
        &[&args[..], &["--out", "all.json", "--no-balance"]].concat(),
    );
    let bal = EvalReport::load(&d.join("bal.json")).unwrap();
    let all = EvalReport::load(&d.join("all.json")).unwrap();
    assert_eq!((bal.positives, bal.negatives), (120, 120));
    assert_eq!((all.positives, all.negatives), (120, 180));
    assert!(bal.metric(Measure::MutualInformation).is_none());

    // One ensemble member: MI is zero for every example.
    dpn_ok(
        d,
        &[
            "eval",
            "misclass",
            "--model",
            "out/dnn.json",
            "--data",
            "out/test.csv",
            "--source",
            "mcdp",
            "--samples",
            "1",
            "--scores-out",
            "scores.csv",
        ],
    );
    let (header, rows) = read_csv(&d.join("scores.csv"));
    let mi = header
        .iter()
        .position(|h| h == "mutual_information")
        .unwrap();
    let de = header
        .iter()
        .position(|h| h == "differential_entropy")
        .unwrap();
    assert_eq!(rows.len(), 180);
    assert!(rows.iter().all(|r| r[mi] == "0" && r[de].is_empty()));

    // Selected measures only.
    dpn_ok(
        d,
        &[
            "eval",
            "misclass",
            "--model",
            "out/dpn.json",
            "--data",
            "out/test.csv",
            "--source",
            "dpn",
            "--measure",
            "differential_entropy",
            "--out",
            "sel.json",
        ],
    );
    let sel = EvalReport::load(&d.join("sel.json")).unwrap();
    assert!(sel.metric(Measure::DifferentialEntropy).is_some());
    assert!(sel.metric(Measure::Entropy).is_none());
    assert!(sel.error_rate.is_some());

    let base = ["--model", "out/dnn.json", "--data", "out/test.csv"];
    let code = |extra: &[&str]| exit_code(d, &[&["eval"], extra, &base[..]].concat());
    assert_eq!(
        code(&[
            "misclass",
            "--source",
            "dnn",
            "--measure",
            "differential_entropy"
        ]),
        USAGE
    );
    assert_eq!(
        code(&[
            "misclass",
            "--source",
            "mcdp",
            "--measure",
            "differential_entropy"
        ]),
        USAGE
    );
    assert_eq!(code(&["misclass", "--source", "dpn"]), USAGE);
    assert_eq!(
        code(&["misclass", "--source", "dnn", "--samples", "5"]),
        USAGE
    );
    assert_eq!(
        code(&["misclass", "--source", "dnn", "--ood", "out/ood_test.csv"]),
        USAGE
    );
    assert_eq!(code(&["ood", "--source", "dnn"]), USAGE);

    std::fs::write(d.join("broken.json"), "{\"format\": \"dpn-checkpoint\"").unwrap();
    let broken = [
        "eval",
        "misclass",
        "--model",
        "broken.json",
        "--data",
        "out/test.csv",
        "--source",
        "dnn",
    ];
    assert_eq!(exit_code(d, &broken), PARSE);
}

fn save_zero_dpn(path: &Path, inputs: usize) {
    Checkpoint {
        kind: ModelKind::Dpn,
        net: Mlp::zeros(inputs, &[6], 3, Activation::Relu, 1.0).unwrap(),
    }
    .save(path)
    .unwrap();
}

#[test]
fn grid_of_untrained_dpn_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_zero_dpn(&d.join("zero.json"), 2);
    dpn_ok(
        d,
        &[
            "grid",
            "--model",
            "zero.json",
            "--source",
            "dpn",
            "--measure",
            "entropy",
            "--measure",
            "differential_entropy",
            "--out",
            "g",
        ],
    );
    let (header, rows) = read_csv(&d.join("g/grid_dpn_entropy.csv"));
    assert_eq!(header, ["x", "y", "value"]);
    assert_eq!(rows.len(), 40_000);
    assert_eq!(rows[0][..2], ["-12", "-12"]);
    assert_eq!(rows[rows.len() - 1][..2], ["12", "12"]);
    for r in &rows {
        let v: f64 = r[2].parse().unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-15, "{v}");
    }
    let (_, rows) = read_csv(&d.join("g/grid_dpn_differential_entropy.csv"));
    for r in &rows {
        let v: f64 = r[2].parse().unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-12, "{v}");
    }
    assert!(!d.join("g/grid_dpn_max_prob.csv").exists());
    assert!(d.join("g/grid_dpn.manifest.json").exists());

    dpn_ok(
        d,
        &[
            "grid",
            "--model",
            "zero.json",
            "--source",
            "dnn",
            "--resolution",
            "3",
            "--x-range",
            "-1,1",
            "--out",
            "h",
        ],
    );
    let (_, rows) = read_csv(&d.join("h/grid_dnn_max_prob.csv"));
    let xy: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert_eq!(
        xy[..4],
        [("-1", "-12"), ("0", "-12"), ("1", "-12"), ("-1", "0")]
    );
    assert!(!d.join("h/grid_dnn_differential_entropy.csv").exists());
}

#[test]
fn grid_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_zero_dpn(&d.join("wide.json"), 3);
    save_zero_dpn(&d.join("flat.json"), 2);
    assert_eq!(
        exit_code(d, &["grid", "--model", "wide.json", "--source", "dpn"]),
        USAGE
    );
    assert_eq!(
        exit_code(
            d,
            &[
                "grid",
                "--model",
                "flat.json",
                "--source",
                "dpn",
                "--resolution",
                "1"
            ]
        ),
        USAGE
    );
    assert_eq!(
        exit_code(
            d,
            &[
                "grid",
                "--model",
                "flat.json",
                "--source",
                "dpn",
                "--x-range",
                "3,-3"
            ]
        ),
        USAGE
    );
    assert_eq!(
        exit_code(
            d,
            &[
                "grid",
                "--model",
                "flat.json",
                "--source",
                "dnn",
                "--measure",
                "differential_entropy"
            ]
        ),
        USAGE
    );
}
