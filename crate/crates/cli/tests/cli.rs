use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fdif_core::detect::LogisticModel;
use fdif_core::{io, synth, Image};
use tempfile::TempDir;

fn fdif(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdif"))
        .args(args)
        .current_dir(dir)
        .env("FDIF_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn save(dir: &Path, name: &str, img: &Image) {
    io::write_image(&dir.join(name), img).unwrap();
}

fn bytes(path: &Path) -> Vec<u8> {
    io::quantize(&io::read_image(path).unwrap())
}

/// Curve images under `images/` and their truth maps under `truth/`.
fn curve_dirs(root: &Path, count: usize, size: usize) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("truth")).unwrap();
    for (i, s) in synth::curve_dataset(count, size, 5).iter().enumerate() {
        save(&root.join("images"), &format!("c{i}.png"), &s.image);
        save(&root.join("truth"), &format!("c{i}.png"), &s.truth.to_image());
    }
}

#[test]
fn filter_keeps_dimensions() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &synth::curve_sample(40, 1).image);
    let out = fdif(&["filter", "in.png", "-o", "out.png"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let img = io::read_image(&tmp.path().join("out.png")).unwrap();
    assert_eq!(img.shape(), (40, 40));
}

#[test]
fn constant_gray_survives_filtering() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "gray.pgm", &Image::filled(24, 20, 128.0 / 255.0));
    for engine in ["fdif", "fracnn"] {
        let out = fdif(&["filter", "gray.pgm", "-o", "out.pgm", "--engine", engine], tmp.path());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(bytes(&tmp.path().join("out.pgm")).iter().all(|&v| v.abs_diff(128) <= 1), "{engine}");
    }
}

#[test]
fn directory_input_writes_one_output_each() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir(tmp.path().join("in")).unwrap();
    for i in 0..3 {
        save(&tmp.path().join("in"), &format!("img{i}.png"), &synth::texture(20, 16, 0.5, 0.5, i));
    }
    let out = fdif(&["filter", "in", "-o", "out", "--engine", "fdif", "--iterations", "1"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for i in 0..3 {
        let img = io::read_image(&tmp.path().join(format!("out/img{i}_fdif.png"))).unwrap();
        assert_eq!(img.shape(), (20, 16));
    }
}

#[test]
fn threshold_one_gives_an_empty_map() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &synth::curve_sample(32, 2).image);
    let out = fdif(&["detect", "in.png", "-o", "det.png", "--threshold", "1.0"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(bytes(&tmp.path().join("det.png")).iter().all(|&v| v == 0));
}

#[test]
fn otsu_detection_produces_a_binary_map() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &synth::curve_sample(32, 2).image);
    let out = fdif(&["detect", "in.png", "-o", "det.png", "--otsu"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let px = bytes(&tmp.path().join("det.png"));
    assert!(px.iter().all(|&v| v == 0 || v == 255));
    assert!(px.contains(&255));
}

#[test]
fn zero_model_predicts_one_half_everywhere() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &synth::curve_sample(24, 3).image);
    fs::write(tmp.path().join("zero.model"), LogisticModel::zeros(9).to_text()).unwrap();
    let out = fdif(&["detect", "in.png", "-o", "det.png", "--model", "zero.model"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(bytes(&tmp.path().join("det_prob.png")).iter().all(|&v| v == 128));
}

#[test]
fn corrupt_model_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &Image::filled(8, 8, 0.5));
    fs::write(tmp.path().join("bad.model"), "fdif-logistic-model 1\nside 3\n").unwrap();
    let out = fdif(&["detect", "in.png", "-o", "det.png", "--model", "bad.model"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.model"));
}

#[test]
fn training_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 2, 40);
    let args = |o: &'static str| {
        ["train", "--images", "images", "--truth", "truth", "-o", o, "--patches", "200", "--epochs", "40"]
    };
    let a = fdif(&args("a.model"), tmp.path());
    let b = fdif(&args("b.model"), tmp.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let (ma, mb) = (fs::read(tmp.path().join("a.model")).unwrap(), fs::read(tmp.path().join("b.model")).unwrap());
    assert_eq!(ma, mb);
    assert!(LogisticModel::parse(std::str::from_utf8(&ma).unwrap()).is_ok());
    assert!(stdout(&a).contains("accuracy"));
}

#[test]
fn training_without_positives_names_the_class() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 1, 24);
    save(&tmp.path().join("truth"), "c0.png", &Image::zeros(24, 24));
    let out = fdif(&["train", "--images", "images", "--truth", "truth", "-o", "m", "--patches", "20"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("positive"), "{}", stderr(&out));
}

#[test]
fn orphaned_files_are_listed() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 2, 16);
    fs::remove_file(tmp.path().join("truth/c1.png")).unwrap();
    let out = fdif(&["train", "--images", "images", "--truth", "truth", "-o", "m"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("c1.png"), "{}", stderr(&out));
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 2, 24);
    let out = fdif(&["eval", "--pred", "truth", "--truth", "truth", "-o", "m.json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("1.000"), "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], 1);
    assert_eq!(json["ods"], 1.0);
    assert_eq!(json["ois"], 1.0);
    assert_eq!(json["ap"], 1.0);
}

#[test]
fn empty_predictions_score_zero() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 2, 24);
    fs::create_dir(tmp.path().join("pred")).unwrap();
    for i in 0..2 {
        save(&tmp.path().join("pred"), &format!("c{i}_detect.png"), &Image::zeros(24, 24));
    }
    let out = fdif(&["eval", "--pred", "pred", "--truth", "truth", "-o", "m.json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(json["ods"], 0.0);
}

#[test]
fn eval_reports_shape_mismatches() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 1, 24);
    fs::create_dir(tmp.path().join("pred")).unwrap();
    save(&tmp.path().join("pred"), "c0.png", &Image::zeros(20, 24));
    let out = fdif(&["eval", "--pred", "pred", "--truth", "truth"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("c0: prediction 20x24 vs truth 24x24"), "{}", stderr(&out));
}

#[test]
fn stylize_keeps_the_mean() {
    let tmp = TempDir::new().unwrap();
    let img = io::quantized(&synth::photo(48, 32, 1));
    save(tmp.path(), "photo.png", &img);
    let out = fdif(&["stylize", "photo.png", "-o", "s.png"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let styl = io::read_image(&tmp.path().join("s.png")).unwrap();
    assert!((styl.mean() - img.mean()).abs() <= 1.0 / 255.0);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &Image::filled(8, 8, 0.5));
    let zero = fdif(&["stylize", "in.png", "-o", "s.png", "--iterations", "0"], tmp.path());
    assert_eq!(code(&zero), 1);
    assert!(stderr(&zero).contains("iterations"));
    assert_eq!(code(&fdif(&["filter", "in.png"], tmp.path())), 1);
    assert_eq!(code(&fdif(&["detect", "in.png", "-o", "d.png", "--threshold", "2"], tmp.path())), 1);
    assert_eq!(code(&fdif(&["--help"], tmp.path())), 0);
}

#[test]
fn config_file_is_applied_and_checked() {
    let tmp = TempDir::new().unwrap();
    save(tmp.path(), "in.png", &Image::filled(8, 8, 0.5));
    fs::write(tmp.path().join("bad.cfg"), "depth = 2\nwidth = 3\n").unwrap();
    let out = fdif(&["filter", "in.png", "-o", "o.png", "--config", "bad.cfg"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("width"));
    fs::write(tmp.path().join("zero.cfg"), "iterations = 0\n").unwrap();
    let out = fdif(&["stylize", "in.png", "-o", "o.png", "--config", "zero.cfg"], tmp.path());
    assert_eq!(code(&out), 1);
    let out = fdif(&["stylize", "in.png", "-o", "o.png", "--config", "zero.cfg", "--iterations", "1"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn unreadable_input_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.png"), b"not an image").unwrap();
    let out = fdif(&["filter", "bad.png", "-o", "o.png"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.png"));
    assert_eq!(code(&fdif(&["filter", "missing.png", "-o", "o.png"], tmp.path())), 2);
}

#[test]
fn bench_reports_both_bank_sizes() {
    let tmp = TempDir::new().unwrap();
    let out = fdif(&["bench", "--size", "48", "--repeats", "1"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("N=15") && text.contains("N=30") && text.contains("ratio"));
}

#[test]
fn detect_output_directory_can_be_scored_directly() {
    let tmp = TempDir::new().unwrap();
    curve_dirs(tmp.path(), 2, 24);
    fs::write(tmp.path().join("zero.model"), LogisticModel::zeros(9).to_text()).unwrap();
    let out = fdif(&["detect", "images", "-o", "out", "--model", "zero.model"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("out/c0_detect_prob.png").exists());
    let out = fdif(&["eval", "--pred", "out", "--truth", "truth"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("ODS"));
}
