use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinsplat"))
        .args(args)
        .env("SPINSPLAT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn plan_swing_budget_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "plan", "--strategy", "swing", "--s", "0.2pi", "--budget", "120", "--v", "0.19947", "--m", "3", "--N", "7",
        "--out", p(dir.path()),
    ]);
    assert_eq!(value(&out, "M"), 20.0);
    assert_eq!(value(&out, "P"), 140.0);
    assert!(value(&out, "T") <= 120.0);
    let csv = std::fs::read_to_string(dir.path().join("coverage.csv")).unwrap();
    assert!(csv.starts_with("view_bin,theta_bin,count\n"));
    let total: usize = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 140);
}

#[test]
fn plan_static_and_rotating_examples() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["plan", "--strategy", "static", "--M", "8", "--out", p(&s)]);
    let m: peek::Manifest = peek::read(&s.join("schedule.json"));
    assert_eq!(m.entries, 8);
    assert!(m.thetas.iter().all(|t| *t == 0.0));

    let out = ok(&["plan", "--strategy", "rotating", "--M", "8", "--N", "60", "--out", p(&dir.path().join("r"))]);
    assert_eq!(value(&out, "P"), 480.0);
}

#[test]
fn infeasible_budget_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["plan", "--strategy", "rotating", "--budget", "5", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    assert_eq!(run(&["plan"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn schema_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 7}"#).unwrap();
    let out = run(&["gen", "--schedule", p(&bad), "--out", p(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["eval", "--checkpoint", p(&bad), "--data", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_writes_images_masks_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan");
    ok(&["plan", "--strategy", "swing", "--s", "0.5pi", "--M", "1", "--N", "3", "--width", "16", "--height", "16", "--out", p(&plan)]);
    let data = dir.path().join("data");
    ok(&["gen", "--schedule", p(&plan.join("schedule.json")), "--out", p(&data)]);
    let count = |sub: &str, ext: &str| {
        std::fs::read_dir(data.join(sub))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
            .count()
    };
    assert_eq!(count("images", "png"), 3);
    assert_eq!(count("masks", "png"), 3);
    assert!(data.join("manifest.json").exists());
}

#[test]
fn train_eval_render_round_trip() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan");
    ok(&["plan", "--strategy", "rotating", "--M", "3", "--N", "8", "--width", "24", "--height", "24", "--out", p(&plan)]);
    let data = dir.path().join("data");
    ok(&["gen", "--schedule", p(&plan.join("schedule.json")), "--out", p(&data)]);
    let manifest = data.join("manifest.json");
    let model = dir.path().join("model");
    ok(&[
        "train", "--data", p(&manifest), "--iterations", "300", "--gaussians", "300", "--seed", "4", "--out", p(&model),
    ]);
    let ckpt = model.join("checkpoint.json");
    let log = std::fs::read_to_string(model.join("train_log.csv")).unwrap();
    assert!(log.starts_with("iteration,loss,gaussians\n"));
    assert_eq!(log.lines().count(), 301);

    let eval = ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&manifest), "--out", p(&dir.path().join("eval.csv"))]);
    let mean: f64 = eval.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(mean > 15.0, "{eval}");

    // renders at the trained rotations reproduce the dataset to training error
    let renders = dir.path().join("renders");
    ok(&["render", "--checkpoint", p(&ckpt), "--data", p(&manifest), "--out", p(&renders)]);
    let mut total = 0.0;
    for i in 0..24 {
        let got = spinsplat::io::read_pfm(&renders.join(format!("render_{i:04}.pfm"))).unwrap();
        let want = spinsplat::io::read_pfm(&data.join(format!("images/frame_{i:04}.pfm"))).unwrap();
        let mask = spinsplat::io::read_mask_png(&data.join(format!("masks/mask_{i:04}.png"))).unwrap();
        total += spinsplat::train::masked_psnr(&got, &want, &mask).unwrap();
    }
    assert!(total / 24.0 >= mean - 1.0, "{} vs {mean}", total / 24.0);

    ok(&["render", "--checkpoint", p(&ckpt), "--data", p(&manifest), "--entry", "1", "--theta", "0.3pi", "--out", p(&renders)]);
    assert!(renders.join("render_0001.png").exists());

    let distilled = dir.path().join("distilled.json");
    ok(&["distill", "--checkpoint", p(&ckpt), "--theta", "0.25pi", "--out", p(&distilled)]);
    ok(&["eval", "--checkpoint", p(&distilled), "--data", p(&manifest)]);

    let combined = dir.path().join("combined.png");
    let out = run(&[
        "combine", "--checkpoint", p(&ckpt), "--spec", "0:1;0.5pi:0.5,0.2,0.2", "--data", p(&manifest), "--out",
        p(&combined),
    ]);
    assert!(out.status.success());
    assert!(combined.exists() && combined.with_extension("pfm").exists());

    assert!(start.elapsed().as_secs_f64() < 60.0, "round trip took {:?}", start.elapsed());
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan");
    ok(&["plan", "--strategy", "rotating", "--M", "2", "--N", "4", "--width", "16", "--height", "16", "--out", p(&plan)]);
    let data = dir.path().join("data");
    ok(&["gen", "--schedule", p(&plan.join("schedule.json")), "--out", p(&data)]);
    let m = data.join("manifest.json");
    for run_dir in ["a", "b"] {
        ok(&["train", "--data", p(&m), "--iterations", "30", "--gaussians", "80", "--seed", "9", "--out", p(&dir.path().join(run_dir))]);
    }
    for f in ["checkpoint.json", "train_log.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_two_angles_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "sweep", "--angles", "0,2pi", "--budget", "40", "--res", "12", "--iterations", "5", "--gaussians", "30",
        "--test-cameras", "2", "--test-thetas", "2", "--out", p(dir.path()),
    ]);
    assert!(out.contains("best s:"));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let p0: usize = rows[0][3].parse().unwrap();
    let p1: usize = rows[1][3].parse().unwrap();
    assert!(p0 < p1);
}

#[test]
fn blur_sweep_reports_each_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "blur-sweep", "--betas", "0,inf", "--angles", "0,2pi", "--budget", "40", "--res", "12", "--iterations", "5",
        "--gaussians", "30", "--test-cameras", "2", "--test-thetas", "2", "--out", p(dir.path()),
    ]);
    assert!(out.contains("beta = inf"));
    let csv = std::fs::read_to_string(dir.path().join("blur_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("sweep_level_1.csv").exists());
}

mod peek {
    use std::path::Path;

    pub struct Manifest {
        pub entries: usize,
        pub thetas: Vec<f64>,
    }

    pub fn read(path: &Path) -> Manifest {
        let m = spinsplat::io::Manifest::read(path).unwrap();
        Manifest {
            entries: m.entries.len(),
            thetas: m.entries.iter().map(|e| e.theta).collect(),
        }
    }
}
