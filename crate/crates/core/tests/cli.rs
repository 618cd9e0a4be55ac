use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depth_flexion::io::{read_gray, write_depth_png, write_tum_trajectory};
use depth_flexion::synth::render_plane;
use depth_flexion::trajectory::{Pose, Trajectory};
use depth_flexion::{PinholeIntrinsics, SensorModel};
use nalgebra::{UnitQuaternion, Vector3};
use tempfile::TempDir;

const CAMERA: &str = "model = \"pinhole\"
fx = 60.0
fy = 60.0
cx = 31.5
cy = 23.5
width = 64
height = 48
depth_scale = 5000.0
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depth-flexion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("camera.toml");
        fs::write(&model, CAMERA).unwrap();
        Self { dir, model }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes a depth PNG of a slanted plane and returns its path.
    fn plane_depth(&self, name: &str, offset: f64) -> PathBuf {
        let model: SensorModel = PinholeIntrinsics::new(60.0, 60.0, 31.5, 23.5, 64, 48)
            .unwrap()
            .into();
        let depth = render_plane(&model, Vector3::new(0.0, 0.5, 0.866), offset).unwrap();
        let path = self.path(name);
        write_depth_png(&depth, &path, 5000.0).unwrap();
        path
    }
}

#[test]
fn convert_flexion_matches_golden_file() {
    let fx = Fixture::new();
    let depth = fx.plane_depth("plane.png", 2.0);
    let out = fx.path("plane.pgm");
    let res = run(&[
        "convert",
        s(&depth),
        "--model",
        s(&fx.model),
        "--method",
        "flexion:3",
        "-o",
        s(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/flexion3_plane.pgm");
    if std::env::var_os("DEPTH_FLEXION_BLESS").is_some() {
        fs::copy(&out, &golden).unwrap();
    }
    assert_eq!(fs::read(&out).unwrap(), fs::read(&golden).unwrap());
}

#[test]
fn convert_prints_stage_timings() {
    let fx = Fixture::new();
    let depth = fx.plane_depth("plane.png", 2.0);
    let out = fx.path("ba.png");
    let res = run(&[
        "convert",
        s(&depth),
        "--model",
        s(&fx.model),
        "--method",
        "ba:horizontal",
        "-o",
        s(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let err = stderr(&res);
    for stage in ["read", "filter", "backproject", "ba:horizontal", "write"] {
        assert!(err.contains(stage), "missing {stage} in {err}");
    }
    let img = read_gray(&out).unwrap();
    assert_eq!((img.width(), img.height()), (64, 48));
    // interior of a plane seen from the front-left is neither black nor white
    let g = img.get(24, 32);
    assert!(g > 0 && g < 255, "{g}");
}

#[test]
fn missing_model_file_exits_with_2() {
    let fx = Fixture::new();
    let depth = fx.plane_depth("plane.png", 2.0);
    let missing = fx.path("nowhere.toml");
    let res = run(&[
        "convert",
        s(&depth),
        "--model",
        s(&missing),
        "--method",
        "flexion:3",
        "-o",
        s(&fx.path("x.png")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains(s(&missing)), "{}", stderr(&res));
}

#[test]
fn bad_method_is_a_usage_error() {
    let fx = Fixture::new();
    let depth = fx.plane_depth("plane.png", 2.0);
    let res = run(&[
        "convert",
        s(&depth),
        "--model",
        s(&fx.model),
        "--method",
        "flexion:4",
        "-o",
        s(&fx.path("x.png")),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

fn batch(fx: &Fixture, assoc: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "batch",
        s(assoc),
        "--model",
        s(&fx.model),
        "--method",
        "flexion:angle",
        "--output-dir",
        s(out),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|d| {
            d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

#[test]
fn batch_writes_one_file_per_record() {
    let fx = Fixture::new();
    fx.plane_depth("a.png", 2.0);
    fx.plane_depth("b.png", 2.2);
    fx.plane_depth("c.png", 2.4);
    let assoc = fx.path("assoc.txt");
    fs::write(
        &assoc,
        "# timestamp depth\n1305031102.175304 a.png\n1305031102.211214 b.png\n1305031102.243211 c.png\n",
    )
    .unwrap();
    let out = fx.path("out");
    let res = batch(&fx, &assoc, &out, &[]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(
        listing(&out),
        [
            "1305031102.175304.png",
            "1305031102.211214.png",
            "1305031102.243211.png"
        ]
    );
    assert!(
        stdout(&res).contains("converted=3 failed=0"),
        "{}",
        stdout(&res)
    );
}

#[test]
fn empty_association_succeeds_with_no_outputs() {
    let fx = Fixture::new();
    let assoc = fx.path("assoc.txt");
    fs::write(&assoc, "# nothing here\n").unwrap();
    let out = fx.path("out");
    let res = batch(&fx, &assoc, &out, &[]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(listing(&out).is_empty());
    assert!(stdout(&res).contains("converted=0 failed=0"));
}

#[test]
fn unreadable_frame_fails_strict_batch_but_keeps_other_outputs() {
    let fx = Fixture::new();
    fx.plane_depth("a.png", 2.0);
    fs::write(fx.path("broken.png"), b"not a png").unwrap();
    fx.plane_depth("c.png", 2.4);
    let assoc = fx.path("assoc.txt");
    fs::write(&assoc, "1.0 a.png\n2.0 broken.png\n3.0 c.png\n").unwrap();

    let out = fx.path("strict");
    let res = batch(&fx, &assoc, &out, &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("broken.png"), "{}", stderr(&res));
    assert_eq!(listing(&out), ["1.000000.png", "3.000000.png"]);

    let out = fx.path("lenient");
    let res = batch(&fx, &assoc, &out, &["--lenient"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(listing(&out).len(), 2);
    assert!(stdout(&res).contains("converted=2 failed=1"));
}

#[test]
fn batch_output_is_independent_of_thread_count() {
    let fx = Fixture::new();
    let mut lines = String::new();
    for k in 0..6 {
        fx.plane_depth(&format!("{k}.png"), 1.5 + 0.1 * k as f64);
        lines.push_str(&format!("{}.5 {k}.png\n", 10 + k));
    }
    let assoc = fx.path("assoc.txt");
    fs::write(&assoc, lines).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = fx.path(&format!("out{threads}"));
        let res = batch(
            &fx,
            &assoc,
            &out,
            &["--threads", threads, "--format", "pgm"],
        );
        assert!(res.status.success(), "{}", stderr(&res));
        let files: Vec<Vec<u8>> = listing(&out)
            .iter()
            .map(|n| fs::read(out.join(n)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 6);
    assert_eq!(outputs[0], outputs[1]);
}

fn square(z_lift: f64, t0: f64) -> Trajectory {
    Trajectory::new(
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| {
                Pose::new(
                    t0 + k as f64,
                    Vector3::new(x, y, z_lift * x * y),
                    UnitQuaternion::identity(),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn value(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
        .parse()
        .unwrap()
}

#[test]
fn evaluate_reports_ate() {
    let fx = Fixture::new();
    let gt = fx.path("gt.txt");
    let est = fx.path("est.txt");
    write_tum_trajectory(&square(0.0, 0.0), &gt).unwrap();
    write_tum_trajectory(&square(0.1, 0.0), &est).unwrap();

    let res = run(&["evaluate", s(&gt), s(&gt)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let line = stdout(&res)
        .lines()
        .find(|l| l.starts_with("metric=ate"))
        .unwrap()
        .to_owned();
    assert!(value(&line, "rmse") < 1e-12);

    let res = run(&["evaluate", s(&est), s(&gt), "--metric", "ate"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let line = stdout(&res)
        .lines()
        .find(|l| l.starts_with("metric=ate"))
        .unwrap()
        .to_owned();
    assert!((value(&line, "rmse") - 0.1).abs() < 1e-12, "{line}");
    assert_eq!(value(&line, "pairs"), 4.0);
}

#[test]
fn evaluate_reports_rpe() {
    let fx = Fixture::new();
    let gt = fx.path("gt.txt");
    let est = fx.path("est.txt");
    let line = |v: f64| {
        Trajectory::new(
            (0..10)
                .map(|k| {
                    Pose::new(
                        k as f64 * 0.1,
                        Vector3::new(k as f64 * v, 0.0, 0.0),
                        UnitQuaternion::identity(),
                    )
                })
                .collect(),
        )
        .unwrap()
    };
    write_tum_trajectory(&line(0.5), &gt).unwrap();
    write_tum_trajectory(&line(0.53), &est).unwrap();
    let res = run(&[
        "evaluate",
        s(&est),
        s(&gt),
        "--metric",
        "rpe",
        "--delta",
        "2",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let out = stdout(&res);
    let kv = out.lines().find(|l| l.starts_with("metric=rpe")).unwrap();
    assert!((value(kv, "mean") - 0.06).abs() < 1e-9, "{kv}");
    assert_eq!(value(kv, "steps"), 8.0);
}

#[test]
fn evaluate_disjoint_trajectories_fails() {
    let fx = Fixture::new();
    let gt = fx.path("gt.txt");
    let est = fx.path("est.txt");
    write_tum_trajectory(&square(0.0, 0.0), &gt).unwrap();
    write_tum_trajectory(&square(0.0, 100.0), &est).unwrap();
    let res = run(&["evaluate", s(&est), s(&gt)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("no associations"), "{}", stderr(&res));
}

#[test]
fn evaluate_strict_rejects_malformed_lines() {
    let fx = Fixture::new();
    let gt = fx.path("gt.txt");
    write_tum_trajectory(&square(0.0, 0.0), &gt).unwrap();
    let bad = fx.path("bad.txt");
    let mut text = fs::read_to_string(&gt).unwrap();
    text.push_str("4.0 1 2 three 0 0 0 1\n");
    fs::write(&bad, text).unwrap();
    let res = run(&["evaluate", s(&bad), s(&gt)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("bad.txt"), "{}", stderr(&res));
    let res = run(&["evaluate", s(&bad), s(&gt), "--lenient"]);
    assert!(res.status.success(), "{}", stderr(&res));
}

#[test]
fn synth_sequence_round_trips_through_batch_and_evaluate() {
    let fx = Fixture::new();
    let seq = fx.path("seq");
    let res = run(&[
        "synth",
        "--model",
        s(&fx.model),
        "--output-dir",
        s(&seq),
        "--frames",
        "4",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(listing(&seq.join("depth")).len(), 4);

    let out = fx.path("out");
    let res = batch(&fx, &seq.join("associations.txt"), &out, &[]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(listing(&out), listing(&seq.join("depth")));

    let gt = seq.join("groundtruth.txt");
    let res = run(&["evaluate", s(&gt), s(&gt)]);
    assert!(res.status.success(), "{}", stderr(&res));
}

#[test]
fn spherical_model_sequence() {
    let fx = Fixture::new();
    let model = fx.path("scanner.toml");
    fs::write(
        &model,
        "model = \"spherical\"\nazimuth_min = 0.0\nazimuth_max = 6.283185307179586\n\
         polar_min = 0.3\npolar_max = 2.8\nwidth = 180\nheight = 60\ndepth_scale = 5000.0\n",
    )
    .unwrap();
    let seq = fx.path("seq");
    let res = run(&[
        "synth",
        "--model",
        s(&model),
        "--output-dir",
        s(&seq),
        "--frames",
        "2",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let first = seq.join("depth").join(&listing(&seq.join("depth"))[0]);
    let out = fx.path("scan.png");
    let res = run(&[
        "convert",
        s(&first),
        "--model",
        s(&model),
        "--method",
        "flexion:5",
        "-o",
        s(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let img = read_gray(&out).unwrap();
    assert_eq!((img.width(), img.height()), (180, 60));
    assert!(img.valid_mask().iter().filter(|&&v| v).count() > 180 * 40);
}
