use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sisct::image_io::{read_pgm, read_share, write_pgm, GrayImage};

const S: [[u8; 4]; 4] = [
    [157, 160, 190, 130],
    [89, 255, 224, 192],
    [10, 220, 255, 224],
    [64, 128, 192, 255],
];

fn sisct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sisct"))
        .args(args)
        .env_remove("SISCT_REQUIRE_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_rows(&S).unwrap();
        fs::write(dir.path().join("s.pgm"), write_pgm(&img)).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn split(&self, scheme: &str, prefix: &str, seed: &str) -> Output {
        sisct(&[
            "split",
            "--scheme",
            scheme,
            "--in",
            p(&self.path("s.pgm")),
            "--out-prefix",
            p(&self.path(prefix)),
            "--seed",
            seed,
        ])
    }
}

#[test]
fn split_xor_writes_known_shares() {
    let fx = Fixture::new();
    let out = fx.split("xor", "x", "1");
    assert_eq!(code(&out), 0, "{out:?}");
    let sc1 = read_share(&fs::read(fx.path("x.1.shr")).unwrap()).unwrap();
    let sc2 = read_share(&fs::read(fx.path("x.2.shr")).unwrap()).unwrap();
    let sc3 = read_share(&fs::read(fx.path("x.3.shr")).unwrap()).unwrap();
    assert_eq!(&sc1.pixels()[..4], &[7, 0, 6, 0]);
    assert_eq!(&sc2.pixels()[..4], &[10, 12, 15, 9]);
    assert_eq!(&sc3.pixels()[..4], &[13, 12, 9, 9]);
    let params = fs::read_to_string(fx.path("x.params")).unwrap();
    assert!(params.starts_with("sisct-params v1\nscheme=xor\n"));
}

#[test]
fn seeded_partition_split_is_reproducible() {
    let fx = Fixture::new();
    assert_eq!(code(&fx.split("partition", "a", "7")), 0);
    assert_eq!(code(&fx.split("partition", "b", "7")), 0);
    for suffix in [".1.shr", ".2.shr", ".3.shr", ".params"] {
        assert_eq!(
            fs::read(fx.path(&format!("a{suffix}"))).unwrap(),
            fs::read(fx.path(&format!("b{suffix}"))).unwrap(),
            "{suffix}"
        );
    }
}

#[test]
fn missing_input_fails_with_diagnostic() {
    let fx = Fixture::new();
    let out = sisct(&[
        "split",
        "--scheme",
        "xor",
        "--in",
        p(&fx.path("nope.pgm")),
        "--out-prefix",
        p(&fx.path("x")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}

#[test]
fn seed_required_in_test_mode() {
    let fx = Fixture::new();
    let out = Command::new(env!("CARGO_BIN_EXE_sisct"))
        .args(["split", "--scheme", "partition", "--in"])
        .arg(fx.path("s.pgm"))
        .arg("--out-prefix")
        .arg(fx.path("x"))
        .env("SISCT_REQUIRE_SEED", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(!fx.path("x.1.shr").exists());
}

#[test]
fn reconstruct_one_and_three() {
    let fx = Fixture::new();
    fx.split("xor", "x", "1");
    let out = sisct(&[
        "reconstruct",
        "--shares",
        p(&fx.path("x.1.shr")),
        p(&fx.path("x.3.shr")),
        "--out",
        p(&fx.path("r.pgm")),
        "--params",
        p(&fx.path("x.params")),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let r = read_pgm(&fs::read(fx.path("r.pgm")).unwrap()).unwrap();
    assert_eq!(r, GrayImage::from_rows(&S).unwrap());

    let m = sisct(&[
        "mse",
        "--a",
        p(&fx.path("s.pgm")),
        "--b",
        p(&fx.path("r.pgm")),
    ]);
    assert_eq!(code(&m), 0);
    assert_eq!(stdout(&m).trim(), "0");
}

#[test]
fn reconstruct_error_codes() {
    let fx = Fixture::new();
    fx.split("xor", "x", "1");
    fx.split("partition", "q", "1");
    let dup = sisct(&[
        "reconstruct",
        "--shares",
        p(&fx.path("x.1.shr")),
        p(&fx.path("x.1.shr")),
        "--out",
        p(&fx.path("r.pgm")),
    ]);
    assert_eq!(code(&dup), 1);
    let mixed = sisct(&[
        "reconstruct",
        "--shares",
        p(&fx.path("x.1.shr")),
        p(&fx.path("q.2.shr")),
        "--out",
        p(&fx.path("r.pgm")),
    ]);
    assert_eq!(code(&mixed), 2);
}

#[test]
fn tampered_share_refused_with_params() {
    let fx = Fixture::new();
    fx.split("partition", "q", "3");
    let t = sisct(&[
        "tamper",
        "--share",
        p(&fx.path("q.3.shr")),
        "--offset",
        "5",
        "--xor-byte",
        "0x01",
        "--out",
        p(&fx.path("bad3.shr")),
    ]);
    assert_eq!(code(&t), 0, "{t:?}");
    let out = sisct(&[
        "reconstruct",
        "--shares",
        p(&fx.path("q.1.shr")),
        p(&fx.path("bad3.shr")),
        "--out",
        p(&fx.path("r.pgm")),
        "--params",
        p(&fx.path("q.params")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cheater share(s): 3"));
    assert!(!fx.path("r.pgm").exists());
}

#[test]
fn verify_reports_and_exit_codes() {
    let fx = Fixture::new();
    fx.split("xor", "x", "9");
    let claim = |i: u8, name: &str| format!("{i}={}", p(&fx.path(name)));
    let params = fx.path("x.params");

    let ok = sisct(&[
        "verify",
        "--params",
        p(&params),
        "--claim",
        &claim(1, "x.1.shr"),
        "--claim",
        &claim(2, "x.2.shr"),
        "--claim",
        &claim(3, "x.3.shr"),
    ]);
    assert_eq!(code(&ok), 0);
    assert_eq!(stdout(&ok).matches("honest").count(), 3);

    sisct(&[
        "tamper",
        "--share",
        p(&fx.path("x.2.shr")),
        "--offset",
        "0",
        "--xor-byte",
        "16",
    ]);
    let bad = sisct(&[
        "verify",
        "--params",
        p(&params),
        "--claim",
        &claim(1, "x.1.shr"),
        "--claim",
        &claim(2, "x.2.shr"),
    ]);
    assert_eq!(code(&bad), 3);
    let report = stdout(&bad);
    assert!(report.contains("1 honest"));
    assert!(report.contains("2 cheater"));

    let range = sisct(&[
        "verify",
        "--params",
        p(&params),
        "--claim",
        &claim(4, "x.1.shr"),
    ]);
    assert_eq!(code(&range), 1);
}

#[test]
fn params_subcommand_commits_existing_shares() {
    let fx = Fixture::new();
    fx.split("partition", "q", "4");
    let out = sisct(&[
        "params",
        "--shares",
        p(&fx.path("q.3.shr")),
        p(&fx.path("q.1.shr")),
        p(&fx.path("q.2.shr")),
        "--out",
        p(&fx.path("again.params")),
        "--seed",
        "11",
        "--prime",
        "1000003",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(fs::read_to_string(fx.path("again.params"))
        .unwrap()
        .contains("p=1000003\n"));
    let v = sisct(&[
        "verify",
        "--params",
        p(&fx.path("again.params")),
        "--claim",
        &format!("2={}", p(&fx.path("q.2.shr"))),
    ]);
    assert_eq!(code(&v), 0);
}

#[test]
fn simulate_clean_and_tampered() {
    let fx = Fixture::new();
    fs::write(
        fx.path("clean.scn"),
        "scheme=partition\nseed=5\nimage=s.pgm\n",
    )
    .unwrap();
    let out = sisct(&["simulate", "--config", p(&fx.path("clean.scn"))]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("outcome=Accepted\n"));
    assert!(text.contains("mse=0\n"));
    assert!(text.contains("inquiry=granted:processed"));
    let transcript = fs::read_to_string(fx.path("clean.transcript/transcript.ndjson")).unwrap();
    assert!(transcript.lines().count() > 20);
    let share_files = fs::read_dir(fx.path("clean.transcript"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "shr")
        })
        .count();
    assert!(share_files >= 3);

    fs::write(
        fx.path("evil.scn"),
        "scheme=xor\nseed=5\nimage=s.pgm\nadversary.target=3\nadversary.offset=1\nadversary.step=9\n",
    )
    .unwrap();
    let out = sisct(&["simulate", "--config", p(&fx.path("evil.scn"))]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("outcome=Rejected(3)"));
    let transcript = fs::read_to_string(fx.path("evil.transcript/transcript.ndjson")).unwrap();
    assert!(transcript.contains("\"kind\":\"resend_request\""));

    fs::write(fx.path("broken.scn"), "scheme=xor\nimage=s.pgm\n").unwrap();
    assert_eq!(
        code(&sisct(&["simulate", "--config", p(&fx.path("broken.scn"))])),
        1
    );
}

#[test]
fn tamper_offset_out_of_range() {
    let fx = Fixture::new();
    fx.split("xor", "x", "1");
    let out = sisct(&[
        "tamper",
        "--share",
        p(&fx.path("x.1.shr")),
        "--offset",
        "8",
        "--xor-byte",
        "1",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn mse_of_identical_images_is_zero() {
    let fx = Fixture::new();
    let out = sisct(&[
        "mse",
        "--a",
        p(&fx.path("s.pgm")),
        "--b",
        p(&fx.path("s.pgm")),
    ]);
    assert_eq!(stdout(&out).trim(), "0");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sisct(&["frobnicate"])), 1);
    assert_eq!(code(&sisct(&["split", "--scheme", "shamir"])), 1);
    assert_eq!(code(&sisct(&["--help"])), 0);
}
