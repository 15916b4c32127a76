//! Fixture files and a runner for the `wtot` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wtot"));
    c.env_remove("WT_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn wtot")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "wtot {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Uniform unit square, its outline, and the two-site and one-site targets.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub density: PathBuf,
    pub domain: PathBuf,
    pub two: PathBuf,
    pub one: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let density = dir.path().join("d.csv");
        std::fs::write(
            &density,
            "x1,y1,x2,y2,x3,y3,density\n0,0,1,0,1,1,1\n0,0,1,1,0,1,1\n",
        )
        .unwrap();
        let domain = dir.path().join("om.csv");
        std::fs::write(&domain, "x,y\n0,0\n1,0\n1,1\n0,1\n").unwrap();
        let two = dir.path().join("m.csv");
        std::fs::write(&two, "x,y,weight\n0.25,0.5,0.5\n0.75,0.5,0.5\n").unwrap();
        let one = dir.path().join("one.csv");
        std::fs::write(&one, "x,y,weight\n0.5,0.5,1\n").unwrap();
        Self {
            dir,
            density,
            domain,
            two,
            one,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// `solve` on the given measure; returns the solution JSON.
    pub fn solve(&self, mode: &str, measure: &Path, extra: &[&str], out: &str) -> Value {
        let out = self.path(out);
        let mut args = vec![
            "solve",
            "--mode",
            mode,
            "--density",
            s(&self.density),
            "--domain",
            s(&self.domain),
            "--measure",
            s(measure),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        json(&out)
    }
}

/// Writes a synthetic cohort into `dir/a` and `dir/b` plus the template.
pub fn write_cohort(dir: &Path, n: usize, amp_a: f64, amp_b: f64, nuisance: f64) -> (PathBuf, PathBuf, PathBuf) {
    let template = dir.join("template.poff");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for (group, amp, seed) in [(&a, amp_a, "1"), (&b, amp_b, "2")] {
        let n = n.to_string();
        let amp = amp.to_string();
        let nz = nuisance.to_string();
        ok(&[
            "synth",
            "--n-subjects",
            &n,
            "--amplitude",
            &amp,
            "--nuisance",
            &nz,
            "--seed",
            seed,
            "--template",
            s(&template),
            "--out",
            s(group),
            "--manifest",
            s(&dir.join(format!("synth-{seed}.manifest.json"))),
        ]);
    }
    (template, a, b)
}
