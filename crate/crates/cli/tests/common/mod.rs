#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_tallcrop");

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn tallcrop")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Run a subcommand with `--config run.toml` and require success.
pub fn ok(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", "run.toml"];
    args.extend_from_slice(extra);
    let out = run(dir, &args);
    assert_eq!(code(&out), 0, "{cmd} failed: {}", stderr(&out));
    out
}

fn region_paths(name: &str) -> String {
    format!(
        "[[regions]]\nname = \"{name}\"\nshots = \"data/{name}_shots.csv\"\noptical = \"data/{name}_optical.ndjson\"\n\
         labels = \"data/{name}_labels.asc\"\nlegend = \"data/{name}_legend.csv\"\n"
    )
}

fn synth_region(
    name: &str,
    lon: f64,
    lat: f64,
    shift: f64,
    seed: u64,
    n_shots: usize,
    cell: f64,
    span: f64,
) -> String {
    format!(
        "[[synth.regions]]\nname = \"{name}\"\n\
         bbox = {{ lon_min = {lon:?}, lon_max = {:?}, lat_min = {lat:?}, lat_max = {:?} }}\n\
         mix = [{{ crop = \"maize\", fraction = 0.5 }}, {{ crop = \"soybean\", fraction = 0.5 }}]\n\
         phenology_shift = {shift:?}\nn_shots = {n_shots}\nseed = {seed}\ncell_size_deg = {cell:?}\n",
        lon + span,
        lat + span
    )
}

/// Two small synthetic regions with paths wired for every subcommand.
pub fn small_config(extra_top: &str, n_shots: usize) -> String {
    let mut s = format!("master_seed = 7\n{extra_top}\n");
    s.push_str("[forest]\nn_trees = 15\n");
    s.push_str("[experiment]\ntrain_region = \"alpha\"\ntest_region = \"beta\"\n");
    s.push_str(
        "[train]\nregion = \"alpha\"\nmode = \"pseudo_label\"\ntarget_region = \"beta\"\nmodel = \"models/beta_s2.tcrf\"\n",
    );
    s.push_str("[map]\nmodel = \"models/beta_s2.tcrf\"\nregion = \"beta\"\nsource = \"synth\"\n");
    s.push_str(&region_paths("alpha"));
    s.push_str(&region_paths("beta"));
    s.push_str("[synth]\ndir = \"data\"\n");
    s.push_str(&synth_region(
        "alpha", 100.0, 44.0, 0.0, 11, n_shots, 0.01, 1.0,
    ));
    s.push_str(&synth_region(
        "beta", -94.0, 41.0, 0.12, 22, n_shots, 0.01, 1.0,
    ));
    s
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.file(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }

    pub fn json(&self, rel: &str) -> serde_json::Value {
        serde_json::from_slice(&self.read(rel)).unwrap()
    }
}
