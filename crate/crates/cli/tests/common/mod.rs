#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use chartattrib_core::model::DataTable;
use rand::Rng;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn chartattrib<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_chartattrib"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn write_table(dir: &Path, name: &str, table: &DataTable) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, table.to_json()).unwrap();
    path
}

fn table(prefix: &str, rows: usize, cols: usize, mut value: impl FnMut() -> f64) -> DataTable {
    let ch: Vec<String> = (0..cols).map(|c| format!("{}", 2010 + c)).collect();
    let rh: Vec<String> = (0..rows).map(|r| format!("{prefix}{}", (b'A' + r as u8) as char)).collect();
    let cells: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| value()).collect()).collect();
    DataTable::numeric(
        &ch.iter().map(String::as_str).collect::<Vec<_>>(),
        &rh.iter().map(String::as_str).collect::<Vec<_>>(),
        &cells,
    )
    .unwrap()
}

/// 1-2 series over 1-4 groups, integer values in [25, 100].
pub fn bar_table(rng: &mut impl Rng, prefix: &str) -> DataTable {
    let rows = rng.random_range(1..=2);
    let cols = rng.random_range(1..=4);
    table(prefix, rows, cols, || rng.random_range(25..=100) as f64)
}

/// Like [`bar_table`] but with at least two cells, so a wrong mark exists.
pub fn bar_table_multi(rng: &mut impl Rng, prefix: &str) -> DataTable {
    loop {
        let t = bar_table(rng, prefix);
        if t.n_rows() * t.n_cols() >= 2 {
            return t;
        }
    }
}

/// One row of 1-5 slices, integer values in [25, 100].
pub fn pie_table(rng: &mut impl Rng, prefix: &str) -> DataTable {
    let cols = rng.random_range(1..=5);
    table(prefix, 1, cols, || rng.random_range(25..=100) as f64)
}

/// 1-3 series over 2-6 points, values in [0, 200].
pub fn line_table(rng: &mut impl Rng, prefix: &str) -> DataTable {
    let rows = rng.random_range(1..=3);
    let cols = rng.random_range(2..=6);
    table(prefix, rows, cols, || rng.random_range(0..=200) as f64)
}

pub fn latest_run(out: &Path) -> PathBuf {
    let name = std::fs::read_to_string(out.join("LATEST")).unwrap();
    out.join(name.trim())
}
