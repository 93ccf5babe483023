use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn egns(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_egns"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> String {
    fs::read_to_string(dir.join("out/report.txt")).unwrap()
}

/// Values of one cell scalar in a legacy VTK file.
fn cell_scalar(vtk: &str, name: &str) -> Vec<f64> {
    let header = format!("SCALARS {name} double 1");
    let mut lines = vtk.lines().skip_while(|l| *l != header).skip(2);
    let mut out = Vec::new();
    for l in lines.by_ref() {
        match l.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => break,
        }
    }
    out
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let out = egns(dir.path(), &["noflow"], Some("[physics]\nviscosity = 1.0\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("viscosity"));
}

#[test]
fn missing_config_file_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_egns"))
        .args(["noflow", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_mesh_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let mesh = dir.path().join("bad.m2d");
    fs::write(&mesh, "this is not a mesh\n").unwrap();
    let config = format!("[mesh]\nkind = \"file\"\npath = \"{}\"\n", mesh.display());
    let out = egns(dir.path(), &["run"], Some(&config));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn newton_failure_exits_with_1() {
    let dir = TempDir::new().unwrap();
    let config = "[mesh]\nn = [4]\n[physics]\nnu = 1e-3\n[newton]\nmax_iter = 1\n";
    let out = egns(dir.path(), &["cavity"], Some(config));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn noflow_without_buoyancy_is_exactly_at_rest() {
    let dir = TempDir::new().unwrap();
    let out = egns(dir.path(), &["noflow"], Some("[mesh]\nn = [8]\n[physics]\nra = 0.0\n"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = report(dir.path());
    assert!(text.contains("max |u0| = 0.000e0"), "{text}");
    assert!(dir.path().join("out/noflow.vtk").exists());
}

#[test]
fn cavity_without_force_scale_gives_identical_velocities() {
    let dir = TempDir::new().unwrap();
    let config = "[mesh]\nn = [8]\n[physics]\nforce_scale = 0.0\n";
    let out = egns(dir.path(), &["cavity"], Some(config));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let diff = fs::read_to_string(dir.path().join("out/cavity_diff.vtk")).unwrap();
    assert!(cell_scalar(&diff, "pressure").iter().all(|&p| p == 0.0));
}

#[test]
fn vtk_output_is_deterministic_and_divergence_free() {
    let config = "[mesh]\nn = [8]\n";
    let runs: Vec<[String; 2]> = (0..2)
        .map(|_| {
            let dir = TempDir::new().unwrap();
            let out = egns(dir.path(), &["cavity"], Some(config));
            assert!(out.status.success());
            ["f1", "f2"].map(|f| fs::read_to_string(dir.path().join(format!("out/cavity_{f}.vtk"))).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    // the unforced run; with f2 the 1e6 pressure scale lifts roundoff to ~1e-9
    let div = cell_scalar(&runs[0][0], "divergence");
    assert_eq!(div.len(), 128);
    assert!(div.iter().all(|d| d.abs() < 1e-10), "{div:?}");
}

#[test]
fn single_level_convergence_table_has_blank_orders() {
    let dir = TempDir::new().unwrap();
    let out = egns(dir.path(), &["converge"], Some("[mesh]\nn = [4]\n"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "h,e_l2,order,e_h1,order,e_p,order");
    let cells: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(cells.len(), 7);
    assert_eq!((cells[2], cells[4], cells[6]), ("", "", ""));
    assert!(dir.path().join("out/newton.log").exists());
}

#[test]
fn custom_run_on_imported_mesh() {
    let dir = TempDir::new().unwrap();
    let mesh = egns::mesh::build_rect_uniform(4, 4, egns::mesh::Rect::UNIT).unwrap();
    let path = dir.path().join("square.m2d");
    mesh.export(&path).unwrap();
    let config = format!(
        r#"
name = "imported lid"
[mesh]
kind = "file"
path = "{}"
[physics]
nu = 0.1
[[boundary.dirichlet]]
tag = 3
profile = "constant"
value = [1.0, 0.0]
[[boundary.dirichlet]]
tag = 1
profile = "constant"
value = [0.0, 0.0]
[[boundary.dirichlet]]
tag = 2
profile = "constant"
value = [0.0, 0.0]
[[boundary.dirichlet]]
tag = 4
profile = "constant"
value = [0.0, 0.0]
"#,
        path.display()
    );
    let out = egns(dir.path(), &["run"], Some(&config));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = report(dir.path());
    assert!(text.contains("imported lid"), "{text}");
    assert!(text.contains("25 vertices, 32 triangles"), "{text}");
    assert!(dir.path().join("out/run.vtk").exists());
}
