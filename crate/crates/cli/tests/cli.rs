use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use qval::dirichlet::{build_disk_mesh, QFunction};
use qval::extension::{Grid, GridQFunction};
use qval::io::{from_document, Pieces};
use qval::QPoint;

fn qval(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qval"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn qval");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(bytes) = stdin {
            pipe.write_all(bytes).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = qval(args, stdin);
    assert!(out.status.success(), "qval {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sqrt_pipeline_has_frequency_one_half() {
    let problem = ok(&["examples", "sqrt", "--resolution", "64"], None);
    let solution = ok(&["solve", "-"], Some(&problem));
    let csv = String::from_utf8(ok(&["analyze", "-"], Some(&solution))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,D,H,I"));
    let mut checked = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        if (0.2 - 1e-9..=0.8 + 1e-9).contains(&cols[0]) {
            assert!((cols[3] - 0.5).abs() <= 0.03, "I({}) = {}", cols[0], cols[3]);
            checked += 1;
        }
    }
    assert_eq!(checked, 13);
}

#[test]
fn constant_boundary_gives_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("constant.json");
    let report = dir.path().join("report.json");
    ok(&["examples", "constant", "--resolution", "8", "--q", "3", "--out", path_str(&problem)], None);
    let out = ok(&["solve", path_str(&problem), "--report", path_str(&report)], None);
    let f: QFunction = from_document("qfunction", std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(f.energy(), 0.0);
    let rep = std::fs::read_to_string(&report).unwrap();
    assert!(rep.contains("\"final_energy\":0.0"));
}

#[test]
fn solve_resamples_a_boundary_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let path = qval::selection::SampledQPath::circle_from_fn(40, |t| {
        QPoint::from_points(&[[t.cos(), t.sin()], [-t.cos(), -t.sin()]]).unwrap()
    })
    .unwrap();
    std::fs::write(&trace, qval::io::to_document("path", &path).unwrap()).unwrap();
    let args = ["solve", "--boundary", path_str(&trace), "--mesh", "disk", "--resolution", "12", "--q", "2", "--seed", "7"];
    let out = ok(&args, None);
    let f: QFunction = from_document("qfunction", std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(f.mesh().boundary_loop().len(), 72);
    let wrong_q = qval(&["solve", "--boundary", path_str(&trace), "--resolution", "12", "--q", "3"], None);
    assert_eq!(wrong_q.status.code(), Some(2));
}

#[test]
fn embed_verification_passes() {
    let out = qval(&["embed", "--q", "2", "--n", "2", "--verify", "100000"], None);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("verify: pass"));
    let basis = String::from_utf8(out.stdout).unwrap();
    assert!(basis.starts_with(r#"{"schema":"qval/1","kind":"basis""#));
}

#[test]
fn exit_codes() {
    assert_eq!(qval(&["solve", "-"], Some(b"{\"schema\":\"qval/1\"")).status.code(), Some(2));
    assert_eq!(qval(&["solve", "/nonexistent/problem.json"], None).status.code(), Some(2));
    assert_eq!(qval(&["analyze", "--center", "0.5"], None).status.code(), Some(2));
    assert_eq!(qval(&["frobnicate"], None).status.code(), Some(2));
    let problem = ok(&["examples", "sqrt", "--resolution", "16"], None);
    let out = qval(&["solve", "-", "--max-iters", "1", "--tol", "1e-30"], Some(&problem));
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stdout.is_empty());
    let off_vertex = ok(&["solve", "-"], Some(&problem));
    assert_eq!(qval(&["analyze", "-", "--center", "0.013,0"], Some(&off_vertex)).status.code(), Some(2));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let problem = ok(&["examples", "cbrt", "--resolution", "16"], None);
    let one = ok(&["solve", "-", "--threads", "1", "--seed", "3"], Some(&problem));
    let four = ok(&["solve", "-", "--threads", "4", "--seed", "3"], Some(&problem));
    assert!(one == four);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qval"));
    let env = cmd
        .args(["embed", "--q", "3", "--n", "3"])
        .env("QVAL_THREADS", "2")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert!(env.stdout == ok(&["embed", "--q", "3", "--n", "3", "--threads", "3"], None));
}

#[test]
fn analyze_summary_reports_the_branch_point() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let problem = ok(&["examples", "sqrt", "--resolution", "32"], None);
    let solution = ok(&["solve", "-"], Some(&problem));
    ok(&["analyze", "--in", "-", "--radii", "0.2:0.8:0.1", "--summary", path_str(&summary)], Some(&solution));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["kind"], "analysis");
    assert_eq!(s["monotonicity"]["pass"], true);
    let clusters = s["singular_clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 1);
    let alpha = s["holder"]["alpha_hat"].as_f64().unwrap();
    assert!((alpha - 0.5).abs() < 0.05, "{alpha}");
}

#[test]
fn decompose_splits_separated_sheets() {
    let mesh = Arc::new(build_disk_mesh(1.0, 6).unwrap());
    let vals: Vec<QPoint> = mesh
        .vertices()
        .iter()
        .map(|p| QPoint::from_scalars(&[0.01 * p[0], 10.0 + 0.01 * p[1]]).unwrap())
        .collect();
    let mut f = QFunction::from_values(mesh, &vals).unwrap();
    f.match_edges();
    let doc = qval::io::to_document("qfunction", &f).unwrap();
    let out = ok(&["decompose", "-"], Some(doc.as_bytes()));
    let pieces: Pieces = from_document("pieces", std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(pieces.pieces.len(), 2);
    assert!(pieces.pieces.iter().all(|p| p.q() == 1));
}

#[test]
fn extend_fills_the_grid() {
    let grid = Grid::new([0.0, 0.0], 0.125, 9, 9).unwrap();
    let mask: Vec<bool> = (0..grid.len()).map(|v| grid.coords(v)[0] == 0).collect();
    let f = GridQFunction::from_fn(grid, &mask, |p| QPoint::repeated(2, &p)).unwrap();
    let doc = qval::io::to_document("grid_qfunction", &f).unwrap();
    let out = ok(&["extend", "-"], Some(doc.as_bytes()));
    let g: GridQFunction = from_document("grid_qfunction", std::str::from_utf8(&out).unwrap()).unwrap();
    assert!(g.is_complete());
    for v in f.defined_nodes() {
        assert_eq!(g.value(v), f.value(v));
    }
}
