mod common;

use std::process::{Command, Output};

use simtcc::exec::{run_simt, KernelData};

fn simtcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simtcc"))
        .args(args)
        .current_dir(common::fixture_dir())
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_reference_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    let json = r#"{"scalars": {"n": 8}, "buffers": {"inp": [1,2,3,4,5,6,7,8], "out": [0,0,0,0,0,0,0,0]}}"#;
    std::fs::write(&input, json).unwrap();
    let o = simtcc(&["run", "normalize.gk", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let p = common::fixture("normalize.gk");
    let want = run_simt(&p, &KernelData::parse(&p, json).unwrap()).unwrap();
    let got: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(got, want.data.to_json());
    let out = got["buffers"]["out"].as_array().unwrap();
    for (i, v) in out.iter().enumerate() {
        assert_eq!(v.as_f64().unwrap(), (i + 1) as f64 / 36.0);
    }

    let o = simtcc(&["run", "normalize.gk", "--input", input.to_str().unwrap(), "--cpu", "--inner=ser"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap(), got);
}

#[test]
fn diff_passes_in_serial_mode() {
    let o = simtcc(&["diff", "normalize.gk", "--count", "10", "--inner=ser"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn diff_reports_injected_fault_with_exit_2() {
    let o = simtcc(&["diff", "fission.ir", "--no-elim", "--skip-spill-stores", "--count", "2", "--shrink", "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["failures"][0]["kind"], "mismatch");
    let small = simtcc::frontend::parse_ir(report["minimized"].as_str().unwrap()).unwrap();
    assert_eq!(small.barrier_count(), 1);
}

#[test]
fn no_elim_keeps_barriers_that_elim_removes() {
    let o = simtcc(&["cpuify", "backprop.gk", "--no-elim", "--dump-ir"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let after_opt = text.split("// after cpuify").next().unwrap();
    let after_cpuify = text.split("// after cpuify").nth(1).unwrap();
    assert_eq!(after_opt.split("// after opt").nth(1).unwrap().matches("barrier").count(), 5);
    assert_eq!(after_cpuify.matches("barrier").count(), 0);

    let o = simtcc(&["opt", "backprop.gk"]);
    assert_eq!(stdout(&o).matches("barrier").count(), 3);
}

#[test]
fn emit_c_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.c");
    let o = simtcc(&["emit-c", "reduction.gk", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let c = std::fs::read_to_string(out).unwrap();
    assert!(c.contains("#pragma omp parallel"));
    assert!(c.contains("kernel_reduction"));
}

#[test]
fn diagnostics_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.gk");
    std::fs::write(&bad, "kernel k(a: f64[4]) grid(1) block(4) { a[threadIdx.x] = true; }").unwrap();
    assert_eq!(simtcc(&["parse", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(simtcc(&["parse", "missing.gk"]).status.code(), Some(1));
    assert_eq!(simtcc(&["parse", "normalize.gk", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(simtcc(&["cpuify", "divergent_loop.gk", "--no-elim"]).status.code(), Some(1));
    let input = dir.path().join("in.json");
    std::fs::write(&input, "{not json").unwrap();
    assert_eq!(simtcc(&["run", "normalize.gk", "--input", input.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn fuzz_is_deterministic_and_clean() {
    let a = simtcc(&["fuzz", "--seed", "3", "--count", "6", "--json"]);
    let b = simtcc(&["fuzz", "--seed", "3", "--count", "6", "--json"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let last: serde_json::Value = serde_json::from_str(stdout(&a).lines().last().unwrap()).unwrap();
    assert_eq!(last["passed"], 6);
    assert_eq!(last["comparisons"], 6 * 16 * 2);
}

#[test]
fn parse_output_reparses() {
    let o = simtcc(&["lower", "backprop.gk", "--inner=ser"]);
    assert_eq!(o.status.code(), Some(0));
    let p = simtcc::frontend::parse_ir(&stdout(&o)).unwrap();
    assert!(simtcc::ir::verify_cpu(&p).is_ok());
}
