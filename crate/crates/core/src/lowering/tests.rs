use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exec::{random_input, run_cpu, run_simt, KernelData};
use crate::frontend::{compile, parse_ir};
use crate::ir::{verify_cpu, Op};
use crate::synclower::{cpuify, CpuifyOptions};

fn fixture(name: &str) -> Program {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    if name.ends_with(".ir") {
        parse_ir(&text).unwrap()
    } else {
        compile(&text).unwrap()
    }
}

fn count(p: &Program, f: fn(&Op) -> bool) -> usize {
    count_ops(&p.body, &f)
}

fn lowered(p: &Program, mode: InnerMode, ompopt: bool) -> Program {
    let q = cpuify(p, CpuifyOptions::default()).unwrap();
    let c = lower_to_cpu(&q, LowerOptions { mode, ompopt }).unwrap();
    verify_cpu(&c).unwrap();
    c
}

fn agree(p: &Program, c: &Program, seeds: u64) {
    for seed in 0..seeds {
        let inp = random_input(p, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = run_simt(p, &inp).unwrap();
        let b = run_cpu(c, &inp).unwrap();
        assert!(a.data.bits_eq(&b.data), "seed {seed}: {:?}", a.data.first_difference(&b.data));
    }
}

#[test]
fn normalize_collapses_to_one_loop() {
    let p = fixture("normalize.gk");
    let c = lowered(&p, InnerMode::Par, true);
    assert_eq!(count(&c, |o| matches!(o, Op::TeamRegion(_))), 1);
    assert_eq!(count(&c, |o| matches!(o, Op::WorkShare(l) if l.ivs.len() == 6)), 1);
    agree(&p, &c, 4);
}

#[test]
fn shared_memory_kernel_in_both_modes() {
    let p = fixture("reduction.gk");
    let ser = lowered(&p, InnerMode::Ser, true);
    assert_eq!(count(&ser, |o| matches!(o, Op::TeamRegion(_))), 1);
    assert!(count(&ser, |o| matches!(o, Op::SerialNest(_))) > 0);
    let par = lowered(&p, InnerMode::Par, true);
    assert!(count(&par, |o| matches!(o, Op::TeamRegion(_))) > 1);
    agree(&p, &ser, 4);
    agree(&p, &par, 4);
}

#[test]
fn single_thread_launch() {
    let p = compile("kernel k(a: f64[1]) grid(1) block(1) { a[0] = a[0] * 2.0 + 1.0; }").unwrap();
    let c = lowered(&p, InnerMode::Ser, true);
    agree(&p, &c, 3);
}

#[test]
fn barriers_must_be_gone() {
    let p = fixture("reduction.gk");
    assert_eq!(lower_to_cpu(&p, LowerOptions::default()).unwrap_err(), LowerError::Unlowered);
}

#[test]
fn fusion_reduces_launches_in_backprop() {
    let p = fixture("backprop.gk");
    let plain = lowered(&p, InnerMode::Par, false);
    let fused = lowered(&p, InnerMode::Par, true);
    let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(5));
    let a = run_cpu(&plain, &inp).unwrap();
    let b = run_cpu(&fused, &inp).unwrap();
    assert!(a.data.bits_eq(&b.data));
    assert!(b.counters.team_launches < a.counters.team_launches, "{:?} vs {:?}", a.counters, b.counters);
    agree(&p, &fused, 4);
}

#[test]
fn fused_regions_emit_one_parallel_two_fors() {
    let (q, _) = crate::paropt::fuse_team_regions(&fixture("fuse.ir"));
    let c = emit_c(&q);
    assert_eq!(c.matches("#pragma omp parallel").count(), 1);
    assert_eq!(c.matches("#pragma omp for").count(), 2);
    assert_eq!(c.matches("#pragma omp barrier").count(), 1);
    assert_eq!(c, emit_c(&q));
}

#[test]
fn empty_program_has_empty_body() {
    let p = Program::new("e");
    let c = emit_c(&p);
    assert!(c.contains("void kernel_e(void) {\n}\n"), "{c}");
}

fn cc_available() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

fn compile_and_run(c: &Program, inp: &KernelData, dir: &std::path::Path) -> KernelData {
    let src = dir.join("k.c");
    let exe = dir.join("k");
    std::fs::write(&src, emit_c(c)).unwrap();
    let st = Command::new("cc")
        .args(["-std=c99", "-O1", "-fopenmp", "-ffp-contract=off", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-lm")
        .status()
        .unwrap();
    assert!(st.success());
    let json = dir.join("in.json");
    std::fs::write(&json, inp.to_json().to_string()).unwrap();
    let out = Command::new(&exe).arg(&json).env("OMP_NUM_THREADS", "4").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    KernelData::parse(c, std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

#[test]
fn emitted_c_matches_the_interpreter() {
    if !cc_available() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    for f in ["backprop.gk", "normalize.gk", "converge.gk", "uniform_if.gk"] {
        let p = fixture(f);
        for mode in [InnerMode::Par, InnerMode::Ser] {
            let c = lowered(&p, mode, true);
            for seed in 0..2 {
                let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(seed));
                let want = run_simt(&p, &inp).unwrap().data;
                let got = compile_and_run(&c, &inp, dir.path());
                assert!(want.bits_eq(&got), "{f} {mode:?}: {:?}", want.first_difference(&got));
            }
        }
    }
}
