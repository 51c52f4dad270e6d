use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use simtcc::exec::{self, DiffOptions, KernelData};
use simtcc::frontend::{compile, parse_ir, print_ir};
use simtcc::ir::Program;
use simtcc::lowering::{emit_c, InnerMode};
use simtcc::pipeline::{self, PipelineConfig, Toggles};

#[derive(Parser)]
#[command(name = "simtcc", version, about = "SIMT kernel to CPU transpiler")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Flags {
    /// Disable barrier elimination
    #[arg(long)]
    no_elim: bool,
    /// Spill every live value instead of a minimum cut
    #[arg(long)]
    no_mincut: bool,
    /// Disable team region hoisting and fusion
    #[arg(long)]
    no_ompopt: bool,
    /// Lowering of thread loops
    #[arg(long, default_value = "par")]
    inner: InnerMode,
    /// Print the IR after every stage
    #[arg(long)]
    dump_ir: bool,
    /// Fault injection: drop spill stores during fission
    #[arg(long, hide = true)]
    skip_spill_stores: bool,
    /// Write the primary output here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Machine-readable report
    #[arg(long)]
    json: bool,
}

impl Flags {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            toggles: Toggles { elim: !self.no_elim, mincut: !self.no_mincut, ompopt: !self.no_ompopt },
            mode: self.inner,
            skip_spill_stores: self.skip_spill_stores,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and verify, then print the IR
    Parse { file: PathBuf, #[command(flatten)] flags: Flags },
    /// Run the parallel optimizations
    Opt { file: PathBuf, #[command(flatten)] flags: Flags },
    /// Optimize and remove all barriers
    Cpuify { file: PathBuf, #[command(flatten)] flags: Flags },
    /// Lower to team regions and work-sharing loops
    Lower { file: PathBuf, #[command(flatten)] flags: Flags },
    /// Emit C with OpenMP pragmas
    EmitC { file: PathBuf, #[command(flatten)] flags: Flags },
    /// Execute a kernel on an input
    Run {
        file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Run the lowered program instead of the SIMT reference
        #[arg(long)]
        cpu: bool,
        #[command(flatten)]
        flags: Flags,
    },
    /// Compare the reference against the lowered program on random inputs
    Diff {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random inputs
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Minimize the first mismatch
        #[arg(long)]
        shrink: bool,
        /// Test every toggle subset in both modes
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        flags: Flags,
    },
    /// Diff-test generated kernels
    Fuzz {
        /// First seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of kernels
        #[arg(long, default_value_t = 100)]
        count: u64,
        /// Statements per kernel
        #[arg(long, default_value_t = 16)]
        budget: usize,
        /// Random inputs per kernel
        #[arg(long, default_value_t = 2)]
        inputs: usize,
        #[arg(long)]
        shrink: bool,
        /// Only the configuration given by the flags instead of all sixteen
        #[arg(long)]
        only: bool,
        #[command(flatten)]
        flags: Flags,
    },
}

enum Outcome {
    Ok,
    Mismatch,
}

fn load(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let p = if path.extension().is_some_and(|e| e == "ir") { parse_ir(&text) } else { compile(&text) };
    p.map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn emit(flags: &Flags, text: &str) -> Result<()> {
    match &flags.output {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dump(flags: &Flags, stage: &str, p: &Program) {
    if flags.dump_ir {
        println!("// after {stage}\n{}", print_ir(p));
    }
}

/// Runs the pipeline up to `stop` (0 parse, 1 opt, 2 cpuify, 3 lower).
fn stages(p: Program, flags: &Flags, stop: usize) -> Result<Program> {
    let cfg = flags.config();
    dump(flags, "parse", &p);
    if stop == 0 {
        return Ok(p);
    }
    let p = pipeline::optimize(&p, cfg.toggles)?;
    dump(flags, "opt", &p);
    if stop == 1 {
        return Ok(p);
    }
    let p = pipeline::cpuify_with(&p, &cfg)?;
    dump(flags, "cpuify", &p);
    if stop == 2 {
        return Ok(p);
    }
    let p = pipeline::lower_with(&p, &cfg)?;
    dump(flags, "lower", &p);
    Ok(p)
}

fn transform(file: &Path, flags: &Flags, stop: usize) -> Result<Outcome> {
    let p = stages(load(file)?, flags, stop)?;
    if !flags.dump_ir || flags.output.is_some() {
        emit(flags, &print_ir(&p))?;
    }
    Ok(Outcome::Ok)
}

fn run(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Parse { file, flags } => transform(&file, &flags, 0),
        Cmd::Opt { file, flags } => transform(&file, &flags, 1),
        Cmd::Cpuify { file, flags } => transform(&file, &flags, 2),
        Cmd::Lower { file, flags } => transform(&file, &flags, 3),
        Cmd::EmitC { file, flags } => {
            let p = stages(load(&file)?, &flags, 3)?;
            emit(&flags, &emit_c(&p))?;
            Ok(Outcome::Ok)
        }
        Cmd::Run { file, input, cpu, flags } => {
            let p = load(&file)?;
            let text = fs::read_to_string(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let data = KernelData::parse(&p, &text)?;
            let out = if cpu {
                let c = stages(p, &flags, 3)?;
                exec::run_cpu(&c, &data)?
            } else {
                exec::run_simt(&p, &data)?
            };
            let mut v = out.data.to_json();
            if flags.json {
                v = json!({ "output": v, "counters": out.counters });
            }
            emit(&flags, &format!("{}\n", serde_json::to_string(&v)?))?;
            Ok(Outcome::Ok)
        }
        Cmd::Diff { file, seed, count, shrink, all, flags } => {
            let p = load(&file)?;
            let configs = if all { PipelineConfig::matrix() } else { vec![flags.config()] };
            let opts = DiffOptions { n_inputs: count, seed, shrink, check_races: true };
            let report = exec::diff_test(&p, &configs, opts);
            if flags.json {
                emit(&flags, &format!("{}\n", serde_json::to_string(&report)?))?;
            } else {
                let mut s = format!(
                    "{}: {} configs x {} inputs, {} agreed, {} failures\n",
                    report.kernel,
                    report.configs,
                    report.inputs,
                    report.agreed,
                    report.failures.len()
                );
                for f in &report.failures {
                    s.push_str(&format!("  {}\n", serde_json::to_string(f)?));
                }
                if let Some(m) = &report.minimized {
                    s.push_str("minimized reproduction:\n");
                    s.push_str(m);
                }
                emit(&flags, &s)?;
            }
            finish(&report)
        }
        Cmd::Fuzz { seed, count, budget, inputs, shrink, only, flags } => {
            let configs = if only { vec![flags.config()] } else { PipelineConfig::matrix() };
            let opts = DiffOptions { n_inputs: inputs, seed, shrink, check_races: true };
            let report = exec::campaign(seed..seed + count, budget, &configs, opts);
            let mut s = String::new();
            if flags.json {
                for case in &report.failed {
                    s.push_str(&serde_json::to_string(case)?);
                    s.push('\n');
                }
                s.push_str(&serde_json::to_string(&json!({
                    "kernels": report.kernels,
                    "passed": report.passed,
                    "comparisons": report.comparisons,
                }))?);
                s.push('\n');
            } else {
                for case in &report.failed {
                    s.push_str(&format!("seed {}: {}\n", case.seed, serde_json::to_string(&case.report.failures)?));
                    if let Some(m) = &case.report.minimized {
                        s.push_str(m);
                    }
                }
                s.push_str(&format!(
                    "{}/{} kernels passed, {} comparisons\n",
                    report.passed, report.kernels, report.comparisons
                ));
            }
            emit(&flags, &s)?;
            if report.failed.is_empty() {
                Ok(Outcome::Ok)
            } else if report.failed.iter().any(|c| c.report.has_mismatch()) {
                Ok(Outcome::Mismatch)
            } else {
                Err(anyhow!("{} kernels failed before comparison", report.failed.len()))
            }
        }
    }
}

fn finish(report: &exec::DiffReport) -> Result<Outcome> {
    if report.has_mismatch() {
        Ok(Outcome::Mismatch)
    } else if let Some(f) = report.failures.first() {
        Err(anyhow!("{}", serde_json::to_string(f)?))
    } else {
        Ok(Outcome::Ok)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
