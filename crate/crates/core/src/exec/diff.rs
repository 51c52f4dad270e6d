//! Differential testing: the SIMT oracle against the lowered CPU program.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{random_input, race_check, run_cpu, run_simt, KernelData};
use crate::frontend::print_ir;
use crate::ir::{self, Op, Program};
use crate::pipeline::{compile_cpu, PipelineConfig};

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    /// The reference interpreter rejected the program.
    Oracle { input: usize, error: String },
    Race { input: usize, detail: String },
    Compile { config: String, error: String },
    Mismatch { config: String, input: usize, detail: String },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiffReport {
    pub kernel: String,
    pub configs: usize,
    pub inputs: usize,
    /// Number of (config, input) comparisons that agreed.
    pub agreed: usize,
    pub failures: Vec<Failure>,
    /// Reduced IR reproducing the first mismatch, when shrinking was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimized: Option<String>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn has_mismatch(&self) -> bool {
        self.failures.iter().any(|f| matches!(f, Failure::Mismatch { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOptions {
    pub n_inputs: usize,
    pub seed: u64,
    pub shrink: bool,
    pub check_races: bool,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions { n_inputs: 4, seed: 0, shrink: false, check_races: false }
    }
}

pub fn inputs_for(p: &Program, n: usize, seed: u64) -> Vec<KernelData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_input(p, &mut rng)).collect()
}

/// `None` when the configuration agrees with the oracle on `input`.
fn compare(p: &Program, cfg: &PipelineConfig, input: &KernelData, want: &KernelData) -> Option<String> {
    let c = match compile_cpu(p, cfg) {
        Ok(c) => c,
        Err(e) => return Some(format!("compile: {e}")),
    };
    match run_cpu(&c, input) {
        Ok(out) => out.data.first_difference(want),
        Err(e) => Some(format!("cpu: {e}")),
    }
}

/// Runs the oracle and every configuration on `n_inputs` random inputs.
pub fn diff_test(p: &Program, configs: &[PipelineConfig], opts: DiffOptions) -> DiffReport {
    let mut report = DiffReport {
        kernel: p.name.clone(),
        configs: configs.len(),
        inputs: opts.n_inputs,
        agreed: 0,
        failures: Vec::new(),
        minimized: None,
    };
    let compiled: Vec<Result<Program, String>> =
        configs.iter().map(|c| compile_cpu(p, c).map_err(|e| e.to_string())).collect();
    for (cfg, c) in configs.iter().zip(&compiled) {
        if let Err(e) = c {
            report.failures.push(Failure::Compile { config: cfg.label(), error: e.clone() });
        }
    }
    let mut first_mismatch = None;
    for (i, input) in inputs_for(p, opts.n_inputs, opts.seed).iter().enumerate() {
        if opts.check_races {
            match race_check(p, input) {
                Ok(races) if !races.is_empty() => {
                    report.failures.push(Failure::Race { input: i, detail: races[0].to_string() });
                    continue;
                }
                Err(e) => {
                    report.failures.push(Failure::Oracle { input: i, error: e.to_string() });
                    continue;
                }
                Ok(_) => {}
            }
        }
        let want = match run_simt(p, input) {
            Ok(o) => o.data,
            Err(e) => {
                report.failures.push(Failure::Oracle { input: i, error: e.to_string() });
                continue;
            }
        };
        for (cfg, c) in configs.iter().zip(&compiled) {
            let Ok(c) = c else { continue };
            let diff = match run_cpu(c, input) {
                Ok(out) => out.data.first_difference(&want),
                Err(e) => Some(format!("cpu: {e}")),
            };
            match diff {
                None => report.agreed += 1,
                Some(detail) => {
                    if first_mismatch.is_none() {
                        first_mismatch = Some((*cfg, input.clone()));
                    }
                    report.failures.push(Failure::Mismatch { config: cfg.label(), input: i, detail });
                }
            }
        }
    }
    if opts.shrink {
        if let Some((cfg, input)) = first_mismatch {
            let small = shrink(p, &|q| mismatches(q, &cfg, &input));
            report.minimized = Some(print_ir(&small));
        }
    }
    report
}

/// True when `q` is a valid program whose lowered form disagrees with the
/// oracle on `input` (the oracle itself must succeed).
pub fn mismatches(q: &Program, cfg: &PipelineConfig, input: &KernelData) -> bool {
    let Ok(want) = run_simt(q, input) else { return false };
    compare(q, cfg, input, &want.data).is_some()
}

fn op_paths(ops: &[Op], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    for (i, op) in ops.iter().enumerate() {
        prefix.push(i);
        out.push(prefix.clone());
        for (r, region) in op.regions().into_iter().enumerate() {
            prefix.push(r);
            op_paths(region, prefix, out);
            prefix.pop();
        }
        prefix.pop();
    }
}

fn remove_at(p: &Program, path: &[usize]) -> Program {
    let mut q = p.clone();
    let mut list = &mut q.body;
    let (last, parents) = path.split_last().unwrap();
    for pair in parents.chunks(2) {
        list = list[pair[0]].regions_mut().into_iter().nth(pair[1]).unwrap();
    }
    list.remove(*last);
    q
}

/// Greedy deletion of operations while `keep` still holds. Ops are tried
/// in pre-order, so a compound op goes before anything inside it.
pub fn shrink(p: &Program, keep: &dyn Fn(&Program) -> bool) -> Program {
    let mut cur = p.clone();
    loop {
        let mut progress = false;
        let mut i = 0;
        loop {
            let mut paths = Vec::new();
            op_paths(&cur.body, &mut Vec::new(), &mut paths);
            let Some(path) = paths.get(i) else { break };
            match valid_removal(&cur, path) {
                Some(cand) if keep(&cand) => {
                    // the next op in pre-order now sits at position i
                    cur = cand;
                    progress = true;
                }
                _ => i += 1,
            }
        }
        if !progress {
            return cur;
        }
    }
}

fn valid_removal(p: &Program, path: &[usize]) -> Option<Program> {
    let mut list = &p.body;
    let (last, parents) = path.split_last()?;
    for pair in parents.chunks(2) {
        list = list.get(pair[0])?.regions().into_iter().nth(pair[1])?;
    }
    if *last >= list.len() || matches!(list[*last], Op::GridPar(_)) {
        return None;
    }
    let q = remove_at(p, path);
    ir::verify(&q).ok().map(|_| q)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CampaignCase {
    pub seed: u64,
    pub report: DiffReport,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CampaignReport {
    pub kernels: usize,
    pub passed: usize,
    pub comparisons: usize,
    pub failed: Vec<CampaignCase>,
}

/// Generates one kernel per seed and diff-tests it under every config,
/// checking for races first.
pub fn campaign(
    seeds: std::ops::Range<u64>,
    budget: usize,
    configs: &[PipelineConfig],
    opts: DiffOptions,
) -> CampaignReport {
    let one = |seed: u64| {
        let p = super::gen_random_kernel(seed, budget);
        let report = diff_test(&p, configs, DiffOptions { seed, check_races: true, ..opts });
        CampaignCase { seed, report }
    };
    #[cfg(feature = "parallel")]
    let cases: Vec<CampaignCase> = {
        use rayon::prelude::*;
        seeds.into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cases: Vec<CampaignCase> = seeds.map(one).collect();
    summarize(cases)
}

/// The same campaign on the calling thread only.
pub fn campaign_sequential(
    seeds: std::ops::Range<u64>,
    budget: usize,
    configs: &[PipelineConfig],
    opts: DiffOptions,
) -> CampaignReport {
    let cases = seeds
        .map(|seed| {
            let p = super::gen_random_kernel(seed, budget);
            CampaignCase { seed, report: diff_test(&p, configs, DiffOptions { seed, check_races: true, ..opts }) }
        })
        .collect();
    summarize(cases)
}

fn summarize(cases: Vec<CampaignCase>) -> CampaignReport {
    let kernels = cases.len();
    let comparisons = cases.iter().map(|c| c.report.agreed).sum();
    let failed: Vec<CampaignCase> = cases.into_iter().filter(|c| !c.report.passed()).collect();
    CampaignReport { kernels, passed: kernels - failed.len(), comparisons, failed }
}
