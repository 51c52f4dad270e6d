//! The full compilation pipeline: optimize, remove synchronization, lower.

use serde::{Deserialize, Serialize};

use crate::ir::{self, Diagnostic, Program};
use crate::lowering::{lower_to_cpu, InnerMode, LowerError, LowerOptions};
use crate::paropt::{eliminate_barriers, mem2reg, parallel_licm};
use crate::synclower::{cpuify, CpuifyOptions, SplitOptions, SyncError};

/// Optional passes. All default to on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub elim: bool,
    pub mincut: bool,
    pub ompopt: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles { elim: true, mincut: true, ompopt: true }
    }
}

impl Toggles {
    /// All eight on/off combinations.
    pub fn all() -> Vec<Toggles> {
        (0..8u8)
            .map(|b| Toggles { elim: b & 1 != 0, mincut: b & 2 != 0, ompopt: b & 4 != 0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub toggles: Toggles,
    pub mode: InnerMode,
    /// Fault injection: drop the stores that spill cut values during fission.
    #[serde(default)]
    pub skip_spill_stores: bool,
}

impl PipelineConfig {
    pub fn new(toggles: Toggles, mode: InnerMode) -> Self {
        PipelineConfig { toggles, mode, skip_spill_stores: false }
    }

    /// Every toggle subset in both inner modes.
    pub fn matrix() -> Vec<PipelineConfig> {
        let mut v = Vec::new();
        for mode in [InnerMode::Par, InnerMode::Ser] {
            for t in Toggles::all() {
                v.push(PipelineConfig::new(t, mode));
            }
        }
        v
    }

    pub fn label(&self) -> String {
        let on = |b: bool| if b { "" } else { "no-" };
        let mode = match self.mode {
            InnerMode::Par => "par",
            InnerMode::Ser => "ser",
        };
        format!(
            "{}elim,{}mincut,{}ompopt,{mode}",
            on(self.toggles.elim),
            on(self.toggles.mincut),
            on(self.toggles.ompopt)
        )
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("invalid IR after {stage}: {}", .diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Verify { stage: &'static str, diags: Vec<Diagnostic> },
}

fn check(p: &Program, stage: &'static str, cpu: bool) -> Result<(), PipelineError> {
    let r = if cpu { ir::verify_cpu(p) } else { ir::verify(p) };
    r.map_err(|diags| PipelineError::Verify { stage, diags })
}

/// Barrier elimination (when enabled), mem2reg and parallel LICM.
pub fn optimize(p: &Program, t: Toggles) -> Result<Program, PipelineError> {
    let q = if t.elim { eliminate_barriers(p).0 } else { p.clone() };
    let q = mem2reg(&q).0;
    let q = parallel_licm(&q).0;
    check(&q, "opt", false)?;
    Ok(q)
}

pub fn cpuify_with(p: &Program, cfg: &PipelineConfig) -> Result<Program, PipelineError> {
    let opts = CpuifyOptions {
        elim: cfg.toggles.elim,
        split: SplitOptions { mincut: cfg.toggles.mincut, skip_spill_stores: cfg.skip_spill_stores },
    };
    let q = cpuify(p, opts)?;
    check(&q, "cpuify", false)?;
    Ok(q)
}

pub fn lower_with(p: &Program, cfg: &PipelineConfig) -> Result<Program, PipelineError> {
    let q = lower_to_cpu(p, LowerOptions { mode: cfg.mode, ompopt: cfg.toggles.ompopt })?;
    check(&q, "lower", true)?;
    Ok(q)
}

/// optimize, cpuify and lower.
pub fn compile_cpu(p: &Program, cfg: &PipelineConfig) -> Result<Program, PipelineError> {
    let q = optimize(p, cfg.toggles)?;
    let q = cpuify_with(&q, cfg)?;
    lower_with(&q, cfg)
}
