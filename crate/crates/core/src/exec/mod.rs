//! Reference interpreters, race checking, random kernels and the
//! differential harness.

mod data;
mod diff;
mod gen;
mod interp;
mod race;
mod value;

pub use data::{buffer_len, lit_json, random_input, KernelData, UNSIZED_LEN};
pub use interp::{
    run_cpu, run_cpu_with, run_simt, run_simt_with, space, Counters, Env, Event, KernelOutput,
    Observer, RunOptions,
};
pub use diff::{
    campaign, campaign_sequential, diff_test, inputs_for, mismatches, shrink, CampaignCase,
    CampaignReport, DiffOptions, DiffReport, Failure,
};
pub use gen::{gen_random_kernel, gen_random_source};
pub use race::{race_check, Race};
pub use value::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("type error: {0}")]
    Type(String),
    #[error("barrier divergence: {0}")]
    Divergence(String),
    #[error("out-of-bounds access @{buf}[{index}] (length {len}){who}")]
    OutOfBounds {
        buf: String,
        index: i64,
        len: usize,
        who: String,
    },
    #[error("fuel exhausted")]
    Fuel,
    #[error("bad input: {0}")]
    Input(String),
    #[error("unlowered synchronization")]
    Unlowered,
    #[error("use of undefined value %{0}")]
    Undefined(String),
}
