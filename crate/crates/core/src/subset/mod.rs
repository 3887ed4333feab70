//! Subset selection: the multiset state, ranking primitives and the search schemes.

mod schemes;
mod select;
mod state;

pub use schemes::{
    acquire, build_up_step, duplication_schedule, duplication_step, run_automatic_duplication, run_build_up,
    run_compress, run_pretrain, run_random_baseline, run_scheme, IntermediateMembers, IterationRecord, ModelSpec,
    Scheme, SearchConfig, SubsetResult,
};
pub use select::{growth_schedule, outlier_skip, outlier_window_select, rank, select_top_k};
pub use state::SubsetState;
