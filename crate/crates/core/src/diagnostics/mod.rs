//! Convergence monitoring and model criticism.

mod convergence;
mod ppc;
mod region;
mod summary;

pub use convergence::{autocorrelation, bgr_statistic, effective_sample_size, mc_standard_error};
pub use ppc::{
    log_odds_ratio, ppc_pattern_frequencies, ppc_slor, Group, PatternFrequencyTable, PatternRow, PpcOptions,
    SlorTable,
};
pub use region::{credible_region_simplex, CredibleRegion, RegionOptions, MIN_REGION_DRAWS};
pub use summary::{
    posterior_summary, quantile, quantile_sorted, summarize_traces, ParamSummary, PosteriorSummary, SUMMARY_PROBS,
};
