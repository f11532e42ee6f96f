//! Gate histograms, timescale math, refine-gradient bounds and contour
//! grids, with CSV writers for plotting.

mod bounds;
mod csv_out;
mod histogram;
mod timescale;

pub use bounds::{g_contour, golden_section_max, grad_norm_bounds, GradBound, GRID_POINTS};
pub use csv_out::{write_bounds_csv, write_contour_csv, write_histogram_csv, write_timescale_csv};
pub use histogram::{fraction_outside, gate_histogram, unit_means, GateHistogram, HISTOGRAM_BINS};
pub use timescale::{
    decay_period, ks_critical_1pct, ks_statistic, refine_timescale_band, timescale_report,
    timescale_sampler, TimescaleInit, TimescaleReport,
};
