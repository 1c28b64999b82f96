//! Wasserstein metric `G_W(μ)`: thermodynamic quadrature, finite-size excess,
//! singularity and minimum detection, aGBZ modulus ranges and convexity.

mod curve;
mod optimize;
mod ranges;
mod thermo;

pub use curve::{
    convexity_check, find_minima, find_singularities, gbz_radius_circular, read_curve_csv, scan_metric, write_curve_csv,
    EPSingularity, FiniteSize, MetricCurve, MetricSample, SampleFlags, ScanConfig, SegmentConvexity, CONVEXITY_TOL,
    CURVE_HEADER, DIVERGENCE_RATIO,
};
pub use ranges::{
    agbz_modulus_ranges, assemble_runs, assemble_runs_bridging, bloch_eps_in_window, ep_touch_scan, gbz_gap, gbz_modulus_range, noise_floor, ranges_from_cells,
    scan_cells, CellState, ModulusRange, RangeScan, TouchPoint, TouchScan,
};
pub use thermo::{
    band_derivatives, degeneracy_correction, gw_closed_singleband, gw_multiband_trace, gw_thermo, gw_thermo_detailed,
    gw_lattice, n_delta_gw, n_delta_gw_lattice, peak_n_delta_gw, spectral_area, BandIntegral, BandPoint, DEFAULT_K,
};
pub(crate) use optimize::golden_max;
