//! Scenario files, k-sweeps against the closed-form predictions, slope
//! fits and CSV/JSON/SVG emission.

pub mod emit;
pub mod fit;
pub mod record;
pub mod report;
pub mod scenario;
pub mod sweeps;

pub use emit::{csv_bytes, emit_outputs, read_csv, svg_plot, write_csv};
pub use fit::{fit_line, fit_loglog, LineFit};
pub use record::{GateFlags, SweepRecord, REL_ERR_FLOOR};
pub use report::{CheckItem, SuiteOutcome};
pub use scenario::{OffsetTag, RhoMode, Scenario, SCHEMA_VERSION};
pub use sweeps::{
    run_identity_suite, run_kernel_sweep, run_schrodinger_check, run_stationary_phase_suite,
    run_trace_sweep, run_unitarity_sweep,
};
