//! Numerical laboratory for the Landau-de Gennes model in the small-coupling
//! regime: a five-coefficient Q-tensor field solver on the cube, the full
//! defect-diagnostic toolbox (weighted monotonicity density, regular scale,
//! bad-set covering, weak-L3 gradient quasinorm), and the hedgehog
//! continuation sweep with its convergence-rate certificates.

pub mod cover;
pub mod diagnostics;
pub mod energy;
pub mod field;
pub mod field_io;
pub mod grid;
pub mod minimize;
pub mod phi;
pub mod qtensor;
pub mod report;
pub mod sweep;

pub use cover::{cover_bad_set, neighborhood_volume, CoverParams, CoverResult, PinchRecord};
pub use diagnostics::{BadSetMask, DiagError, FieldDiagnostics, MonotonicityProfile};
pub use energy::{discrete_energy, el_residual_check, energy_gradient, EnergyBreakdown};
pub use field::{hedgehog_value, integrate_ball, FieldError, QField};
pub use field_io::{load_field, save_field, save_mask, FieldIoError};
pub use grid::{Ball, Grid, GridError};
pub use minimize::{minimize, SolveError, SolveOptions, SolveStats, StepPolicy};
pub use phi::{make_phi, WeightPhi};
pub use qtensor::{
    bulk_gradient, bulk_potential, classify_phase, dist_to_vacuum, eigen_decompose,
    equal_eigenvalue_curve, project_to_vacuum, MaterialParams, ParamError, Phase, PhaseLabel,
    QTensor, SpectralError,
};
pub use report::{plot_data, report_csv, report_json, CSV_COLUMNS};
pub use sweep::{
    fit_scaling, lp_distance, monotonicity_centers, monotonicity_ladder, rate_certificates,
    run_hedgehog_sweep, BoundaryMode, Certificate, FitError, ScalingFit, SweepConfig, SweepError,
    SweepReport, SweepRow,
};
