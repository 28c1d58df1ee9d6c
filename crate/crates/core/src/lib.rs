//! Linear time-delay systems in five interconvertible representations.
//!
//! The crate models a single class of systems — linear dynamics with
//! discrete and distributed delays, exogenous disturbances `w`, actuation
//! `u`, regulated outputs `z`, and measured outputs `y` — in five forms:
//!
//! * **delayed-state form** ([`DdeSpec`]): coefficients multiply delayed
//!   copies and windowed integrals of `[x; w; u]`;
//! * **neutral form** ([`NdsSpec`]): adds delayed-derivative coefficients;
//! * **delay-channel form** ([`DdfSpec`]): a delay-free core in feedback
//!   with pure delay/integration channels `r_i -> v`;
//! * **transport form** ([`OdePdeSpec`]): the channels re-read as transport
//!   PDEs on the unit interval;
//! * **integral-equation form** ([`PieSpec`]): a partial-integral equation
//!   on `R^n x L2^p` without delayed arguments, with all coefficients
//!   [`PiOperator`]s.
//!
//! [`convert`] maps between the forms (exactly, by polynomial algebra),
//! [`simulate`] integrates each form natively, and [`lemmas`] checks that
//! trajectories agree across forms — the equivalences the conversions
//! promise.

pub mod convert;
pub mod error;
pub mod history;
pub mod io;
pub mod kernel;
pub mod lemmas;
pub mod models;
pub mod piops;
mod poly3;
pub mod quad;
pub mod signal;
pub mod simulate;
pub mod specs;
pub mod validate;

pub use convert::{
    dde_to_ddf, dde_to_pie, ddf_to_odepde, ddf_to_pie, ddf_to_pie_with_scratch,
    hybrid_from_ddf_history, minimal_ddf_from_dde, nds_to_ddf, odepde_to_ddf, phi0_to_r0,
    r0_to_phi0, sof_network_to_ddf, ConversionScratch, MinimalDdf, PieSpec, SofPlant,
    DEFAULT_RANK_TOL,
};
pub use error::{Error, Result};
pub use history::HistoryFunction;
pub use io::{
    read_spec, read_trajectory, spec_from_json, spec_to_json, trajectory_from_csv,
    trajectory_to_csv, write_spec, write_trajectory, AnySpec, SofMeta, SpecFile,
};
pub use kernel::{KernelVars, PolyKernel, DEFAULT_DEGREE_CAP};
pub use lemmas::{
    check_lemma1, check_lemma2, check_lemma3, check_lemma4, check_lemma5,
    check_route_independence, LemmaReport,
};
pub use models::{
    build_shower_dde, build_shower_ddf, build_sof_network, build_uav_dde, build_uav_ddf,
    ShowerParams, SofParams, UavParams,
};
pub use piops::{FunctionPart, HybridVector, PiOperator};
pub use signal::{SignalDescriptor, SignalKind, VectorSignal};
pub use simulate::{
    compare, simulate_dde, simulate_ddf, simulate_nds, simulate_odepde, simulate_pie,
    ChannelTrace, CollocationTrace, ComparisonReport, Integrator, InputDerivative, SimConfig,
    Trajectory,
};
pub use specs::{DdeSpec, DdfChannel, DdfSpec, DelayBlock, Dims, KernelBlock, NdsSpec, OdePdeSpec};
pub use validate::{
    check_inputs, check_sewing_ddf, check_sewing_odepde, input_requirements_dde,
    input_requirements_ddf, input_requirements_nds, input_requirements_odepde,
    input_requirements_pie, validate_dde, validate_ddf, validate_nds, validate_odepde,
    validate_pie, InputRequirements, ValidationConfig, ValidationReport, Violation,
};
