//! Comparison functions (classes K, K∞, L, KL), their algebra, the mesh
//! construction of KL upper bounds and power-law factorizations of KL bounds.

mod kl;
mod majorant;
mod mesh;
mod scalar;
mod sontag;

pub use kl::{verify_kl, KLFunction, KLKind, MeshInterpolant};
pub use majorant::{
    decay_envelope_from_ladder, kl_majorant, DecayEnvelope, LadderRecord, LADDER_MAX_TIME, LADDER_MIN_GAP,
};
pub use mesh::{build_partition, sampled_oscillation, Mesh, DEFAULT_SAMPLES_PER_INTERVAL};
pub use scalar::{
    invert_monotone, pointwise_min, saturate, verify_class, FunctionClass, ScalarFunction, ScalarKind,
    Tabulated, MIN_REPAIR_SLOPE,
};
pub use sontag::{power_law, sontag_factorize, PowerFamily, SontagFamilies, SontagFit};
