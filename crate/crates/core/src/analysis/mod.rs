//! Frequency function, first-variation checks, blow-ups, tangent maps,
//! Fourier bounds and singular points of solved Q-valued functions.

mod fourier;
mod profile;
mod rate;
mod singular;
mod tangent;
mod variation;

pub use fourier::{
    check_mode_inequality, fourier_bounds, fourier_coeffs, gamma_exponent, verify_decay_inequality, DecayCheck,
    FourierBounds, FourierPiece, FourierTrace,
};
pub use profile::{
    check_monotonicity, check_variational_identities, profile, profile_with_samples, triangle_disk_area,
    FrequencyProfile, IdentityResiduals, MonotonicityCheck, CIRCLE_SAMPLES,
};
pub use rate::{rate_check, RateFit, RATE_NOISE_FLOOR};
pub use singular::{
    boundary_spread, cluster_count, default_cluster_tol, holder_estimate, multiplicity_sigma, singular_clusters,
    singular_set, HolderBin, HolderEstimate, SingularCluster, CLUSTER_TOL_FACTOR,
};
pub use tangent::{
    blow_up, sup_distance, tangent_fit, BlowUpOptions, TangentFitOptions, TangentModel, TangentPiece,
};
pub use variation::{verify_stationarity, Perturbation, StationarityEstimate, TestField};
