//! Density and tail envelopes for the marginals of y_t and z_t, the explicit
//! conditional functional g, probe calibration of the envelope constants, and
//! kernel-density verification.

mod calibrate;
mod envelope;
mod kde;
mod nv;

pub use calibrate::{calibrate, field_moments, g_explicit, g_y_explicit, g_z_explicit, Calibration, PROBE_MARGIN};
pub use envelope::{
    corollary_tails, corollary_upper, find_z0, gaussian_envelope, nongaussian_envelope, DensityEnvelope, EnvelopeKind, GrowthIndices,
    NonGaussianShape, Shape, TailBounds, Target,
};
pub use kde::{kde, kde_on, verify_envelope, Bandwidth, EmpiricalDensity, EnvelopeReport, ReportRow, TailFrequency};
pub use nv::{chi, nv_density, tail_bound};
