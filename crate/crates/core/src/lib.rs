//! Asymptotic performance predictions for noisy sparse recovery by ℓ1-constrained
//! second-order cone programs, together with the solvers and Monte-Carlo harness used to
//! check them.

// Negated comparisons are how argument checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod experiment;
pub mod gaussian_order_stats;
pub mod instance_gen;
pub mod numerics;
pub mod phase_curves;
pub mod predictor_general;
pub mod predictor_signed;
pub mod socp;
pub mod surrogate;

pub use error::{Error, Result};
pub use experiment::{
    feasibility_scan, run_campaign, AggregateRow, CampaignSpec, FeasibilityRow, Mode, RadiusMode, Source, TrialRecord,
    TrialStatus,
};
pub use gaussian_order_stats::{ThetaGeneral, ThetaSigned};
pub use instance_gen::{generate_instance, generate_surrogate_draw, Instance, SurrogateDraw};
pub use phase_curves::{design_from_rho, fundamental_beta, RhoDesign};
pub use predictor_general::{predict, GeneralPrediction, ModelConfig};
pub use predictor_signed::{feasibility_breaking_point, predict_signed, FeasibilityPoint, SignedPrediction};
pub use socp::{solve_socp, solve_socp_signed, SocpSolution, SocpStatus};
pub use surrogate::{
    detect_unbounded, solve_surrogate_general, solve_surrogate_signed, RayCheck, SurrogateSolution, SurrogateStatus,
};
