//! Exact and sampled Gibbs computations for the Sherrington–Kirkpatrick
//! model at high temperature: conditional spin correlations, the
//! replica-symmetric fixed point and its limit law, the self-avoiding path
//! expansion of `m_ij`, and the replica experiments built on them.

pub mod experiments;
pub mod fixed_point;
pub mod gibbs;
pub mod paths;
pub mod quadrature;
pub mod sampler;
pub mod seed;
pub mod stats;

pub use fixed_point::{limit_law_sample, limit_moments, solve_q, FixedPointSolution, LimitLawSpec};
pub use gibbs::{
    delta_epsilon, gibbs_report, overlap_q, sample_disorder, Conditioning, Disorder, ExactSolver, GibbsReport,
    ModelParams, Observable, Request, Spin,
};
pub use paths::{compute_bundle, enumerate_paths, path_count, PathExpansion, PathTermBundle, SelfAvoidingPath};
pub use sampler::{glauber_estimate, McmcConfig, McmcEstimate, Target};
