//! Controlled McKean-Vlasov particle systems: simulation, rewards, value
//! estimation, chain-rule checks and coefficient mollification.

pub mod coeffs;
pub mod ito;
pub mod mollify;
pub mod policy;
pub mod sim;
pub mod value;

pub use coeffs::{registry, CoefficientSet, LawView, REGISTRY_KEYS};
pub use ito::{ito_check, CandidateFunction, FnCandidate, GaugeCandidate, ItoReport};
pub use mollify::{mollify, Mollified, MollifyConfig};
pub use policy::{constant_policies, threshold_policies, Bins, Policy, PolicyTable};
pub use sim::{coupled_run, estimate_reward, reward, simulate, simulate_until, EnsemblePath, SimParams};
pub use value::{dpp_check, eps_gap_experiment, lipschitz_check, value_policy_search, DppReport, EpsGapTable, LipschitzReport, PolicySearch};
