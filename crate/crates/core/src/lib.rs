//! Distributionally robust linear-quadratic control under a Wasserstein penalty.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: plant, stage cost, disturbance generators and the rollout simulator.
//! * [`empirical`]: empirical disturbance samples, their statistics and a discrete
//!   2-Wasserstein evaluator.
//! * [`dr_riccati`]: model-based Riccati-type value iteration for the penalized game,
//!   policy extraction, worst-case distributions and a grid DP oracle.
//! * [`qfunction`]: quadratic Q-function parameters, feature basis and packing.
//! * [`qlearning`]: the model-free learning loop and its closed-form oracle.
//! * [`baselines`]: discounted LQR and the zero-mean (H-infinity) game controller.

pub mod baselines;
pub mod dr_riccati;
pub mod empirical;
pub mod error;
pub mod linalg;
pub mod model;
pub mod qfunction;
pub mod qlearning;

pub use baselines::{hinf_policy, lqr_gain, LqrOptions, LqrSolution};
pub use dr_riccati::{
    assemble_blocks, extract_policy, feasibility_threshold, solve, stability_check, value_iterate,
    worst_case_distribution, HBlocks, PolicyPair, SolveReport, SolverOptions, ValueFunction,
    WorstCaseDistribution,
};
pub use empirical::{wasserstein2_uniform, DisturbanceSamples, SampleStats};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use model::{
    rollout, seeded_rng, CostSpec, DisturbanceGenerator, ExplorationSpec, LtiSystem, SimRng,
    Simulator, StateBox, Transition,
};
pub use qfunction::{
    basis_vector, eval_q, greedy_policies, pack_theta, q_from_value, unpack_theta, QParams,
    ThetaVector,
};
pub use qlearning::{
    closed_form_iterate, learn, lstsq_update, IterationLog, LearnConfig, LearnOutcome,
};
