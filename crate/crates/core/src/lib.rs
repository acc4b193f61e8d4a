//! Predictor feedback for linear plants with time-varying input and
//! measurement delays.

pub mod bench;
pub mod config;
pub mod container;
pub mod delay;
pub mod history;
pub mod horizon;
pub mod linalg;
pub mod margins;
pub mod neural;
pub mod plant;
pub mod rng;
pub mod scenario;

pub use container::{Tensor, TensorContainer, TensorData};
pub use delay::{check_assumptions, AssumptionReport, Delay, DelayPair, DelayParams, LinearDelay, TabulatedDelay};
pub use horizon::{euler_psi, oracle_psi, rk4_psi, solve_psi0, windowed_psi, HorizonSeries, Method, Scheme};
pub use neural::{consistency_error, fno_forward, load_weights, ConsistencyReport, OperatorWeights};
pub use plant::{gamma_decay_fit, simulate, DecayFit, HorizonProvider, InitialData, PlantSpec, SimOptions, SimulationTrace};
pub use margins::{compute_margins, norm_equivalence_check, MarginError, MarginReport, NormEquivalence};
pub use bench::{bench_methods, gen_dataset, verify_dataset, BenchOptions, BenchResult, DatasetConfig};
pub use scenario::{compute_horizon, HorizonRequest, RunError, Scenario, SimulationOutcome};
pub use config::{Config, ConfigError, HorizonMethod};
