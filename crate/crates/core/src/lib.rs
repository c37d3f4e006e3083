//! Hard-to-learn one-hidden-layer "s-wave" function families.
//!
//! The crate builds integrable bump units from standard activation gates,
//! sums shifted copies of them into nearly periodic waves, composes those
//! waves with subset sums to obtain a family of functions that a single
//! hidden layer computes exactly, and provides the machinery to study how
//! hard that family is to learn:
//!
//! * [`dist`]: logconcave input samplers and labeled datasets,
//! * [`sqoracle`]: VSTAT oracles, including an adversarial decoy mode,
//! * [`statdim`]: Monte Carlo estimates of pairwise correlations,
//! * [`mlp`]: a dense network trained with SGD and momentum,
//! * [`experiment`]: grid sweeps and reports over all of the above.

pub mod activation;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod hardfam;
pub mod io;
pub mod linalg;
pub mod mlp;
pub mod quad;
pub mod seed;
pub mod sqoracle;
pub mod statdim;
pub mod wave;

pub use activation::{make_bump, ActivationKind, BumpTerm, BumpUnit, Gate};
pub use dist::{InputDist1D, InputDistN, LabeledSampleSet, Marginal, Rounding};
pub use error::{Error, Result};
pub use hardfam::{HardFunction, NetworkRep, Subset, SubsetFamily};
pub use mlp::{HiddenActivation, Mlp, MlpSpec, TrainConfig, TrainReport};
pub use sqoracle::{OracleConfig, OracleMode, QuerySpec, SoftIndicator, VstatOracle};
pub use statdim::CovEstimate;
pub use wave::WaveSpec;
