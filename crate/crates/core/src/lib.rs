//! Detects sport highlights indirectly, from video of the audience rather
//! than the game itself: spatio-temporal crops of the crowd are classified
//! by a small 3D convolutional network, and per-crop highlight probabilities
//! are accumulated into a per-instant Highlight Likelihood timeline that can
//! be sliced and ranked.
//!
//! The crate is self-contained: tensors, the network (forward and analytic
//! backward passes), RMSprop training, frame ingestion, dataset and
//! checkpoint formats, evaluation metrics, and a deterministic synthetic
//! crowd generator for desk-scale experiments.
//!
//! Everything is reproducible from a single `u64` seed. With the `parallel`
//! feature (on by default) batch scoring and minibatch gradients fan out
//! across threads via rayon; reductions always run in a fixed order, so
//! results are byte-identical to the sequential path.

pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod hl;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Executor;
pub use rng::SplitMix64;
pub use tensor::{Real, Tensor};
