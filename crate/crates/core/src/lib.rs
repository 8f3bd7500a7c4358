//! DAG convolutional networks.
//!
//! Building blocks, bottom-up:
//!
//! - [`dag`]: topologically stored DAGs, Erdős–Rényi sampling, validation.
//! - [`sp`]: weighted transitive closure, causal shifts `T_k`, DAG filters
//!   and the DAG Fourier transform.
//! - [`nn`]: parameters, losses, Adam and the training loop, with hand-written
//!   adjoints for the few primitives the models need.
//! - [`models`]: DCN (forward and transposed), DAG perceptron, FB-GCNN, GCN,
//!   MLP and the least-squares filter baseline.
//! - [`data`]: synthetic network-diffusion and source-identification tasks.
//! - [`harness`]: experiment configuration, metrics, multi-realization runs,
//!   sweeps and CSV output.

pub mod dag;
pub mod data;
pub mod error;
pub mod harness;
pub mod models;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod sp;
pub mod sparse;

pub use dag::{permute, sample_er_dag, validate_dag, Dag, NodePermutation, WeightLaw};
pub use error::{Error, Result};
pub use signal::SignalBatch;
pub use sp::{
    apply_filter, apply_shift, fourier, frequency_response, inverse_fourier, predecessor_masks,
    transitive_closure, CausalShiftSet, ClosurePair, DagFilter,
};
