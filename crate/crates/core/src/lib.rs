//! Library for proactive client selection in federated learning.
//!
//! Clients describe their label distribution through a one-hot *registry*
//! built over their dominating classes, exchange registries under additively
//! homomorphic (Paillier) encryption, and then decide autonomously whether to
//! participate in each training round with a probability derived from the
//! aggregate registry. The crate bundles:
//!
//! - [`crypto`]: the Paillier cryptosystem with vector operations and a
//!   byte-exact wire format for overhead accounting,
//! - [`distributions`]: class histograms, skew metrics and the synthetic
//!   non-IID dataset generator,
//! - [`registry`]: the dominating-class codebook and registration rule,
//! - [`selection`]: probabilistic, random and greedy selection strategies,
//!   multi-time selection and threshold parameter search,
//! - [`protocol`]: an in-process simulation of the registration and
//!   selection message flows with communication accounting,
//! - [`fl_train`]: a small softmax-regression federated training loop used
//!   to relate population-distribution skew to test accuracy,
//! - [`cli`]: the experiment-runner commands behind the `dubhe` binary.

pub mod cli;
pub mod crypto;
pub mod distributions;
pub mod fl_train;
pub mod protocol;
pub mod registry;
pub mod seed;
pub mod selection;
