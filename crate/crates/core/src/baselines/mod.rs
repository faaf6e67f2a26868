//! Reference samplers and comparison metrics.

pub mod batch;
pub mod exact;
pub mod experiments;
pub mod glauber;
pub mod transport;

pub use batch::{Provenance, SampleBatch};
pub use exact::{exact_gibbs, exact_sample, EnergyTable, ExactGibbs};
pub use glauber::{glauber_run, GlauberParams};
pub use transport::{empirical_w2, overlap_moment};
