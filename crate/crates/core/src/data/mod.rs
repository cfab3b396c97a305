//! Synthetic data, non-IID partitioning and minibatch sampling.

mod dataset;
mod partition;
mod sampler;

pub use dataset::{make_synthetic, Dataset, SyntheticData, SyntheticSpec};
pub use partition::{
    label_entropy, label_histogram, partition, partition_dirichlet, partition_classes, partition_pathological, partition_with_test,
    ClientShard, FederatedSplit, PartitionMode, PartitionSpec,
};
pub use sampler::{balanced_indices, sample_balanced_minibatch, sample_minibatch, MinibatchSampler};
