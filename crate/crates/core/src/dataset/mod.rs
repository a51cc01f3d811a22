pub mod blob;
pub mod normalizer;
pub mod split;
pub mod store;

pub use blob::{fnv1a64, Blob};
pub use normalizer::{Normalizer, STD_FLOOR};
pub use split::{bootstrap_resample, member_seed, split_corpus, SplitSpec};
pub use store::{read_corpus, read_shot, shot_file_name, write_shot};
