//! File ingestion, chain persistence, and run manifests.

mod chain_store;
mod covariates;
mod manifest;
mod otu;

pub use chain_store::{
    export_chain_csv, load_chain, load_checkpoint, run_chain_persistent, save_chain,
    save_checkpoint, ChainWriter,
};
pub use covariates::{
    build_covariate_matrix, load_covariates, resolve_transform, save_covariates, validate_binary,
    LoadedCovariates, NamedTransformTerm,
};
pub use manifest::{sha256_bytes, sha256_file, Manifest, ManifestFile};
pub use otu::{load_otu, save_otu};
