//! Size guards for the dense constructions.

use crate::error::{Error, Result};

/// Environment variable overriding [`ResourceLimits::dense_quantum_max_n`].
pub const ENV_DENSE_MAX_N: &str = "QMAP_DENSE_MAX_N";
/// Environment variable overriding [`ResourceLimits::classical_dense_max_l`].
pub const ENV_CLASSICAL_DENSE_MAX_L: &str = "QMAP_CLASSICAL_DENSE_MAX_L";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceLimits {
    /// Largest `N` for which the `N^2 x N^2` superoperator is materialized.
    pub dense_quantum_max_n: usize,
    /// Largest grid side `L` for dense diagonalization of the classical
    /// `L^2 x L^2` transfer matrix.
    pub classical_dense_max_l: usize,
    /// Largest grid side `L` for which the classical transfer matrix is stored.
    pub classical_storage_max_l: usize,
    /// Largest retained dimension of a chord-truncated superoperator.
    pub chord_max_dim: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            dense_quantum_max_n: 16,
            classical_dense_max_l: 40,
            classical_storage_max_l: 64,
            chord_max_dim: 4096,
        }
    }
}

impl ResourceLimits {
    /// Defaults with the two dense-oracle guards taken from the environment
    /// when set.
    pub fn from_env() -> Result<Self> {
        let mut limits = Self::default();
        if let Some(v) = read_env(ENV_DENSE_MAX_N)? {
            limits.dense_quantum_max_n = v;
        }
        if let Some(v) = read_env(ENV_CLASSICAL_DENSE_MAX_L)? {
            limits.classical_dense_max_l = v;
        }
        Ok(limits)
    }

    pub(crate) fn check(what: &'static str, size: usize, limit: usize) -> Result<()> {
        if size > limit {
            Err(Error::ResourceGuard { what, size, limit })
        } else {
            Ok(())
        }
    }
}

fn read_env(name: &str) -> Result<Option<usize>> {
    match std::env::var(name) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{name} must be a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}
