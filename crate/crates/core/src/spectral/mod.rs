//! Chebyshev interpolation filters and their parameterizations.

mod chebyshev;
mod filters;
mod oracle;

pub use chebyshev::{
    cheb_propagate, chebyshev_basis, chebyshev_basis_values, chebyshev_eval, chebyshev_nodes,
    filter_response, interp_matrix, interp_weights, interp_weights_values, node_eigenvalues,
};
pub use filters::{
    band_init, build_gamma, build_gamma_band, gamma_values, sliding_positions, BandMode,
    FilterMode, FilterParams, FilterVars, Orientation, SpectralFilter, View,
};
pub use oracle::{dense_filter_oracle, DenseSpectrum, ORACLE_MAX_NODES};
