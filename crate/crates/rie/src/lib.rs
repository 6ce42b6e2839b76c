//! Rotation-invariant estimators for the factors of S = √κ·X·Y + W.

#[cfg(feature = "cli")]
pub mod cli;
pub mod ensembles;
pub mod error;
pub mod evaluate;
pub mod rie_x;
pub mod rie_y;
pub mod roots;
pub mod spectrum;
pub mod transforms;

pub use error::{Result, RieError};
pub use ensembles::{EnsembleSpec, ObservationInstance, WPrior, XPrior, YPrior};
pub use spectrum::{SingularSpectrum, SpectralEvaluator};
pub use transforms::MeasureModel;

pub type C64 = num_complex::Complex64;
/// Spectral coordinate z; Stieltjes limits are taken from below the real axis.
pub type ComplexPoint = C64;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order always follows the index.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
