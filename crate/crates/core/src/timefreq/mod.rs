//! Complex Morlet scalograms and Welch power spectral density.

mod cwt;
mod welch;

pub use cwt::{cwt_morlet, morlet_kernel, MorletSpec, Scalogram};
pub use welch::{welch_psd, PsdEstimate, WelchSpec, Window};
