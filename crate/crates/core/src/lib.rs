//! p-adic Fourier analysis on finite lattice approximations of `Q_p^N`, elliptic
//! pseudodifferential operators, Lévy white noise and the Euclidean random
//! fields they drive.

pub mod error;
pub mod fft;
pub mod lattice;
pub mod matrix;
pub mod moments;
pub mod noise;
pub mod operators;
pub mod padic;
pub mod poly;
pub mod symmetry;

pub use error::{Error, Result};
pub use lattice::{
    fourier_forward, fourier_inverse, fourier_transform, haar_integral, sobolev_inner, sobolev_metric, sobolev_norm,
    unit_ball_character_integral, BilinearForm, CharacterSum, Domain, GridFn, Lattice, SobolevParams, TransformPath,
};
pub use matrix::PMatrix;
pub use moments::{schwinger_analytic, schwinger_mc, set_partitions, sheet_sample, McEstimate, SetPartition, SheetPath};
pub use noise::{
    char_functional, empirical_char_field, moment_constants, psi_eval, sample_field, sample_noise, FieldSample, LevyTriple,
    NoiseSample,
};
pub use operators::{
    apply_symbol, decay_fit, green_series, green_spectral, invert_symbol, klein_gordon_solve, DecayFit, DecayRegime,
    GreenKernel, SeriesValue, SmoothSymbol,
};
pub use padic::{chi, fractional_part, padic_norm, Order, PNorm, PRational, PVector, UnitComplex};
pub use poly::{certify_elliptic, certify_minimal, z_alpha, EllipticPolynomial, EllipticityCertificate};
pub use symmetry::{act_on_function, invariance_report, preserves_polynomial, preserves_quadratic, EuclideanElement, InvarianceRow};
