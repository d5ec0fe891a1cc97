use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not a prime")]
    NotPrime(u64),

    #[error("prime mismatch: {0} vs {1}")]
    PrimeMismatch(u64, u64),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("domain tag mismatch: expected {expected}, got {got}")]
    DomainMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("dual lattice has a negative exponent (j' = {support}, k' = {resolution})")]
    ResolutionMismatch { support: i64, resolution: i64 },

    #[error("bilinear form matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is singular")]
    Singular,

    #[error("bilinear form is not unimodular after rescaling; lattice transforms need det of the normalized matrix to be a p-adic unit")]
    NonUnimodularForm,

    #[error("self-dual normalization failed the involution probe (error {0:e})")]
    SelfDualityProbe(f64),

    #[error("polynomial is not homogeneous: {0}")]
    NotHomogeneous(String),

    #[error("cannot parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("polynomial not certified elliptic at level {level}: witness {witness:?}")]
    NotElliptic { witness: Vec<u64>, level: u32 },

    #[error("certificate does not match the polynomial")]
    CertificateMismatch,

    #[error("enumeration of {0} points exceeds the configured budget")]
    EnumerationTooLarge(u128),

    #[error("symbol is {0} at a frequency point")]
    InvalidSymbol(&'static str),

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("function takes non-real values (max |Im| = {0:e})")]
    NonReal(f64),

    #[error("the shell series is only defined away from the origin")]
    OriginExcluded,

    #[error("decay fit needs at least {needed} shells, found {found}")]
    InsufficientShells { needed: usize, found: usize },

    #[error("shell average is non-positive at norm exponent {0}")]
    NonPositiveShell(i64),

    #[error("element does not stabilize the lattice: {0}")]
    NotLatticeStabilizing(String),

    #[error("radii must be strictly increasing")]
    UnsortedRadii,
}

pub type Result<T> = std::result::Result<T, Error>;
