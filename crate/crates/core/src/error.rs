use alloc::string::String;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A mesh or partition request that cannot be realized.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// An argument outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter point outside the parameter box.
    #[error("parameter point outside the parameter box: coordinate {coordinate} = {value} not in [{lower}, {upper}]")]
    OutOfDomain {
        /// Zero-based coordinate index.
        coordinate: usize,
        /// Offending value.
        value: f64,
        /// Lower bound of the box in this coordinate.
        lower: f64,
        /// Upper bound of the box in this coordinate.
        upper: f64,
    },

    /// Elimination met a (numerically) vanishing pivot.
    #[error("singular matrix: pivot {pivot:e} at row {row}")]
    SingularMatrix {
        /// Row of the pivot.
        row: usize,
        /// Magnitude of the pivot.
        pivot: f64,
    },

    /// The solve finished but its residual misses the contract.
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    InaccurateSolve {
        /// Achieved relative residual.
        residual: f64,
        /// Required relative residual.
        tolerance: f64,
    },

    /// A full solve failed at a specific parameter point.
    #[error("full solve failed at xi = {xi:?}: {source}")]
    SolveAt {
        /// Parameter point of the failed solve.
        xi: alloc::vec::Vec<f64>,
        /// Underlying failure.
        source: alloc::boxed::Box<Error>,
    },

    /// The reduced system could not be factored.
    #[error("singular reduced system (condition estimate {condition:e})")]
    SingularReduced {
        /// 1-norm condition estimate, infinite when a pivot vanished.
        condition: f64,
    },

    /// An ANOVA term was requested before one of its lower-order terms.
    #[error("ANOVA term {term:?} requires missing lower-order term {missing:?}")]
    MissingLowerTerm {
        /// Requested direction set (zero-based).
        term: alloc::vec::Vec<usize>,
        /// Absent subset (zero-based).
        missing: alloc::vec::Vec<usize>,
    },
}

impl Error {
    pub(crate) fn at_point(self, xi: &[f64]) -> Self {
        Error::SolveAt {
            xi: xi.to_vec(),
            source: alloc::boxed::Box::new(self),
        }
    }
}
