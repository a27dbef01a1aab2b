use thiserror::Error;

use crate::flow::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // band structure
    #[error("band edges must be strictly increasing: E[{index}] = {left} >= E[{next}] = {right}", next = .index + 1)]
    NonMonotoneEdges { index: usize, left: f64, right: f64 },
    #[error("expected an odd number (>= 3) of band edges, got {0}")]
    EvenEdgeCount(usize),
    #[error("band edge {0} is not finite")]
    NonFiniteEdge(usize),

    // pencils
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("leading coefficient of the pencil is singular")]
    SingularLeadingCoefficient,
    #[error("pencil is not self-adjoint (coefficient {0} is not Hermitian)")]
    NonSelfAdjoint(usize),
    #[error("leading coefficient is not positive definite (smallest eigenvalue {0:e})")]
    IndefiniteLeading(f64),
    #[error("expected {expected} separators, got {got}")]
    WrongSeparatorCount { expected: usize, got: usize },
    #[error("zone [{lo}, {hi}] holds {found} eigenvalues, expected {expected}")]
    WrongEigenCountInZone { lo: f64, hi: f64, found: usize, expected: usize },
    #[error("eigenbasis condition number {0:e} exceeds threshold")]
    IllConditionedEigenbasis(f64),
    #[error("right division leaves a remainder of norm {0:e}")]
    NonzeroRemainder(f64),
    #[error("pencil is not monic")]
    NotMonic,
    #[error("eigenvalue computation failed")]
    EigenFailure,

    // Dirichlet data
    #[error("placement {value} for gap {gap} lies outside [{lo}, {hi}]")]
    PlacementOutsideGap { gap: usize, value: f64, lo: f64, hi: f64 },
    #[error("root {0} is defective (geometric multiplicity below algebraic)")]
    DefectiveRoot(f64),
    #[error("residue weight at mu = {mu} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NegativeGamma { mu: f64, min_eig: f64 },
    #[error("seed pencil failed the Herglotz check: {0}")]
    NotHerglotz(String),
    #[error("expected {expected} signs, got {got}")]
    WrongSignCount { expected: usize, got: usize },

    // operator construction and evaluation
    #[error("interpolated pencil is inconsistent (residual {0:e}): residues did not cancel")]
    ResidueNotCancelled(f64),
    #[error("evaluation at singular point z = {re} + {im}i")]
    AtSingularPoint { re: f64, im: f64 },
    #[error("N_- is singular at z = {re} + {im}i")]
    SingularN { re: f64, im: f64 },

    // flow and invariants
    #[error("invariant drift {drift:e} exceeded bound {bound:e} at x = {x}")]
    DriftExceeded {
        drift: f64,
        bound: f64,
        x: f64,
        partial: Box<Trajectory>,
    },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("state is malformed: {0}")]
    MalformedState(String),

    // io
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(z: num_complex::Complex64) -> Self {
        Error::AtSingularPoint { re: z.re, im: z.im }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
