use thiserror::Error;

/// Which of the two sums `J + K` / `J - K` an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SumSign {
    Plus,
    Minus,
}

impl std::fmt::Display for SumSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SumSign::Plus => write!(f, "J+K"),
            SumSign::Minus => write!(f, "J-K"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrataError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix side must be even, got {0}")]
    OddDimension(usize),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid tolerance (rel = {rel}, abs = {abs})")]
    InvalidTolerance { rel: f64, abs: f64 },

    #[error("not a complex structure: |J^2 + I| = {residual:.3e}")]
    NotAComplexStructure { residual: f64 },

    #[error("not metric compatible: |J^T g J - g| = {residual:.3e}")]
    NotMetricCompatible { residual: f64 },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("odd numerical kernel dimension {dim} for {which}")]
    OddKernelDimension { which: SumSign, dim: usize },

    #[error("odd numerical rank {0} for [J,K]")]
    OddCommutatorRank(usize),

    #[error("metric pair with rank[J,K] = {0} not divisible by 4")]
    QuaternionicRankViolation(usize),

    #[error("kernel splitting inconsistent: m1 = {m1}, m_-1 = {m_minus1}, s = {s}, n = {n}")]
    InconsistentSignature { n: usize, m1: usize, m_minus1: usize, s: usize },

    #[error("eigenvalue of JK off the unit circle: |c| = {modulus:.6}")]
    NonUnitEigenvalue { modulus: f64 },

    #[error("anticommutator residual {residual:.3e} exceeds tolerance on block e = {e:.6}")]
    BlockResidual { e: f64, residual: f64 },

    #[error("block is not quaternionic (f = 0)")]
    NotQuaternionicBlock,

    #[error("block index {index} out of range ({count} blocks)")]
    BlockIndex { index: usize, count: usize },

    #[error("invalid stratum request: {0}")]
    InvalidRequest(String),

    #[error("parity violation: n - m1 - m_-1 = {0} is odd")]
    ParityViolation(usize),

    #[error("invalid parameter r = {0} (must avoid 0 and +-1)")]
    InvalidR(f64),

    #[error("invalid block specification: {0}")]
    InvalidBlockSpec(String),

    #[error("metric required: {0}")]
    MetricRequired(String),

    #[error("subspace has dimension {found}, expected {expected}")]
    SubspaceDimension { expected: usize, found: usize },

    #[error("subspace is not maximal isotropic (residual {0:.3e})")]
    NotMaximalIsotropic(f64),

    #[error("chart parameters violate g-skewness (residual {0:.3e})")]
    SkewnessViolation(f64),

    #[error("reference subspace does not match the chart")]
    ChartMismatch,

    #[error("graph law violated: dim(Graph(A) cap V0) = {intersection}, dim ker a1 = {kernel}")]
    GraphLawViolation { intersection: usize, kernel: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("scale {scale:.1e} is within 10x of the rank threshold")]
    ScaleGuard { scale: f64 },

    #[error("grid point {0:?} is on the boundary")]
    BoundaryPoint(Vec<usize>),

    #[error("base dimension {0} is odd")]
    OddBaseDimension(usize),

    #[error("field has no base complex structure")]
    MissingBaseStructure,

    #[error("field has no three-form")]
    MissingThreeForm,

    #[error("three-form is not of type (1,2)+(2,1): residual {residual:.3e} for {which}")]
    ThreeFormType { which: &'static str, residual: f64 },

    #[error("malformed field file: {0}")]
    FieldFormat(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, StrataError>;

impl From<std::io::Error> for StrataError {
    fn from(e: std::io::Error) -> Self {
        StrataError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for StrataError {
    fn from(e: serde_json::Error) -> Self {
        StrataError::Malformed(e.to_string())
    }
}

impl StrataError {
    /// Process exit status: 1 for malformed input or I/O, 3 for an odd kernel, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            StrataError::Malformed(_) | StrataError::Io(_) | StrataError::FieldFormat(_) => 1,
            StrataError::OddKernelDimension { .. } => 3,
            _ => 2,
        }
    }

    /// Variant name, used as a stable failure label in reports.
    pub fn kind(&self) -> String {
        let dbg = format!("{self:?}");
        dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
    }
}
