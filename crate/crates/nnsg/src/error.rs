use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
///
/// Variants are grouped by failure class: validation errors (bad
/// dimensions, out-of-range values, malformed inputs), binary-format
/// errors (each a distinct class so callers can react to corruption
/// vs. version drift), and I/O errors carrying the offending path.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("{what} contains a non-finite value")]
    NonFinite { what: String },

    #[error("{what} must be within [{min}, {max}], got {value}")]
    OutOfRange {
        what: String,
        min: f64,
        max: f64,
        value: f64,
    },

    #[error("triangle {index} is degenerate: [{a}, {b}, {c}]")]
    DegenerateTriangle { index: usize, a: u32, b: u32, c: u32 },

    #[error("triangle {index} references vertex {vertex}, but there are only {n_vertices} vertices")]
    TriangleIndexOutOfBounds {
        index: usize,
        vertex: u32,
        n_vertices: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown attribute {name:?}; valid names: {}", valid.join(", "))]
    UnknownAttribute { name: String, valid: Vec<String> },

    #[error("duplicate record id {id:?}")]
    DuplicateId { id: String },

    #[error("record id must be non-empty")]
    EmptyId,

    #[error("{what} has zero norm; cosine similarity is undefined")]
    ZeroNorm { what: String },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("k = {k} is out of range for a database of {size} records")]
    KOutOfRange { k: usize, size: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found:?}; this build reads version {supported:?}")]
    VersionMismatch { found: String, supported: String },

    #[error("file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{extra} trailing bytes after the end of the payload")]
    TrailingData { extra: usize },

    #[error("record id is {len} bytes; the database format caps ids at 65535 bytes")]
    IdTooLong { len: usize },

    #[error("empty render: no covered pixels")]
    EmptyRender,

    #[error("canny thresholds out of order: low {low} must be < high {high}")]
    ThresholdOrder { low: f64, high: f64 },

    #[error("normal {index} is not unit length (norm = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("latent shape mismatch: {expected:?} vs {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    WindowTooSmall {
        window: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter file {path}: {message}")]
    ParamFile { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
