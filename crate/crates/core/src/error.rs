use thiserror::Error;

pub type Result<T> = core::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("non-finite vertex coordinate")]
    NonFiniteVertex,
    #[error("invalid image size {width}x{height}")]
    InvalidSize { width: usize, height: usize },
    #[error("annotation has no usable polygons")]
    NoPolygons,
    #[error("mask shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("mask has no foreground pixels")]
    EmptyForeground,
    #[error("invalid box scale {0}; expected a value in (0, 2]")]
    InvalidScale(f64),
    #[error("invalid prompt strategy: {0}")]
    InvalidStrategy(&'static str),
    #[error("need at least 3 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("empty input")]
    EmptyInput,
}
