use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("date {0} is not covered by the work calendar")]
    DateNotInCalendar(NaiveDate),

    #[error("station {0:?} is not in the station list")]
    UnknownStation(String),

    #[error("invalid station list: {0}")]
    InvalidStations(String),

    #[error("station index mismatch between flow matrices")]
    StationIndexMismatch,

    #[error("empty graph: total edge weight is zero")]
    EmptyGraph,

    #[error("partition covers {partition} stations but the graph has {graph}")]
    PartitionSize { partition: usize, graph: usize },

    #[error("degenerate table: at least two stations are required")]
    DegenerateTable,

    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(String),

    #[error("no opportunities: every attraction from origin {0} is zero")]
    NoOpportunities(usize),

    #[error("zero distance between distinct stations {0} and {1}")]
    ZeroDistance(usize, usize),

    #[error("unidentifiable recurrence parameters: {0}")]
    Unidentifiable(String),

    #[error("log link requires strictly positive targets (found {0}); add an offset or use the identity link")]
    NonPositiveTarget(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
