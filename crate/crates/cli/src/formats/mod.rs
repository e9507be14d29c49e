//! File formats: metrics, samples and results CSVs, ASCII PGM images,
//! LGCP datasets as JSON, and SVG scatter plots.

mod csv_files;
mod lgcp;
mod pgm;
mod svg;

pub use csv_files::{
    read_samples_csv, write_metrics_csv, write_samples_csv, MetricsWriter, ResultRow, ResultsWriter,
};
pub use lgcp::{load_lgcp, save_lgcp, LgcpData};
pub use pgm::{parse_pgm, read_pgm, Pgm};
pub use svg::{scatter_svg, PlotOptions};
