//! Raster ingestion, output files, the run report and key=value configuration.

mod config;
mod output;
mod raster;
mod report;

pub use config::{apply_config_text, config_entries, load_config_file, parse_band_mapping, set_config_value};
pub use output::{
    read_probability_png, write_confusion_png, write_difference_png, write_image_png, write_mask_png, write_outputs,
    write_probability_png, OutputFiles, CONFUSION_FILE, DIFFERENCE_FILE, MASK_FILE, PROBABILITY_FILE, REPORT_FILE,
};
pub use raster::{load_mask, load_pair, load_raster, write_raw, LoadedRaster, Normalization, RasterSpec};
pub use report::{format_real, MetricsReport, RunReport};
