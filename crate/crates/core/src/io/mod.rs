//! Configuration files, map serialization and figure rendering.

pub mod config;
pub mod manifest;
pub mod svg;
pub mod table;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use manifest::RunManifest;
pub use svg::{render_heatmap_svg, SvgLabels};
pub use table::{read_map_csv, write_map_csv};
