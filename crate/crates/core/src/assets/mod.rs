//! File formats, rendering and the end-to-end run pipeline.

pub mod obj;
pub mod pipeline;
pub mod points;
pub mod render;

pub use obj::{export_obj_with_uv, load_obj, load_obj_with_uv, write_obj, write_obj_points, UvTransform};
pub use pipeline::{
    load_source, read_seams, read_uv_text, run_metrics, run_noise, run_render, run_train, run_unwrap, write_uv_text,
    InputKind, RenderSettings, RunConfig, RunMeta, RunSummary, Source,
};
pub use points::{load_ply, load_points, load_xyz, write_ply, write_xyz, PlyData, PlyFormat};
pub use render::{assign_checker_colors, render_image, render_svg, render_uv_layout, Layout, RenderOptions};
