//! UV layout images (PNG and SVG) and checker coloring.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{bounds, Vec2, Vec3};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const SEAM_COLOR: [u8; 3] = [0, 0, 0];
pub const EDGE_COLOR: [u8; 3] = [200, 200, 200];
pub const PLAIN_COLOR: [u8; 3] = [90, 90, 90];
pub const CHECKER_LIGHT: [u8; 3] = [235, 235, 235];
pub const CHECKER_DARK: [u8; 3] = [50, 50, 50];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Width and height in pixels.
    pub size: u32,
    pub margin: u32,
    /// Half-width of a point mark in pixels.
    pub point_radius: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { size: 1024, margin: 16, point_radius: 1 }
    }
}

/// What to draw.
#[derive(Clone, Copy, Debug, Default)]
pub struct Layout<'a> {
    pub uv: &'a [Vec2],
    /// Per-point unit normals; points are drawn gray without them.
    pub normals: Option<&'a [Vec3]>,
    /// Faces drawn as a wireframe under the points.
    pub faces: Option<&'a [[usize; 3]]>,
    /// Indices overdrawn in [`SEAM_COLOR`].
    pub seams: &'a [usize],
}

/// `(n + 1) / 2` per channel, in `[0, 1]` for unit normals.
pub fn normal_color(n: Vec3) -> [f64; 3] {
    [(n[0] + 1.0) / 2.0, (n[1] + 1.0) / 2.0, (n[2] + 1.0) / 2.0]
}

pub fn quantize(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Maps UV into pixel space: the layout's bounding box is scaled uniformly
/// to fit inside the margins, `v` pointing up.
#[derive(Clone, Copy, Debug)]
pub struct PixelMap {
    lo: Vec2,
    scale: f64,
    margin: f64,
    size: f64,
}

impl PixelMap {
    pub fn new(uv: &[Vec2], opts: &RenderOptions) -> Result<Self> {
        let (lo, hi) = bounds(uv).ok_or(Error::Empty("nothing to render"))?;
        if opts.size <= 2 * opts.margin + 1 {
            return Err(Error::InvalidArgument(format!("image size {} too small for margin", opts.size)));
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let span = (opts.size - 1 - 2 * opts.margin) as f64;
        let scale = if side > 0.0 { span / side } else { 0.0 };
        Ok(Self { lo, scale, margin: opts.margin as f64, size: opts.size as f64 })
    }

    /// Continuous pixel coordinates `(x, y)` with `y` growing downward.
    pub fn to_pixel(&self, p: Vec2) -> [f64; 2] {
        let x = self.margin + (p[0] - self.lo[0]) * self.scale;
        let y = self.size - 1.0 - self.margin - (p[1] - self.lo[1]) * self.scale;
        [x, y]
    }
}

fn point_colors(layout: &Layout) -> Result<Vec<[u8; 3]>> {
    match layout.normals {
        Some(n) if n.len() != layout.uv.len() => Err(Error::Shape("normal count differs from uv count".into())),
        Some(n) => Ok(n.iter().map(|&v| quantize(normal_color(v))).collect()),
        None => Ok(vec![PLAIN_COLOR; layout.uv.len()]),
    }
}

fn edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    e.sort_unstable();
    e.dedup();
    e
}

fn check(layout: &Layout) -> Result<()> {
    let n = layout.uv.len();
    if layout.seams.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("seam index out of range".into()));
    }
    if layout.faces.is_some_and(|f| f.iter().flatten().any(|&i| i >= n)) {
        return Err(Error::InvalidArgument("face index out of range".into()));
    }
    Ok(())
}

fn draw_line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], color: [u8; 3]) {
    let (mut x0, mut y0) = (a[0].round() as i64, a[1].round() as i64);
    let (x1, y1) = (b[0].round() as i64, b[1].round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

fn mark(img: &mut RgbImage, p: [f64; 2], r: i64, color: [u8; 3]) {
    let (cx, cy) = (p[0].round() as i64, p[1].round() as i64);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            put(img, x, y, color);
        }
    }
}

/// Rasterizes the layout.
pub fn render_image(layout: &Layout, opts: &RenderOptions) -> Result<RgbImage> {
    check(layout)?;
    let map = PixelMap::new(layout.uv, opts)?;
    let colors = point_colors(layout)?;
    let mut img = RgbImage::from_pixel(opts.size, opts.size, Rgb(BACKGROUND));
    let px: Vec<[f64; 2]> = layout.uv.iter().map(|&p| map.to_pixel(p)).collect();
    if let Some(f) = layout.faces {
        for (a, b) in edges(f) {
            draw_line(&mut img, px[a], px[b], EDGE_COLOR);
        }
    }
    let r = opts.point_radius as i64;
    for (p, c) in px.iter().zip(&colors) {
        mark(&mut img, *p, r, *c);
    }
    for &i in layout.seams {
        mark(&mut img, px[i], r + 1, SEAM_COLOR);
    }
    Ok(img)
}

/// Vector version of [`render_image`].
pub fn render_svg(layout: &Layout, opts: &RenderOptions) -> Result<String> {
    check(layout)?;
    let map = PixelMap::new(layout.uv, opts)?;
    let colors = point_colors(layout)?;
    let px: Vec<[f64; 2]> = layout.uv.iter().map(|&p| map.to_pixel(p)).collect();
    let s = opts.size;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#);
    let _ = writeln!(out, r#"<rect width="{s}" height="{s}" fill="{}"/>"#, hex(BACKGROUND));
    if let Some(f) = layout.faces {
        let _ = writeln!(out, r#"<g stroke="{}" stroke-width="0.5">"#, hex(EDGE_COLOR));
        for (a, b) in edges(f) {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                px[a][0], px[a][1], px[b][0], px[b][1]
            );
        }
        out.push_str("</g>\n");
    }
    let r = opts.point_radius.max(1) as f64;
    for (p, c) in px.iter().zip(&colors) {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{}"/>"#, p[0], p[1], hex(*c));
    }
    for &i in layout.seams {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}"/>"#, px[i][0], px[i][1], r + 1.0, hex(SEAM_COLOR));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Writes a PNG or, for a `.svg` path, an SVG.
pub fn render_uv_layout(layout: &Layout, opts: &RenderOptions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if super::points::extension(path) == "svg" {
        fs::write(path, render_svg(layout, opts)?)?;
    } else {
        render_image(layout, opts)?.save_with_format(path, ImageFormat::Png)?;
    }
    Ok(())
}

/// Light when `⌊u/period⌋ + ⌊v/period⌋` is even, dark otherwise.
pub fn assign_checker_colors(uv: &[Vec2], period: f64) -> Result<Vec<[u8; 3]>> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("checker period {period}")));
    }
    Ok(uv
        .iter()
        .map(|p| {
            let cell = (p[0] / period).floor() + (p[1] / period).floor();
            if cell.rem_euclid(2.0) == 0.0 {
                CHECKER_LIGHT
            } else {
                CHECKER_DARK
            }
        })
        .collect())
}
