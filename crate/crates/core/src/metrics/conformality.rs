//! Angle distortion between 3D triangles and their UV images.

use crate::error::{Error, Result};
use crate::geometry::{is_degenerate, triangle_angles, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conformality {
    /// Mean `|angle_3d − angle_uv|` over the corners of evaluated faces, radians.
    pub mean: f64,
    pub evaluated: usize,
    /// Faces degenerate in 3D or in UV.
    pub excluded: usize,
}

fn uv_of(mesh: &TriMesh) -> Result<&[[f64; 2]]> {
    mesh.uv().ok_or_else(|| Error::InvalidArgument("mesh has no uv coordinates".into()))
}

pub fn conformality(mesh: &TriMesh) -> Result<Conformality> {
    let uv = uv_of(mesh)?;
    let v = mesh.vertices();
    let mut sum = 0.0;
    let mut evaluated = 0;
    for f in mesh.faces() {
        let (a3, b3, c3) = (v[f[0]], v[f[1]], v[f[2]]);
        let (a2, b2, c2) = (uv[f[0]], uv[f[1]], uv[f[2]]);
        if is_degenerate(a3, b3, c3) || is_degenerate(a2, b2, c2) {
            continue;
        }
        let x = triangle_angles(a3, b3, c3)?;
        let y = triangle_angles(a2, b2, c2)?;
        sum += (0..3).map(|k| (x[k] - y[k]).abs()).sum::<f64>();
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::InvalidArgument("every face is degenerate".into()));
    }
    Ok(Conformality { mean: sum / (3 * evaluated) as f64, evaluated, excluded: mesh.faces().len() - evaluated })
}

/// Mean absolute corner-angle difference in radians.
pub fn conformality_metric(mesh: &TriMesh) -> Result<f64> {
    Ok(conformality(mesh)?.mean)
}
