//! Dynamic-object masks from posed triangle meshes.
//!
//! Vertices are moved into the camera frame, projected with a pinhole model,
//! rasterized at pixel centers and finally dilated with a disc.

use nalgebra::{Matrix3, Point2, Vector3};

use crate::error::{Error, Result};
use crate::par;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) outside {}×{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Unit-depth ray through pixel coordinate `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rotation plus translation, `x' = R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub const ORTHONORMAL_TOL: f64 = 1e-6;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        validate_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Inverse of a rigid transform, using `Rᵀ` for `R⁻¹`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Checks `‖RᵀR − I‖_F ≤ 1e-6` and `|det R − 1| ≤ 1e-6`.
pub fn validate_rotation(r: &Matrix3<f64>) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("rotation has non-finite entries".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > RigidTransform::ORTHONORMAL_TOL {
        return Err(Error::Invalid(format!(
            "rotation is not orthonormal (‖RᵀR − I‖_F = {ortho:.3e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > RigidTransform::ORTHONORMAL_TOL {
        return Err(Error::Invalid(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Every face index must address a vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, face) in self.faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i >= n) {
                return Err(Error::Invalid(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }
        Ok(())
    }

    pub fn transformed(&self, xf: &RigidTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| xf.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Per-pixel presence mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "{} bits for a {height}×{width} mask",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub(crate) fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "mask {}×{} vs {}×{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a | *b)
                .collect(),
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a & *b)
                .collect(),
        })
    }
}

/// One projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    /// False when the point is at or behind the near plane.
    pub valid: bool,
}

/// Default near-plane distance in meters.
pub const Z_NEAR: f64 = 1e-4;

/// Pinhole projection of camera-frame points.
pub fn project_points(
    points: &[Vector3<f64>],
    k: &CameraIntrinsics,
    z_near: f64,
) -> Vec<Projection> {
    points
        .iter()
        .map(|p| {
            let z = p.z;
            if !(z > z_near) {
                return Projection {
                    u: f64::NAN,
                    v: f64::NAN,
                    depth: z,
                    valid: false,
                };
            }
            Projection {
                u: k.fx * p.x / z + k.cx,
                v: k.fy * p.y / z + k.cy,
                depth: z,
                valid: true,
            }
        })
        .collect()
}

/// A projected triangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle2 {
    pub vertices: [Point2<f64>; 3],
    pub valid: bool,
}

impl Triangle2 {
    pub fn new(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Self {
        Self {
            vertices: [
                Point2::new(a.0, a.1),
                Point2::new(b.0, b.1),
                Point2::new(c.0, c.1),
            ],
            valid: true,
        }
    }

    /// Twice the signed area.
    pub fn signed_area2(&self) -> f64 {
        let [a, b, c] = self.vertices;
        edge(a, b, c)
    }
}

#[inline]
fn edge(a: Point2<f64>, b: Point2<f64>, p: Point2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Builds per-face triangles from projected vertices. A face with any invalid
/// vertex is marked invalid.
pub fn project_faces(projected: &[Projection], faces: &[[usize; 3]]) -> Vec<Triangle2> {
    faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| projected[i]);
            Triangle2 {
                vertices: [a, b, c].map(|p| Point2::new(p.u, p.v)),
                valid: a.valid && b.valid && c.valid,
            }
        })
        .collect()
}

/// Sets every pixel whose center `(col + 0.5, row + 0.5)` lies inside or on
/// the boundary of a valid, non-degenerate triangle.
pub fn rasterize_mask(triangles: &[Triangle2], height: usize, width: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(height, width);
    if height == 0 || width == 0 {
        return mask;
    }
    for tri in triangles {
        if !tri.valid
            || tri
                .vertices
                .iter()
                .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            continue;
        }
        let area = tri.signed_area2();
        if area == 0.0 {
            continue;
        }
        // Orient counter-clockwise so all inside edge values are >= 0.
        let [a, b, c] = tri.vertices;
        let (a, b, c) = if area > 0.0 { (a, b, c) } else { (a, c, b) };

        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        // Pixel centers col + 0.5 within [min_x, max_x].
        let col0 = (min_x - 0.5).ceil().max(0.0);
        let col1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
        let row0 = (min_y - 0.5).ceil().max(0.0);
        let row1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if col0 > col1 || row0 > row1 {
            continue;
        }
        for row in row0 as usize..=row1 as usize {
            let py = row as f64 + 0.5;
            for col in col0 as usize..=col1 as usize {
                let p = Point2::new(col as f64 + 0.5, py);
                if edge(a, b, p) >= 0.0 && edge(b, c, p) >= 0.0 && edge(c, a, p) >= 0.0 {
                    mask.bits[row * width + col] = true;
                }
            }
        }
    }
    mask
}

/// Dilation with a disc of integer radius: a pixel is set iff a set pixel
/// lies within Euclidean distance `radius`. Radius 0 is the identity.
pub fn dilate_mask(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height, mask.width);
    let r = radius as i64;
    // Half-width of the disc at each row offset.
    let spans: Vec<i64> = (-r..=r)
        .map(|dy| {
            let rem = r * r - dy * dy;
            let mut s = (rem as f64).sqrt() as i64;
            while s * s > rem {
                s -= 1;
            }
            while (s + 1) * (s + 1) <= rem {
                s += 1;
            }
            s
        })
        .collect();
    let rows = par::map_range(h, |row| {
        let mut out = vec![false; w];
        for (k, &span) in spans.iter().enumerate() {
            let src = row as i64 + k as i64 - r;
            if src < 0 || src >= h as i64 {
                continue;
            }
            let src_bits = &mask.bits[src as usize * w..(src as usize + 1) * w];
            for (col, _) in src_bits.iter().enumerate().filter(|(_, &b)| b) {
                let lo = (col as i64 - span).max(0) as usize;
                let hi = (col as i64 + span).min(w as i64 - 1) as usize;
                out[lo..=hi].iter_mut().for_each(|b| *b = true);
            }
        }
        out
    });
    BinaryMask {
        height: h,
        width: w,
        bits: rows.into_iter().flatten().collect(),
    }
}

/// Transform, project, rasterize and dilate one posed mesh.
pub fn make_dynamic_mask(
    mesh: &TriangleMesh,
    world_to_camera: &RigidTransform,
    k: &CameraIntrinsics,
    dilation: u32,
) -> Result<BinaryMask> {
    mesh.validate()?;
    let cam: Vec<Vector3<f64>> = mesh
        .vertices
        .iter()
        .map(|v| world_to_camera.apply(v))
        .collect();
    let projected = project_points(&cam, k, Z_NEAR);
    let tris = project_faces(&projected, &mesh.faces);
    let mask = rasterize_mask(&tris, k.height, k.width);
    Ok(dilate_mask(&mask, dilation))
}

/// Masks for a sequence of posed meshes, one per frame.
pub fn make_dynamic_masks(
    frames: &[(TriangleMesh, RigidTransform)],
    k: &CameraIntrinsics,
    dilation: u32,
) -> Result<Vec<BinaryMask>> {
    par::map_range(frames.len(), |i| {
        make_dynamic_mask(&frames[i].0, &frames[i].1, k, dilation)
    })
    .into_iter()
    .collect()
}
