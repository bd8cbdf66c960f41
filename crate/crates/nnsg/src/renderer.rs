//! Deterministic perspective rasterizer.
//!
//! Renders a reconstructed face mesh in the input pose and produces
//! the color, depth, and coverage planes the guidance extractor works
//! from. Rendering is flat (unlit) unless spherical-harmonics lighting
//! coefficients are supplied.
//!
//! Determinism: pixels are sampled at centers `(x + 0.5, y + 0.5)`
//! with a top-left fill rule, triangles are processed in submission
//! order, and parallel workers own fixed horizontal bands so every
//! pixel has exactly one writer. Two renders of the same scene are
//! byte-identical regardless of worker count.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{RigidTransform, Vec3};
use crate::morphable::Mesh;
use crate::parallel;
use crate::pixmap::{Mask, RgbMap};

/// Rows per parallel raster band. Fixed so the partition (and hence
/// the output) never depends on the worker count.
const BAND_ROWS: usize = 16;

/// Pinhole camera over a pixel grid with y pointing down.
///
/// View space: the camera sits at the origin looking along +z, +x maps
/// rightward and +y maps down the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal_px: f64,
    /// Principal point in pixels; defaults to the image center.
    pub principal: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize, focal_px: f64, near: f64, far: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::OutOfRange {
                what: "image size".into(),
                min: 1.0,
                max: f64::INFINITY,
                value: width.min(height) as f64,
            });
        }
        if !(focal_px > 0.0 && focal_px.is_finite()) {
            return Err(Error::OutOfRange {
                what: "focal_px".into(),
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
                value: focal_px,
            });
        }
        if !(near > 0.0 && near < far && far.is_finite()) {
            return Err(Error::OutOfRange {
                what: "near/far planes".into(),
                min: 0.0,
                max: f64::INFINITY,
                value: near,
            });
        }
        Ok(Camera {
            focal_px,
            principal: (width as f64 / 2.0, height as f64 / 2.0),
            width,
            height,
            near,
            far,
        })
    }

    pub fn with_principal(mut self, cx: f64, cy: f64) -> Self {
        self.principal = (cx, cy);
        self
    }

    fn project(&self, v: Vec3) -> (f64, f64) {
        (
            self.focal_px * (v.x / v.z) + self.principal.0,
            self.focal_px * (v.y / v.z) + self.principal.1,
        )
    }
}

/// Focal length in pixels for a square image of the given side,
/// following the 1015-at-224 convention of face-reconstruction
/// pipelines.
pub fn default_focal_for(size: usize) -> f64 {
    1015.0 * size as f64 / 224.0
}

/// A vertex after view transform and projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedVertex {
    pub x_px: f64,
    pub y_px: f64,
    pub z_view: f64,
    /// Set when the vertex is at or behind the near plane; its pixel
    /// coordinates are not meaningful.
    pub behind: bool,
}

/// Applies the rigid pose and pinhole projection to every vertex.
/// Vertices with `z_view <= near` are flagged rather than rejected.
pub fn project_vertices(
    positions: &[f64],
    pose: &RigidTransform,
    camera: &Camera,
) -> Vec<ProjectedVertex> {
    positions
        .chunks_exact(3)
        .map(|p| {
            let v = pose.apply(Vec3::new(p[0], p[1], p[2]));
            let behind = v.z <= camera.near;
            let (x_px, y_px) = if behind { (0.0, 0.0) } else { camera.project(v) };
            ProjectedVertex {
                x_px,
                y_px,
                z_view: v.z,
                behind,
            }
        })
        .collect()
}

/// Color, view-space depth, and coverage planes of one render.
///
/// Depth holds view-space z where covered and `+inf` elsewhere, so
/// depth finiteness and `coverage` agree by construction; finite
/// depths lie within `[near, far]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFace {
    width: usize,
    height: usize,
    color: Vec<f64>,
    depth: Vec<f64>,
    coverage: Vec<bool>,
}

impl RenderedFace {
    #[cfg(test)]
    pub(crate) fn from_planes(
        width: usize,
        height: usize,
        color: Vec<f64>,
        depth: Vec<f64>,
        coverage: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(color.len(), width * height * 3);
        debug_assert_eq!(depth.len(), width * height);
        debug_assert_eq!(coverage.len(), width * height);
        debug_assert!(depth
            .iter()
            .zip(&coverage)
            .all(|(d, c)| d.is_finite() == *c));
        RenderedFace {
            width,
            height,
            color,
            depth,
            coverage,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB in `[0, 1]`, three samples per pixel.
    pub fn color(&self) -> &[f64] {
        &self.color
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        self.coverage[y * self.width + x]
    }

    pub fn coverage_mask(&self) -> Mask {
        Mask::from_bits(self.width, self.height, self.coverage.clone())
            .expect("coverage plane matches dimensions")
    }

    pub fn color_image(&self) -> RgbMap {
        RgbMap::from_samples(self.width, self.height, self.color.clone())
            .expect("color plane matches dimensions")
    }

    /// Rec. 601 luma of the color plane; uncovered pixels are black.
    pub fn luma(&self) -> crate::pixmap::GrayMap {
        self.color_image().to_luma()
    }
}

#[derive(Clone, Copy)]
struct Slot {
    depth: f64,
    color: [f64; 3],
}

#[derive(Clone, Copy)]
struct ClipVertex {
    pos: Vec3,
    color: [f64; 3],
}

fn lerp_vertex(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        pos: a.pos + (b.pos - a.pos) * t,
        color: [
            a.color[0] + (b.color[0] - a.color[0]) * t,
            a.color[1] + (b.color[1] - a.color[1]) * t,
            a.color[2] + (b.color[2] - a.color[2]) * t,
        ],
    }
}

/// Sutherland-Hodgman clip of a triangle against `z >= near`.
/// Returns 0, 3, or 4 vertices.
fn clip_near(tri: &[ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = &tri[i];
        let next = &tri[(i + 1) % 3];
        let cur_in = cur.pos.z >= near;
        let next_in = next.pos.z >= near;
        if cur_in {
            out.push(*cur);
        }
        if cur_in != next_in {
            let t = (near - cur.pos.z) / (next.pos.z - cur.pos.z);
            out.push(lerp_vertex(cur, next, t));
        }
    }
    out
}

struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
    color: [f64; 3],
}

struct PreparedTriangle {
    v: [ScreenVertex; 3],
    inv_area2: f64,
    min_x: usize,
    max_x: usize,
    min_y: usize,
    max_y: usize,
}

fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top-left fill rule for a positively oriented triangle: boundary
/// pixels belong to horizontal edges pointing +x and to edges pointing
/// up the image (dy < 0). Opposite directions are complementary, so
/// adjacent triangles are seam-free.
fn edge_is_top_left(dx: f64, dy: f64) -> bool {
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn prepare_triangle(verts: [ClipVertex; 3], camera: &Camera) -> Option<PreparedTriangle> {
    // Everything beyond the far plane cannot contribute: interpolated
    // depth never leaves the vertex depth range.
    if verts.iter().all(|v| v.pos.z > camera.far) {
        return None;
    }
    let mut sv: Vec<ScreenVertex> = verts
        .iter()
        .map(|v| {
            let (x, y) = camera.project(v.pos);
            ScreenVertex {
                x,
                y,
                inv_z: 1.0 / v.pos.z,
                color: v.color,
            }
        })
        .collect();
    let area2 = edge(sv[0].x, sv[0].y, sv[1].x, sv[1].y, sv[2].x, sv[2].y);
    if area2 == 0.0 || !area2.is_finite() {
        return None;
    }
    if area2 < 0.0 {
        sv.swap(1, 2);
    }
    let inv_area2 = 1.0 / area2.abs();

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &sv {
        min_x = min_x.min(v.x);
        max_x = max_x.max(v.x);
        min_y = min_y.min(v.y);
        max_y = max_y.max(v.y);
    }
    // Pixel centers sit at integer + 0.5.
    let lo_x = (min_x - 0.5).ceil().max(0.0) as isize;
    let hi_x = ((max_x - 0.5).floor()).min(camera.width as f64 - 1.0) as isize;
    let lo_y = (min_y - 0.5).ceil().max(0.0) as isize;
    let hi_y = ((max_y - 0.5).floor()).min(camera.height as f64 - 1.0) as isize;
    if lo_x > hi_x || lo_y > hi_y || hi_x < 0 || hi_y < 0 {
        return None;
    }
    let mut it = sv.into_iter();
    let v = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    Some(PreparedTriangle {
        v,
        inv_area2,
        min_x: lo_x.max(0) as usize,
        max_x: hi_x as usize,
        min_y: lo_y.max(0) as usize,
        max_y: hi_y as usize,
    })
}

fn raster_rows(tri: &PreparedTriangle, camera: &Camera, y0: usize, y1: usize, band: &mut [Slot]) {
    let [a, b, c] = &tri.v;
    let edges = [(b, c), (c, a), (a, b)];
    for y in y0.max(tri.min_y)..=(y1 - 1).min(tri.max_y) {
        let py = y as f64 + 0.5;
        let row = &mut band[(y - y0) * camera.width..(y - y0 + 1) * camera.width];
        for (x, slot) in row
            .iter_mut()
            .enumerate()
            .take(tri.max_x + 1)
            .skip(tri.min_x)
        {
            let px = x as f64 + 0.5;
            let mut inside = true;
            let mut w = [0.0f64; 3];
            for (i, (from, to)) in edges.iter().enumerate() {
                let e = edge(from.x, from.y, to.x, to.y, px, py);
                if e < 0.0 || (e == 0.0 && !edge_is_top_left(to.x - from.x, to.y - from.y)) {
                    inside = false;
                    break;
                }
                w[i] = e;
            }
            if !inside {
                continue;
            }
            let l0 = w[0] * tri.inv_area2;
            let l1 = w[1] * tri.inv_area2;
            let l2 = w[2] * tri.inv_area2;
            let inv_z = l0 * a.inv_z + l1 * b.inv_z + l2 * c.inv_z;
            let z = 1.0 / inv_z;
            if z < camera.near || z > camera.far {
                continue;
            }
            if z < slot.depth {
                slot.depth = z;
                for ch in 0..3 {
                    slot.color[ch] = l0 * a.color[ch] + l1 * b.color[ch] + l2 * c.color[ch];
                }
            }
        }
    }
}

/// Z-buffered render of the mesh under the given pose.
///
/// Each covered pixel keeps the smallest view-space depth among the
/// triangles covering its center (first writer wins exact ties), with
/// screen-space barycentric color. Triangles fully behind the near
/// plane are culled; straddling ones are clipped. When `lighting` is
/// given, per-vertex colors are scaled by the spherical-harmonics
/// irradiance of the posed vertex normals first.
pub fn rasterize(
    mesh: &Mesh,
    pose: &RigidTransform,
    camera: &Camera,
    lighting: Option<&[f64; 9]>,
) -> Result<RenderedFace> {
    let view_positions: Vec<Vec3> = mesh
        .positions()
        .chunks_exact(3)
        .map(|p| pose.apply(Vec3::new(p[0], p[1], p[2])))
        .collect();

    let colors: Vec<f64> = match lighting {
        Some(gamma) => {
            let mut flat = Vec::with_capacity(view_positions.len() * 3);
            for v in &view_positions {
                flat.extend_from_slice(&[v.x, v.y, v.z]);
            }
            let normals = vertex_normals(&flat, mesh.triangles());
            shade_sh(&normals, mesh.colors(), gamma)?
        }
        None => mesh.colors().to_vec(),
    };

    let prepared: Vec<PreparedTriangle> = mesh
        .triangles()
        .iter()
        .flat_map(|t| {
            let cv = |i: u32| {
                let i = i as usize;
                ClipVertex {
                    pos: view_positions[i],
                    color: [colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]],
                }
            };
            let poly = clip_near(&[cv(t[0]), cv(t[1]), cv(t[2])], camera.near);
            let mut tris = Vec::new();
            for k in 2..poly.len() {
                tris.push([poly[0], poly[k - 1], poly[k]]);
            }
            tris
        })
        .filter_map(|t| prepare_triangle(t, camera))
        .collect();

    let mut slots = vec![
        Slot {
            depth: f64::INFINITY,
            color: [0.0; 3],
        };
        camera.width * camera.height
    ];
    let band_len = BAND_ROWS * camera.width;
    parallel::for_each_chunk_mut(&mut slots, band_len, |offset, band| {
        let y0 = offset / camera.width;
        let y1 = y0 + band.len() / camera.width;
        for tri in &prepared {
            if tri.max_y >= y0 && tri.min_y < y1 {
                raster_rows(tri, camera, y0, y1, band);
            }
        }
    });

    let mut color = Vec::with_capacity(slots.len() * 3);
    let mut depth = Vec::with_capacity(slots.len());
    let mut coverage = Vec::with_capacity(slots.len());
    for s in &slots {
        let covered = s.depth.is_finite();
        coverage.push(covered);
        depth.push(if covered { s.depth } else { f64::INFINITY });
        if covered {
            color.extend_from_slice(&[
                s.color[0].clamp(0.0, 1.0),
                s.color[1].clamp(0.0, 1.0),
                s.color[2].clamp(0.0, 1.0),
            ]);
        } else {
            color.extend_from_slice(&[0.0; 3]);
        }
    }

    Ok(RenderedFace {
        width: camera.width,
        height: camera.height,
        color,
        depth,
        coverage,
    })
}

/// Area-weighted unit vertex normals from flat positions; vertices
/// with no (or cancelling) incident area fall back to +z.
pub(crate) fn vertex_normals(positions: &[f64], triangles: &[[u32; 3]]) -> Vec<f64> {
    let n = positions.len() / 3;
    let at = |i: u32| {
        let i = i as usize;
        Vec3::new(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2])
    };
    let mut acc = vec![Vec3::default(); n];
    for t in triangles {
        let (p0, p1, p2) = (at(t[0]), at(t[1]), at(t[2]));
        // Cross product length is twice the area, giving area weights.
        let face = (p1 - p0).cross(p2 - p0);
        for &i in t {
            let a = &mut acc[i as usize];
            *a = *a + face;
        }
    }
    let mut out = Vec::with_capacity(positions.len());
    for a in acc {
        match a.normalized() {
            Some(u) => out.extend_from_slice(&[u.x, u.y, u.z]),
            None => out.extend_from_slice(&[0.0, 0.0, 1.0]),
        }
    }
    out
}

/// Area-weighted per-vertex normals of a mesh.
pub fn compute_normals(mesh: &Mesh) -> Vec<f64> {
    vertex_normals(mesh.positions(), mesh.triangles())
}

const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2A: f64 = 1.092_548_430_592_079_2;
const SH_C2B: f64 = 0.315_391_565_252_520_05;
const SH_C2C: f64 = 0.546_274_215_296_039_6;

/// Irradiance of a unit direction under 9 real SH coefficients,
/// ordered (l=0), (l=1: y, z, x), (l=2: xy, yz, 3z²-1, xz, x²-y²).
fn sh_irradiance(n: Vec3, gamma: &[f64; 9]) -> f64 {
    gamma[0] * SH_C0
        + gamma[1] * SH_C1 * n.y
        + gamma[2] * SH_C1 * n.z
        + gamma[3] * SH_C1 * n.x
        + gamma[4] * SH_C2A * n.x * n.y
        + gamma[5] * SH_C2A * n.y * n.z
        + gamma[6] * SH_C2B * (3.0 * n.z * n.z - 1.0)
        + gamma[7] * SH_C2A * n.x * n.z
        + gamma[8] * SH_C2C * (n.x * n.x - n.y * n.y)
}

/// Scales per-vertex colors by the spherical-harmonics irradiance of
/// their (unit) normals, clamping to `[0, 1]`.
pub fn shade_sh(normals: &[f64], colors: &[f64], gamma: &[f64; 9]) -> Result<Vec<f64>> {
    if normals.len() != colors.len() {
        return Err(Error::DimensionMismatch {
            what: "shading colors".into(),
            expected: normals.len(),
            actual: colors.len(),
        });
    }
    let mut out = Vec::with_capacity(colors.len());
    for (i, n) in normals.chunks_exact(3).enumerate() {
        let v = Vec3::new(n[0], n[1], n[2]);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NonUnitNormal { index: i, norm });
        }
        let irr = sh_irradiance(v, gamma);
        for ch in 0..3 {
            out.push((colors[3 * i + ch] * irr).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Coverage dilated by `dilation_px` in the Chebyshev metric (a square
/// structuring element, applied as separable horizontal and vertical
/// passes). The result always contains the input coverage.
pub fn silhouette_mask(face: &RenderedFace, dilation_px: usize) -> Mask {
    dilate_mask(&face.coverage_mask(), dilation_px)
}

pub(crate) fn dilate_mask(mask: &Mask, dilation_px: usize) -> Mask {
    if dilation_px == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let r = dilation_px;
    let mut horizontal = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let any = (lo..=hi).any(|xx| mask.get(xx, y));
            horizontal.set(x, y, any);
        }
    }
    let mut out = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            let any = (lo..=hi).any(|yy| horizontal.get(x, yy));
            out.set(x, y, any);
        }
    }
    out
}

/// Writes a mesh as Wavefront OBJ text for debugging.
pub fn export_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh.to_obj()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use approx::assert_abs_diff_eq;

    fn test_camera(size: usize) -> Camera {
        Camera::new(size, size, size as f64, 0.1, 100.0).unwrap()
    }

    fn identity_pose() -> RigidTransform {
        RigidTransform::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 0.0))
    }

    /// Single triangle at constant depth `z`, spanning the view center.
    fn flat_triangle(z: f64, half: f64) -> Mesh {
        let positions = vec![
            -half, -half, z, //
            half, -half, z, //
            0.0, half, z,
        ];
        let colors = vec![1.0; 9];
        Mesh::new(positions, colors, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn optical_axis_vertex_projects_to_principal_point() {
        let camera = test_camera(64);
        let projected = project_vertices(&[0.0, 0.0, 0.2], &identity_pose(), &camera);
        assert_eq!(projected[0].x_px, camera.principal.0);
        assert_eq!(projected[0].y_px, camera.principal.1);
        assert!(!projected[0].behind);
    }

    #[test]
    fn pinhole_offset_is_one_pixel() {
        let f = 7.5;
        let camera = Camera::new(64, 64, f, 0.1, 100.0).unwrap();
        let projected = project_vertices(&[1.0, 0.0, f], &identity_pose(), &camera);
        assert_abs_diff_eq!(projected[0].x_px, camera.principal.0 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vertex_at_origin_is_flagged_behind() {
        let camera = test_camera(64);
        let projected = project_vertices(&[0.0, 0.0, 0.0], &identity_pose(), &camera);
        assert!(projected[0].behind);
    }

    #[test]
    fn constant_depth_triangle_renders_constant_depth() {
        let camera = test_camera(64);
        let d = 2.5;
        let face = rasterize(&flat_triangle(d, 1.0), &identity_pose(), &camera, None).unwrap();
        let mut covered = 0;
        for y in 0..64 {
            for x in 0..64 {
                if face.is_covered(x, y) {
                    covered += 1;
                    let z = face.depth_at(x, y);
                    assert!((z - d).abs() / d <= 1e-4, "depth {z} at ({x},{y})");
                }
            }
        }
        assert!(covered > 100, "triangle should cover the center");
    }

    #[test]
    fn nearer_triangle_wins_the_z_buffer() {
        let camera = test_camera(32);
        let near_tri = flat_triangle(1.0, 0.4);
        let far_tri = flat_triangle(2.0, 0.8);
        let positions: Vec<f64> = far_tri
            .positions()
            .iter()
            .chain(near_tri.positions())
            .copied()
            .collect();
        let mut colors = vec![0.0; 9];
        colors.extend(vec![1.0; 9]);
        // Far triangle is black, near triangle white.
        let mesh = Mesh::new(positions, colors, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let face = rasterize(&mesh, &identity_pose(), &camera, None).unwrap();

        let near_only = rasterize(&near_tri, &identity_pose(), &camera, None).unwrap();
        let mut checked = 0;
        for i in 0..face.coverage().len() {
            if near_only.coverage()[i] {
                assert_eq!(face.depth()[i], near_only.depth()[i]);
                // White near triangle, not the black far one.
                assert!((face.color()[3 * i] - 1.0).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn empty_mesh_renders_empty() {
        let camera = test_camera(16);
        let mesh = Mesh::new(vec![], vec![], vec![]).unwrap();
        let face = rasterize(&mesh, &identity_pose(), &camera, None).unwrap();
        assert!(face.coverage().iter().all(|c| !c));
        assert!(face.depth().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn behind_camera_triangles_are_culled() {
        let camera = test_camera(32);
        let face = rasterize(&flat_triangle(-2.0, 1.0), &identity_pose(), &camera, None).unwrap();
        assert_eq!(face.coverage_mask().count_set(), 0);
    }

    #[test]
    fn beyond_far_triangles_are_culled() {
        let camera = test_camera(32);
        let face =
            rasterize(&flat_triangle(500.0, 100.0), &identity_pose(), &camera, None).unwrap();
        assert_eq!(face.coverage_mask().count_set(), 0);
    }

    #[test]
    fn straddling_triangle_is_clipped_not_dropped() {
        let camera = test_camera(64);
        // One vertex behind the camera, two in front.
        let positions = vec![
            0.0, 0.0, -1.0, //
            -0.5, 0.5, 2.0, //
            0.5, 0.5, 2.0,
        ];
        let mesh = Mesh::new(positions, vec![0.5; 9], vec![[0, 1, 2]]).unwrap();
        let face = rasterize(&mesh, &identity_pose(), &camera, None).unwrap();
        assert!(face.coverage_mask().count_set() > 0);
        for (i, d) in face.depth().iter().enumerate() {
            if face.coverage()[i] {
                assert!(*d >= camera.near && *d <= camera.far);
            }
        }
    }

    #[test]
    fn adjacent_triangles_share_seam_pixels_exactly_once() {
        let camera = test_camera(64);
        // A quad split along the diagonal; the diagonal passes through
        // pixel centers, exercising the tie rule.
        let z = 2.0;
        let quad = [
            Vec3::new(-0.5, -0.5, z),
            Vec3::new(0.5, -0.5, z),
            Vec3::new(0.5, 0.5, z),
            Vec3::new(-0.5, 0.5, z),
        ];
        let flat: Vec<f64> = quad.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let t1 = Mesh::new(flat.clone(), vec![1.0; 12], vec![[0, 1, 2]]).unwrap();
        let t2 = Mesh::new(flat.clone(), vec![1.0; 12], vec![[0, 2, 3]]).unwrap();
        let both = Mesh::new(flat, vec![1.0; 12], vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let f1 = rasterize(&t1, &identity_pose(), &camera, None).unwrap();
        let f2 = rasterize(&t2, &identity_pose(), &camera, None).unwrap();
        let fb = rasterize(&both, &identity_pose(), &camera, None).unwrap();
        let mut overlap = 0;
        let mut union = 0;
        for i in 0..f1.coverage().len() {
            if f1.coverage()[i] && f2.coverage()[i] {
                overlap += 1;
            }
            if f1.coverage()[i] || f2.coverage()[i] {
                union += 1;
            }
        }
        assert_eq!(overlap, 0, "seam pixels must belong to exactly one triangle");
        assert_eq!(union, fb.coverage_mask().count_set());
    }

    #[test]
    fn render_is_deterministic_across_repeats() {
        let basis = crate::synth::synthetic_basis(17, 12);
        let mesh = basis
            .reconstruct_mesh(&crate::morphable::ParamVector::zeros())
            .unwrap();
        let camera = Camera::new(96, 96, default_focal_for(96), 0.1, 100.0).unwrap();
        let pose = RigidTransform::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 14.0));
        let a = rasterize(&mesh, &pose, &camera, None).unwrap();
        let b = rasterize(&mesh, &pose, &camera, None).unwrap();
        assert_bit_identical(&a, &b);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn render_is_identical_across_thread_counts() {
        let basis = crate::synth::synthetic_basis(18, 12);
        let mesh = basis
            .reconstruct_mesh(&crate::morphable::ParamVector::zeros())
            .unwrap();
        let camera = Camera::new(96, 96, default_focal_for(96), 0.1, 100.0).unwrap();
        let pose = RigidTransform::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 14.0));
        let baseline = rasterize(&mesh, &pose, &camera, None).unwrap();
        for threads in [1, 2, 5] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let got = pool.install(|| rasterize(&mesh, &pose, &camera, None).unwrap());
            assert_bit_identical(&baseline, &got);
        }
    }

    fn assert_bit_identical(a: &RenderedFace, b: &RenderedFace) {
        assert_eq!(a.coverage(), b.coverage());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.depth()), bits(b.depth()));
        assert_eq!(bits(a.color()), bits(b.color()));
    }

    #[test]
    fn rigid_consistency_with_exact_sign_flip() {
        // diag(1,-1,-1) is a proper rotation whose application is
        // exact in floating point, so the composed render must be
        // bit-identical.
        let basis = crate::synth::synthetic_basis(19, 10);
        let mesh = basis
            .reconstruct_mesh(&crate::morphable::ParamVector::zeros())
            .unwrap();
        let camera = Camera::new(80, 80, default_focal_for(80), 0.1, 100.0).unwrap();
        let pose = crate::morphable::pose_to_transform(&[0.2, -0.3, 0.1, 0.1, -0.1, 14.0]);

        let r0 = Mat3 {
            m: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        };
        let moved: Vec<f64> = mesh
            .positions()
            .chunks_exact(3)
            .flat_map(|p| {
                let v = r0 * Vec3::new(p[0], p[1], p[2]);
                [v.x, v.y, v.z]
            })
            .collect();
        let moved_mesh =
            Mesh::new(moved, mesh.colors().to_vec(), mesh.triangles().to_vec()).unwrap();
        let composed = RigidTransform::new(pose.rotation * r0.transpose(), pose.translation);

        let a = rasterize(&mesh, &pose, &camera, None).unwrap();
        let b = rasterize(&moved_mesh, &composed, &camera, None).unwrap();
        assert_bit_identical(&a, &b);
    }

    #[test]
    fn planar_ccw_mesh_has_plus_z_normals() {
        // CCW as seen from +z.
        let positions = vec![
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            1.0, 1.0, 0.0,
        ];
        let mesh = Mesh::new(positions, vec![0.5; 12], vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let normals = compute_normals(&mesh);
        for n in normals.chunks_exact(3) {
            assert_abs_diff_eq!(n[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(n[1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(n[2], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_corner_normal_is_normalized_face_sum() {
        // Three unit faces meeting at the origin corner, each split so
        // the corner touches both triangles with equal total area.
        // Outward normals are -z, -y, -x.
        let positions = vec![
            0.0, 0.0, 0.0, // 0 corner
            1.0, 0.0, 0.0, // 1
            1.0, 1.0, 0.0, // 2
            0.0, 1.0, 0.0, // 3
            1.0, 0.0, 1.0, // 4
            0.0, 0.0, 1.0, // 5
            0.0, 1.0, 1.0, // 6
        ];
        let triangles = vec![
            // z = 0 face, normal -z (clockwise from +z)
            [0, 2, 1],
            [0, 3, 2],
            // y = 0 face, normal -y
            [0, 1, 4],
            [0, 4, 5],
            // x = 0 face, normal -x
            [0, 5, 6],
            [0, 6, 3],
        ];
        let mesh = Mesh::new(positions, vec![0.5; 21], triangles).unwrap();
        let normals = compute_normals(&mesh);
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(normals[0], -inv_sqrt3, epsilon = 1e-12);
        assert_abs_diff_eq!(normals[1], -inv_sqrt3, epsilon = 1e-12);
        assert_abs_diff_eq!(normals[2], -inv_sqrt3, epsilon = 1e-12);
    }

    #[test]
    fn isolated_vertex_normal_falls_back_to_plus_z() {
        let positions = vec![
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            5.0, 5.0, 5.0, // isolated
        ];
        let mesh = Mesh::new(positions, vec![0.5; 12], vec![[0, 1, 2]]).unwrap();
        let normals = compute_normals(&mesh);
        assert_eq!(&normals[9..12], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dc_only_lighting_preserves_colors() {
        let normals = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let colors = vec![0.25, 0.5, 0.75, 0.1, 0.2, 0.3];
        let mut gamma = [0.0; 9];
        gamma[0] = 1.0 / SH_C0;
        let shaded = shade_sh(&normals, &colors, &gamma).unwrap();
        for (s, c) in shaded.iter().zip(&colors) {
            assert_abs_diff_eq!(*s, *c, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_lighting_blacks_everything() {
        let normals = vec![0.0, 0.0, 1.0];
        let colors = vec![0.9, 0.8, 0.7];
        let shaded = shade_sh(&normals, &colors, &[0.0; 9]).unwrap();
        assert_eq!(shaded, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn z_band_brightness_is_monotone_in_normal_z() {
        let mut gamma = [0.0; 9];
        gamma[0] = 1.0 / SH_C0; // keep irradiance positive
        gamma[2] = 0.8;
        let mut last = -1.0;
        for k in 0..=10 {
            let theta = std::f64::consts::PI * (1.0 - k as f64 / 10.0);
            let n = [theta.sin(), 0.0, theta.cos()];
            let shaded = shade_sh(&n, &[0.5, 0.5, 0.5], &gamma).unwrap();
            assert!(
                shaded[0] >= last - 1e-12,
                "brightness decreased as normal z grew"
            );
            last = shaded[0];
        }
    }

    #[test]
    fn shade_rejects_non_unit_normals() {
        let err = shade_sh(&[0.0, 0.0, 2.0], &[0.5, 0.5, 0.5], &[0.0; 9]).unwrap_err();
        assert!(matches!(err, Error::NonUnitNormal { index: 0, .. }));
    }

    #[test]
    fn zero_dilation_mask_equals_coverage() {
        let camera = test_camera(32);
        let face = rasterize(&flat_triangle(2.0, 0.5), &identity_pose(), &camera, None).unwrap();
        let mask = silhouette_mask(&face, 0);
        assert_eq!(mask, face.coverage_mask());
    }

    #[test]
    fn single_pixel_dilation_is_a_3x3_block() {
        let mut mask = Mask::new(7, 7);
        mask.set(3, 3, true);
        let out = dilate_mask(&mask, 1);
        assert_eq!(out.count_set(), 9);
        for y in 2..=4 {
            for x in 2..=4 {
                assert!(out.get(x, y));
            }
        }
    }

    #[test]
    fn dilation_is_monotone_and_composes() {
        let camera = test_camera(32);
        let face = rasterize(&flat_triangle(2.0, 0.5), &identity_pose(), &camera, None).unwrap();
        let small = silhouette_mask(&face, 2);
        let twice = dilate_mask(&small, 3);
        let large = silhouette_mask(&face, 2 + 3);
        assert!(twice.contains(&small));
        assert!(large.contains(&small));
        // Chebyshev dilation composes exactly: r then s equals r + s.
        assert_eq!(twice, large);
        assert!(large.contains(&face.coverage_mask()));
    }

    #[test]
    fn obj_export_is_one_based() {
        let mesh = flat_triangle(1.0, 1.0);
        let obj = mesh.to_obj();
        assert!(obj.contains("f 1 2 3"));
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 3);
    }
}
