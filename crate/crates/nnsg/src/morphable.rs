//! Linear morphable face model: decoupled parameter vectors, PCA
//! basis, shape/texture reconstruction, and identity fusion.
//!
//! A face is described by 239 numbers split into five blocks: identity
//! `alpha` (80), expression `beta` (64), texture `delta` (80), pose
//! (3 Euler angles in radians plus 3 translation components), and 9
//! spherical-harmonics lighting coefficients. Shape and texture are
//! affine in the coefficients: mean plus basis-weighted offsets.

use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ColMatrix, Mat3, RigidTransform, Vec3};
use crate::parallel;

pub const ALPHA_DIM: usize = 80;
pub const BETA_DIM: usize = 64;
pub const DELTA_DIM: usize = 80;
pub const POSE_DIM: usize = 6;
pub const GAMMA_DIM: usize = 9;
/// Total length of the combined parameter vector.
pub const PARAM_DIM: usize = ALPHA_DIM + BETA_DIM + DELTA_DIM + POSE_DIM + GAMMA_DIM;

/// Magic prefix of the binary basis format; the trailing byte is the
/// format version.
pub const BASIS_MAGIC: &[u8; 8] = b"NNSGBAS1";

/// Row chunk length for parallel basis accumulation.
const RECON_CHUNK: usize = 4096;

fn check_dim(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what: what.into(),
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: what.into() });
    }
    Ok(())
}

/// The decoupled 239-dimensional face description.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    delta: Vec<f64>,
    pose: [f64; 6],
    gamma: [f64; 9],
}

impl ParamVector {
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        delta: Vec<f64>,
        pose: [f64; 6],
        gamma: [f64; 9],
    ) -> Result<Self> {
        check_dim("alpha", ALPHA_DIM, alpha.len())?;
        check_dim("beta", BETA_DIM, beta.len())?;
        check_dim("delta", DELTA_DIM, delta.len())?;
        check_finite("alpha", &alpha)?;
        check_finite("beta", &beta)?;
        check_finite("delta", &delta)?;
        check_finite("pose", &pose)?;
        check_finite("gamma", &gamma)?;
        Ok(ParamVector {
            alpha,
            beta,
            delta,
            pose,
            gamma,
        })
    }

    /// All-zero parameters: the mean face at the origin, unlit.
    pub fn zeros() -> Self {
        ParamVector {
            alpha: vec![0.0; ALPHA_DIM],
            beta: vec![0.0; BETA_DIM],
            delta: vec![0.0; DELTA_DIM],
            pose: [0.0; 6],
            gamma: [0.0; 9],
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn pose(&self) -> &[f64; 6] {
        &self.pose
    }

    pub fn gamma(&self) -> &[f64; 9] {
        &self.gamma
    }

    /// Copy with the identity block replaced (used after fusion).
    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        check_dim("alpha", ALPHA_DIM, alpha.len())?;
        check_finite("alpha", &alpha)?;
        Ok(ParamVector {
            alpha,
            beta: self.beta.clone(),
            delta: self.delta.clone(),
            pose: self.pose,
            gamma: self.gamma,
        })
    }

    /// Flat 239-value view in alpha/beta/delta/pose/gamma order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(PARAM_DIM);
        out.extend_from_slice(&self.alpha);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.delta);
        out.extend_from_slice(&self.pose);
        out.extend_from_slice(&self.gamma);
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        check_dim("combined parameter vector", PARAM_DIM, values.len())?;
        let (a, rest) = values.split_at(ALPHA_DIM);
        let (b, rest) = rest.split_at(BETA_DIM);
        let (d, rest) = rest.split_at(DELTA_DIM);
        let (p, g) = rest.split_at(POSE_DIM);
        ParamVector::new(
            a.to_vec(),
            b.to_vec(),
            d.to_vec(),
            p.try_into().unwrap(),
            g.try_into().unwrap(),
        )
    }
}

/// On-disk JSON layout of a single-face parameter file.
#[derive(Debug, Serialize, Deserialize)]
struct RawParamFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    delta: Vec<f64>,
    pose: Vec<f64>,
    gamma: Vec<f64>,
}

/// A parameter vector together with its optional source identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub id: Option<String>,
    pub params: ParamVector,
}

impl ParamFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawParamFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        check_dim("pose", POSE_DIM, raw.pose.len())?;
        check_dim("gamma", GAMMA_DIM, raw.gamma.len())?;
        let params = ParamVector::new(
            raw.alpha,
            raw.beta,
            raw.delta,
            raw.pose.as_slice().try_into().unwrap(),
            raw.gamma.as_slice().try_into().unwrap(),
        )?;
        Ok(ParamFile {
            id: raw.id,
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::ParamFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let raw = RawParamFile {
            id: self.id.clone(),
            alpha: self.params.alpha.clone(),
            beta: self.params.beta.clone(),
            delta: self.params.delta.clone(),
            pose: self.params.pose.to_vec(),
            gamma: self.params.gamma.to_vec(),
        };
        serde_json::to_string(&raw).expect("parameter file serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Mean shape/texture, PCA bases, and triangle topology.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableBasis {
    n_vertices: usize,
    mean_shape: Vec<f64>,
    mean_texture: Vec<f64>,
    b_id: ColMatrix,
    b_exp: ColMatrix,
    b_tex: ColMatrix,
    triangles: Vec<[u32; 3]>,
}

impl MorphableBasis {
    pub fn new(
        n_vertices: usize,
        mean_shape: Vec<f64>,
        mean_texture: Vec<f64>,
        b_id: ColMatrix,
        b_exp: ColMatrix,
        b_tex: ColMatrix,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let rows = 3 * n_vertices;
        check_dim("mean_shape", rows, mean_shape.len())?;
        check_dim("mean_texture", rows, mean_texture.len())?;
        check_dim("b_id rows", rows, b_id.rows())?;
        check_dim("b_exp rows", rows, b_exp.rows())?;
        check_dim("b_tex rows", rows, b_tex.rows())?;
        check_dim("b_id cols", ALPHA_DIM, b_id.cols())?;
        check_dim("b_exp cols", BETA_DIM, b_exp.cols())?;
        check_dim("b_tex cols", DELTA_DIM, b_tex.cols())?;
        for (i, t) in triangles.iter().enumerate() {
            for &v in t {
                if v as usize >= n_vertices {
                    return Err(Error::TriangleIndexOutOfBounds {
                        index: i,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::DegenerateTriangle {
                    index: i,
                    a: t[0],
                    b: t[1],
                    c: t[2],
                });
            }
        }
        Ok(MorphableBasis {
            n_vertices,
            mean_shape,
            mean_texture,
            b_id,
            b_exp,
            b_tex,
            triangles,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }

    pub fn mean_texture(&self) -> &[f64] {
        &self.mean_texture
    }

    pub fn b_id(&self) -> &ColMatrix {
        &self.b_id
    }

    pub fn b_exp(&self) -> &ColMatrix {
        &self.b_exp
    }

    pub fn b_tex(&self) -> &ColMatrix {
        &self.b_tex
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Reconstructs shape and texture, yielding a renderable mesh.
    pub fn reconstruct_mesh(&self, params: &ParamVector) -> Result<Mesh> {
        let positions = reconstruct_shape(self, params.alpha(), params.beta())?;
        let colors = reconstruct_texture(self, params.delta())?;
        Mesh::new(positions, colors, self.triangles.clone())
    }

    /// Writes the little-endian binary basis format.
    ///
    /// Layout: magic `NNSGBAS1`, `u32` vertex count, `u32` triangle
    /// count, then `f32` arrays for mean shape, mean texture, and the
    /// three bases (column-major), then `u32` triangle indices.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(BASIS_MAGIC);
        out.write_u32::<LittleEndian>(self.n_vertices as u32)
            .expect("writing to Vec cannot fail");
        out.write_u32::<LittleEndian>(self.triangles.len() as u32)
            .expect("writing to Vec cannot fail");
        let write_f32s = |values: &[f64], out: &mut Vec<u8>| {
            for &v in values {
                out.write_f32::<LittleEndian>(v as f32)
                    .expect("writing to Vec cannot fail");
            }
        };
        write_f32s(&self.mean_shape, &mut out);
        write_f32s(&self.mean_texture, &mut out);
        write_f32s(self.b_id.data(), &mut out);
        write_f32s(self.b_exp.data(), &mut out);
        write_f32s(self.b_tex.data(), &mut out);
        for t in &self.triangles {
            for &v in t {
                out.write_u32::<LittleEndian>(v)
                    .expect("writing to Vec cannot fail");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn byte_len(&self) -> usize {
        Self::expected_byte_len(self.n_vertices, self.triangles.len())
    }

    fn expected_byte_len(n_vertices: usize, n_tris: usize) -> usize {
        let rows = 3 * n_vertices;
        16 + 4 * (2 * rows + rows * (ALPHA_DIM + BETA_DIM + DELTA_DIM) + 3 * n_tris)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Truncated {
                expected: 16,
                actual: bytes.len(),
            });
        }
        let magic = &bytes[0..8];
        if magic != BASIS_MAGIC {
            if &magic[..7] == &BASIS_MAGIC[..7] {
                return Err(Error::VersionMismatch {
                    found: String::from_utf8_lossy(magic).into_owned(),
                    supported: String::from_utf8_lossy(BASIS_MAGIC).into_owned(),
                });
            }
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(BASIS_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let mut cursor = &bytes[8..];
        let n_vertices = cursor.read_u32::<LittleEndian>().unwrap() as usize;
        let n_tris = cursor.read_u32::<LittleEndian>().unwrap() as usize;
        let expected = Self::expected_byte_len(n_vertices, n_tris);
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingData {
                extra: bytes.len() - expected,
            });
        }
        let rows = 3 * n_vertices;
        let read_f32s = |n: usize, cursor: &mut &[u8]| -> Vec<f64> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(f64::from(cursor.read_f32::<LittleEndian>().unwrap()));
            }
            v
        };
        let mean_shape = read_f32s(rows, &mut cursor);
        let mean_texture = read_f32s(rows, &mut cursor);
        let b_id = ColMatrix::new(rows, ALPHA_DIM, read_f32s(rows * ALPHA_DIM, &mut cursor))?;
        let b_exp = ColMatrix::new(rows, BETA_DIM, read_f32s(rows * BETA_DIM, &mut cursor))?;
        let b_tex = ColMatrix::new(rows, DELTA_DIM, read_f32s(rows * DELTA_DIM, &mut cursor))?;
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let a = cursor.read_u32::<LittleEndian>().unwrap();
            let b = cursor.read_u32::<LittleEndian>().unwrap();
            let c = cursor.read_u32::<LittleEndian>().unwrap();
            triangles.push([a, b, c]);
        }
        MorphableBasis::new(
            n_vertices,
            mean_shape,
            mean_texture,
            b_id,
            b_exp,
            b_tex,
            triangles,
        )
    }
}

/// Reconstructed geometry with per-vertex colors.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<f64>,
    colors: Vec<f64>,
    triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn new(positions: Vec<f64>, colors: Vec<f64>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::DimensionMismatch {
                what: "mesh colors".into(),
                expected: positions.len(),
                actual: colors.len(),
            });
        }
        if positions.len() % 3 != 0 {
            return Err(Error::DimensionMismatch {
                what: "mesh positions".into(),
                expected: positions.len() / 3 * 3,
                actual: positions.len(),
            });
        }
        check_finite("mesh positions", &positions)?;
        let n_vertices = positions.len() / 3;
        for (i, t) in triangles.iter().enumerate() {
            for &v in t {
                if v as usize >= n_vertices {
                    return Err(Error::TriangleIndexOutOfBounds {
                        index: i,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
        }
        let colors = colors.into_iter().map(|c| c.clamp(0.0, 1.0)).collect();
        Ok(Mesh {
            positions,
            colors,
            triangles,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len() / 3
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn colors(&self) -> &[f64] {
        &self.colors
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn position(&self, vertex: usize) -> Vec3 {
        Vec3::new(
            self.positions[3 * vertex],
            self.positions[3 * vertex + 1],
            self.positions[3 * vertex + 2],
        )
    }

    /// Wavefront-style text dump ("v x y z" / "f a b c", 1-based).
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n_vertices() {
            let p = self.position(v);
            out.push_str(&format!("v {} {} {}\n", p.x, p.y, p.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

/// Weights for blending input and reference identity coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub lambda: f64,
    pub mu: f64,
}

impl FusionWeights {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        check_finite("fusion weights", &[lambda, mu])?;
        Ok(FusionWeights { lambda, mu })
    }
}

impl Default for FusionWeights {
    /// Equal blend of input and reference identity.
    fn default() -> Self {
        FusionWeights {
            lambda: 0.5,
            mu: 0.5,
        }
    }
}

/// Accumulates `out += matrix * coeffs` in fixed per-element order.
///
/// Columns are applied in index order within each row chunk, so the
/// result is identical whether chunks run sequentially or in parallel.
fn add_basis_offset(out: &mut [f64], matrix: &ColMatrix, coeffs: &[f64]) {
    parallel::for_each_chunk_mut(out, RECON_CHUNK, |offset, chunk| {
        for (j, &c) in coeffs.iter().enumerate() {
            let col = &matrix.col(j)[offset..offset + chunk.len()];
            for (o, &b) in chunk.iter_mut().zip(col) {
                *o += c * b;
            }
        }
    });
}

/// Mean shape plus identity and expression basis offsets.
pub fn reconstruct_shape(basis: &MorphableBasis, alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    check_dim("alpha", basis.b_id.cols(), alpha.len())?;
    check_dim("beta", basis.b_exp.cols(), beta.len())?;
    check_finite("alpha", alpha)?;
    check_finite("beta", beta)?;
    let mut out = basis.mean_shape.clone();
    add_basis_offset(&mut out, &basis.b_id, alpha);
    add_basis_offset(&mut out, &basis.b_exp, beta);
    Ok(out)
}

/// Mean texture plus texture basis offset, clamped to `[0, 1]`.
pub fn reconstruct_texture(basis: &MorphableBasis, delta: &[f64]) -> Result<Vec<f64>> {
    check_dim("delta", basis.b_tex.cols(), delta.len())?;
    check_finite("delta", delta)?;
    let mut out = basis.mean_texture.clone();
    add_basis_offset(&mut out, &basis.b_tex, delta);
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Elementwise `lambda * alpha_in + mu * alpha_ref`.
pub fn fuse_identity(alpha_in: &[f64], alpha_ref: &[f64], w: FusionWeights) -> Result<Vec<f64>> {
    check_dim("alpha_ref", alpha_in.len(), alpha_ref.len())?;
    check_finite("alpha_in", alpha_in)?;
    check_finite("alpha_ref", alpha_ref)?;
    check_finite("fusion weights", &[w.lambda, w.mu])?;
    Ok(alpha_in
        .iter()
        .zip(alpha_ref)
        .map(|(&a, &b)| w.lambda * a + w.mu * b)
        .collect())
}

/// Euler angles and translation to a rigid transform.
///
/// `pose[0..3]` are rotation angles in radians about x, y, z; the
/// rotation composes as `R = Rz(pose[2]) * Ry(pose[1]) * Rx(pose[0])`.
/// `pose[3..6]` is the translation.
pub fn pose_to_transform(pose: &[f64; 6]) -> RigidTransform {
    let rotation = Mat3::rotation_z(pose[2]) * Mat3::rotation_y(pose[1]) * Mat3::rotation_x(pose[0]);
    RigidTransform::new(rotation, Vec3::new(pose[3], pose[4], pose[5]))
}
