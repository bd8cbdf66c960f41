//! Seeded synthetic fixtures: a procedural face-like basis, random
//! parameter vectors, and CelebA-style attribute tables.
//!
//! Real morphable-model assets are license-restricted, so tests and
//! the CLI `fixture` subcommand build everything from a seed. All
//! generated numbers pass through `f32`, matching the precision of the
//! binary formats so that save/load round-trips are bit-exact.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::ColMatrix;
use crate::morphable::{
    MorphableBasis, ParamFile, ParamVector, ALPHA_DIM, BETA_DIM, DELTA_DIM,
};
use crate::protodb::{AttributeTable, CELEBA_ATTRIBUTE_NAMES, DEFAULT_EXCLUDE, DEFAULT_INCLUDE};

/// Draws an `f32` uniformly and widens it, so the value survives a
/// round-trip through the 32-bit file formats unchanged.
fn uniform32(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f64 {
    f64::from(rng.random_range(lo..hi))
}

/// Smooth pseudo-random scalar field used for basis columns.
struct WaveField {
    fx: f64,
    fy: f64,
    px: f64,
    py: f64,
    amp: f64,
}

impl WaveField {
    fn random(rng: &mut ChaCha8Rng, amp: f64) -> Self {
        WaveField {
            fx: uniform32(rng, 0.5, 4.0),
            fy: uniform32(rng, 0.5, 4.0),
            px: uniform32(rng, 0.0, std::f32::consts::TAU),
            py: uniform32(rng, 0.0, std::f32::consts::TAU),
            amp,
        }
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        self.amp * (self.fx * u + self.px).sin() * (self.fy * v + self.py).sin()
    }
}

fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Dome height (toward the camera, negative z) with a nose bump.
fn face_depth(u: f64, v: f64) -> f64 {
    let bowl = (1.0 - 0.55 * u * u - 0.40 * v * v).max(0.0).sqrt();
    let nose = (-((u * u) + (v - 0.05) * (v - 0.05)) / 0.02).exp();
    -(0.9 * bowl + 0.3 * nose)
}

fn skin_color(u: f64, v: f64) -> [f64; 3] {
    let mut c = [0.80, 0.62, 0.52];
    // Eyes: two dark patches above the midline.
    for sx in [-1.0, 1.0] {
        let du = u - 0.32 * sx;
        let dv = v + 0.28;
        let w = (-(du * du / 0.012 + dv * dv / 0.006)).exp();
        c[0] = c[0] * (1.0 - w) + 0.13 * w;
        c[1] = c[1] * (1.0 - w) + 0.12 * w;
        c[2] = c[2] * (1.0 - w) + 0.16 * w;
    }
    // Mouth: a red band below the nose.
    let dv = v - 0.45;
    let w = (-(u * u / 0.05 + dv * dv / 0.004)).exp();
    c[0] = c[0] * (1.0 - w) + 0.62 * w;
    c[1] = c[1] * (1.0 - w) + 0.22 * w;
    c[2] = c[2] * (1.0 - w) + 0.25 * w;
    c
}

/// Procedural face-like basis on a `grid` x `grid` vertex dome.
///
/// The mean shape bulges toward negative z (the camera side) and the
/// mean texture carries eye and mouth features so renders have real
/// contours. Basis columns are smooth low-frequency fields.
pub fn synthetic_basis(seed: u64, grid: usize) -> MorphableBasis {
    assert!(grid >= 2, "grid must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_vertices = grid * grid;
    let rows = 3 * n_vertices;

    let mut uv = Vec::with_capacity(n_vertices);
    for r in 0..grid {
        for c in 0..grid {
            let u = -1.0 + 2.0 * c as f64 / (grid - 1) as f64;
            let v = -1.0 + 2.0 * r as f64 / (grid - 1) as f64;
            uv.push((u, v));
        }
    }

    let mut mean_shape = Vec::with_capacity(rows);
    let mut mean_texture = Vec::with_capacity(rows);
    for &(u, v) in &uv {
        mean_shape.push(quantize(u));
        // Image y grows downward; model y is up, so flip v.
        mean_shape.push(quantize(-1.2 * v));
        mean_shape.push(quantize(face_depth(u, v)));
        let c = skin_color(u, v);
        mean_texture.push(quantize(c[0]));
        mean_texture.push(quantize(c[1]));
        mean_texture.push(quantize(c[2]));
    }

    let field_matrix = |cols: usize, amp: f64, rng: &mut ChaCha8Rng| {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..cols {
            let fields = [
                WaveField::random(rng, amp),
                WaveField::random(rng, amp),
                WaveField::random(rng, amp),
            ];
            for &(u, v) in &uv {
                // Columns are contiguous per axis-interleaved row order.
                data.push(quantize(fields[0].eval(u, v)));
                data.push(quantize(fields[1].eval(u, v)));
                data.push(quantize(fields[2].eval(u, v)));
            }
        }
        ColMatrix::new(rows, cols, data).expect("generated dimensions are consistent")
    };

    let b_id = field_matrix(ALPHA_DIM, 0.035, &mut rng);
    let b_exp = field_matrix(BETA_DIM, 0.020, &mut rng);
    let b_tex = field_matrix(DELTA_DIM, 0.030, &mut rng);

    let mut triangles = Vec::with_capacity(2 * (grid - 1) * (grid - 1));
    let v_at = |r: usize, c: usize| (r * grid + c) as u32;
    for r in 0..grid - 1 {
        for c in 0..grid - 1 {
            // Wound so normals face the camera (negative z).
            triangles.push([v_at(r, c), v_at(r, c + 1), v_at(r + 1, c)]);
            triangles.push([v_at(r, c + 1), v_at(r + 1, c + 1), v_at(r + 1, c)]);
        }
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
    .expect("generated basis is consistent")
}

/// Minimal 8-vertex basis (a cube) with dense random entries, sized
/// for scalar-oracle comparisons.
pub fn synthetic_basis_tiny(seed: u64) -> MorphableBasis {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_vertices = 8;
    let rows = 3 * n_vertices;
    let mut mean_shape = Vec::with_capacity(rows);
    for i in 0..n_vertices {
        let x = if i & 1 == 0 { -0.5 } else { 0.5 };
        let y = if i & 2 == 0 { -0.5 } else { 0.5 };
        let z = if i & 4 == 0 { -0.5 } else { 0.5 };
        mean_shape.extend_from_slice(&[x, y, z]);
    }
    let mean_texture: Vec<f64> = (0..rows).map(|_| uniform32(&mut rng, 0.3, 0.7)).collect();
    let dense = |cols: usize, amp: f32, rng: &mut ChaCha8Rng| {
        let data = (0..rows * cols)
            .map(|_| uniform32(rng, -amp, amp))
            .collect();
        ColMatrix::new(rows, cols, data).expect("generated dimensions are consistent")
    };
    let b_id = dense(ALPHA_DIM, 0.2, &mut rng);
    let b_exp = dense(BETA_DIM, 0.2, &mut rng);
    let b_tex = dense(DELTA_DIM, 0.3, &mut rng);
    // Cube faces, two triangles each.
    let triangles = vec![
        [0, 1, 3],
        [0, 3, 2],
        [4, 6, 7],
        [4, 7, 5],
        [0, 4, 5],
        [0, 5, 1],
        [2, 3, 7],
        [2, 7, 6],
        [0, 2, 6],
        [0, 6, 4],
        [1, 5, 7],
        [1, 7, 3],
    ];
    MorphableBasis::new(
        n_vertices,
        mean_shape,
        mean_texture,
        b_id,
        b_exp,
        b_tex,
        triangles,
    )
    .expect("generated basis is consistent")
}

/// Random parameters that keep the synthetic face plausible and in
/// frame for the default camera.
pub fn synthetic_params(rng: &mut ChaCha8Rng) -> ParamVector {
    let alpha = (0..ALPHA_DIM).map(|_| uniform32(rng, -0.8, 0.8)).collect();
    let beta = (0..BETA_DIM).map(|_| uniform32(rng, -0.5, 0.5)).collect();
    let delta = (0..DELTA_DIM).map(|_| uniform32(rng, -0.8, 0.8)).collect();
    let pose = [
        uniform32(rng, -0.20, 0.20),
        uniform32(rng, -0.20, 0.20),
        uniform32(rng, -0.15, 0.15),
        uniform32(rng, -0.30, 0.30),
        uniform32(rng, -0.30, 0.30),
        uniform32(rng, 13.5, 14.5),
    ];
    let gamma = [
        uniform32(rng, 3.2, 3.8),
        uniform32(rng, -0.4, 0.4),
        uniform32(rng, -0.4, 0.4),
        uniform32(rng, -0.4, 0.4),
        uniform32(rng, -0.15, 0.15),
        uniform32(rng, -0.15, 0.15),
        uniform32(rng, -0.15, 0.15),
        uniform32(rng, -0.15, 0.15),
        uniform32(rng, -0.15, 0.15),
    ];
    ParamVector::new(alpha, beta, delta, pose, gamma)
        .expect("generated parameters are in range")
}

/// CelebA-style attribute table with roughly `pass_fraction` of rows
/// passing the default include/exclude filter.
pub fn synthetic_attribute_table(seed: u64, rows: usize) -> AttributeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED_A77));
    let names: Vec<String> = CELEBA_ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect();
    let include: Vec<usize> = DEFAULT_INCLUDE
        .iter()
        .map(|n| names.iter().position(|x| x == n).unwrap())
        .collect();
    let exclude: Vec<usize> = DEFAULT_EXCLUDE
        .iter()
        .map(|n| names.iter().position(|x| x == n).unwrap())
        .collect();

    let mut table_rows = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut flags: Vec<i8> = (0..40)
            .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
            .collect();
        let pass = rng.random_bool(0.6);
        for &j in &include {
            flags[j] = 1;
        }
        for &j in &exclude {
            flags[j] = -1;
        }
        if !pass {
            // Break exactly one filter condition.
            if rng.random_bool(0.5) {
                let j = include[rng.random_range(0..include.len())];
                flags[j] = -1;
            } else {
                let j = exclude[rng.random_range(0..exclude.len())];
                flags[j] = 1;
            }
        }
        table_rows.push((format!("{:06}.jpg", i + 1), flags));
    }
    AttributeTable::new(names, table_rows).expect("generated table is consistent")
}

/// What `write_fixture` produced.
#[derive(Debug)]
pub struct FixtureSummary {
    pub basis_path: PathBuf,
    pub attrs_path: PathBuf,
    pub params_dir: PathBuf,
    pub query_path: PathBuf,
    pub n_faces: usize,
    pub n_passing_default_filter: usize,
}

/// Fixture generation knobs.
#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n_faces: usize,
    pub grid: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 42,
            n_faces: 40,
            grid: 32,
        }
    }
}

/// Writes a complete on-disk fixture: basis file, attribute table,
/// one parameter file per face, and a query face.
pub fn write_fixture(dir: &Path, cfg: &FixtureConfig) -> Result<FixtureSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params_dir = dir.join("params");
    std::fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;

    let basis_path = dir.join("basis.nnsgbas");
    synthetic_basis(cfg.seed, cfg.grid).save(&basis_path)?;

    let table = synthetic_attribute_table(cfg.seed, cfg.n_faces);
    let attrs_path = dir.join("list_attr.txt");
    std::fs::write(&attrs_path, table.to_celeba_text()).map_err(|e| Error::io(&attrs_path, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xFACE));
    for row in table.rows() {
        let stem = row
            .filename
            .rsplit_once('.')
            .map(|(s, _)| s)
            .unwrap_or(&row.filename)
            .to_string();
        let file = ParamFile {
            id: Some(stem.clone()),
            params: synthetic_params(&mut rng),
        };
        file.save(&params_dir.join(format!("{stem}.json")))?;
    }

    let query_path = dir.join("query.json");
    ParamFile {
        id: Some("query".into()),
        params: synthetic_params(&mut rng),
    }
    .save(&query_path)?;

    let n_passing = crate::protodb::filter_prototypes(
        &table,
        &DEFAULT_INCLUDE.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        &DEFAULT_EXCLUDE.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    )?
    .len();

    Ok(FixtureSummary {
        basis_path,
        attrs_path,
        params_dir,
        query_path,
        n_faces: cfg.n_faces,
        n_passing_default_filter: n_passing,
    })
}
