//! Structure-guidance extraction: depth and contour maps plus the
//! inpainting mask, bundled with the weights a downstream
//! depth/edge-conditioned generator applies when adding them to its
//! denoised latent.

use std::path::Path;

use crate::error::{Error, Result};
use crate::morphable::{
    fuse_identity, pose_to_transform, reconstruct_shape, reconstruct_texture, FusionWeights, Mesh,
    MorphableBasis, ParamVector,
};
use crate::parallel;
use crate::pixmap::{Gray16Map, GrayMap, Mask};
use crate::renderer::{rasterize, silhouette_mask, Camera, RenderedFace};

/// Default contour-branch weight applied in guidance combination.
pub const DEFAULT_OMEGA: f64 = 0.3;
/// Default depth-branch weight applied in guidance combination.
pub const DEFAULT_ETA: f64 = 0.5;

/// How view depth maps onto the 16-bit depth image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthMode {
    /// Inverted min-max: nearest covered pixel becomes 65535, the
    /// farthest 0. Matches common depth-conditioned generators.
    #[default]
    NearBright,
    /// Direct min-max: nearest 0, farthest 65535.
    NearDark,
}

/// Depth of every covered pixel, min-max normalized to 16 bits.
///
/// Uncovered pixels are 0. Scenes where all covered pixels share one
/// depth map to 65535 (in either mode), keeping the surface distinct
/// from the background.
pub fn depth_map(face: &RenderedFace, mode: DepthMode) -> Result<Gray16Map> {
    let mut min_d = f64::INFINITY;
    let mut max_d = f64::NEG_INFINITY;
    for (d, covered) in face.depth().iter().zip(face.coverage()) {
        if *covered {
            min_d = min_d.min(*d);
            max_d = max_d.max(*d);
        }
    }
    if !min_d.is_finite() {
        return Err(Error::EmptyRender);
    }
    let range = max_d - min_d;
    let pixels = face
        .depth()
        .iter()
        .zip(face.coverage())
        .map(|(d, covered)| {
            if !covered {
                return 0u16;
            }
            if range == 0.0 {
                return u16::MAX;
            }
            let t = match mode {
                DepthMode::NearBright => (max_d - d) / range,
                DepthMode::NearDark => (d - min_d) / range,
            };
            (t * f64::from(u16::MAX)).round() as u16
        })
        .collect();
    Gray16Map::from_pixels(face.width(), face.height(), pixels)
}

/// Canny thresholds and smoothing. `low` and `high` are fractions of
/// the maximum gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyConfig {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        CannyConfig {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

fn blur_gaussian(pixels: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for k in 0..=2 * radius {
        let d = k as f64 - radius as f64;
        kernel.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    // Horizontal pass with clamped borders.
    let mut tmp = vec![0.0; pixels.len()];
    parallel::for_each_chunk_mut(&mut tmp, width, |offset, row| {
        let y = offset / width;
        let src = &pixels[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xx = (x + k).saturating_sub(radius).min(width - 1);
                acc += w * src[xx];
            }
            *out = acc;
        }
    });

    // Vertical pass.
    let mut out = vec![0.0; pixels.len()];
    parallel::for_each_chunk_mut(&mut out, width, |offset, row| {
        let y = offset / width;
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let yy = (y + k).saturating_sub(radius).min(height - 1);
                acc += w * tmp[yy * width + x];
            }
            *out = acc;
        }
    });
    out
}

/// Classic Canny pipeline: Gaussian smoothing, Sobel gradients,
/// non-maximum suppression, and double-threshold hysteresis with
/// 8-connected tracking. Thresholds are relative to the maximum
/// gradient magnitude, so a constant image yields no edges.
pub fn canny(image: &GrayMap, sigma: f64, low: f64, high: f64) -> Result<Mask> {
    if !(low < high) {
        return Err(Error::ThresholdOrder { low, high });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::OutOfRange {
            what: "canny sigma".into(),
            min: f64::MIN_POSITIVE,
            max: f64::INFINITY,
            value: sigma,
        });
    }
    if low < 0.0 {
        return Err(Error::OutOfRange {
            what: "canny low threshold".into(),
            min: 0.0,
            max: 1.0,
            value: low,
        });
    }
    let (width, height) = (image.width(), image.height());
    if width < 3 || height < 3 {
        return Ok(Mask::new(width, height));
    }
    let blurred = blur_gaussian(image.pixels(), width, height, sigma);

    // Sobel gradients on the interior; borders stay zero.
    let mut gx = vec![0.0; blurred.len()];
    let mut gy = vec![0.0; blurred.len()];
    let mut magnitude = vec![0.0; blurred.len()];
    {
        let gx_all = &mut gx;
        let gy_all = &mut gy;
        for y in 1..height - 1 {
            for x in 1..width - 1 {
                let at = |dx: isize, dy: isize| {
                    blurred[(y as isize + dy) as usize * width + (x as isize + dx) as usize]
                };
                let h = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1))
                    - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
                let v = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1))
                    - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
                gx_all[y * width + x] = h;
                gy_all[y * width + x] = v;
                magnitude[y * width + x] = h.hypot(v);
            }
        }
    }
    let max_mag = magnitude.iter().cloned().fold(0.0f64, f64::max);
    if max_mag == 0.0 {
        return Ok(Mask::new(width, height));
    }
    let t_low = low * max_mag;
    let t_high = high * max_mag;

    // Non-maximum suppression along the quantized gradient direction.
    let mut thinned = vec![0.0; magnitude.len()];
    parallel::for_each_chunk_mut(&mut thinned, width, |offset, row| {
        let y = offset / width;
        if y == 0 || y == height - 1 {
            return;
        }
        for (x, out) in row.iter_mut().enumerate().take(width - 1).skip(1) {
            let i = y * width + x;
            let m = magnitude[i];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (a, b) = if !(22.5..157.5).contains(&angle) {
                (magnitude[i - 1], magnitude[i + 1])
            } else if angle < 67.5 {
                (magnitude[i + width + 1], magnitude[i - width - 1])
            } else if angle < 112.5 {
                (magnitude[i - width], magnitude[i + width])
            } else {
                (magnitude[i + width - 1], magnitude[i - width + 1])
            };
            if m >= a && m >= b {
                *out = m;
            }
        }
    });

    // Hysteresis: strong seeds grow through weak 8-connected pixels.
    let mut edges = vec![false; thinned.len()];
    let mut stack = Vec::new();
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            if thinned[i] >= t_high && !edges[i] {
                edges[i] = true;
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let nx = cx as isize + dx;
                            let ny = cy as isize + dy;
                            if nx < 1
                                || ny < 1
                                || nx >= width as isize - 1
                                || ny >= height as isize - 1
                            {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            let j = ny * width + nx;
                            if !edges[j] && thinned[j] >= t_low {
                                edges[j] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    Mask::from_bits(width, height, edges)
}

/// Dilation radius for the inpainting mask: 8 px at 512², scaled
/// proportionally with the smaller image side (at least 1 px).
pub fn default_dilation(width: usize, height: usize) -> usize {
    let side = width.min(height) as f64;
    ((8.0 * side / 512.0).round() as usize).max(1)
}

/// Everything `extract_guidance` needs beyond the data inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub fusion: FusionWeights,
    /// Contour-branch weight, in [0, 1].
    pub omega: f64,
    /// Depth-branch weight, in [0, 1].
    pub eta: f64,
    /// Mask dilation in pixels; `None` applies the size-scaled rule.
    pub dilation_px: Option<usize>,
    pub canny: CannyConfig,
    pub depth_mode: DepthMode,
    /// Shade with the input face's lighting before extraction.
    /// Off by default so guidance does not depend on lighting.
    pub shaded: bool,
    /// Identifier of the reference face, recorded in the manifest.
    pub reference_id: Option<String>,
    /// Free text handed through to downstream consumers.
    pub prompt: Option<String>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            fusion: FusionWeights::default(),
            omega: DEFAULT_OMEGA,
            eta: DEFAULT_ETA,
            dilation_px: None,
            canny: CannyConfig::default(),
            depth_mode: DepthMode::default(),
            shaded: false,
            reference_id: None,
            prompt: None,
        }
    }
}

/// Provenance recorded with a guidance bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleMeta {
    pub camera: Camera,
    pub pose: [f64; 6],
    pub fusion: FusionWeights,
    pub reference_id: Option<String>,
    pub prompt: Option<String>,
}

/// Depth map, contour map, and inpainting mask plus the branch weights
/// for the downstream generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceBundle {
    pub depth_map: Gray16Map,
    pub contour_map: Mask,
    pub inpaint_mask: Mask,
    pub omega: f64,
    pub eta: f64,
    pub meta: BundleMeta,
}

fn check_weight(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(Error::OutOfRange {
            what: name.into(),
            min: 0.0,
            max: 1.0,
            value,
        });
    }
    Ok(())
}

impl GuidanceBundle {
    /// Deterministic key-value sidecar describing the bundle files.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        out.push_str("depth = depth.png\n");
        out.push_str("contour = contour.png\n");
        out.push_str("mask = mask.png\n");
        out.push_str(&format!("width = {}\n", self.depth_map.width()));
        out.push_str(&format!("height = {}\n", self.depth_map.height()));
        out.push_str(&format!("omega = {}\n", self.omega));
        out.push_str(&format!("eta = {}\n", self.eta));
        out.push_str(&format!("lambda = {}\n", self.meta.fusion.lambda));
        out.push_str(&format!("mu = {}\n", self.meta.fusion.mu));
        out.push_str(&format!("camera.focal_px = {}\n", self.meta.camera.focal_px));
        out.push_str(&format!(
            "camera.principal = {} {}\n",
            self.meta.camera.principal.0, self.meta.camera.principal.1
        ));
        out.push_str(&format!("camera.near = {}\n", self.meta.camera.near));
        out.push_str(&format!("camera.far = {}\n", self.meta.camera.far));
        let pose: Vec<String> = self.meta.pose.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("pose = {}\n", pose.join(" ")));
        out.push_str(&format!(
            "reference_id = {}\n",
            self.meta.reference_id.as_deref().unwrap_or("")
        ));
        out.push_str(&format!(
            "prompt = {}\n",
            self.meta.prompt.as_deref().unwrap_or("")
        ));
        out
    }

    /// Writes depth.png (16-bit), contour.png, mask.png, and
    /// manifest.txt into `dir`.
    pub fn save_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.depth_map.save_png(&dir.join("depth.png"))?;
        self.contour_map.save_png(&dir.join("contour.png"))?;
        self.inpaint_mask.save_png(&dir.join("mask.png"))?;
        let manifest = dir.join("manifest.txt");
        std::fs::write(&manifest, self.manifest_text()).map_err(|e| Error::io(&manifest, e))
    }
}

/// Runs the full guidance pipeline.
///
/// The input's identity is blended with the reference's; shape uses
/// the input's expression, texture the input's coefficients, and the
/// render uses the input's pose. The reference contributes only its
/// identity block — its expression, texture, pose, and lighting are
/// never read.
pub fn extract_guidance(
    input: &ParamVector,
    reference: &ParamVector,
    basis: &MorphableBasis,
    camera: &Camera,
    cfg: &GuidanceConfig,
) -> Result<GuidanceBundle> {
    check_weight("omega", cfg.omega)?;
    check_weight("eta", cfg.eta)?;

    let fused_alpha = fuse_identity(input.alpha(), reference.alpha(), cfg.fusion)?;
    let positions = reconstruct_shape(basis, &fused_alpha, input.beta())?;
    let colors = reconstruct_texture(basis, input.delta())?;
    let mesh = Mesh::new(positions, colors, basis.triangles().to_vec())?;
    let pose = pose_to_transform(input.pose());
    let lighting = cfg.shaded.then_some(input.gamma());
    let face = rasterize(&mesh, &pose, camera, lighting)?;

    let depth = depth_map(&face, cfg.depth_mode)?;
    let contour = canny(&face.luma(), cfg.canny.sigma, cfg.canny.low, cfg.canny.high)?;
    let dilation = cfg
        .dilation_px
        .unwrap_or_else(|| default_dilation(camera.width, camera.height));
    let mask = silhouette_mask(&face, dilation);

    Ok(GuidanceBundle {
        depth_map: depth,
        contour_map: contour,
        inpaint_mask: mask,
        omega: cfg.omega,
        eta: cfg.eta,
        meta: BundleMeta {
            camera: *camera,
            pose: *input.pose(),
            fusion: cfg.fusion,
            reference_id: cfg.reference_id.clone(),
            prompt: cfg.prompt.clone(),
        },
    })
}

/// Dense tensor of generator latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl LatentArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "latent values".into(),
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "latent values".into(),
            });
        }
        Ok(LatentArray { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Weighted addition of the contour and depth branch outputs onto the
/// denoised latent: `x + omega * y_c + eta * y_d`, elementwise.
///
/// Zero weights return the input latent bit-identically.
pub fn combine_guidance(
    x_denoised: &LatentArray,
    y_c: &LatentArray,
    y_d: &LatentArray,
    omega: f64,
    eta: f64,
) -> Result<LatentArray> {
    for other in [y_c, y_d] {
        if other.shape != x_denoised.shape {
            return Err(Error::ShapeMismatch {
                expected: x_denoised.shape.clone(),
                actual: other.shape.clone(),
            });
        }
    }
    check_weight("omega", omega)?;
    check_weight("eta", eta)?;
    if omega == 0.0 && eta == 0.0 {
        return Ok(x_denoised.clone());
    }
    let values = x_denoised
        .values
        .iter()
        .zip(&y_c.values)
        .zip(&y_d.values)
        .map(|((x, c), d)| x + omega * c + eta * d)
        .collect();
    Ok(LatentArray {
        shape: x_denoised.shape.clone(),
        values,
    })
}
