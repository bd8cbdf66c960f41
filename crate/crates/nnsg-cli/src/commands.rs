use std::path::Path;

use nnsg::guidance::{extract_guidance, CannyConfig, DepthMode, GuidanceConfig};
use nnsg::metrics::{id_similarity, psnr, ssim, MetricReport, SsimConfig};
use nnsg::morphable::{FusionWeights, MorphableBasis, ParamFile};
use nnsg::pixmap::Rgb8Image;
use nnsg::protodb::{
    build_database, filter_prototypes, nearest, parse_attribute_table, PrototypeDatabase,
    PrototypeRecord, DEFAULT_EXCLUDE, DEFAULT_INCLUDE,
};
use nnsg::renderer::{default_focal_for, export_obj, rasterize, silhouette_mask, Camera};
use nnsg::synth::{write_fixture, FixtureConfig};
use nnsg::{Error, Result};

use crate::{
    CameraArgs, DbBuildArgs, DbSearchArgs, FixtureArgs, GuideArgs, MetricsArgs, RenderArgs,
};

/// Validation failure raised directly by the CLI layer (exit code 2).
pub fn usage_error(message: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        message: message.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl CameraArgs {
    fn camera(&self, size: usize) -> Result<Camera> {
        let focal = self.focal.unwrap_or_else(|| default_focal_for(size));
        Camera::new(size, size, focal, self.near, self.far)
    }
}

pub fn run_fixture(args: &FixtureArgs) -> Result<()> {
    let cfg = FixtureConfig {
        seed: args.seed,
        n_faces: args.faces,
        grid: args.grid,
    };
    let summary = write_fixture(&args.out_dir, &cfg)?;
    println!("basis = {}", summary.basis_path.display());
    println!("attributes = {}", summary.attrs_path.display());
    println!("params_dir = {}", summary.params_dir.display());
    println!("query = {}", summary.query_path.display());
    println!("faces = {}", summary.n_faces);
    println!(
        "passing_default_filter = {}",
        summary.n_passing_default_filter
    );
    Ok(())
}

fn split_attr_list(raw: Option<&str>, default: &[&str]) -> Vec<String> {
    match raw {
        None => default.iter().map(|s| s.to_string()).collect(),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
    }
}

fn stem_of(filename: &str) -> &str {
    filename.rsplit_once('.').map(|(s, _)| s).unwrap_or(filename)
}

pub fn run_db_build(args: &DbBuildArgs) -> Result<()> {
    let include = split_attr_list(args.include.as_deref(), &DEFAULT_INCLUDE);
    let exclude = split_attr_list(args.exclude.as_deref(), &DEFAULT_EXCLUDE);

    let table = parse_attribute_table(&read_to_string(&args.attrs)?)?;
    let selected = filter_prototypes(&table, &include, &exclude)?;
    if selected.is_empty() {
        return Err(usage_error("no prototypes selected"));
    }

    let mut records = Vec::with_capacity(selected.len());
    let mut skipped = 0usize;
    for filename in &selected {
        let stem = stem_of(filename);
        let path = args.params_dir.join(format!("{stem}.json"));
        if !path.exists() {
            eprintln!("warning: missing parameter file {}, skipping", path.display());
            skipped += 1;
            continue;
        }
        let file = ParamFile::load(&path)?;
        records.push(PrototypeRecord {
            id: stem.to_string(),
            params: file.params,
        });
    }
    let db = build_database(records)?;
    db.save(&args.out)?;
    println!("selected = {} / {}", selected.len(), table.image_count());
    println!("ingested = {}", db.len());
    println!("skipped = {skipped}");
    println!("database = {}", args.out.display());
    Ok(())
}

pub fn run_db_search(args: &DbSearchArgs) -> Result<()> {
    let db = PrototypeDatabase::load(&args.db)?;
    let query = ParamFile::load(&args.query)?;
    let hits = nearest(&db, query.params.alpha(), args.k)?;
    for (rank, (index, score)) in hits.iter().enumerate() {
        println!(
            "{} {} {} {:.6}",
            rank + 1,
            index,
            db.record(*index).id,
            score
        );
    }
    Ok(())
}

pub fn run_guide(args: &GuideArgs) -> Result<()> {
    let input = ParamFile::load(&args.input)?;
    let db = PrototypeDatabase::load(&args.db)?;
    let basis = MorphableBasis::load(&args.basis)?;
    let camera = args.camera.camera(args.size)?;

    let hits = nearest(&db, input.params.alpha(), 1)?;
    let (index, score) = hits[0];
    let reference = db.record(index);

    let cfg = GuidanceConfig {
        fusion: FusionWeights::new(args.lambda, args.mu)?,
        omega: args.omega,
        eta: args.eta,
        dilation_px: args.dilation,
        canny: CannyConfig {
            sigma: args.sigma,
            low: args.low,
            high: args.high,
        },
        depth_mode: if args.near_dark {
            DepthMode::NearDark
        } else {
            DepthMode::NearBright
        },
        shaded: args.shaded,
        reference_id: Some(reference.id.clone()),
        prompt: args.prompt.clone(),
    };
    let bundle = extract_guidance(&input.params, &reference.params, &basis, &camera, &cfg)?;
    bundle.save_to_dir(&args.out_dir)?;

    println!("reference = {} (index {index}, score {score:.6})", reference.id);
    for name in ["depth.png", "contour.png", "mask.png", "manifest.txt"] {
        println!("wrote {}", args.out_dir.join(name).display());
    }
    Ok(())
}

pub fn run_render(args: &RenderArgs) -> Result<()> {
    let file = ParamFile::load(&args.params)?;
    let basis = MorphableBasis::load(&args.basis)?;
    let camera = args.camera.camera(args.size)?;

    let mesh = basis.reconstruct_mesh(&file.params)?;
    let pose = nnsg::morphable::pose_to_transform(file.params.pose());
    let lighting = args.lit.then(|| *file.params.gamma());
    let face = rasterize(&mesh, &pose, &camera, lighting.as_ref())?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    face.color_image().save_png(&args.out_dir.join("color.png"))?;
    silhouette_mask(&face, 0).save_png(&args.out_dir.join("coverage.png"))?;
    let depth = nnsg::guidance::depth_map(&face, DepthMode::NearBright)?;
    depth.save_png(&args.out_dir.join("depth.png"))?;
    if args.obj {
        export_obj(&mesh, &args.out_dir.join("mesh.obj"))?;
    }
    println!("covered_pixels = {}", face.coverage_mask().count_set());
    for name in ["color.png", "coverage.png", "depth.png"] {
        println!("wrote {}", args.out_dir.join(name).display());
    }
    if args.obj {
        println!("wrote {}", args.out_dir.join("mesh.obj").display());
    }
    Ok(())
}

pub fn run_metrics(args: &MetricsArgs) -> Result<()> {
    let mut report = MetricReport::default();

    match (&args.image_a, &args.image_b) {
        (Some(a), Some(b)) => {
            let img_a = Rgb8Image::load_png(a)?;
            let mut img_b = Rgb8Image::load_png(b)?;
            if (img_a.width, img_a.height) != (img_b.width, img_b.height) {
                if args.resize {
                    img_b = img_b.resize_bilinear(img_a.width, img_a.height);
                } else {
                    return Err(usage_error(format!(
                        "image sizes differ ({}x{} vs {}x{}); pass --resize to compare anyway",
                        img_a.width, img_a.height, img_b.width, img_b.height
                    )));
                }
            }
            let samples_a: Vec<f64> = img_a.samples.iter().map(|v| f64::from(*v)).collect();
            let samples_b: Vec<f64> = img_b.samples.iter().map(|v| f64::from(*v)).collect();
            report.psnr_db = Some(psnr(&samples_a, &samples_b, 255.0)?);
            report.ssim = Some(ssim(
                &img_a.to_luma(),
                &img_b.to_luma(),
                &SsimConfig::default(),
            )?);
        }
        (None, None) => {}
        _ => return Err(usage_error("--image-a and --image-b must be given together")),
    }

    match (&args.params_a, &args.params_b) {
        (Some(a), Some(b)) => {
            let pa = ParamFile::load(a)?;
            let pb = ParamFile::load(b)?;
            report.id_similarity = Some(id_similarity(pa.params.alpha(), pb.params.alpha())?);
        }
        (None, None) => {}
        _ => return Err(usage_error("--params-a and --params-b must be given together")),
    }

    if report.id_similarity.is_none() && report.psnr_db.is_none() && report.ssim.is_none() {
        return Err(usage_error(
            "nothing to compare: pass an image pair and/or a parameter-file pair",
        ));
    }
    print!("{}", report.to_text());
    Ok(())
}
