//! Orchestration behind the CLI subcommands: ingestion through rendering,
//! prompt generation, dataset assembly, training, sampling, and evaluation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CityConfig, RunConfig};
use crate::controlnet::{
    init_controlnet, load_controlnet, sample_controlled, save_controlnet, train_controlnet,
    ControlTrainItem,
};
use crate::dataset::{
    assemble_manifest, augment, filter_tiles, read_manifest, sample_id, split_samples,
    validate_manifest, write_manifest, DatasetManifest, Split, TileSample, ValidationReport,
};
use crate::diffusion::checkpoint::{load_denoiser, read_checkpoint, save_denoiser};
use crate::diffusion::{sample as sample_diffusion, train, Denoiser, TrainItem, TrainOptions};
use crate::embed::{embed_chunked, HashEncoder};
use crate::error::{Error, Result};
use crate::imgio;
use crate::ingest::{
    assemble_tile_features, AssembleOptions, LayerSet, TagMap, TileFeatures,
};
use crate::llm::enrich_elaborate;
use crate::metrics::{
    builtin_features, evaluate_features, import_features, kid_subset_averaged, EvalReport,
    FeatureSet,
};
use crate::prompts::{generate_minimal, generate_structured, PromptRecord, PromptStyle};
use crate::render::{control_filename, render_control, ControlImage, RenderSpec, Variant};
use crate::rng::{derive_seed, fnv1a};
use crate::tensor::ImageTensor;
use crate::tiles::{shifted_bbox, tile_to_bbox, GeoBBox, TileId};

fn city_tiles(c: &CityConfig, zoom: u8) -> Vec<TileId> {
    let mut out = Vec::new();
    for x in c.x0..c.x0 + c.nx {
        for y in c.y0..c.y0 + c.ny {
            out.push(TileId { zoom, x, y });
        }
    }
    out
}

fn load_tag_map(cfg: &RunConfig) -> Result<TagMap> {
    match &cfg.tag_map {
        Some(path) => TagMap::load(path),
        None => Ok(TagMap::builtin()),
    }
}

fn text_encoder(cfg: &RunConfig) -> HashEncoder {
    HashEncoder::new(cfg.model.cond_dim, derive_seed(cfg.seed, "text-encoder", 0))
}

fn write_run_meta(cfg: &RunConfig, dir: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct RunMeta<'a> {
        tool_version: &'a str,
        seed: u64,
        config_hash: String,
    }
    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
    };
    let path = dir.join("run_meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| Error::io(&path, e))
}

/// Derivation context shared by the dataset-producing commands.
struct DeriveCtx<'a> {
    cfg: &'a RunConfig,
    tags: TagMap,
    spec: RenderSpec,
}

impl DeriveCtx<'_> {
    fn window(&self, tile: TileId, shift: (f64, f64)) -> Result<GeoBBox> {
        if shift == (0.0, 0.0) {
            Ok(tile_to_bbox(tile))
        } else {
            shifted_bbox(tile, shift.0, shift.1)
        }
    }

    fn features_for(
        &self,
        layers: &LayerSet,
        city: &str,
        tile: TileId,
        shift: (f64, f64),
    ) -> Result<(TileFeatures, GeoBBox)> {
        let bbox = self.window(tile, shift)?;
        let id = sample_id(city, tile, shift);
        let opts = AssembleOptions {
            seed: derive_seed(self.cfg.seed, "designation", fnv1a(id.as_bytes())),
            include_designation: self.cfg.variant == Variant::Landuse,
            tags: &self.tags,
        };
        let (features, _) = assemble_tile_features(layers, tile, &bbox, city, &opts);
        Ok((features, bbox))
    }

    fn prompt_for(&self, features: &TileFeatures, id: &str) -> PromptRecord {
        let seed = derive_seed(self.cfg.seed, "prompt", fnv1a(id.as_bytes()));
        match self.cfg.prompt.style {
            PromptStyle::Minimal => generate_minimal(features),
            PromptStyle::Structured => generate_structured(features, seed),
            PromptStyle::Elaborate => {
                let minimal = generate_minimal(features);
                enrich_elaborate(&minimal, features, &self.cfg.llm, seed)
            }
        }
    }

    fn render_for(
        &self,
        layers: &LayerSet,
        features: &TileFeatures,
        bbox: &GeoBBox,
        tile: TileId,
    ) -> ControlImage {
        let clipped = layers.clip(bbox);
        render_control(
            &clipped,
            bbox,
            &self.spec,
            &self.tags,
            self.cfg.variant,
            features.designation.as_ref(),
            tile,
        )
    }
}

/// Reads an imagery tile `{data_root}/{city}/imagery/{z}/{x}/{y}.png`.
fn imagery_path(data_root: &Path, city: &str, tile: TileId) -> PathBuf {
    data_root
        .join(city)
        .join("imagery")
        .join(tile.zoom.to_string())
        .join(tile.x.to_string())
        .join(format!("{}.png", tile.y))
}

/// Target image for a window: the tile's own imagery for the identity
/// shift (copied verbatim), or a crop of the 2x2 neighbor mosaic for
/// half-tile shifts. Positive `fy` moves the window south (down in pixels).
fn compose_target(
    data_root: &Path,
    city: &str,
    tile: TileId,
    shift: (f64, f64),
    out_path: &Path,
) -> Result<()> {
    let base = imagery_path(data_root, city, tile);
    if !base.is_file() {
        return Err(Error::MissingInput(base));
    }
    if shift == (0.0, 0.0) {
        let bytes = std::fs::read(&base).map_err(|e| Error::io(&base, e))?;
        std::fs::write(out_path, bytes).map_err(|e| Error::io(out_path, e))?;
        return Ok(());
    }
    let (w, h, _) = imgio::load_rgb(&base)?;
    if w != h {
        return Err(Error::Invalid(format!("imagery tiles must be square, got {w}x{h}")));
    }
    let p = w as i64;
    let gx = tile.x as i64 * p + (shift.0 * p as f64).round() as i64;
    let gy = tile.y as i64 * p + (shift.1 * p as f64).round() as i64;
    let mut out = vec![0u8; (p * p * 3) as usize];
    let tx0 = gx.div_euclid(p);
    let ty0 = gy.div_euclid(p);
    let tx1 = (gx + p - 1).div_euclid(p);
    let ty1 = (gy + p - 1).div_euclid(p);
    for ty in ty0..=ty1 {
        for tx in tx0..=tx1 {
            if tx < 0 || ty < 0 {
                return Err(Error::Invalid(format!(
                    "shifted window of {tile} escapes the tile grid"
                )));
            }
            let neighbor = TileId { zoom: tile.zoom, x: tx as u32, y: ty as u32 };
            let path = imagery_path(data_root, city, neighbor);
            if !path.is_file() {
                return Err(Error::MissingInput(path));
            }
            let (nw, nh, rgb) = imgio::load_rgb(&path)?;
            if nw as i64 != p || nh as i64 != p {
                return Err(Error::Invalid(format!(
                    "imagery tile {neighbor} has size {nw}x{nh}, expected {p}x{p}"
                )));
            }
            // Overlap of this neighbor with the window, in global pixels.
            let ox0 = (tx * p).max(gx);
            let oy0 = (ty * p).max(gy);
            let ox1 = ((tx + 1) * p).min(gx + p);
            let oy1 = ((ty + 1) * p).min(gy + p);
            for y in oy0..oy1 {
                for x in ox0..ox1 {
                    let src = (((y - ty * p) * p + (x - tx * p)) * 3) as usize;
                    let dst = (((y - gy) * p + (x - gx)) * 3) as usize;
                    out[dst..dst + 3].copy_from_slice(&rgb[src..src + 3]);
                }
            }
        }
    }
    imgio::save_rgb(out_path, p as u32, p as u32, &out)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CitySummary {
    pub tiles_considered: usize,
    pub kept: usize,
    pub dropped_low_coverage: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub per_city: BTreeMap<String, CitySummary>,
    pub total_samples: usize,
    pub manifest_path: PathBuf,
    pub prompts_path: PathBuf,
}

/// The full dataset pipeline: ingest layers, derive per-tile semantics,
/// filter by coverage, render controls, copy/crop targets, generate
/// prompts, augment per city plan, split, and write the manifest.
pub fn cmd_build_dataset(cfg: &RunConfig) -> Result<BuildSummary> {
    cfg.validate()?;
    let out_root = &cfg.paths.out_root;
    let controls_dir = out_root.join("controls");
    let targets_dir = out_root.join("targets");
    std::fs::create_dir_all(&controls_dir).map_err(|e| Error::io(&controls_dir, e))?;
    std::fs::create_dir_all(&targets_dir).map_err(|e| Error::io(&targets_dir, e))?;

    let ctx = DeriveCtx {
        cfg,
        tags: load_tag_map(cfg)?,
        spec: RenderSpec::with_size(cfg.dataset.raster_size),
    };

    let mut per_city: BTreeMap<String, CitySummary> = BTreeMap::new();
    let mut plan: BTreeMap<String, u32> = BTreeMap::new();
    let mut base_samples: Vec<TileSample> = Vec::new();
    let mut layer_sets: BTreeMap<String, LayerSet> = BTreeMap::new();

    for city_cfg in &cfg.dataset.cities {
        let city = &city_cfg.name;
        plan.insert(city.clone(), city_cfg.multiplier);
        let layers = LayerSet::load_dir(&cfg.paths.data_root.join(city))?;
        let summary = per_city.entry(city.clone()).or_default();

        // Derive features for every tile in the range; filter on coverage.
        let mut features_list = Vec::new();
        for tile in city_tiles(city_cfg, cfg.dataset.zoom) {
            summary.tiles_considered += 1;
            let (features, _) = ctx.features_for(&layers, city, tile, (0.0, 0.0))?;
            features_list.push(features);
        }
        let (kept, dropped) = filter_tiles(features_list);
        summary.kept = kept.len();
        summary.dropped_low_coverage = dropped.len();

        for features in kept {
            let tile = features.tile;
            let id = sample_id(city, tile, (0.0, 0.0));
            let bbox = tile_to_bbox(tile);
            let prompt = ctx.prompt_for(&features, &id);
            let control = ctx.render_for(&layers, &features, &bbox, tile);
            let control_name = control_filename(city, tile, cfg.variant, (0.0, 0.0));
            control.save_png(&controls_dir.join(&control_name))?;
            let target_name = format!("{id}.png");
            compose_target(
                &cfg.paths.data_root.join(city),
                city,
                tile,
                (0.0, 0.0),
                &targets_dir.join(&target_name),
            )?;
            base_samples.push(TileSample {
                sample_id: id,
                tile,
                city: city.clone(),
                shift: (0.0, 0.0),
                features,
                prompt,
                control_path: format!("controls/{control_name}"),
                target_path: format!("targets/{target_name}"),
                split: Split::Train,
            });
        }
        layer_sets.insert(city.clone(), layers);
    }

    // Augmented copies re-derive everything on the shifted window.
    let augmented = augment(base_samples, &plan, cfg.seed, |base, shift| {
        let layers = &layer_sets[&base.city];
        let (features, bbox) = ctx.features_for(layers, &base.city, base.tile, shift)?;
        let id = sample_id(&base.city, base.tile, shift);
        let prompt = ctx.prompt_for(&features, &id);
        let control = ctx.render_for(layers, &features, &bbox, base.tile);
        let control_name = control_filename(&base.city, base.tile, cfg.variant, shift);
        control.save_png(&controls_dir.join(&control_name))?;
        let target_name = format!("{id}.png");
        compose_target(
            &cfg.paths.data_root.join(&base.city),
            &base.city,
            base.tile,
            shift,
            &targets_dir.join(&target_name),
        )?;
        Ok(TileSample {
            sample_id: id,
            tile: base.tile,
            city: base.city.clone(),
            shift,
            features,
            prompt,
            control_path: format!("controls/{control_name}"),
            target_path: format!("targets/{target_name}"),
            split: Split::Train,
        })
    })?;

    let split = split_samples(
        augmented,
        cfg.dataset.val_fraction,
        derive_seed(cfg.seed, "split", 0),
    )?;
    let manifest = assemble_manifest(split, cfg.seed, &cfg.config_hash());
    for s in &manifest.samples {
        per_city.get_mut(&s.city).expect("city known").samples += 1;
    }

    let manifest_path = out_root.join("manifest.jsonl");
    write_manifest(&manifest, &manifest_path)?;
    let prompts_path = out_root.join("prompts.jsonl");
    write_prompts(&manifest, &prompts_path)?;
    write_run_meta(cfg, out_root)?;

    Ok(BuildSummary {
        total_samples: manifest.samples.len(),
        per_city,
        manifest_path,
        prompts_path,
    })
}

#[derive(Serialize)]
struct PromptLine<'a> {
    id: &'a str,
    city: &'a str,
    #[serde(flatten)]
    record: &'a PromptRecord,
}

fn write_prompts(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for s in &manifest.samples {
        let line = serde_json::to_string(&PromptLine {
            id: &s.sample_id,
            city: &s.city,
            record: &s.prompt,
        })
        .map_err(|e| Error::Invalid(format!("serialize prompt: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Renders control images for every configured tile (no coverage filter),
/// for inspection and debugging. Returns the number of files written.
pub fn cmd_render_control(cfg: &RunConfig, city_filter: Option<&str>) -> Result<usize> {
    cfg.validate()?;
    let controls_dir = cfg.paths.out_root.join("controls");
    std::fs::create_dir_all(&controls_dir).map_err(|e| Error::io(&controls_dir, e))?;
    let ctx = DeriveCtx {
        cfg,
        tags: load_tag_map(cfg)?,
        spec: RenderSpec::with_size(cfg.dataset.raster_size),
    };
    let mut written = 0;
    for city_cfg in &cfg.dataset.cities {
        if let Some(filter) = city_filter {
            if filter != city_cfg.name {
                continue;
            }
        }
        let layers = LayerSet::load_dir(&cfg.paths.data_root.join(&city_cfg.name))?;
        for tile in city_tiles(city_cfg, cfg.dataset.zoom) {
            let (features, bbox) =
                ctx.features_for(&layers, &city_cfg.name, tile, (0.0, 0.0))?;
            let control = ctx.render_for(&layers, &features, &bbox, tile);
            let name = control_filename(&city_cfg.name, tile, cfg.variant, (0.0, 0.0));
            control.save_png(&controls_dir.join(name))?;
            written += 1;
        }
    }
    write_run_meta(cfg, &cfg.paths.out_root)?;
    Ok(written)
}

/// Generates prompts for every configured tile without touching imagery.
pub fn cmd_gen_prompts(
    cfg: &RunConfig,
    style: Option<PromptStyle>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    if let Some(style) = style {
        cfg.prompt.style = style;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.paths.out_root)
        .map_err(|e| Error::io(&cfg.paths.out_root, e))?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.paths.out_root.join("prompts.jsonl"));
    let ctx = DeriveCtx {
        cfg: &cfg,
        tags: load_tag_map(&cfg)?,
        spec: RenderSpec::with_size(cfg.dataset.raster_size),
    };
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for city_cfg in &cfg.dataset.cities {
        let layers = LayerSet::load_dir(&cfg.paths.data_root.join(&city_cfg.name))?;
        for tile in city_tiles(city_cfg, cfg.dataset.zoom) {
            let (features, _) = ctx.features_for(&layers, &city_cfg.name, tile, (0.0, 0.0))?;
            let id = sample_id(&city_cfg.name, tile, (0.0, 0.0));
            let record = ctx.prompt_for(&features, &id);
            let line = serde_json::to_string(&PromptLine {
                id: &id,
                city: &city_cfg.name,
                record: &record,
            })
            .map_err(|e| Error::Invalid(format!("serialize prompt: {e}")))?;
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Diffusion,
    Controlnet,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn manifest_train_data(
    cfg: &RunConfig,
    encoder: &HashEncoder,
) -> Result<(DatasetManifest, Vec<(TileSample, ImageTensor, Vec<f64>)>)> {
    let manifest_path = cfg.paths.out_root.join("manifest.jsonl");
    if !manifest_path.is_file() {
        return Err(Error::MissingInput(manifest_path));
    }
    let manifest = read_manifest(&manifest_path)?;
    let arch = cfg.arch();
    let mut items = Vec::new();
    for s in &manifest.samples {
        if s.split != Split::Train {
            continue;
        }
        let target = cfg.paths.out_root.join(&s.target_path);
        let z0 = imgio::load_image_tensor(&target, arch.channels, arch.height, arch.width)?;
        let cond = embed_chunked(&s.prompt.text, encoder);
        items.push((s.clone(), z0, cond));
    }
    if items.is_empty() {
        return Err(Error::Invalid("manifest has no training samples".into()));
    }
    Ok((manifest, items))
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trains the base denoiser or a ControlNet over it.
pub fn cmd_train(
    cfg: &RunConfig,
    kind: ModelKind,
    base_checkpoint: Option<&Path>,
    steps_override: Option<usize>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ckpt_dir = cfg.paths.out_root.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let encoder = text_encoder(cfg);
    let (_, data) = manifest_train_data(cfg, &encoder)?;
    let schedule = cfg.schedule()?;
    let opts = TrainOptions {
        steps: steps_override.unwrap_or(cfg.model.steps),
        lr: cfg.model.lr,
        batch_size: cfg.model.batch_size,
        seed: cfg.seed,
    };
    let hash = cfg.config_hash();

    match kind {
        ModelKind::Diffusion => {
            let arch = cfg.arch();
            let mut model = Denoiser::init(arch, derive_seed(cfg.seed, "model-init", 0))?;
            let items: Vec<TrainItem> = data
                .into_iter()
                .map(|(_, z0, cond)| TrainItem { z0, cond })
                .collect();
            let stats = train(&mut model, &items, &schedule, &opts)?;
            let checkpoint = ckpt_dir.join("diffusion.ckpt");
            save_denoiser(&checkpoint, &model, cfg.seed, &hash)?;
            let loss_csv = ckpt_dir.join("diffusion_loss.csv");
            write_loss_csv(&loss_csv, &stats.losses)?;
            Ok(TrainOutcome {
                checkpoint,
                loss_csv,
                steps: stats.losses.len(),
                initial_loss: stats.losses.first().copied().unwrap_or(f64::NAN),
                final_loss: stats.losses.last().copied().unwrap_or(f64::NAN),
            })
        }
        ModelKind::Controlnet => {
            let base_path = base_checkpoint
                .map(Path::to_path_buf)
                .unwrap_or_else(|| ckpt_dir.join("diffusion.ckpt"));
            if !base_path.is_file() {
                return Err(Error::MissingInput(base_path));
            }
            let (locked, _) = load_denoiser(&base_path)?;
            let arch = *locked.arch();
            let mut net = init_controlnet(locked, 3)?;
            let items: Vec<ControlTrainItem> = data
                .into_iter()
                .map(|(s, z0, cond)| {
                    let control_path = cfg.paths.out_root.join(&s.control_path);
                    let control =
                        load_control_tensor(&control_path, arch.height, arch.width)?;
                    Ok(ControlTrainItem { z0, cond, control })
                })
                .collect::<Result<_>>()?;
            let stats = train_controlnet(&mut net, &items, &schedule, &opts)?;
            let name = format!("controlnet_{}.ckpt", cfg.variant.name());
            let checkpoint = ckpt_dir.join(name);
            save_controlnet(&checkpoint, &net, cfg.seed, &hash)?;
            let loss_csv = ckpt_dir.join(format!("controlnet_{}_loss.csv", cfg.variant.name()));
            write_loss_csv(&loss_csv, &stats.losses)?;
            Ok(TrainOutcome {
                checkpoint,
                loss_csv,
                steps: stats.losses.len(),
                initial_loss: stats.losses.first().copied().unwrap_or(f64::NAN),
                final_loss: stats.losses.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Loads a control PNG as a `[0, 1]` tensor at the model resolution.
pub fn load_control_tensor(path: &Path, height: usize, width: usize) -> Result<ImageTensor> {
    let (w, h, rgb) = imgio::load_rgb(path)?;
    let mut t = ImageTensor::zeros(3, height, width);
    for y in 0..height {
        for x in 0..width {
            let sy = y * h as usize / height;
            let sx = x * w as usize / width;
            let base = (sy * w as usize + sx) * 3;
            for c in 0..3 {
                *t.at_mut(c, y, x) = rgb[base + c] as f64 / 255.0;
            }
        }
    }
    Ok(t)
}

/// Samples `num` images from a checkpoint and tiles them into one PNG grid.
pub fn cmd_sample(
    cfg: &RunConfig,
    checkpoint: &Path,
    control: Option<&Path>,
    prompt: &str,
    num: usize,
    out: &Path,
) -> Result<PathBuf> {
    if num == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    if !checkpoint.is_file() {
        return Err(Error::MissingInput(checkpoint.to_path_buf()));
    }
    let (header, _) = read_checkpoint(checkpoint)?;
    let encoder = HashEncoder::new(
        header.arch.cond_dim,
        derive_seed(header.seed, "text-encoder", 0),
    );
    let cond = embed_chunked(prompt, &encoder);
    let schedule = cfg.schedule()?;
    let arch = header.arch;
    let mut images = Vec::with_capacity(num);
    match header.kind.as_str() {
        "denoiser" => {
            let (model, _) = load_denoiser(checkpoint)?;
            for i in 0..num {
                images.push(sample_diffusion(
                    &model,
                    &cond,
                    &schedule,
                    derive_seed(cfg.seed, "sample-grid", i as u64),
                    (arch.channels, arch.height, arch.width),
                )?);
            }
        }
        "controlnet" => {
            let control_path = control.ok_or_else(|| {
                Error::Invalid("a controlnet checkpoint needs --control".into())
            })?;
            if !control_path.is_file() {
                return Err(Error::MissingInput(control_path.to_path_buf()));
            }
            let (net, _) = load_controlnet(checkpoint)?;
            let ctrl = load_control_tensor(control_path, arch.height, arch.width)?;
            for i in 0..num {
                images.push(sample_controlled(
                    &net,
                    &cond,
                    &ctrl,
                    &schedule,
                    derive_seed(cfg.seed, "sample-grid", i as u64),
                )?);
            }
        }
        other => {
            return Err(Error::parse(checkpoint, format!("unknown checkpoint kind {other:?}")))
        }
    }

    // Tile into a roughly square grid.
    let cols = (num as f64).sqrt().ceil() as usize;
    let rows = num.div_ceil(cols);
    let (h, w) = (arch.height, arch.width);
    let mut rgb = vec![0u8; rows * h * cols * w * 3];
    for (i, img) in images.iter().enumerate() {
        let (gy, gx) = (i / cols, i % cols);
        for y in 0..h {
            for x in 0..w {
                let dst = (((gy * h + y) * cols * w) + gx * w + x) * 3;
                for c in 0..3 {
                    let v = ((img.at(c, y, x) + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0);
                    rgb[dst + c] = v as u8;
                }
            }
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    imgio::save_rgb(out, (cols * w) as u32, (rows * h) as u32, &rgb)?;
    Ok(out.to_path_buf())
}

/// Feature source for evaluation: the built-in extractor or imported files.
pub enum FeatureSource {
    Builtin,
    External { real: PathBuf, generated: PathBuf },
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRunReport {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kid_subset_avg: Option<f64>,
}

fn dir_features(
    cfg: &RunConfig,
    dir: &Path,
    seed: u64,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if !dir.is_dir() {
        return Err(Error::MissingInput(dir.to_path_buf()));
    }
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Invalid(format!("no PNG files in {}", dir.display())));
    }
    let arch = cfg.arch();
    let mut ids = Vec::new();
    let mut images = Vec::new();
    for p in &names {
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        images.push(imgio::load_image_tensor(p, arch.channels, arch.height, arch.width)?);
        ids.push(id);
    }
    let fs = builtin_features(&images, seed)?;
    Ok(ids.into_iter().zip(fs.vectors).collect())
}

/// FID/KID between a directory of real images and a directory of generated
/// images, overall and per city (city = filename prefix before the first
/// underscore).
pub fn cmd_evaluate(
    cfg: &RunConfig,
    real_dir: &Path,
    gen_dir: &Path,
    source: FeatureSource,
    out: Option<&Path>,
) -> Result<EvalRunReport> {
    let feature_seed = derive_seed(cfg.seed, "eval-features", 0);
    let (real, generated) = match source {
        FeatureSource::Builtin => (
            dir_features(cfg, real_dir, feature_seed)?,
            dir_features(cfg, gen_dir, feature_seed)?,
        ),
        FeatureSource::External { real, generated } => {
            (import_features(&real)?, import_features(&generated)?)
        }
    };
    let report = evaluate_features(&real, &generated)?;
    let kid_subset_avg = match cfg.metrics.kid_subsets {
        Some(subsets) => {
            let to_set = |m: &BTreeMap<String, Vec<f64>>| FeatureSet {
                vectors: m.values().cloned().collect(),
                source: "eval".into(),
            };
            Some(kid_subset_averaged(
                &to_set(&real),
                &to_set(&generated),
                subsets,
                cfg.metrics.kid_subset_size,
                derive_seed(cfg.seed, "kid-subsets", 0),
            )?)
        }
        None => None,
    };
    let run_report = EvalRunReport {
        config_hash: cfg.config_hash(),
        report,
        kid_subset_avg,
    };
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&run_report).unwrap())
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(run_report)
}

/// Structural validation of a manifest file.
pub fn cmd_validate(manifest_path: &Path) -> Result<ValidationReport> {
    if !manifest_path.is_file() {
        return Err(Error::MissingInput(manifest_path.to_path_buf()));
    }
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(validate_manifest(&manifest, root))
}
