use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use terrastyle_core::heightfield::{
    apply_colormap, load_heightmap, save_heightmap, save_raw, to_mesh, BitDepth,
};
use terrastyle_core::metrics::{compare, SsimParams};
use terrastyle_core::nst::{
    load_weights, run_transfer, save_weights, working_dims, FeatureExtractor, LossBreakdown, TransferObserver,
    TransferParams, SEEDED_INPUT_GAIN,
};
use terrastyle_core::procgen::{blend_custom_feature, ExplicitNoiseConfig, NoiseConfig, PerlinConfig};
use terrastyle_core::{styles, Error as CoreError, HeightMap};
use terrastyle_service::ServiceConfig;

use crate::error::{CliError, CliResult};
use crate::{BlendArgs, Depth, EvalArgs, GenArgs, InitWeightsArgs, Method, RenderArgs, RenderMode, ServeArgs, TransferArgs};

/// First-step RMS, in 0-255 pixel units, that `--lr0 auto` calibrates to.
pub const AUTO_FIRST_STEP_RMS: f64 = 2.55;

fn read_json_arg<T: DeserializeOwned>(flag: &str, arg: &str) -> CliResult<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::usage(format!("--{flag} {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--{flag}: {e}")))
}

fn load_map(path: &Path) -> CliResult<HeightMap> {
    load_heightmap(path).map_err(CliError::input)
}

fn write_map(map: &HeightMap, path: &Path, depth: Depth) -> CliResult {
    let written = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("raw")) {
        save_raw(map, path)
    } else {
        let depth = match depth {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        };
        save_heightmap(map, path, depth)
    };
    written.map_err(CliError::output)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<out>.config.json` describing how `out` was produced.
fn write_sidecar(out: &Path, config: serde_json::Value) -> CliResult {
    let mut doc = json!({ "tool_version": env!("CARGO_PKG_VERSION") });
    doc.as_object_mut().unwrap().extend(config.as_object().cloned().unwrap_or_default());
    let path = suffixed(out, ".config.json");
    let text = serde_json::to_string_pretty(&doc).map_err(CliError::output)?;
    fs::write(&path, text + "\n").map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

fn to_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

pub fn gen(a: &GenArgs) -> CliResult {
    let mut cfg: NoiseConfig = match (&a.config, a.method) {
        (Some(c), _) => read_json_arg("config", c)?,
        (None, Some(Method::Explicit)) => NoiseConfig::Explicit(ExplicitNoiseConfig::default()),
        (None, Some(Method::Perlin)) => NoiseConfig::Perlin(PerlinConfig::default()),
        (None, None) => {
            return Err(CliError::usage(format!(
                "either --config or --method ({}) is required",
                NoiseConfig::METHODS.join(", ")
            )))
        }
    };
    match (&mut cfg, a.method) {
        (NoiseConfig::Explicit(_), Some(Method::Perlin)) | (NoiseConfig::Perlin(_), Some(Method::Explicit)) => {
            return Err(CliError::usage("--method disagrees with the method in --config"))
        }
        _ => {}
    }
    match &mut cfg {
        NoiseConfig::Explicit(c) => {
            if a.octaves.is_some() || a.base_freq.is_some() {
                return Err(CliError::usage("--octaves and --base-freq apply to the perlin method only"));
            }
            c.seed = a.seed.unwrap_or(c.seed);
            c.target_dim = a.size.unwrap_or(c.target_dim);
        }
        NoiseConfig::Perlin(c) => {
            c.seed = a.seed.unwrap_or(c.seed);
            if let Some(s) = a.size {
                (c.width, c.height) = (s, s);
            }
            c.octaves = a.octaves.unwrap_or(c.octaves);
            c.base_freq = a.base_freq.unwrap_or(c.base_freq);
        }
    }
    cfg.validate().map_err(CliError::input)?;
    let map = cfg.generate().map_err(CliError::input)?;
    write_map(&map, &a.out, a.bit_depth)?;
    write_sidecar(
        &a.out,
        json!({ "command": "gen", "noise_config": to_value(&cfg), "bit_depth": bits(a.bit_depth) }),
    )?;
    println!("wrote {} ({}x{})", a.out.display(), map.width(), map.height());
    Ok(())
}

fn bits(d: Depth) -> u32 {
    match d {
        Depth::Eight => 8,
        Depth::Sixteen => 16,
    }
}

/// Resolves the archive from `--weights` / `TERRASTYLE_WEIGHTS`; exit 3 when absent.
fn weights_path(arg: Option<&PathBuf>) -> CliResult<PathBuf> {
    let path = arg
        .cloned()
        .ok_or_else(|| CliError::Weights("no weight archive given (use --weights or TERRASTYLE_WEIGHTS)".into()))?;
    if !path.is_file() {
        return Err(CliError::Weights(format!("weight archive {} not found", path.display())));
    }
    Ok(path)
}

fn load_extractor(path: &Path) -> CliResult<FeatureExtractor> {
    load_weights(path).map_err(|e| CliError::Weights(e.to_string()))
}

fn load_style(arg: &str) -> CliResult<HeightMap> {
    let path = Path::new(arg);
    if path.exists() {
        return load_map(path);
    }
    match styles::bundled(arg) {
        Ok(s) => s.load().map_err(CliError::input),
        Err(_) => {
            let names: Vec<_> = styles::BUNDLED.iter().map(|s| s.name).collect();
            Err(CliError::usage(format!(
                "style {arg} is neither a file nor a bundled style ({})",
                names.join(", ")
            )))
        }
    }
}

fn transfer_params(a: &TransferArgs) -> CliResult<TransferParams> {
    let mut p: TransferParams = match &a.params {
        Some(s) => read_json_arg("params", s)?,
        None => TransferParams::default(),
    };
    p.alpha = a.alpha.unwrap_or(p.alpha);
    p.beta = a.beta.unwrap_or(p.beta);
    p.gamma = a.gamma.unwrap_or(p.gamma);
    p.iterations = a.iters.unwrap_or(p.iterations);
    p.max_side = a.size.unwrap_or(p.max_side);
    p.progress_every = a.progress_every.unwrap_or(p.progress_every);
    p.seed = a.seed.unwrap_or(p.seed);
    match a.lr0.as_deref() {
        None => {}
        Some("auto") => p.first_step_rms = Some(AUTO_FIRST_STEP_RMS),
        Some(s) => {
            p.lr0 = s
                .parse()
                .map_err(|_| CliError::usage(format!("--lr0 expects a number or `auto`, got {s:?}")))?;
            p.first_step_rms = None;
        }
    }
    if a.preview_every == Some(0) {
        return Err(CliError::usage("--preview-every must be at least 1"));
    }
    p.validate().map_err(CliError::input)?;
    Ok(p)
}

struct CliObserver<'a> {
    out: &'a Path,
    preview_every: Option<usize>,
    history: Vec<LossBreakdown>,
    previews: Vec<PathBuf>,
    failure: Option<CliError>,
}

impl TransferObserver for CliObserver<'_> {
    fn on_progress(&mut self, l: &LossBreakdown, preview: Option<&HeightMap>) {
        println!(
            "iter {:>6}  content {:.6e}  style {:.6e}  tv {:.6e}  total {:.6e}",
            l.iteration, l.content, l.style, l.tv, l.total
        );
        self.history.push(l.clone());
        if let (Some(map), None) = (preview, &self.failure) {
            let path = preview_path(self.out, l.iteration);
            let written = write_map(map, &path, Depth::Sixteen)
                .and_then(|_| write_sidecar(&path, json!({ "command": "transfer-preview", "iteration": l.iteration })));
            match written {
                Ok(()) => self.previews.push(path),
                Err(e) => self.failure = Some(e),
            }
        }
    }

    fn preview_every(&self) -> Option<usize> {
        self.preview_every
    }
}

fn preview_path(out: &Path, iteration: usize) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "png".into());
    out.with_file_name(format!("{stem}.iter{iteration:06}.{ext}"))
}

fn write_history(path: &Path, history: &[LossBreakdown]) -> CliResult {
    let mut csv = String::from("iteration,content,style,tv,total\n");
    for l in history {
        writeln!(csv, "{},{},{},{},{}", l.iteration, l.content, l.style, l.tv, l.total).unwrap();
    }
    fs::write(path, csv).map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

pub fn transfer(a: &TransferArgs) -> CliResult {
    let params = transfer_params(a)?;
    let weights = weights_path(a.weights.as_ref())?;
    let content = load_map(&a.content)?;
    let style = load_style(&a.style)?;
    let (w, h) = working_dims(&content, &style, params.max_side).map_err(CliError::input)?;
    let extractor = load_extractor(&weights)?;

    let lr0 = match params.first_step_rms {
        Some(rms) => format!("auto(first-step rms {rms})"),
        None => format!("{:e}", params.lr0),
    };
    println!(
        "terrastyle transfer: alpha={:e} beta={:e} gamma={:e} iters={} lr0={lr0} working={w}x{h}",
        params.alpha, params.beta, params.gamma, params.iterations
    );
    println!(
        "  content={} style={} weights={}",
        a.content.display(),
        a.style,
        weights.display()
    );

    let mut observer = CliObserver {
        out: &a.out,
        preview_every: a.preview_every,
        history: Vec::new(),
        previews: Vec::new(),
        failure: None,
    };
    let outcome = run_transfer(&extractor, &content, &style, &params, &mut observer);
    let csv = suffixed(&a.out, ".loss.csv");
    write_history(&csv, &observer.history)?;
    if let Some(e) = observer.failure {
        return Err(e);
    }
    let result = match outcome {
        Ok(r) => r,
        Err(e @ CoreError::Divergence { .. }) => return Err(CliError::Divergence(e.to_string())),
        Err(e) => return Err(CliError::input(e)),
    };

    write_map(&result.map, &a.out, Depth::Sixteen)?;
    write_sidecar(
        &a.out,
        json!({
            "command": "transfer",
            "content": a.content,
            "style": a.style,
            "weights": weights,
            "transfer_params": to_value(&params),
            "lr0_used": result.lr0,
            "working_dims": [w, h],
            "loss_history": csv,
            "previews": observer.previews,
            "final_loss": result.history.last().map(to_value),
        }),
    )?;
    println!("wrote {} and {}", a.out.display(), csv.display());
    Ok(())
}

pub fn blend(a: &BlendArgs) -> CliResult {
    let custom = load_map(&a.custom)?;
    let noise = load_map(&a.noise)?;
    if !(0.0..=1.0).contains(&a.weight) {
        return Err(CliError::usage(format!("--weight must lie in [0, 1], got {}", a.weight)));
    }
    let map = blend_custom_feature(&custom, &noise, a.weight).map_err(CliError::input)?;
    write_map(&map, &a.out, a.bit_depth)?;
    write_sidecar(
        &a.out,
        json!({
            "command": "blend",
            "custom": a.custom,
            "noise": a.noise,
            "weight": a.weight,
            "bit_depth": bits(a.bit_depth),
        }),
    )
}

pub fn eval(a: &EvalArgs) -> CliResult {
    let x = load_map(&a.a)?;
    let y = load_map(&a.b)?;
    let mut p = SsimParams::default();
    p.window = a.window.unwrap_or(p.window);
    let report = compare(&x, &y, &p).map_err(CliError::input)?;
    if a.json {
        println!("{}", serde_json::to_string(&report).map_err(CliError::output)?);
    } else {
        println!("{:.4}", report.ssim);
    }
    Ok(())
}

pub fn render(a: &RenderArgs) -> CliResult {
    let map = load_map(&a.input)?;
    match a.mode {
        RenderMode::Colormap => {
            let img = apply_colormap(&map, &a.palette).map_err(CliError::input)?;
            img.save_png(&a.out).map_err(CliError::output)?;
        }
        RenderMode::Mesh => {
            let mesh = to_mesh(&map, a.vscale, a.step).map_err(CliError::input)?;
            let file = fs::File::create(&a.out).map_err(|e| CliError::output(format!("{}: {e}", a.out.display())))?;
            mesh.write_obj(BufWriter::new(file))
                .map_err(|e| CliError::output(format!("{}: {e}", a.out.display())))?;
        }
    }
    let mode = match a.mode {
        RenderMode::Colormap => "colormap",
        RenderMode::Mesh => "mesh",
    };
    write_sidecar(
        &a.out,
        json!({
            "command": "render",
            "in": a.input,
            "mode": mode,
            "palette": a.palette,
            "vscale": a.vscale,
            "step": a.step,
        }),
    )
}

pub fn serve(a: &ServeArgs) -> CliResult {
    let weights = weights_path(a.weights.as_ref())?;
    // Fail at startup rather than on the first job.
    load_extractor(&weights)?;
    let mut cfg = ServiceConfig::new(&a.data_dir);
    cfg.workers = a.workers;
    cfg.weights = Some(weights);
    cfg.preview_every = a.preview_every;
    cfg.seed_styles = !a.no_seed_styles;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::output)?;
    rt.block_on(terrastyle_service::serve(cfg, a.addr)).map_err(CliError::output)
}

pub fn init_weights(a: &InitWeightsArgs) -> CliResult {
    let ex = FeatureExtractor::seeded(a.seed);
    let tmp = suffixed(&a.out, ".tmp");
    save_weights(&ex, &tmp).map_err(CliError::output)?;
    fs::rename(&tmp, &a.out).map_err(|e| CliError::output(format!("{}: {e}", a.out.display())))?;
    write_sidecar(
        &a.out,
        json!({
            "command": "init-weights",
            "kind": "seeded stand-in (He-normal, zero bias)",
            "seed": a.seed,
            "input_gain": SEEDED_INPUT_GAIN,
        }),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}
