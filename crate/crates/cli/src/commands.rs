use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use polarmosaic::bench::{check_monotone, measure, synthetic_input, BenchOptions, BenchReport};
use polarmosaic::dataio::{
    load_manifest, read_plane, read_stack_dir, write_atomic, write_plane, write_png, write_stack_dir,
    write_stokes_dir, ImageFormat, ReadLimits, SceneRole,
};
use polarmosaic::stokes::{aolp_to_rgb, plane_to_gray};
use polarmosaic::train::{LossWeights, TrainConfig, Trainer};
use polarmosaic::{
    bilinear_demosaic, count_macs, count_params, evaluate, load_weights, mosaic as make_mosaic, save_weights,
    stokes_from_stack, tiled_forward, Error, MosaicImage, PfaPattern, PpdnConfig, PpdnWeights, Scalar,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sidecar::{self, ArtifactKind, Sidecar};
use crate::{
    BenchArgs, CountArgs, DemosaicArgs, EvalArgs, Method, MosaicArgs, NetworkArgs, RenderArgs, StokesArgs, TrainArgs,
};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub const THREADS_ENV: &str = "POLARMOSAIC_THREADS";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Lib(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(Error::Config(_)) => EXIT_USAGE,
            Failure::Lib(Error::Numeric(_)) => EXIT_NUMERIC,
            Failure::Data(_) | Failure::Lib(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

pub fn init_threads() -> CmdResult {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn network(args: &NetworkArgs) -> Result<PpdnConfig, Failure> {
    if let Some(name) = &args.preset {
        return PpdnConfig::preset(name)
            .ok_or_else(|| Failure::Usage(format!("unknown preset `{name}` (expected ppdn or ppdn-l)")));
    }
    match (args.m, args.n, args.k) {
        (Some(m), Some(n), Some(k)) => Ok(PpdnConfig::new(m, n, k)?),
        _ => Ok(PpdnConfig::PPDN),
    }
}

/// Pattern of a mosaic file: its sidecar wins, `flag` covers files without
/// one, and a disagreement between the two is a data error.
fn mosaic_pattern(path: &Path, flag: Option<PfaPattern>) -> Result<PfaPattern, Failure> {
    match (sidecar::read(path)?, flag) {
        (Some(meta), Some(p)) if meta.pattern != p => Err(Failure::Data(format!(
            "pattern mismatch: {} records {}, --pattern says {p}",
            sidecar::sidecar_path(path).display(),
            meta.pattern
        ))),
        (Some(meta), _) => Ok(meta.pattern),
        (None, Some(p)) => Ok(p),
        (None, None) => {
            log::warn!("{} has no sidecar; assuming pattern {}", path.display(), PfaPattern::imx250());
            Ok(PfaPattern::imx250())
        }
    }
}

fn load_checked_weights<T: Scalar>(path: &Path) -> Result<(PpdnWeights<T>, PfaPattern), Failure> {
    let (weights, pattern) = load_weights::<T>(path)?;
    if let Some(meta) = sidecar::read(path)? {
        if meta.kind != ArtifactKind::Weights {
            return Err(Failure::Data(format!(
                "{} does not describe a weight file",
                sidecar::sidecar_path(path).display()
            )));
        }
        if meta.pattern != pattern {
            return Err(Failure::Data(format!(
                "pattern mismatch: weight file stores {pattern}, its sidecar records {}",
                meta.pattern
            )));
        }
    }
    Ok((weights, pattern))
}

pub fn mosaic(a: MosaicArgs) -> CmdResult {
    let (stack, _) = read_stack_dir::<f64>(&a.input, &ReadLimits::default())?;
    let m = make_mosaic(&stack, a.pattern)?;
    write_plane(&a.output, m.plane())?;
    let mut meta = Sidecar::new(ArtifactKind::Mosaic, a.pattern);
    meta.source = Some(a.input.display().to_string());
    sidecar::write(&a.output, &meta)?;
    Ok(())
}

pub fn demosaic(a: DemosaicArgs) -> CmdResult {
    let pattern = mosaic_pattern(&a.input, a.pattern)?;
    let m = MosaicImage::new(read_plane::<f64>(&a.input, &ReadLimits::default())?, pattern)?;
    let stack = match a.method {
        Method::Bilinear => {
            if a.weights.is_some() {
                log::warn!("--weights is ignored by the bilinear method");
            }
            bilinear_demosaic(&m)
        }
        Method::Ppdn => {
            let path = a
                .weights
                .as_deref()
                .ok_or_else(|| Failure::Usage("--method ppdn requires --weights".into()))?;
            let (weights, wp) = load_checked_weights::<f64>(path)?;
            if wp != pattern {
                return Err(Failure::Data(format!(
                    "pattern mismatch: mosaic uses {pattern}, weights were trained for {wp}"
                )));
            }
            let radius = weights.config().receptive_radius();
            if !a.tile.is_single() && a.halo < radius {
                log::warn!("halo {} is below the receptive radius {radius}; tile seams may differ", a.halo);
            }
            let r = tiled_forward(&m, &weights, a.tile, a.halo)?;
            if a.coarse {
                r.x_cr
            } else {
                r.x_rr
            }
        }
    };
    let name = match a.name {
        Some(n) => n,
        None => a
            .input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scene")
            .to_string(),
    };
    write_stack_dir(&a.output, &name, &stack, ImageFormat::Pfm)?;
    Ok(())
}

pub fn stokes(a: StokesArgs) -> CmdResult {
    if !(a.eps >= 0.0) || !a.eps.is_finite() {
        return Err(Failure::Usage(format!("--eps must be a nonnegative real, got {}", a.eps)));
    }
    let (stack, _) = read_stack_dir::<f64>(&a.input, &ReadLimits::default())?;
    write_stokes_dir(&a.output, &stokes_from_stack(&stack, a.eps))?;
    Ok(())
}

pub fn render(a: RenderArgs) -> CmdResult {
    if !(a.s0_max > 0.0) || !a.s0_max.is_finite() {
        return Err(Failure::Usage(format!("--s0-max must be positive, got {}", a.s0_max)));
    }
    let limits = ReadLimits::default();
    let s0 = read_plane::<f64>(&a.input.join("s0.pfm"), &limits)?;
    let dolp = read_plane::<f64>(&a.input.join("dolp.pfm"), &limits)?;
    let aolp = read_plane::<f64>(&a.input.join("aolp.pfm"), &limits)?;
    fs::create_dir_all(&a.output).map_err(|e| Error::Io {
        path: a.output.clone(),
        source: e,
    })?;
    write_png(&a.output.join("s0.png"), &plane_to_gray(&s0, 0.0, a.s0_max))?;
    write_png(&a.output.join("dolp.png"), &plane_to_gray(&dolp, 0.0, 1.0))?;
    write_png(&a.output.join("aolp.png"), &aolp_to_rgb(&aolp).0)?;
    Ok(())
}

fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("weights");
    let name = match out.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}-step{step}.{ext}"),
        None => format!("{stem}-step{step}"),
    };
    out.with_file_name(name)
}

pub fn train(a: TrainArgs, deterministic: bool) -> CmdResult {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Json {
                path: p.clone(),
                source: e,
            })?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(patch => patch, batch => batch, lr => lr0, decay_every => decay_every, decay_factor => decay_factor,
        iters => total_iters, seed => seed, variant => variant, augment => augment, init => init,
        log_every => log_every);
    let mut lw = LossWeights::default();
    for (slot, v) in [(&mut lw.w1, a.w1), (&mut lw.w2, a.w2), (&mut lw.w3, a.w3), (&mut lw.w4, a.w4)] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    lw.validate()?;
    let net = network(&a.network)?;
    if a.checkpoint_every == Some(0) {
        return Err(Failure::Usage("--checkpoint-every must be positive".into()));
    }

    let manifest = load_manifest(&a.manifest)?;
    let entries: Vec<_> = manifest.with_role(SceneRole::Train).collect();
    let Some(first) = entries.first() else {
        return Err(Failure::Data(format!("{} lists no training scenes", a.manifest.display())));
    };
    if let Some(other) = entries.iter().find(|s| s.pattern != first.pattern) {
        return Err(Failure::Data(format!(
            "training scenes disagree on the filter pattern: `{}` uses {}, `{}` uses {}",
            first.id, first.pattern, other.id, other.pattern
        )));
    }
    match a.pattern {
        Some(p) if p != first.pattern => {
            return Err(Failure::Data(format!(
                "pattern mismatch: --pattern {p}, training scenes use {}",
                first.pattern
            )))
        }
        _ => cfg.pattern = first.pattern,
    }
    cfg.validate()?;

    let limits = ReadLimits::default();
    let scenes = entries
        .iter()
        .map(|s| manifest.load_scene::<f64>(s, &limits))
        .collect::<polarmosaic::Result<Vec<_>>>()?;
    log::info!(
        "training {net} on {} scenes for {} steps ({} threads)",
        scenes.len(),
        cfg.total_iters,
        rayon::current_num_threads()
    );

    let sidecar_for = |step: u64| {
        let mut meta = Sidecar::new(ArtifactKind::Weights, cfg.pattern);
        meta.source = Some(a.manifest.display().to_string());
        meta.network = Some(net);
        meta.train = Some(cfg.clone());
        meta.loss_weights = Some(lw);
        meta.step = Some(step);
        meta.deterministic = deterministic;
        meta
    };
    let save = |path: &Path, weights: &PpdnWeights<f64>, step: u64| -> CmdResult {
        save_weights(path, weights, cfg.pattern)?;
        sidecar::write(path, &sidecar_for(step))?;
        Ok(())
    };

    let mut trainer = Trainer::new(&scenes, net, cfg.clone(), lw)?;
    let mut log_text = String::new();
    let flush_log = |text: &str| -> CmdResult {
        if let Some(p) = &a.log {
            write_atomic(p, text.as_bytes())?;
        }
        Ok(())
    };
    while !trainer.is_done() {
        let entry = match trainer.step() {
            Ok(e) => e,
            Err(e) => {
                flush_log(&log_text)?;
                return Err(e.into());
            }
        };
        log_text.push_str(&serde_json::to_string(&entry).expect("log entries serialize"));
        log_text.push('\n');
        let done = entry.step + 1;
        if let (Some(s0), Some(dolp), Some(aolp)) = (entry.psnr_s0, entry.psnr_dolp, entry.psnr_aolp) {
            eprintln!(
                "step {done}/{} lr {:.2e} loss {:.5} psnr s0 {s0} dolp {dolp} aolp {aolp}",
                cfg.total_iters, entry.lr, entry.loss
            );
        }
        if a.checkpoint_every.is_some_and(|n| done % n == 0) && done < cfg.total_iters {
            save(&checkpoint_path(&a.output, done), trainer.weights(), done)?;
            flush_log(&log_text)?;
        }
    }
    save(&a.output, trainer.weights(), trainer.step_count())?;
    flush_log(&log_text)?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let limits = ReadLimits::default();
    let (truth, _) = read_stack_dir::<f64>(&a.truth, &limits)?;
    let (recon, _) = read_stack_dir::<f64>(&a.recon, &limits)?;
    let report = evaluate(&truth, &recon, a.border)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        bytes.push(b'\n');
        write_atomic(p, &bytes)?;
    }
    Ok(())
}

/// Published parameter count (thousands) and GMACs at 2048x2448.
fn reference_counts(cfg: &PpdnConfig) -> Option<(&'static str, &'static str)> {
    match cfg.preset_name()? {
        "ppdn" => Some(("22.4K", "112")),
        "ppdn-l" => Some(("450.8K", "2260")),
        _ => None,
    }
}

pub fn count(a: CountArgs) -> CmdResult {
    let cfg = network(&a.network)?;
    cfg.validate()?;
    let params = count_params(&cfg);
    let gmacs = count_macs(&cfg, a.height, a.width) as f64 / 1e9;
    let reference = reference_counts(&cfg);
    let label = cfg.preset_name().map(|p| format!("{p} ({cfg})")).unwrap_or_else(|| cfg.to_string());
    println!("network {label}");
    match reference {
        Some((p, _)) => println!("params {params}, {:.1}K (reference {p})", params as f64 / 1e3),
        None => println!("params {params}, {:.1}K", params as f64 / 1e3),
    }
    match reference {
        Some((_, g)) if (a.height, a.width) == (2048, 2448) => {
            println!("GMACs {gmacs:.1} at {}x{} (reference {g})", a.height, a.width)
        }
        _ => println!("GMACs {gmacs:.1} at {}x{}", a.height, a.width),
    }
    println!("receptive radius {}", cfg.receptive_radius());
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("size `{s}` is not of the form HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h = h.trim().parse().map_err(|_| bad())?;
    let w = w.trim().parse().map_err(|_| bad())?;
    Ok((h, w))
}

pub fn bench(a: BenchArgs, deterministic: bool) -> CmdResult {
    let opts = BenchOptions {
        tiles: a.tile,
        halo: a.halo,
        warmup: a.warmup,
        iters: a.iters,
        memory_budget: a.memory_mb.saturating_mul(1 << 20),
        deterministic,
    };
    let (nets, weight_pattern): (Vec<PpdnWeights<f32>>, Option<PfaPattern>) = match &a.weights {
        Some(p) => {
            let (w, pattern) = load_checked_weights(p)?;
            (vec![w], Some(pattern))
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let nets = a
                .preset
                .iter()
                .map(|name| {
                    let cfg = PpdnConfig::preset(name)
                        .ok_or_else(|| Failure::Usage(format!("unknown preset `{name}` (expected ppdn or ppdn-l)")))?;
                    Ok(PpdnWeights::init_uniform(cfg, &mut rng))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            (nets, None)
        }
    };

    let inputs: Vec<MosaicImage<f32>> = match &a.from_file {
        Some(p) => {
            let pattern = mosaic_pattern(p, weight_pattern)?;
            vec![MosaicImage::new(read_plane::<f32>(p, &ReadLimits::default())?, pattern)?]
        }
        None => a
            .size
            .iter()
            .map(|s| {
                let (h, w) = parse_size(s)?;
                Ok(synthetic_input(h, w, weight_pattern.unwrap_or_else(PfaPattern::imx250), a.seed)?)
            })
            .collect::<Result<Vec<_>, Failure>>()?,
    };

    let mut reports: Vec<BenchReport> = Vec::new();
    for w in &nets {
        for input in &inputs {
            let r = measure(w, input, &opts, |ev| log::debug!("{ev:?}"))?;
            println!("{}", r.to_text());
            reports.push(r);
        }
    }
    let check = check_monotone(&reports, 0.05);
    for v in &check.violations {
        eprintln!("warning: latency not monotone in workload: {v}");
    }
    if let Some(p) = &a.json {
        let mut bytes = serde_json::to_vec_pretty(&reports).expect("reports serialize");
        bytes.push(b'\n');
        write_atomic(p, &bytes)?;
    }
    Ok(())
}
