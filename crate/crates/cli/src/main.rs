//! `checkzone` command line: generate a synthetic corpus, segment one check,
//! read a bank code, or score a corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use checkzone::bankid::{ReferenceSet, Registry};
use checkzone::efd::DEFAULT_HARMONICS;
use checkzone::eval::{evaluate_corpus, render_tables};
use checkzone::handwriting::{
    PawParams, DEFAULT_INK_TOLERANCE, DEFAULT_NOISE_FLOOR, DEFAULT_PAW_H_LEVEL, DEFAULT_PAW_V_LEVEL,
};
use checkzone::io::{read_image, write_png};
use checkzone::pipeline::{prepare, read_band, read_code, segment_check, PipelineParams};
use checkzone::projection::BandParams;
use checkzone::preprocess::{DEFAULT_SKEW_RANGE_DEG, DEFAULT_SKEW_STEP_DEG, DEFAULT_TRIM_MARGIN};
use checkzone::raster::{DEFAULT_DPI, DEFAULT_HISTOGRAM_BITS};
use checkzone::synthgen::{write_corpus, CorpusSpec, NoiseSpec, DEFAULT_CHECKS_PER_BANK, DEFAULT_SIGMA, DEFAULT_SPECKLE};
use checkzone::{Error, Result};

const SIDECAR_SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "checkzone", version, about = "Extract handwritten zones from color bank-check images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus: <out>/<bank>/<seed>/{template.png, filled.png, gt.json}
    Generate(GenerateArgs),
    /// Run the full pipeline on one check and write one PNG and JSON per zone
    Segment(SegmentArgs),
    /// Read the bank code from the marking band and look up the bank
    RecognizeCode(RecognizeArgs),
    /// Score the pipeline on a generated corpus
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct RegistryArgs {
    /// Bank registry JSON; the built-in six banks when omitted
    #[arg(long)]
    registry: Option<PathBuf>,
}

impl RegistryArgs {
    fn load(&self) -> Result<Registry> {
        match &self.registry {
            Some(p) => Registry::load(p),
            None => Ok(Registry::default()),
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Skew search half-range in degrees
    #[arg(long, default_value_t = DEFAULT_SKEW_RANGE_DEG)]
    skew_range: f64,
    /// Skew search step in degrees
    #[arg(long, default_value_t = DEFAULT_SKEW_STEP_DEG)]
    skew_step: f64,
    /// Blank margin kept around the ink when trimming, in pixels
    #[arg(long, default_value_t = DEFAULT_TRIM_MARGIN)]
    trim_margin: usize,
    /// Row activity threshold for the band, as a fraction of the width
    #[arg(long, default_value_t = 0.005)]
    band_noise_floor: f64,
    /// Blank rows required above the band, as a fraction of its nominal height
    #[arg(long, default_value_t = 0.15)]
    band_min_gap: f64,
    /// Character cut at stick spacings of this many pitches
    #[arg(long, default_value_t = 2.5)]
    char_gap_factor: f64,
    /// Color histogram depth per channel
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BITS)]
    histogram_bits: u8,
    /// Minimum histogram gain for a handwriting color bin
    #[arg(long, default_value_t = DEFAULT_NOISE_FLOOR)]
    noise_floor: u64,
    /// Per-channel band around the handwriting color
    #[arg(long, default_value_t = DEFAULT_INK_TOLERANCE)]
    ink_tolerance: u8,
    /// Horizontal PAW bridging level
    #[arg(long, default_value_t = DEFAULT_PAW_H_LEVEL)]
    paw_h_level: usize,
    /// Vertical PAW bridging level
    #[arg(long, default_value_t = DEFAULT_PAW_V_LEVEL)]
    paw_v_level: usize,
    /// Glyph table JSON; references are cached beside it
    #[arg(long)]
    glyph_table: Option<PathBuf>,
    /// Resolution assumed for images without one
    #[arg(long, default_value_t = DEFAULT_DPI)]
    dpi: f64,
}

impl PipelineArgs {
    fn params(&self) -> PipelineParams {
        PipelineParams {
            skew_range_deg: self.skew_range,
            skew_step_deg: self.skew_step,
            trim_margin: self.trim_margin,
            band: BandParams {
                noise_floor: self.band_noise_floor,
                min_gap: self.band_min_gap,
                char_gap_factor: self.char_gap_factor,
            },
            histogram_bits: self.histogram_bits,
            noise_floor: self.noise_floor,
            ink_tolerance: self.ink_tolerance,
            paw: PawParams { h_level: self.paw_h_level, v_level: self.paw_v_level },
            ..PipelineParams::default()
        }
    }

    fn references(&self) -> Result<ReferenceSet> {
        match &self.glyph_table {
            Some(p) => ReferenceSet::load_or_build(p, DEFAULT_HARMONICS),
            None => ReferenceSet::default_set(),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    /// Comma-separated bank names or codes; all banks when omitted
    #[arg(long, value_delimiter = ',')]
    banks: Vec<String>,
    /// Filled checks per bank
    #[arg(long, default_value_t = DEFAULT_CHECKS_PER_BANK)]
    count: usize,
    #[arg(long, default_value_t = DEFAULT_DPI)]
    dpi: f64,
    /// First seed; checks use consecutive seeds
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Gaussian scanner noise per channel
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Speckle blobs per pixel
    #[arg(long, default_value_t = DEFAULT_SPECKLE)]
    speckle: f64,
    /// Skew applied to filled checks, degrees counterclockwise
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    skew: f64,
}

#[derive(Args)]
struct SegmentArgs {
    /// Filled check image (PNG or PPM)
    image: PathBuf,
    /// Output directory for zone images and sidecars
    #[arg(long)]
    out: PathBuf,
    /// Blank template of the check's bank; taken from the registry when omitted
    #[arg(long)]
    template: Option<PathBuf>,
    #[command(flatten)]
    registry: RegistryArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Check image (PNG or PPM)
    image: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Corpus written by `generate`
    corpus: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write the metrics as JSON here
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads; all cores when omitted
    #[arg(long)]
    jobs: Option<usize>,
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let registry = a.registry.load()?;
    let corpus = CorpusSpec {
        banks: a.banks.clone(),
        count: a.count,
        base_seed: a.seed,
        dpi: a.dpi,
        noise: NoiseSpec { sigma: a.sigma, speckle_density: a.speckle },
        skew_deg: a.skew,
    };
    let counts = write_corpus(&a.out, &registry, &corpus)?;
    let mut total = 0;
    for (bank, n) in &counts {
        println!("{bank:<8} {n}");
        total += n;
    }
    println!("{:<8} {total}", "total");
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let registry = a.registry.load()?;
    let params = a.pipeline.params();
    let refs = a.pipeline.references()?;
    let filled = read_image(&a.image, a.pipeline.dpi)?;
    let template = a.template.as_ref().map(|p| read_image(p, a.pipeline.dpi)).transpose()?;
    let seg = segment_check(&filled, template.as_ref(), &registry, &refs, &params)?;
    fs::create_dir_all(&a.out)?;
    let img = &seg.prepared.image;
    for z in &seg.handwriting.zones {
        let name = z.kind.name();
        write_png(&a.out.join(format!("{name}.png")), &img.crop(z.improved_rect)?)?;
        let sidecar = json!({
            "schema": SIDECAR_SCHEMA,
            "source": a.image,
            "bank_code": seg.bank.code,
            "bank_name": seg.bank.name,
            "zone": name,
            "original_rect": z.original_rect,
            "improved_rect": z.improved_rect,
            "components": z.components.iter().map(|c| json!({"rect": c.rect, "pixels": c.pixels})).collect::<Vec<_>>(),
            "ink_color": seg.handwriting.color,
            "skew_deg": seg.prepared.skew.angle_deg,
            "trim": seg.prepared.trim,
            "dpi": img.dpi(),
            "params": params,
        });
        fs::write(a.out.join(format!("{name}.json")), serde_json::to_string_pretty(&sidecar)?)?;
    }
    println!("bank {} ({}), {} zones written to {}", seg.bank.name, seg.bank.code, seg.handwriting.zones.len(), a.out.display());
    Ok(())
}

fn recognize(a: &RecognizeArgs) -> Result<()> {
    let registry = a.registry.load()?;
    let params = a.pipeline.params();
    let refs = a.pipeline.references()?;
    let img = read_image(&a.image, a.pipeline.dpi)?;
    let prep = prepare(&img, &params)?;
    let (reading, band) = read_band(&prep, &params)?;
    let code = read_code(&band, &reading, &params, &refs)?;
    let bank = registry.lookup(&code.code);
    let out = json!({
        "schema": SIDECAR_SCHEMA,
        "bank_code": code.code,
        "bank_name": bank.map(|b| b.name.clone()),
        "characters": reading.chars.len(),
        "code_boxes": code.boxes,
        "distances": code.digits.iter().map(|d| d.distances).collect::<Vec<_>>(),
        "params": params,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    match bank {
        Some(_) => Ok(()),
        None => Err(Error::UnknownBank(code.code)),
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if let Some(n) = a.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let registry = a.registry.load()?;
    let params = a.pipeline.params();
    let refs = a.pipeline.references()?;
    let (metrics, warnings) = evaluate_corpus(&a.corpus, &registry, &refs, &params)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if metrics.checks == 0 {
        eprintln!("warning: no checks found under {}", a.corpus.display());
    }
    print!("{}", render_tables(&metrics));
    let report = json!({ "schema": SIDECAR_SCHEMA, "metrics": metrics, "params": params });
    let text = serde_json::to_string_pretty(&report)?;
    match &a.json {
        Some(p) => write_text(p, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Segment(a) => segment(a),
        Command::RecognizeCode(a) => recognize(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
