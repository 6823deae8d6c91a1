//! Command-line surface: encode and decode point clouds, run the latent demo,
//! interoperability trials and overhead sweeps.
//!
//! Exit codes: 0 exact or success, 1 I/O, 2 decode mismatch or failure,
//! 3 malformed container, 4 configuration rejected, 5 unreadable input file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::container::{GridDesc, GuardedStream, PayloadHeader};
use crate::error::{Error, Result};
use crate::hyperprior::{self, LatentGrid};
use crate::octree::{self, ply, synth_cloud, CloudKind, VoxelCloud};
use crate::platform_sim::{PerturbDist, Perturbation};
use crate::safeguard::GuardMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_INPUT: i32 = 5;

pub const CSV_HEADER: [&str; 11] = [
    "payload",
    "kind",
    "n",
    "q",
    "epsilon",
    "seed",
    "main_bytes",
    "guard_bytes",
    "overhead_pct",
    "p0",
    "exact",
];

#[derive(Debug, Parser)]
#[command(name = "reproguard", version, about = "Reproducible entropy decoding under bounded cross-platform error")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic voxel cloud as PLY.
    SynthPc(SynthPcArgs),
    /// Encode a PLY point cloud into an .rgd container.
    EncodePc(EncodePcArgs),
    /// Decode an .rgd point cloud, optionally on a perturbed platform.
    DecodePc(DecodePcArgs),
    /// Encode and decode synthetic hyperprior latents.
    DemoImage(DemoImageArgs),
    /// Repeated seeded encode/decode pairs on a perturbed platform.
    Interop(InteropArgs),
    /// Overhead over a grid of epsilons and step sizes, as CSV (and SVG).
    Sweep(SweepArgs),
    /// Render a sweep CSV as an SVG line chart.
    Plot(PlotArgs),
    /// Print the header of an .rgd container.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Payload {
    Pc,
    Image,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    /// Maximum injected error e.
    #[arg(long = "perturb-e", default_value_t = 0.0)]
    pub e: f64,
    /// none, uniform or adversarial.
    #[arg(long = "perturb-dist", default_value = "uniform")]
    pub dist: PerturbDist,
    #[arg(id = "perturb_seed", long = "perturb-seed", default_value_t = 0)]
    pub seed: u64,
}

impl PerturbArgs {
    fn build(&self) -> Result<Perturbation> {
        let dist = if self.e == 0.0 { PerturbDist::None } else { self.dist };
        Perturbation::new(self.e, dist, self.seed)
    }
}

#[derive(Debug, Args)]
pub struct SynthPcArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "dense")]
    pub kind: CloudKind,
    #[arg(long, default_value_t = 10)]
    pub depth: u8,
    #[arg(long, default_value_t = 100_000)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EncodePcArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "center")]
    pub mode: GuardMode,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Probability grid step is 1/k.
    #[arg(long, default_value_t = 250)]
    pub k: u32,
    /// Bit depth; required for float coordinates.
    #[arg(long)]
    pub depth: Option<u8>,
    #[arg(long)]
    pub no_protect: bool,
}

#[derive(Debug, Args)]
pub struct DecodePcArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Compare against this PLY and report EXACT or DECODE MISMATCH.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub perturb: PerturbArgs,
}

#[derive(Debug, Args)]
pub struct DemoImageArgs {
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "center")]
    pub mode: GuardMode,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long)]
    pub no_protect: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub perturb: PerturbArgs,
}

#[derive(Debug, Args)]
pub struct InteropArgs {
    #[arg(long, value_enum, default_value = "pc")]
    pub payload: Payload,
    #[arg(long, default_value_t = 20)]
    pub trials: u64,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Maximum platform error; defaults to the payload's measured preset.
    #[arg(long)]
    pub e: Option<f64>,
    #[arg(long, default_value = "uniform")]
    pub dist: PerturbDist,
    #[arg(long, default_value = "center")]
    pub mode: GuardMode,
    #[arg(long)]
    pub no_protect: bool,
    #[arg(long, default_value_t = 250)]
    pub k: u32,
    #[arg(long, default_value_t = 10)]
    pub depth: u8,
    #[arg(long, default_value_t = 20_000)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "pc")]
    pub payload: Payload,
    #[arg(long, value_delimiter = ',', default_value = "1e-5,5e-6,1e-6,5e-7,1e-7")]
    pub epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "250,125")]
    pub ks: Vec<u32>,
    /// Comma-separated seeds; an empty value gives a header-only CSV.
    #[arg(long, value_delimiter = ',', num_args = 0..=1, default_value = "1")]
    pub seeds: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value = "center")]
    pub mode: GuardMode,
    #[arg(long, default_value = "dense")]
    pub kind: CloudKind,
    #[arg(long, default_value_t = 10)]
    pub depth: u8,
    #[arg(long, default_value_t = 100_000)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
}

/// Map an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Container(_) => EXIT_MALFORMED,
        Error::ConfigRejected(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Ply(_) => EXIT_INPUT,
        Error::MalformedStream(_)
        | Error::Truncated
        | Error::CountMismatch { .. }
        | Error::Domain(_)
        | Error::InvalidIndex { .. } => EXIT_MISMATCH,
    }
}

fn label(err: &Error) -> &'static str {
    match exit_code(err) {
        EXIT_IO => "IO ERROR",
        EXIT_MISMATCH => "DECODE FAILURE",
        EXIT_MALFORMED => "MALFORMED STREAM",
        EXIT_CONFIG => "CONFIG REJECTED",
        _ => "INPUT ERROR",
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}: {e}", label(&e));
            exit_code(&e)
        }
    }
}

pub fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::SynthPc(a) => synth_pc(&a),
        Command::EncodePc(a) => encode_pc(&a),
        Command::DecodePc(a) => decode_pc(&a),
        Command::DemoImage(a) => demo_image(&a),
        Command::Interop(a) => interop(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Plot(a) => {
            let svg = svg_from_csv(&fs::read_to_string(&a.csv)?)?;
            fs::write(&a.out, svg)?;
            Ok(EXIT_OK)
        }
        Command::Inspect(a) => inspect(&a),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("REPROGUARD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("REPROGUARD_THREADS=`{v}` is not a count")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::InvalidInput(e.to_string()))
}

fn read_stream(path: &PathBuf) -> Result<GuardedStream> {
    Ok(GuardedStream::read(&fs::read(path)?)?)
}

fn synth_pc(a: &SynthPcArgs) -> Result<i32> {
    let cloud = synth_cloud(a.kind, a.depth, a.count, a.seed)?;
    ply::write_ply(&a.output, &cloud)?;
    println!("wrote {} voxels at depth {} to {}", cloud.len(), cloud.bit_depth(), a.output.display());
    Ok(EXIT_OK)
}

fn encode_pc(a: &EncodePcArgs) -> Result<i32> {
    let cloud = ply::read_cloud(&a.input, a.depth)?;
    let cfg = octree::octree_config(a.k, a.epsilon, a.mode)?;
    let stream = octree::encode(&cloud, &cfg, !a.no_protect)?;
    fs::write(&a.output, stream.write()?)?;
    let bpp = 8.0 * stream.main.len() as f64 / cloud.len() as f64;
    println!("points {}", cloud.len());
    println!("main {} bytes, {bpp:.4} bpp", stream.main.len());
    if stream.is_protected() {
        println!(
            "safeguard {} bytes ({} flags), overhead {:.4}%",
            stream.guard_bytes(),
            stream.flag_count,
            stream.overhead_pct()
        );
    } else {
        println!("safeguard disabled");
    }
    println!("total {} bytes", stream.total_len());
    Ok(EXIT_OK)
}

fn decode_pc(a: &DecodePcArgs) -> Result<i32> {
    let stream = read_stream(&a.input)?;
    if !matches!(stream.payload, PayloadHeader::Octree { .. }) {
        println!("MALFORMED STREAM: not a point cloud container");
        return Ok(EXIT_MALFORMED);
    }
    if let Err(e) = octree::config_from_stream(&stream) {
        println!("MALFORMED STREAM: {e}");
        return Ok(EXIT_MALFORMED);
    }
    let perturb = a.perturb.build()?;
    let decoded = match octree::decode(&stream, &perturb) {
        Ok(c) => c,
        Err(e) => {
            println!("DECODE FAILURE: {e}");
            return Ok(EXIT_MISMATCH);
        }
    };
    if let Some(out) = &a.output {
        ply::write_ply(out, &decoded)?;
    }
    match &a.reference {
        Some(r) => {
            let reference = ply::read_cloud(r, Some(decoded.bit_depth()))?;
            Ok(report_match(reference == decoded, decoded.len()))
        }
        None => {
            println!("DECODED {} points", decoded.len());
            Ok(EXIT_OK)
        }
    }
}

fn report_match(exact: bool, count: usize) -> i32 {
    if exact {
        println!("EXACT ({count} values)");
        EXIT_OK
    } else {
        println!("DECODE MISMATCH");
        EXIT_MISMATCH
    }
}

fn demo_image(a: &DemoImageArgs) -> Result<i32> {
    let lat = hyperprior::synth_latents(a.height, a.width, a.channels, a.seed)?;
    let cfg = hyperprior::hyperprior_config(a.epsilon, a.mode)?;
    let stream = hyperprior::encode(&lat, &cfg, !a.no_protect)?;
    let bytes = stream.write()?;
    if let Some(out) = &a.output {
        fs::write(out, &bytes)?;
    }
    let stream = GuardedStream::read(&bytes)?;
    let pixels = (a.height * a.width) as f64;
    println!("latents {}x{}x{}", a.height, a.width, a.channels);
    println!("main {} bytes, {:.4} bits per latent position", stream.main.len(), 8.0 * stream.main.len() as f64 / pixels);
    if stream.is_protected() {
        println!("safeguard {} bytes, overhead {:.4}%", stream.guard_bytes(), stream.overhead_pct());
    } else {
        println!("safeguard disabled");
    }
    match hyperprior::decode(&stream, &a.perturb.build()?) {
        Ok(d) => Ok(report_match(d.symbols == lat.quantized(), d.symbols.len())),
        Err(e) => {
            println!("DECODE FAILURE: {e}");
            Ok(EXIT_MISMATCH)
        }
    }
}

/// Outcome of one seeded encode/decode pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Exact,
    Mismatch,
    Failure,
}

fn pc_trial(cloud: &VoxelCloud, cfg: &crate::GuardConfig, protect: bool, perturb: &Perturbation) -> Result<TrialOutcome> {
    let s = GuardedStream::read(&octree::encode(cloud, cfg, protect)?.write()?)?;
    Ok(match octree::decode(&s, perturb) {
        Ok(c) if c == *cloud => TrialOutcome::Exact,
        Ok(_) => TrialOutcome::Mismatch,
        Err(_) => TrialOutcome::Failure,
    })
}

fn image_trial(lat: &LatentGrid, cfg: &crate::GuardConfig, protect: bool, perturb: &Perturbation) -> Result<TrialOutcome> {
    let s = GuardedStream::read(&hyperprior::encode(lat, cfg, protect)?.write()?)?;
    Ok(match hyperprior::decode(&s, perturb) {
        Ok(d) if d.symbols == lat.quantized() => TrialOutcome::Exact,
        Ok(_) => TrialOutcome::Mismatch,
        Err(_) => TrialOutcome::Failure,
    })
}

fn interop(a: &InteropArgs) -> Result<i32> {
    let (eps, e) = match a.payload {
        Payload::Pc => (a.epsilon.unwrap_or(1e-6), a.e.unwrap_or(crate::platform_sim::PCC_GPU_E_MAX)),
        Payload::Image => (a.epsilon.unwrap_or(1e-4), a.e.unwrap_or(crate::platform_sim::IMAGE_GPU_E_MAX)),
    };
    let pool = thread_pool()?;
    let outcomes: Vec<TrialOutcome> = match a.payload {
        Payload::Pc => {
            let cfg = octree::octree_config(a.k, eps, a.mode)?;
            let cloud = synth_cloud(CloudKind::Dense, a.depth, a.count, a.seed)?;
            pool.install(|| {
                (0..a.trials)
                    .into_par_iter()
                    .map(|t| pc_trial(&cloud, &cfg, !a.no_protect, &Perturbation::new(e, a.dist, t)?))
                    .collect::<Result<_>>()
            })?
        }
        Payload::Image => {
            let cfg = hyperprior::hyperprior_config(eps, a.mode)?;
            pool.install(|| {
                (0..a.trials)
                    .into_par_iter()
                    .map(|t| {
                        let lat = hyperprior::synth_latents(64, 64, 8, a.seed.wrapping_add(t))?;
                        image_trial(&lat, &cfg, !a.no_protect, &Perturbation::new(e, a.dist, t)?)
                    })
                    .collect::<Result<_>>()
            })?
        }
    };
    let exact = outcomes.iter().filter(|&&o| o == TrialOutcome::Exact).count();
    let failures = outcomes.iter().filter(|&&o| o == TrialOutcome::Failure).count();
    println!(
        "exact {exact}/{} (mismatch {}, decode failure {failures}); epsilon {eps:e}, e {e:e}, {}",
        a.trials,
        a.trials as usize - exact - failures,
        a.dist
    );
    let in_contract = e < eps && !a.no_protect;
    if !in_contract {
        println!("OUT OF CONTRACT");
        return Ok(EXIT_OK);
    }
    Ok(if exact as u64 == a.trials { EXIT_OK } else { EXIT_MISMATCH })
}

/// One line of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub payload: &'static str,
    pub kind: String,
    pub n: u32,
    pub q: String,
    pub epsilon: f64,
    pub seed: u64,
    /// `None` when the configuration was rejected and the row skipped.
    pub measured: Option<SweepMeasurement>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMeasurement {
    pub main_bytes: usize,
    pub guard_bytes: usize,
    pub overhead_pct: f64,
    pub p0: f64,
    pub exact: bool,
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.payload.to_string(),
            self.kind.clone(),
            self.n.to_string(),
            self.q.clone(),
            format!("{:e}", self.epsilon),
            self.seed.to_string(),
        ];
        match &self.measured {
            Some(m) => r.extend([
                m.main_bytes.to_string(),
                m.guard_bytes.to_string(),
                format!("{:.6}", m.overhead_pct),
                format!("{:.8}", m.p0),
                m.exact.to_string(),
            ]),
            None => r.extend(["", "", "", "", "skipped"].map(String::from)),
        }
        r
    }
}

fn measure(s: GuardedStream, exact: impl FnOnce(&GuardedStream) -> bool) -> Result<SweepMeasurement> {
    let s = GuardedStream::read(&s.write()?)?;
    Ok(SweepMeasurement {
        main_bytes: s.main.len(),
        guard_bytes: s.guard_bytes(),
        overhead_pct: s.overhead_pct(),
        p0: f64::from(s.p0_q16) / 65536.0,
        exact: exact(&s),
    })
}

/// Compute sweep rows ordered by (step, epsilon, seed).
pub fn sweep_rows(a: &SweepArgs, seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let pool = thread_pool()?;
    pool.install(|| match a.payload {
        Payload::Pc => {
            let clouds: Vec<VoxelCloud> = seeds
                .par_iter()
                .map(|&s| synth_cloud(a.kind, a.depth, a.count, s))
                .collect::<Result<_>>()?;
            let jobs: Vec<(u32, f64, usize)> = a
                .ks
                .iter()
                .flat_map(|&k| a.epsilons.iter().flat_map(move |&e| (0..seeds.len()).map(move |i| (k, e, i))))
                .collect();
            jobs.par_iter()
                .map(|&(k, eps, i)| {
                    let cloud = &clouds[i];
                    let mut row = SweepRow {
                        payload: "pc",
                        kind: a.kind.to_string(),
                        n: u32::from(a.depth),
                        q: format!("{}", 1.0 / f64::from(k.max(1))),
                        epsilon: eps,
                        seed: seeds[i],
                        measured: None,
                    };
                    let cfg = match octree::octree_config(k, eps, a.mode) {
                        Ok(c) => c,
                        Err(e) => {
                            eprintln!("warning: skipping k={k}, epsilon={eps:e}: {e}");
                            return Ok(row);
                        }
                    };
                    let perturb = Perturbation::new(eps / 2.0, PerturbDist::Uniform, seeds[i])?;
                    let s = octree::encode(cloud, &cfg, true)?;
                    row.measured = Some(measure(s, |s| {
                        octree::decode(s, &perturb).map(|c| c == *cloud).unwrap_or(false)
                    })?);
                    Ok(row)
                })
                .collect()
        }
        Payload::Image => {
            let lats: Vec<LatentGrid> = seeds
                .par_iter()
                .map(|&s| hyperprior::synth_latents(64, 64, 8, s))
                .collect::<Result<_>>()?;
            let jobs: Vec<(f64, usize)> =
                a.epsilons.iter().flat_map(|&e| (0..seeds.len()).map(move |i| (e, i))).collect();
            jobs.par_iter()
                .map(|&(eps, i)| {
                    let lat = &lats[i];
                    let mut row = SweepRow {
                        payload: "image",
                        kind: "latent64x64".into(),
                        n: 8,
                        q: format!("table{}", hyperprior::SCALE_TABLE_ID),
                        epsilon: eps,
                        seed: seeds[i],
                        measured: None,
                    };
                    let cfg = match hyperprior::hyperprior_config(eps, a.mode) {
                        Ok(c) => c,
                        Err(e) => {
                            eprintln!("warning: skipping epsilon={eps:e}: {e}");
                            return Ok(row);
                        }
                    };
                    let perturb = Perturbation::new(eps / 2.0, PerturbDist::Uniform, seeds[i])?;
                    let s = hyperprior::encode(lat, &cfg, true)?;
                    row.measured = Some(measure(s, |s| {
                        hyperprior::decode(s, &perturb).map(|d| d.symbols == lat.quantized()).unwrap_or(false)
                    })?);
                    Ok(row)
                })
                .collect()
        }
    })
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sweep(a: &SweepArgs) -> Result<i32> {
    let seeds = a
        .seeds
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map_err(|_| Error::InvalidInput(format!("bad seed `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let rows = sweep_rows(a, &seeds)?;
    let csv = rows_to_csv(&rows)?;
    fs::write(&a.out, &csv)?;
    if let Some(svg) = &a.svg {
        fs::write(svg, svg_from_csv(&csv)?)?;
    }
    let measured: Vec<_> = rows.iter().filter_map(|r| r.measured).collect();
    let exact = measured.iter().filter(|m| m.exact).count();
    println!("{} rows, {} skipped, {exact}/{} exact", rows.len(), rows.len() - measured.len(), measured.len());
    Ok(if exact == measured.len() { EXIT_OK } else { EXIT_MISMATCH })
}

/// Line chart of overhead against epsilon, one series per (payload, q),
/// averaged over seeds. Reads only the CSV.
pub fn svg_from_csv(csv_text: &str) -> Result<String> {
    let bad = |m: String| Error::InvalidInput(m);
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("CSV lacks column `{name}`")))
    };
    let (c_payload, c_q, c_eps, c_ovh) = (col("payload")?, col("q")?, col("epsilon")?, col("overhead_pct")?);

    let mut series: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let (Ok(eps), Ok(ovh)) = (rec[c_eps].parse::<f64>(), rec[c_ovh].parse::<f64>()) else {
            continue;
        };
        if eps.is_nan() || eps <= 0.0 {
            continue;
        }
        let name = format!("{} q={}", &rec[c_payload], &rec[c_q]);
        let e = series.entry(name).or_default().entry(eps.to_bits()).or_insert((eps, 0.0, 0));
        e.1 += ovh;
        e.2 += 1;
    }

    let (w, h, m) = (640.0, 400.0, 60.0);
    let points: Vec<(String, Vec<(f64, f64)>)> = series
        .into_iter()
        .map(|(k, v)| (k, v.into_values().map(|(e, s, n)| (e.log10(), s / n as f64)).collect()))
        .collect();
    let all = points.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (-7.0, -5.0);
    }
    if x1 - x0 < 1e-9 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    let y1 = if y1 > 0.0 { y1 * 1.1 } else { 1.0 };
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - y / y1 * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">log10(epsilon)</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">overhead %</text>"#, h / 2.0, h / 2.0);
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let y = y1 * f64::from(i) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.2}</text>"#, px(x), h - m + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, m - 4.0, py(y) + 4.0);
    }
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    for (i, (name, pts)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, w - m - 120.0, xml_escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn inspect(a: &InspectArgs) -> Result<i32> {
    let s = read_stream(&a.input)?;
    println!("mode {}", s.mode);
    println!("epsilon {:e}", s.epsilon);
    match s.grid {
        GridDesc::Uniform { step, offset } => println!("grid uniform q={step} s={offset}"),
        GridDesc::Table(id) => println!("grid table {id}"),
    }
    println!("p0_q16 {}", s.p0_q16);
    println!("flags {}", s.flag_count);
    match &s.payload {
        PayloadHeader::Octree { bit_depth, point_count } => {
            println!("payload octree, depth {bit_depth}, {point_count} points")
        }
        PayloadHeader::Hyperprior { height, width, channels, scale_table_id, z } => println!(
            "payload latents {height}x{width}x{channels}, table {scale_table_id}, {} side values",
            z.len()
        ),
        PayloadHeader::Raw { value_count } => println!("payload raw, {value_count} values"),
    }
    println!("header {} bytes, safeguard {} bytes, main {} bytes", s.header_len(), s.safeguard.len(), s.main.len());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_definitions_are_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn svg_is_derived_from_csv() {
        let csv = "payload,kind,n,q,epsilon,seed,main_bytes,guard_bytes,overhead_pct,p0,exact\n\
                   pc,dense,10,0.004,1e-5,1,1000,20,2.0,0.99,true\n\
                   pc,dense,10,0.004,1e-6,1,1000,8,0.8,0.999,true\n\
                   pc,dense,10,0.004,1e-7,1,,,,,skipped\n";
        let svg = svg_from_csv(csv).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg, svg_from_csv(csv).unwrap());
        assert!(svg_from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&Error::Io(std::io::Error::other("x"))),
            exit_code(&Error::Truncated),
            exit_code(&Error::Container(crate::ContainerError::BadMagic)),
            exit_code(&Error::ConfigRejected(String::new())),
            exit_code(&Error::Ply(ply::PlyError::MissingMagic)),
        ];
        assert_eq!(codes, [1, 2, 3, 4, 5]);
    }
}
