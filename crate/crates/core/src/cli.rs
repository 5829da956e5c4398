//! Command-line front end. Every command reads a [`RunConfig`], applies the
//! global flag overrides, and writes its files once at the end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibration::{evaluate_cases, shot_seed, sweep_coupling, CaseSet};
use crate::config::RunConfig;
use crate::dynamics::run_inference_traced;
use crate::encoding::{extract_fragment, Fragment25, Kernel25};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::formats::{read_image, write_kernel_csv};
use crate::harness::{
    build_standard_suite, compare_maps, convolve, energy_per_inference, report, ConvMode, Report,
    ScatterRow,
};

#[derive(Debug, Parser)]
#[command(name = "osc-conn", version, about = "Coupled-oscillator convolution simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Configuration file (flat key = value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Ring length preset.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["3", "5", "7"]))]
    pub stages: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the Gabor filter bank CSV.
    GenKernels,
    /// Sweep the coupling on the standard suite and store the best value.
    Calibrate,
    /// Run a single inference and export its detector trace.
    Infer(InferArgs),
    /// Convolve an image with every bank kernel, ideal and through the array.
    Convolve(ConvolveArgs),
    /// Energy and delay per inference.
    Report,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Bank index of the kernel.
    #[arg(long, default_value_t = 0)]
    pub kernel: usize,

    /// Use bank kernel N as the fragment.
    #[arg(long, conflicts_with = "image")]
    pub fragment_kernel: Option<usize>,

    /// Image to take the fragment from. Without this or --fragment-kernel the
    /// kernel itself is used.
    #[arg(long)]
    pub image: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub row: usize,

    #[arg(long, default_value_t = 0)]
    pub col: usize,

    /// Coupling in rad/ns, bypassing the calibration file.
    #[arg(long)]
    pub coupling_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConvolveArgs {
    /// Input image (PGM or integer CSV); defaults to the configured image.
    pub image: Option<PathBuf>,

    #[arg(long)]
    pub coupling_k: Option<f64>,
}

/// Resolved settings shared by every command.
pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(global: &GlobalOpts) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = global.seed {
            cfg.sim.seed = seed;
        }
        if let Some(stages) = &global.stages {
            cfg.set("stages", stages)?;
        }
        if let Some(out) = &global.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        let out_dir = cfg.out_dir.clone();
        Ok(Self { cfg, out_dir })
    }

    /// First line of every output file.
    pub fn preamble(&self) -> String {
        format!("# osc-conn seed={} stages={}\n", self.cfg.sim.seed, self.cfg.stages)
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }

    fn write(&self, name: &str, body: &[u8]) -> Result<PathBuf> {
        self.ensure_out()?;
        let path = self.out_dir.join(name);
        let mut buf = self.preamble().into_bytes();
        buf.extend_from_slice(body);
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn kernel(&self, bank: &[Kernel25], id: usize) -> Result<Kernel25> {
        bank.get(id).copied().ok_or_else(|| {
            Error::Range(format!("kernel {id} not in bank of {}", bank.len()))
        })
    }

    /// Coupling from the explicit flag, the config, or the calibration file.
    pub fn coupling(&self, flag: Option<f64>) -> Result<f64> {
        if let Some(k) = flag.or_else(|| self.cfg.explicit_coupling()) {
            return Ok(k);
        }
        let path = self.cfg.calibration_path();
        match std::fs::read_to_string(&path) {
            Ok(text) => parse_calibration(&text).map(|c| c.coupling_k),
            Err(_) => Err(Error::Parameter(format!(
                "no calibration at {}; run `osc-conn calibrate` first or pass --coupling-k",
                path.display()
            ))),
        }
    }
}

/// Contents of a persisted calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub coupling_k: f64,
    pub r2: Option<f64>,
}

pub fn format_calibration(suite: &CaseSet, seed: u64, stages: u32, coupling_k: f64, r2: f64) -> String {
    format!(
        "# osc-conn calibration\n# suite_hash={:016x} seed={seed} stages={stages}\ncoupling_k={}\nr2={}\n",
        suite.fingerprint(),
        fmt_num(coupling_k),
        fmt_num(r2)
    )
}

pub fn parse_calibration(text: &str) -> Result<Calibration> {
    let mut coupling_k = None;
    let mut r2 = None;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse("calibration", e.to_string()))
        };
        match line.split_once('=') {
            Some(("coupling_k", v)) => coupling_k = Some(parse(v)?),
            Some(("r2", v)) => r2 = Some(parse(v)?),
            _ => return Err(Error::parse("calibration", format!("unexpected line '{line}'"))),
        }
    }
    let coupling_k = coupling_k.ok_or_else(|| Error::parse("calibration", "missing coupling_k"))?;
    Ok(Calibration { coupling_k, r2 })
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::GenKernels => cmd_gen_kernels(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Infer(args) => cmd_infer(&ctx, &args),
        Command::Convolve(args) => cmd_convolve(&ctx, &args),
        Command::Report => cmd_report(&ctx),
    }
}

pub fn cmd_gen_kernels(ctx: &Context) -> Result<()> {
    let bank = ctx.cfg.bank()?;
    let mut body = Vec::new();
    write_kernel_csv(&bank, &mut body).expect("writing to memory");
    let path = ctx.write("kernels.csv", &body)?;
    println!("{} kernels -> {}", bank.len(), path.display());
    for (i, k) in bank.iter().enumerate() {
        println!(
            "  [{i}] theta={:.1} deg k={:.4} sigma={:.3} energy={:.4}",
            k.theta_deg,
            k.k,
            k.sigma,
            k.energy()
        );
    }
    Ok(())
}

pub fn cmd_calibrate(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let calib = cfg.calib()?;
    let bank = cfg.bank()?;
    let suite = build_standard_suite(&bank, cfg.suite_seed)?;
    let sweep = sweep_coupling(&suite, &cfg.k_grid, &calib, &cfg.sim, cfg.seeds_per_case)?;
    let best = *sweep.best();

    let mut body = Vec::new();
    sweep.write_csv(&mut body).expect("writing to memory");
    let sweep_path = ctx.write("sweep.csv", &body)?;

    let cal_text = format_calibration(&suite, cfg.sim.seed, cfg.stages, best.coupling_k, best.fit.r2);
    let cal_path = cfg.calibration_path();
    if let Some(parent) = cal_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&cal_path, cal_text).map_err(|e| Error::io(&cal_path, e))?;

    // scatter and detector traces at the chosen coupling
    let eval = evaluate_cases(&suite, best.coupling_k, &calib, &cfg.sim, cfg.seeds_per_case)?;
    let mut rep = Report {
        energy: Some(cfg.energy),
        ..Report::default()
    };
    for &(c, seed, dom) in &eval.shots {
        rep.scatter.push(ScatterRow {
            stages: calib.stages(),
            ideal_dot: suite.cases()[c].ideal_dot,
            dom,
            seed,
        });
    }
    for (c, case) in suite.cases().iter().enumerate() {
        let sim = cfg.sim.with_seed(shot_seed(cfg.sim.seed, c, 0));
        let (_, trace) = run_inference_traced(
            &case.fragment,
            &case.kernel,
            &calib,
            best.coupling_k,
            &sim,
            cfg.record_every,
        )?;
        rep.traces.push((format!("case{c:02}"), trace));
    }
    report(&rep, &ctx.out_dir, Some(&ctx.preamble()))?;

    println!("sweep -> {}", sweep_path.display());
    println!(
        "best_k={} r2={} slope={} intercept={}",
        fmt_num(best.coupling_k),
        fmt_num(best.fit.r2),
        fmt_num(best.fit.slope),
        fmt_num(best.fit.intercept)
    );
    println!("calibration -> {}", cal_path.display());
    Ok(())
}

/// Fragment from `--fragment-kernel`, else from an image, else the kernel
/// itself (the matched case).
fn infer_fragment(ctx: &Context, args: &InferArgs, bank: &[Kernel25]) -> Result<Fragment25> {
    if let Some(id) = args.fragment_kernel {
        return Ok(Fragment25::from(&ctx.kernel(bank, id)?));
    }
    match args.image.as_ref().or(ctx.cfg.image.as_ref()) {
        Some(path) => extract_fragment(&read_image(path)?, args.row, args.col),
        None => Ok(Fragment25::from(&ctx.kernel(bank, args.kernel)?)),
    }
}

pub fn cmd_infer(ctx: &Context, args: &InferArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let bank = cfg.bank()?;
    let kern = ctx.kernel(&bank, args.kernel)?;
    let frag = infer_fragment(ctx, args, &bank)?;
    let coupling_k = ctx.coupling(args.coupling_k)?;
    let (res, trace) =
        run_inference_traced(&frag, &kern, &cfg.calib()?, coupling_k, &cfg.sim, cfg.record_every)?;
    let mut body = Vec::new();
    trace.write_csv(&mut body).expect("writing to memory");
    let path = ctx.write("trace_infer.csv", &body)?;
    println!(
        "dom={} sample_time={} r_final={} ideal_dot={} coupling_k={} seed={}",
        fmt_num(res.dom),
        fmt_num(res.sample_time),
        fmt_num(res.r_final),
        fmt_num(res.ideal_dot),
        fmt_num(coupling_k),
        res.seed
    );
    println!("trace -> {}", path.display());
    Ok(())
}

pub fn cmd_convolve(ctx: &Context, args: &ConvolveArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let path: &Path = args
        .image
        .as_deref()
        .or(cfg.image.as_deref())
        .ok_or_else(|| Error::Parameter("convolve needs an image path".into()))?;
    let image = read_image(path)?;
    let bank = cfg.bank()?;
    let calib = cfg.calib()?;
    let coupling_k = ctx.coupling(args.coupling_k)?;

    let mut outputs: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stats = String::from("kernel,theta_deg,k,r2,slope,intercept,spearman,top1_agrees\n");
    let mut rep = Report {
        energy: Some(cfg.energy),
        ..Report::default()
    };
    for (i, kern) in bank.iter().enumerate() {
        let ideal = convolve(&image, kern, ConvMode::Ideal, &calib, coupling_k, &cfg.sim, 1)?;
        let onn = convolve(
            &image,
            kern,
            ConvMode::Onn,
            &calib,
            coupling_k,
            &cfg.sim,
            cfg.seeds_per_position,
        )?;
        let mut buf = Vec::new();
        ideal.write_csv(&mut buf).expect("writing to memory");
        outputs.push((format!("map_ideal_{i}.csv"), buf));
        let mut buf = Vec::new();
        onn.write_csv(&mut buf).expect("writing to memory");
        outputs.push((format!("map_onn_{i}.csv"), buf));

        // a single-position map cannot be fitted; report it without stats
        let line = match compare_maps(&ideal, &onn) {
            Ok(cmp) => format!(
                "{i},{},{},{},{},{},{},{}\n",
                fmt_num(kern.theta_deg),
                fmt_num(kern.k),
                fmt_num(cmp.fit.r2),
                fmt_num(cmp.fit.slope),
                fmt_num(cmp.fit.intercept),
                fmt_num(cmp.spearman),
                cmp.top1_agrees
            ),
            Err(Error::DegenerateFit(_)) => format!(
                "{i},{},{},nan,nan,nan,nan,true\n",
                fmt_num(kern.theta_deg),
                fmt_num(kern.k)
            ),
            Err(e) => return Err(e),
        };
        print!("{line}");
        stats.push_str(&line);
        for (x, y) in ideal.values.iter().zip(&onn.values) {
            rep.scatter.push(ScatterRow {
                stages: calib.stages(),
                ideal_dot: *x,
                dom: *y,
                seed: cfg.sim.seed,
            });
        }
    }
    for (name, body) in &outputs {
        ctx.write(name, body)?;
    }
    ctx.write("compare.csv", stats.as_bytes())?;
    report(&rep, &ctx.out_dir, Some(&ctx.preamble()))?;
    println!(
        "{} kernels, {}x{} maps -> {}",
        bank.len(),
        image.fragment_grid().0,
        image.fragment_grid().1,
        ctx.out_dir.display()
    );
    Ok(())
}

pub fn cmd_report(ctx: &Context) -> Result<()> {
    let model = ctx.cfg.energy;
    let rep = Report {
        energy: Some(model),
        ..Report::default()
    };
    let mut body = Vec::new();
    crate::harness::write_energy_csv(rep.energy.as_ref(), &mut body).expect("writing to memory");
    let path = ctx.write("energy_delay.csv", &body)?;
    println!(
        "delay_ns={} energy_pJ={}",
        fmt_num(model.delay_ns()),
        fmt_num(energy_per_inference(&model))
    );
    println!("summary -> {}", path.display());
    Ok(())
}
