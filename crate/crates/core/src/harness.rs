//! End-to-end convolution through the oscillator array, comparison against
//! the ideal convolution, the synthesized 18-case calibration suite, the
//! energy estimate, and report files.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::calibration::{linear_fit, Case, CaseSet, FitResult};
use crate::dynamics::{derive_seed, run_inference, SimConfig, SimTrace};
use crate::encoding::{
    extract_fragment, ideal_dot, signal_to_gray, FreqCalib, Fragment25, GrayImage, Kernel25,
    PATCH_LEN, PATCH_SIDE,
};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::stats::{argmax, spearman};

/// Cases in the standard suite.
pub const SUITE_SIZE: usize = 18;
const SUITE_KERNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    Ideal,
    Onn,
}

/// Valid-padding, stride-1 output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|&v| fmt_num(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, preamble: Option<&str>) -> Result<()> {
        let mut buf = Vec::new();
        if let Some(p) = preamble {
            buf.extend_from_slice(p.as_bytes());
        }
        self.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Convolves `image` with `kern`. In onn mode each position averages
/// `seeds_per_position` shots whose seeds derive from the global seed and
/// the position index.
pub fn convolve(
    image: &GrayImage,
    kern: &Kernel25,
    mode: ConvMode,
    calib: &FreqCalib,
    coupling_k: f64,
    config: &SimConfig,
    seeds_per_position: usize,
) -> Result<FeatureMap> {
    let (width, height) = image.fragment_grid();
    let positions: Vec<(usize, usize)> = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .collect();
    let values: Vec<f64> = match mode {
        ConvMode::Ideal => positions
            .iter()
            .map(|&(r, c)| extract_fragment(image, r, c).map(|f| ideal_dot(&f, kern)))
            .collect::<Result<_>>()?,
        ConvMode::Onn => {
            if seeds_per_position == 0 {
                return Err(Error::Parameter("seeds_per_position must be at least 1".into()));
            }
            config.validate()?;
            positions
                .par_iter()
                .enumerate()
                .map(|(idx, &(r, c))| {
                    let frag = extract_fragment(image, r, c)?;
                    let mut acc = 0.0;
                    for s in 0..seeds_per_position {
                        let seed = position_seed(config.seed, idx, s, seeds_per_position);
                        acc += run_inference(&frag, kern, calib, coupling_k, &config.with_seed(seed))?
                            .dom;
                    }
                    Ok(acc / seeds_per_position as f64)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(FeatureMap {
        width,
        height,
        values,
    })
}

fn position_seed(global: u64, idx: usize, rep: usize, reps: usize) -> u64 {
    let base = derive_seed(global, idx as u64);
    if reps == 1 {
        base
    } else {
        derive_seed(base, rep as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapComparison {
    pub fit: FitResult,
    pub spearman: f64,
    pub top1_agrees: bool,
}

/// Fits onn values against ideal values and compares rank order and argmax.
pub fn compare_maps(ideal: &FeatureMap, onn: &FeatureMap) -> Result<MapComparison> {
    if ideal.width != onn.width || ideal.height != onn.height {
        return Err(Error::Shape(format!(
            "ideal map {}x{} vs onn map {}x{}",
            ideal.width, ideal.height, onn.width, onn.height
        )));
    }
    let fit = linear_fit(&ideal.values, &onn.values)?;
    Ok(MapComparison {
        fit,
        spearman: spearman(&ideal.values, &onn.values),
        top1_agrees: argmax(&ideal.values) == argmax(&onn.values),
    })
}

/// Per-pixel standard deviation of the suite noise. 25 pixels at this
/// spread carry about the energy of a bank kernel.
pub const SUITE_NOISE_SIGMA: f64 = 0.4;

/// Gaussian noise clipped to [-1, 1] for one suite fragment.
fn suite_noise(seed: u64, index: usize) -> [f64; PATCH_LEN] {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let normal = Normal::new(0.0, SUITE_NOISE_SIGMA).expect("valid spread");
    let mut out = [0.0; PATCH_LEN];
    for v in out.iter_mut() {
        *v = normal.sample(&mut rng).clamp(-1.0, 1.0);
    }
    out
}

/// Deterministic 18-case suite: for each of six kernels (taken cyclically
/// from `bank`) the kernel itself, an even blend of kernel and noise, and
/// pure noise.
pub fn build_standard_suite(bank: &[Kernel25], seed: u64) -> Result<CaseSet> {
    if bank.is_empty() {
        return Err(Error::Parameter("filter bank is empty".into()));
    }
    let mut cases = Vec::with_capacity(SUITE_SIZE);
    for i in 0..SUITE_KERNELS {
        let kern = bank[i % bank.len()];
        let noise = suite_noise(seed, i);
        let mut blend = [0.0; PATCH_LEN];
        for (b, (k, n)) in blend.iter_mut().zip(kern.values().iter().zip(&noise)) {
            *b = 0.5 * k + 0.5 * n;
        }
        cases.push(Case::new(Fragment25::from(&kern), kern));
        cases.push(Case::new(Fragment25::new(blend)?, kern));
        cases.push(Case::new(Fragment25::new(noise)?, kern));
    }
    CaseSet::new(cases)
}

/// Test image holding an exact copy of every bank kernel on a low-contrast
/// noise background. Kernels are tiled four per row with one-pixel margins.
/// Returns the image and the top-left corner of each embedded kernel.
pub fn embedded_kernel_image(bank: &[Kernel25], seed: u64) -> Result<(GrayImage, Vec<(usize, usize)>)> {
    if bank.is_empty() {
        return Err(Error::Parameter("filter bank is empty".into()));
    }
    let per_row = 4.min(bank.len());
    let rows = bank.len().div_ceil(per_row);
    let pitch = PATCH_SIDE + 1;
    let width = per_row * pitch + 1;
    let height = rows * pitch + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background: Vec<f64> = (0..width * height)
        .map(|_| rng.gen_range(-0.25..=0.25f64))
        .collect();
    let mut image = GrayImage::from_signal(width, height, &background)?;
    let mut corners = Vec::with_capacity(bank.len());
    for (i, kern) in bank.iter().enumerate() {
        let top = 1 + (i / per_row) * pitch;
        let left = 1 + (i % per_row) * pitch;
        for r in 0..PATCH_SIDE {
            for c in 0..PATCH_SIDE {
                image.set_pixel(top + r, left + c, signal_to_gray(kern.values()[r * PATCH_SIDE + c]));
            }
        }
        corners.push((top, left));
    }
    Ok((image, corners))
}

/// Power and timing figures of one array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub n_osc: u32,
    /// Watts per oscillator.
    pub p_osc: f64,
    /// Peak detector watts.
    pub p_pd: f64,
    /// Seconds per inference.
    pub t_inf: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            n_osc: 26,
            p_osc: 0.26e-3,
            p_pd: 100e-6,
            t_inf: 8e-9,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if self.n_osc == 0 || !ok(self.p_osc) || !ok(self.p_pd) || !ok(self.t_inf) {
            return Err(Error::Parameter(format!("invalid energy model {self:?}")));
        }
        Ok(())
    }

    pub fn delay_ns(&self) -> f64 {
        self.t_inf * 1e9
    }
}

/// (n_osc·p_osc + p_pd)·t_inf in picojoules.
pub fn energy_per_inference(model: &EnergyModel) -> f64 {
    (model.n_osc as f64 * model.p_osc + model.p_pd) * model.t_inf * 1e12
}

/// One point of the DOM-vs-dot scatter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub stages: u32,
    pub ideal_dot: f64,
    pub dom: f64,
    pub seed: u64,
}

/// Collected results to be written out by [`report`].
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub scatter: Vec<ScatterRow>,
    /// Named detector traces; each becomes `trace_<name>.csv`.
    pub traces: Vec<(String, SimTrace)>,
    pub energy: Option<EnergyModel>,
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "stages,ideal_dot,dom,seed")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.stages, fmt_num(r.ideal_dot), fmt_num(r.dom), r.seed)?;
    }
    Ok(())
}

pub fn write_energy_csv<W: Write>(model: Option<&EnergyModel>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "delay_ns,energy_pJ")?;
    if let Some(m) = model {
        writeln!(out, "{},{}", fmt_num(m.delay_ns()), fmt_num(energy_per_inference(m)))?;
    }
    Ok(())
}

/// Writes `dom_scatter.csv`, `energy_delay.csv` and one trace CSV per
/// recorded trace into `dir`. Every file starts with `preamble` when given.
/// Returns the paths written, in that order.
pub fn report(results: &Report, dir: &Path, preamble: Option<&str>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pre = preamble.unwrap_or("").as_bytes();
    let mut written = Vec::new();

    let mut buf = pre.to_vec();
    write_scatter_csv(&results.scatter, &mut buf).expect("writing to memory");
    let path = dir.join("dom_scatter.csv");
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let mut buf = pre.to_vec();
    write_energy_csv(results.energy.as_ref(), &mut buf).expect("writing to memory");
    let path = dir.join("energy_delay.csv");
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    for (name, trace) in &results.traces {
        let path = dir.join(format!("trace_{name}.csv"));
        trace.save_csv(&path, preamble)?;
        written.push(path);
    }
    Ok(written)
}
