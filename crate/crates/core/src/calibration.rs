//! Coupling calibration: least-squares fit of DOM against the ideal dot
//! product, sweeps over the coupling strength, and locking-range measurement.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::{
    derive_seed, init_phases, run_inference, simulate, ArrayState, InitMode, SimConfig,
};
use crate::encoding::{ideal_dot, FreqCalib, Fragment25, Kernel25};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::stats::median;

/// One fragment/kernel pair with its reference dot product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    pub fragment: Fragment25,
    pub kernel: Kernel25,
    pub ideal_dot: f64,
}

impl Case {
    pub fn new(fragment: Fragment25, kernel: Kernel25) -> Self {
        Self {
            ideal_dot: ideal_dot(&fragment, &kernel),
            fragment,
            kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    cases: Vec<Case>,
}

impl CaseSet {
    pub fn new(cases: Vec<Case>) -> Result<Self> {
        if cases.len() < 2 {
            return Err(Error::DegenerateFit(format!(
                "case set needs at least 2 cases, got {}",
                cases.len()
            )));
        }
        let first = cases[0].ideal_dot;
        if cases.iter().all(|c| c.ideal_dot == first) {
            return Err(Error::DegenerateFit(
                "all cases share the same ideal dot product".into(),
            ));
        }
        Ok(Self { cases })
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn ideal_dots(&self) -> Vec<f64> {
        self.cases.iter().map(|c| c.ideal_dot).collect()
    }

    /// FNV-1a over the bit patterns of every fragment and kernel value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for c in &self.cases {
            c.fragment.values().iter().for_each(|&v| feed(v));
            c.kernel.values().iter().for_each(|&v| feed(v));
        }
        h
    }
}

/// Ordinary least-squares line y = slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Set when the responses have no variance, in which case r2 is 0.
    pub degenerate: bool,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} xs but {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} points", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if syy == 0.0 || ys.iter().all(|&y| y == ys[0]) {
        return Ok(FitResult {
            slope: 0.0,
            intercept: my,
            r2: 0.0,
            degenerate: true,
        });
    }
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        r2: (1.0 - ss_res / syy).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Per-case outcome of a seed-averaged evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEvaluation {
    pub mean_dom: Vec<f64>,
    pub mean_r_final: Vec<f64>,
    /// Every individual run as (case index, seed, dom).
    pub shots: Vec<(usize, u64, f64)>,
}

/// Seed of the `rep`-th shot of case `case` under the global seed.
pub fn shot_seed(global: u64, case: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(global, case as u64), rep as u64)
}

/// Runs every case `seeds_per_case` times and averages per case.
pub fn evaluate_cases(
    cases: &CaseSet,
    coupling_k: f64,
    calib: &FreqCalib,
    config: &SimConfig,
    seeds_per_case: usize,
) -> Result<CaseEvaluation> {
    if seeds_per_case == 0 {
        return Err(Error::Parameter("seeds_per_case must be at least 1".into()));
    }
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cases.len())
        .flat_map(|c| (0..seeds_per_case).map(move |s| (c, s)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let case = &cases.cases[c];
            let seed = shot_seed(config.seed, c, s);
            run_inference(&case.fragment, &case.kernel, calib, coupling_k, &config.with_seed(seed))
        })
        .collect::<Result<_>>()?;
    let mut mean_dom = vec![0.0; cases.len()];
    let mut mean_r_final = vec![0.0; cases.len()];
    let mut shots = Vec::with_capacity(results.len());
    for (&(c, _), res) in jobs.iter().zip(&results) {
        mean_dom[c] += res.dom;
        mean_r_final[c] += res.r_final;
        shots.push((c, res.seed, res.dom));
    }
    for c in 0..cases.len() {
        mean_dom[c] /= seeds_per_case as f64;
        mean_r_final[c] /= seeds_per_case as f64;
    }
    Ok(CaseEvaluation {
        mean_dom,
        mean_r_final,
        shots,
    })
}

/// Fit of seed-averaged DOM (y) against the ideal dot product (x).
pub fn evaluate_correlation(
    cases: &CaseSet,
    coupling_k: f64,
    calib: &FreqCalib,
    config: &SimConfig,
    seeds_per_case: usize,
) -> Result<FitResult> {
    let eval = evaluate_cases(cases, coupling_k, calib, config, seeds_per_case)?;
    linear_fit(&cases.ideal_dots(), &eval.mean_dom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub coupling_k: f64,
    pub fit: FitResult,
    pub mean_r_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub best_k: f64,
}

impl SweepResult {
    pub fn best(&self) -> &SweepEntry {
        self.entries
            .iter()
            .find(|e| e.coupling_k == self.best_k)
            .expect("best_k is drawn from the entries")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "coupling_k,slope,intercept,r2,mean_r_final")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_num(e.coupling_k),
                fmt_num(e.fit.slope),
                fmt_num(e.fit.intercept),
                fmt_num(e.fit.r2),
                fmt_num(e.mean_r_final)
            )?;
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

/// Logarithmic grid from 10^lo to 10^hi with `points` entries.
pub fn log_grid(lo_exp: f64, hi_exp: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..points)
            .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (points - 1) as f64))
            .collect(),
    }
}

/// 17 points, four per decade, from 0.01 to 100 rad/ns.
pub fn default_k_grid() -> Vec<f64> {
    log_grid(-2.0, 2.0, 17)
}

/// Evaluates every grid point; best_k maximizes r2, ties going to the smaller K.
pub fn sweep_coupling(
    cases: &CaseSet,
    k_grid: &[f64],
    calib: &FreqCalib,
    config: &SimConfig,
    seeds_per_case: usize,
) -> Result<SweepResult> {
    if k_grid.is_empty() {
        return Err(Error::Parameter("coupling grid is empty".into()));
    }
    if k_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("coupling grid must be sorted ascending".into()));
    }
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        // duplicated grid points reuse the earlier evaluation
        if let Some(prev) = entries.iter().find(|e| e.coupling_k == k) {
            entries.push(*prev);
            continue;
        }
        let eval = evaluate_cases(cases, k, calib, config, seeds_per_case)?;
        let fit = linear_fit(&cases.ideal_dots(), &eval.mean_dom)?;
        let mean_r_final = eval.mean_r_final.iter().sum::<f64>() / eval.mean_r_final.len() as f64;
        entries.push(SweepEntry {
            coupling_k: k,
            fit,
            mean_r_final,
        });
    }
    let mut best = &entries[0];
    for e in &entries[1..] {
        if e.fit.r2 > best.fit.r2 || (e.fit.r2 == best.fit.r2 && e.coupling_k < best.coupling_k) {
            best = e;
        }
    }
    let best_k = best.coupling_k;
    Ok(SweepResult { entries, best_k })
}

/// Steps per lock-classification run; the step size scales with 1/K.
const LOCK_STEPS: usize = 40_000;
/// Run length in units of 1/K.
const LOCK_RUN_KT: f64 = 200.0;
/// Relative spread of measured mean frequencies tolerated as "locked".
const LOCK_FREQ_TOL: f64 = 0.01;

/// Mean angular frequency of every oscillator over the last quarter of a run.
pub fn effective_frequencies(state: &ArrayState, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    let cfg = SimConfig {
        dt,
        t_end,
        t_del: t_end,
        t_int: 0.0,
        ..SimConfig::default()
    };
    let t_start = 0.75 * t_end;
    let n = state.phases.len();
    let mut prev = state.phases.clone();
    let mut advance = vec![0.0; n];
    let mut t_first: Option<f64> = None;
    let mut t_last = 0.0;
    simulate(state, &cfg, t_end, |_, t, phases, _| {
        if t >= t_start {
            if t_first.is_none() {
                t_first = Some(t);
            } else {
                for i in 0..n {
                    let mut d = phases[i] - prev[i];
                    if d > PI {
                        d -= TAU;
                    } else if d < -PI {
                        d += TAU;
                    }
                    advance[i] += d;
                }
            }
            t_last = t;
        }
        prev.copy_from_slice(phases);
        true
    })?;
    let span = t_last - t_first.unwrap_or(t_last);
    if span <= 0.0 {
        return Err(Error::Parameter("run too short to measure frequencies".into()));
    }
    Ok(advance.into_iter().map(|a| a / span).collect())
}

/// Evenly spaced angular frequencies of total width `w` around `center`.
pub fn uniform_spread(center: f64, w: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![center];
    }
    (0..n)
        .map(|i| center - 0.5 * w + w * i as f64 / (n - 1) as f64)
        .collect()
}

/// Critical width of a uniform natural-frequency spread (rad/ns) below
/// which all `n_active` oscillators lock at coupling `coupling_k`.
///
/// A width is classified as locked when the oscillators' mean frequencies
/// over the last quarter of a 200/K run agree to within 1% of the width, for
/// a majority of the `seeds` random initial conditions. The transition is
/// bracketed in [0, 4K] and bisected 24 times.
pub fn locking_threshold(
    coupling_k: f64,
    n_active: usize,
    config: &SimConfig,
    seeds: usize,
) -> Result<f64> {
    if !(coupling_k > 0.0) || !coupling_k.is_finite() {
        return Err(Error::Parameter(format!(
            "coupling must be positive, got {coupling_k}"
        )));
    }
    if n_active < 2 {
        return Err(Error::Parameter("locking needs at least two oscillators".into()));
    }
    let seeds = seeds.max(1);
    let t_end = LOCK_RUN_KT / coupling_k;
    let dt = t_end / LOCK_STEPS as f64;
    let (lo, hi) = (0.0, 4.0 * coupling_k);
    // any common offset is irrelevant to locking; keep every ω positive
    let center = hi;

    let locked = |w: f64| -> Result<bool> {
        let omegas = uniform_spread(center, w, n_active);
        let mut votes = 0;
        for s in 0..seeds {
            let phases = init_phases(
                derive_seed(config.seed, s as u64),
                InitMode::UniformRandom,
                3,
                n_active,
            )?;
            let state = ArrayState::new(phases, omegas.clone(), coupling_k)?;
            let freqs = effective_frequencies(&state, t_end, dt)?;
            let spread = freqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - freqs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread <= LOCK_FREQ_TOL * w {
                votes += 1;
            }
        }
        Ok(2 * votes > seeds)
    };

    if locked(hi)? {
        return Err(Error::Bracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..24 {
        let mid = 0.5 * (a + b);
        if locked(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Median order parameter over the last quarter of a run.
pub fn late_order_parameter(state: &ArrayState, t_end: f64, dt: f64) -> Result<f64> {
    let cfg = SimConfig {
        dt,
        t_end,
        t_del: t_end,
        t_int: 0.0,
        ..SimConfig::default()
    };
    let mut rs = Vec::new();
    simulate(state, &cfg, t_end, |_, t, phases, _| {
        if t >= 0.75 * t_end {
            rs.push(crate::dynamics::order_parameter(phases));
        }
        true
    })?;
    Ok(median(&rs))
}
