//! Mean-field phase dynamics of the coupled ring-oscillator array, the shared
//! averager node, and the gated peak detector that produces the DOM readout.
//!
//! Each active oscillator obeys
//!
//! ```text
//! dθ_i/dt = ω_i + (K/N) Σ_j sin(θ_j − θ_i)
//! ```
//!
//! which is evaluated through the mean phasor (C, S) = (⟨cos θ⟩, ⟨sin θ⟩) as
//! `ω_i + K (S cos θ_i − C sin θ_i)`, so one right-hand side costs O(N).
//! Time is in ns, angular frequency in rad/ns, voltages in volts.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{
    check_stages, codes_to_frequencies, encode_differences, ideal_dot, FreqCalib, Fragment25,
    Kernel25, PATCH_LEN,
};
use crate::error::{Error, Result};
use crate::fmt_num;

/// Physical oscillator slots in the array.
pub const N_TOTAL: usize = 26;
/// Oscillators driven by fragment/kernel differences; the remaining slot is idle.
pub const N_ACTIVE: usize = PATCH_LEN;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    /// Independent uniform draws on [0, 2π).
    UniformRandom,
    /// Phases restricted to the 2n traveling-edge states of an n-inverter ring.
    IcQuantized,
}

impl InitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMode::UniformRandom => "uniform_random",
            InitMode::IcQuantized => "ic_quantized",
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(InitMode::UniformRandom),
            "ic_quantized" => Ok(InitMode::IcQuantized),
            other => Err(Error::Parameter(format!("unknown init_mode '{other}'"))),
        }
    }
}

/// Phases and natural frequencies of the active oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayState {
    pub phases: Vec<f64>,
    pub omegas: Vec<f64>,
    pub coupling_k: f64,
    pub t: f64,
}

impl ArrayState {
    pub fn new(phases: Vec<f64>, omegas: Vec<f64>, coupling_k: f64) -> Result<Self> {
        let state = Self {
            phases: phases.into_iter().map(wrap_phase).collect(),
            omegas,
            coupling_k,
            t: 0.0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn n_total(&self) -> usize {
        N_TOTAL.max(self.phases.len())
    }

    pub fn n_active(&self) -> usize {
        self.phases.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Parameter("array needs at least one oscillator".into()));
        }
        if self.phases.len() != self.omegas.len() {
            return Err(Error::Shape(format!(
                "{} phases but {} frequencies",
                self.phases.len(),
                self.omegas.len()
            )));
        }
        if !(self.coupling_k >= 0.0) || !self.coupling_k.is_finite() {
            return Err(Error::Parameter(format!(
                "coupling must be finite and non-negative, got {}",
                self.coupling_k
            )));
        }
        if let Some(w) = self.omegas.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Parameter(format!("angular frequency {w} must be positive")));
        }
        Ok(())
    }
}

/// Integration, detector and initialization settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Detector enable delay after the trigger.
    pub t_del: f64,
    /// Integration window between detector enable and DOM sampling.
    pub t_int: f64,
    pub tau_rise: f64,
    pub tau_leak: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub init_mode: InitMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            t_end: 8.2,
            t_del: 2.2,
            t_int: 6.0,
            tau_rise: 0.5,
            tau_leak: 20.0,
            amplitude: 0.5,
            seed: 0,
            init_mode: InitMode::UniformRandom,
        }
    }
}

impl SimConfig {
    pub fn sample_time(&self) -> f64 {
        self.t_del + self.t_int
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return bad(format!("dt must lie in (0, 0.01] ns, got {}", self.dt));
        }
        if !(self.t_del >= 0.0) || !(self.t_int >= 0.0) {
            return bad("t_del and t_int must be non-negative".into());
        }
        if !(self.t_end >= self.sample_time() - TIME_EPS) || !self.t_end.is_finite() {
            return bad(format!(
                "t_end {} must cover the sample time {}",
                self.t_end,
                self.sample_time()
            ));
        }
        if !(self.tau_rise > 0.0) || !(self.tau_leak > 0.0) {
            return bad("detector time constants must be positive".into());
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return bad(format!("amplitude must be positive, got {}", self.amplitude));
        }
        Ok(())
    }

    /// Detector level reached under a constant unit-amplitude input.
    pub fn detector_asymptote(&self) -> f64 {
        self.amplitude * self.tau_leak / (self.tau_leak + self.tau_rise)
    }
}

/// Recorded time series of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub v_avg: Vec<f64>,
    pub v_pd: Vec<f64>,
    pub r: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_ns,v_avg,v_pd,r")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_num(self.times[i]),
                fmt_num(self.v_avg[i]),
                fmt_num(self.v_pd[i]),
                fmt_num(self.r[i])
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

/// One sampled degree-of-match readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomResult {
    pub dom: f64,
    pub sample_time: f64,
    pub r_final: f64,
    pub ideal_dot: f64,
    pub seed: u64,
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent case under `global`. Depends only on
/// the pair, never on evaluation order.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    splitmix64(global ^ splitmix64(index))
}

pub fn wrap_phase(theta: f64) -> f64 {
    // fast path for the small per-step increments
    let w = if (0.0..TAU).contains(&theta) {
        return theta;
    } else if (TAU..2.0 * TAU).contains(&theta) {
        theta - TAU
    } else if (-TAU..0.0).contains(&theta) {
        theta + TAU
    } else {
        theta.rem_euclid(TAU)
    };
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Initial phases from a ChaCha8 stream keyed by `seed`.
pub fn init_phases(seed: u64, mode: InitMode, stages: u32, n_active: usize) -> Result<Vec<f64>> {
    check_stages(stages)?;
    if n_active == 0 {
        return Err(Error::Parameter("n_active must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = match mode {
        InitMode::UniformRandom => (0..n_active).map(|_| rng.gen::<f64>() * TAU).collect(),
        InitMode::IcQuantized => {
            let step = std::f64::consts::PI / stages as f64;
            (0..n_active)
                .map(|_| rng.gen_range(0..2 * stages) as f64 * step)
                .collect()
        }
    };
    Ok(phases)
}

/// Phase derivatives of every active oscillator.
pub fn kuramoto_rhs(state: &ArrayState) -> Vec<f64> {
    let (c, s) = mean_phasor(&state.phases);
    state
        .phases
        .iter()
        .zip(&state.omegas)
        .map(|(&th, &w)| {
            let (sin_t, cos_t) = th.sin_cos();
            w + state.coupling_k * (s * cos_t - c * sin_t)
        })
        .collect()
}

fn mean_phasor(phases: &[f64]) -> (f64, f64) {
    let (mut c, mut s) = (0.0, 0.0);
    for &th in phases {
        let (sin_t, cos_t) = th.sin_cos();
        c += cos_t;
        s += sin_t;
    }
    let n = phases.len() as f64;
    (c / n, s / n)
}

/// Voltage at the averager node: the mean of the oscillator outputs.
pub fn averager(phases: &[f64], n_active: usize, amplitude: f64) -> f64 {
    let sum: f64 = phases.iter().map(|th| th.cos()).sum();
    amplitude * sum / n_active as f64
}

/// Kuramoto coherence |⟨e^{iθ}⟩|.
pub fn order_parameter(phases: &[f64]) -> f64 {
    let (c, s) = mean_phasor(phases);
    (c * c + s * s).sqrt().min(1.0)
}

/// Rate of change of the detector output. Zero before the enable delay.
pub fn detector_rate(v_avg: f64, v_pd: f64, t: f64, config: &SimConfig) -> f64 {
    if t < config.t_del - TIME_EPS {
        return 0.0;
    }
    (v_avg.abs() - v_pd).max(0.0) / config.tau_rise - v_pd / config.tau_leak
}

/// Advances the detector over one step `config.dt` starting at `t`, holding
/// the averager input fixed over the step.
pub fn peak_detect(v_avg_t: f64, v_pd: f64, t: f64, config: &SimConfig) -> f64 {
    let h = config.dt;
    if t + h <= config.t_del + TIME_EPS {
        return 0.0;
    }
    let f = |tt: f64, v: f64| detector_rate(v_avg_t, v, tt, config);
    let k1 = f(t, v_pd);
    let k2 = f(t + 0.5 * h, v_pd + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, v_pd + 0.5 * h * k2);
    let k4 = f(t + h, v_pd + h * k3);
    (v_pd + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0)
}

/// sin and cos of a small angle. Taylor series accurate to ~1 ulp for
/// |x| ≤ 0.1; larger angles fall back to the library routine.
#[inline]
fn small_sin_cos(x: f64) -> (f64, f64) {
    if x.abs() > 0.1 {
        return x.sin_cos();
    }
    const S: [f64; 4] = [1.0 / 6.0, 1.0 / 20.0, 1.0 / 42.0, 1.0 / 72.0];
    const C: [f64; 5] = [1.0 / 2.0, 1.0 / 12.0, 1.0 / 30.0, 1.0 / 56.0, 1.0 / 90.0];
    let x2 = x * x;
    let mut s = 1.0;
    for coef in S.iter().rev() {
        s = 1.0 - x2 * coef * s;
    }
    let mut c = 1.0;
    for coef in C.iter().rev() {
        c = 1.0 - x2 * coef * c;
    }
    let s = x * s;
    (s, c)
}

/// Fixed-step RK4 stepper over the joint (phases, detector) state.
///
/// Stage phases are θ + a·h·k, so their sines and cosines are obtained by
/// rotating the step-start values through the small stage increment.
struct Stepper<'a> {
    omegas: &'a [f64],
    coupling_k: f64,
    config: &'a SimConfig,
    sin0: Vec<f64>,
    cos0: Vec<f64>,
    sin_s: Vec<f64>,
    cos_s: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl<'a> Stepper<'a> {
    fn new(omegas: &'a [f64], coupling_k: f64, config: &'a SimConfig) -> Self {
        let n = omegas.len();
        Self {
            omegas,
            coupling_k,
            config,
            sin0: vec![0.0; n],
            cos0: vec![0.0; n],
            sin_s: vec![0.0; n],
            cos_s: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Phase derivatives from precomputed sines and cosines; returns the
    /// detector rate.
    fn rhs(&self, sin: &[f64], cos: &[f64], v_pd: f64, t: f64, out: &mut [f64]) -> f64 {
        let n = sin.len() as f64;
        let c = cos.iter().sum::<f64>() / n;
        let s = sin.iter().sum::<f64>() / n;
        for (((o, &sn), &cs), &w) in out.iter_mut().zip(sin).zip(cos).zip(self.omegas) {
            *o = w + self.coupling_k * (s * cs - c * sn);
        }
        detector_rate(self.config.amplitude * c, v_pd, t, self.config)
    }

    /// Fills the stage trig buffers for phases θ + scale·k.
    fn rotate(&mut self, which: usize, scale: f64) {
        let k = &self.k[which];
        for i in 0..k.len() {
            let (sd, cd) = small_sin_cos(scale * k[i]);
            self.sin_s[i] = self.sin0[i] * cd + self.cos0[i] * sd;
            self.cos_s[i] = self.cos0[i] * cd - self.sin0[i] * sd;
        }
    }

    fn step(&mut self, phases: &mut [f64], v_pd: &mut f64, t: f64, h: f64) {
        let gated = t + h <= self.config.t_del + TIME_EPS;
        for (i, &p) in phases.iter().enumerate() {
            let (s, c) = p.sin_cos();
            self.sin0[i] = s;
            self.cos0[i] = c;
        }
        let mut out = std::mem::take(&mut self.k[0]);
        let d1 = self.rhs(&self.sin0, &self.cos0, *v_pd, t, &mut out);
        self.k[0] = out;

        self.rotate(0, 0.5 * h);
        let mut out = std::mem::take(&mut self.k[1]);
        let d2 = self.rhs(&self.sin_s, &self.cos_s, *v_pd + 0.5 * h * d1, t + 0.5 * h, &mut out);
        self.k[1] = out;

        self.rotate(1, 0.5 * h);
        let mut out = std::mem::take(&mut self.k[2]);
        let d3 = self.rhs(&self.sin_s, &self.cos_s, *v_pd + 0.5 * h * d2, t + 0.5 * h, &mut out);
        self.k[2] = out;

        self.rotate(2, h);
        let mut out = std::mem::take(&mut self.k[3]);
        let d4 = self.rhs(&self.sin_s, &self.cos_s, *v_pd + h * d3, t + h, &mut out);
        self.k[3] = out;

        let [k1, k2, k3, k4] = &self.k;
        for (i, p) in phases.iter_mut().enumerate() {
            *p = wrap_phase(*p + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        *v_pd = if gated {
            0.0
        } else {
            (*v_pd + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)).max(0.0)
        };
    }
}

/// Number of steps needed to reach `t_end` and the length of the last one.
fn step_plan(t_end: f64, dt: f64) -> (usize, f64) {
    let n = ((t_end / dt) - TIME_EPS).ceil().max(0.0) as usize;
    if n == 0 {
        return (0, 0.0);
    }
    let last = t_end - (n - 1) as f64 * dt;
    (n, last)
}

/// Drives the array from t = 0, calling `observe(step, t, phases, v_pd)` at
/// t = 0 and after every step. Stops early once `observe` returns false.
pub fn simulate<F>(
    state: &ArrayState,
    config: &SimConfig,
    t_end: f64,
    mut observe: F,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(usize, f64, &[f64], f64) -> bool,
{
    state.validate()?;
    let mut phases = state.phases.clone();
    let mut v_pd = 0.0;
    let mut stepper = Stepper::new(&state.omegas, state.coupling_k, config);
    let (n_steps, last) = step_plan(t_end, config.dt);
    if !observe(0, 0.0, &phases, v_pd) {
        return Ok((phases, v_pd));
    }
    for n in 1..=n_steps {
        let t0 = (n - 1) as f64 * config.dt;
        let h = if n == n_steps { last } else { config.dt };
        stepper.step(&mut phases, &mut v_pd, t0, h);
        if phases.iter().any(|p| !p.is_finite()) || !v_pd.is_finite() {
            return Err(Error::Numerical { step: n });
        }
        let t = if n == n_steps { t_end } else { n as f64 * config.dt };
        if !observe(n, t, &phases, v_pd) {
            break;
        }
    }
    Ok((phases, v_pd))
}

/// Integrates the array to `config.t_end`, recording every `record_every`
/// steps plus the initial and final instants.
pub fn integrate(state: &ArrayState, config: &SimConfig, record_every: usize) -> Result<SimTrace> {
    config.validate()?;
    if record_every == 0 {
        return Err(Error::Parameter("record_every must be at least 1".into()));
    }
    let (n_steps, _) = step_plan(config.t_end, config.dt);
    let n_active = state.n_active();
    let mut trace = SimTrace::default();
    simulate(state, config, config.t_end, |n, t, phases, v_pd| {
        if n % record_every == 0 || n == n_steps {
            trace.times.push(t);
            trace.v_avg.push(averager(phases, n_active, config.amplitude));
            trace.v_pd.push(v_pd);
            trace.r.push(order_parameter(phases));
        }
        true
    })?;
    Ok(trace)
}

/// Runs the array and returns (v_pd, r) interpolated at `config.sample_time()`.
pub fn sample_dom(state: &ArrayState, config: &SimConfig) -> Result<(f64, f64)> {
    config.validate()?;
    let ts = config.sample_time();
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut hit: Option<(f64, f64)> = None;
    simulate(state, config, config.t_end, |_, t, phases, v_pd| {
        if t + config.dt < ts - TIME_EPS {
            return true;
        }
        let r = order_parameter(phases);
        if (t - ts).abs() <= TIME_EPS {
            hit = Some((v_pd, r));
            return false;
        }
        if t > ts {
            hit = Some(match prev {
                Some((t0, v0, r0)) => {
                    let a = (ts - t0) / (t - t0);
                    (v0 + a * (v_pd - v0), r0 + a * (r - r0))
                }
                None => (v_pd, r),
            });
            return false;
        }
        prev = Some((t, v_pd, r));
        true
    })?;
    hit.ok_or_else(|| Error::Parameter(format!("run ended before sample time {ts}")))
}

/// Angular frequencies (rad/ns) for a fragment/kernel pair.
pub fn pair_omegas(f: &Fragment25, kern: &Kernel25, calib: &FreqCalib) -> Vec<f64> {
    let codes = encode_differences(f, kern);
    codes_to_frequencies(&codes, calib)
        .iter()
        .map(|fr| TAU * fr)
        .collect()
}

/// Full inference for one fragment/kernel pair at coupling `coupling_k`.
pub fn run_inference(
    f: &Fragment25,
    kern: &Kernel25,
    calib: &FreqCalib,
    coupling_k: f64,
    config: &SimConfig,
) -> Result<DomResult> {
    config.validate()?;
    let omegas = pair_omegas(f, kern, calib);
    let phases = init_phases(config.seed, config.init_mode, calib.stages(), omegas.len())?;
    let state = ArrayState::new(phases, omegas, coupling_k)?;
    let (dom, r_final) = sample_dom(&state, config)?;
    Ok(DomResult {
        dom,
        sample_time: config.sample_time(),
        r_final,
        ideal_dot: ideal_dot(f, kern),
        seed: config.seed,
    })
}

/// Same pipeline as [`run_inference`] but returns the full trace as well.
pub fn run_inference_traced(
    f: &Fragment25,
    kern: &Kernel25,
    calib: &FreqCalib,
    coupling_k: f64,
    config: &SimConfig,
    record_every: usize,
) -> Result<(DomResult, SimTrace)> {
    let result = run_inference(f, kern, calib, coupling_k, config)?;
    let omegas = pair_omegas(f, kern, calib);
    let phases = init_phases(config.seed, config.init_mode, calib.stages(), omegas.len())?;
    let state = ArrayState::new(phases, omegas, coupling_k)?;
    let trace = integrate(&state, config, record_every)?;
    Ok((result, trace))
}
