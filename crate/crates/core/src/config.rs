//! Flat `key = value` run configuration with `#` comments.
//!
//! Every key has a default (see [`RunConfig::template`]); unknown keys are
//! rejected. List values are comma separated.

use std::path::{Path, PathBuf};

use crate::calibration::log_grid;
use crate::dynamics::{InitMode, SimConfig};
use crate::encoding::{default_bank_params, make_filter_bank, FreqCalib, Kernel25};
use crate::error::{Error, Result};
use crate::formats::read_kernel_csv;
use crate::harness::EnergyModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stages: u32,
    /// Overrides of the stage preset.
    pub f0: Option<f64>,
    pub slope: Option<f64>,

    pub sim: SimConfig,
    pub record_every: usize,

    pub coupling_k: Option<f64>,
    pub k_unit: f64,
    pub cap_code: Option<u32>,
    pub k_grid: Vec<f64>,
    pub seeds_per_case: usize,
    pub seeds_per_position: usize,
    pub suite_seed: u64,

    pub orientations: Vec<f64>,
    pub ks: Vec<f64>,
    pub sigma: f64,
    pub kernels_file: Option<PathBuf>,

    pub energy: EnergyModel,

    pub out_dir: PathBuf,
    pub calibration_file: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (orientations, ks, sigma) = default_bank_params();
        Self {
            stages: 7,
            f0: None,
            slope: None,
            sim: SimConfig {
                seed: 1,
                ..SimConfig::default()
            },
            record_every: 10,
            coupling_k: None,
            k_unit: 0.25,
            cap_code: None,
            k_grid: log_grid(-2.0, 2.0, 17),
            seeds_per_case: 16,
            seeds_per_position: 4,
            suite_seed: 2019,
            orientations,
            ks,
            sigma,
            kernels_file: None,
            energy: EnergyModel::default(),
            out_dir: PathBuf::from("out"),
            calibration_file: None,
            image: None,
        }
    }
}

const KEYS: &[(&str, &str)] = &[
    ("stages", "ring length: 3, 5 or 7 (default 7)"),
    ("f0", "frequency at code 0 in GHz (default: stage preset 4.0 / 2.4 / 1.7)"),
    ("slope", "GHz per IDAC code (default: stage preset 0.050 / 0.030 / 0.021)"),
    ("dt", "integration step in ns (default 0.001)"),
    ("t_end", "simulated time in ns (default 8.2)"),
    ("t_del", "detector enable delay in ns (default 2.2)"),
    ("t_int", "integration window before sampling in ns (default 6.0)"),
    ("tau_rise", "detector rise time constant in ns (default 0.5)"),
    ("tau_leak", "detector leak time constant in ns (default 20)"),
    ("amplitude", "oscillator swing in volts (default 0.5)"),
    ("seed", "global 64-bit seed (default 1)"),
    ("init_mode", "uniform_random | ic_quantized (default uniform_random)"),
    ("record_every", "trace decimation in steps (default 10)"),
    ("coupling_k", "explicit coupling in rad/ns (default: from calibration file)"),
    ("k_unit", "rad/ns per capacitor code (default 0.25)"),
    ("cap_code", "capacitor bank code 0..15; sets coupling_k = k_unit * cap_code (default unset)"),
    ("k_grid", "comma list of couplings for calibrate (default 17 points, 0.01..100 log-spaced)"),
    ("seeds_per_case", "shots averaged per calibration case (default 16)"),
    ("seeds_per_position", "shots averaged per convolution position (default 4)"),
    ("suite_seed", "seed of the synthesized 18-case suite (default 2019)"),
    ("orientations", "Gabor orientations in degrees (default 0,45,90,135)"),
    ("ks", "Gabor inverse wavelengths in rad/pixel (default pi/4, pi/2)"),
    ("sigma", "Gabor envelope width in pixels (default 1.5)"),
    ("kernels_file", "kernel bank CSV to use instead of generating one (default unset)"),
    ("n_osc", "oscillators drawing power (default 26)"),
    ("p_osc", "watts per oscillator (default 0.00026)"),
    ("p_pd", "peak detector watts (default 0.0001)"),
    ("t_inf", "seconds per inference (default 8e-9)"),
    ("out_dir", "output directory (default out)"),
    ("calibration_file", "calibration file path (default <out_dir>/calibration.txt)"),
    ("image", "input image for convolve (default unset)"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::parse("config", format!("{key}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(key, v.trim()))
        .collect()
}

impl RunConfig {
    /// Documented template listing every key.
    pub fn template() -> String {
        let mut out = String::from("# osc-conn run configuration\n");
        for (key, doc) in KEYS {
            out.push_str(&format!("# {key}: {doc}\n"));
        }
        out
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "stages" => self.stages = parse_num(key, v)?,
            "f0" => self.f0 = Some(parse_num(key, v)?),
            "slope" => self.slope = Some(parse_num(key, v)?),
            "dt" => self.sim.dt = parse_num(key, v)?,
            "t_end" => self.sim.t_end = parse_num(key, v)?,
            "t_del" => self.sim.t_del = parse_num(key, v)?,
            "t_int" => self.sim.t_int = parse_num(key, v)?,
            "tau_rise" => self.sim.tau_rise = parse_num(key, v)?,
            "tau_leak" => self.sim.tau_leak = parse_num(key, v)?,
            "amplitude" => self.sim.amplitude = parse_num(key, v)?,
            "seed" => self.sim.seed = parse_num(key, v)?,
            "init_mode" => self.sim.init_mode = v.parse::<InitMode>()?,
            "record_every" => self.record_every = parse_num(key, v)?,
            "coupling_k" => self.coupling_k = Some(parse_num(key, v)?),
            "k_unit" => self.k_unit = parse_num(key, v)?,
            "cap_code" => self.cap_code = Some(parse_num(key, v)?),
            "k_grid" => self.k_grid = parse_list(key, v)?,
            "seeds_per_case" => self.seeds_per_case = parse_num(key, v)?,
            "seeds_per_position" => self.seeds_per_position = parse_num(key, v)?,
            "suite_seed" => self.suite_seed = parse_num(key, v)?,
            "orientations" => self.orientations = parse_list(key, v)?,
            "ks" => self.ks = parse_list(key, v)?,
            "sigma" => self.sigma = parse_num(key, v)?,
            "kernels_file" => self.kernels_file = Some(PathBuf::from(v)),
            "n_osc" => self.energy.n_osc = parse_num(key, v)?,
            "p_osc" => self.energy.p_osc = parse_num(key, v)?,
            "p_pd" => self.energy.p_pd = parse_num(key, v)?,
            "t_inf" => self.energy.t_inf = parse_num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "calibration_file" => self.calibration_file = Some(PathBuf::from(v)),
            "image" => self.image = Some(PathBuf::from(v)),
            other => return Err(Error::parse("config", format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse("config", format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.calib()?;
        self.sim.validate()?;
        self.energy.validate()?;
        if self.record_every == 0 || self.seeds_per_case == 0 || self.seeds_per_position == 0 {
            return Err(Error::Parameter(
                "record_every, seeds_per_case and seeds_per_position must be at least 1".into(),
            ));
        }
        if self.k_grid.is_empty() || self.k_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("k_grid must be non-empty and ascending".into()));
        }
        if let Some(code) = self.cap_code {
            if code > 15 {
                return Err(Error::Parameter(format!("cap_code {code} exceeds 15")));
            }
        }
        if let Some(k) = self.coupling_k {
            if !(k >= 0.0) {
                return Err(Error::Parameter(format!("coupling_k {k} must be non-negative")));
            }
        }
        if self.orientations.is_empty() || self.ks.is_empty() || !(self.sigma > 0.0) {
            return Err(Error::Parameter(
                "filter bank needs orientations, ks and sigma > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn calib(&self) -> Result<FreqCalib> {
        let preset = FreqCalib::preset(self.stages)?;
        FreqCalib::new(
            self.stages,
            self.f0.unwrap_or(preset.f0),
            self.slope.unwrap_or(preset.slope),
        )
    }

    /// Coupling fixed by the configuration itself, if any. `coupling_k`
    /// takes precedence over `cap_code`.
    pub fn explicit_coupling(&self) -> Option<f64> {
        self.coupling_k
            .or_else(|| self.cap_code.map(|c| self.k_unit * c as f64))
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.calibration_file
            .clone()
            .unwrap_or_else(|| self.out_dir.join("calibration.txt"))
    }

    /// The configured kernel bank: read from `kernels_file` or generated.
    pub fn bank(&self) -> Result<Vec<Kernel25>> {
        match &self.kernels_file {
            Some(path) => {
                let bank = read_kernel_csv(path)?;
                if bank.is_empty() {
                    return Err(Error::Parameter(format!("{} holds no kernels", path.display())));
                }
                Ok(bank)
            }
            None => make_filter_bank(&self.orientations, &self.ks, self.sigma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.calib().unwrap(), FreqCalib::preset(7).unwrap());
        assert_eq!(cfg.bank().unwrap().len(), 8);
    }

    #[test]
    fn keys_and_comments() {
        let cfg = RunConfig::parse(
            "stages = 3   # fast ring\nseed=99\nk_grid = 0.5, 1, 2\ninit_mode = ic_quantized\ncap_code = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.stages, 3);
        assert_eq!(cfg.sim.seed, 99);
        assert_eq!(cfg.k_grid, vec![0.5, 1.0, 2.0]);
        assert_eq!(cfg.sim.init_mode, InitMode::IcQuantized);
        assert_eq!(cfg.explicit_coupling(), Some(1.0));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::parse("bogus = 1\n").is_err());
        assert!(RunConfig::parse("stages = 4\n").is_err());
        assert!(RunConfig::parse("dt = 0.5\n").is_err());
        assert!(RunConfig::parse("k_grid = 2, 1\n").is_err());
        assert!(RunConfig::parse("cap_code = 16\n").is_err());
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("init_mode = sometimes\n").is_err());
    }

    #[test]
    fn template_documents_every_key() {
        let t = RunConfig::template();
        let mut cfg = RunConfig::default();
        for (key, _) in KEYS {
            assert!(t.contains(&format!("# {key}:")));
            // every documented key is accepted by the parser
            let probe = match *key {
                "init_mode" => "uniform_random",
                "kernels_file" | "out_dir" | "calibration_file" | "image" => "x",
                "k_grid" | "orientations" | "ks" => "1,2",
                "stages" => "5",
                _ => "1",
            };
            cfg.set(key, probe).unwrap();
        }
    }
}
