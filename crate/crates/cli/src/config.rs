//! Flat key/value run configuration with dotted sections.
//!
//! The format is line-oriented: `key = value`, `#` comments, blank lines
//! ignored. Parsing is total: every line must be understood or the parse
//! fails with its line number, and unknown keys are errors.

use blackwell_core::experiments::{DyadicSchedule, ExperimentConfig, GridSpec};
use blackwell_core::maxwell::{InitialDataSpec, Sector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}` (expected key = value)")]
    BadLine { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Which sectors the initial pulse populates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorChoice {
    A,
    B,
    Both,
}

impl std::fmt::Display for SectorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SectorChoice::A => write!(f, "A"),
            SectorChoice::B => write!(f, "B"),
            SectorChoice::Both => write!(f, "AB"),
        }
    }
}

/// The full file-backed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mass: f64,
    pub grid_rstar_min: f64,
    pub grid_rstar_max: f64,
    pub grid_n_r: usize,
    pub grid_n_theta: usize,
    pub grid_cfl: f64,
    pub sector: SectorChoice,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub ell: u32,
    pub schedule_t0: f64,
    pub schedule_count: usize,
    pub r1: f64,
    pub stations: Vec<f64>,
    pub measure_halfwidth: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub t_final: f64,
    pub outputs_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            grid_rstar_min: -150.0,
            grid_rstar_max: 150.0,
            grid_n_r: 2048,
            grid_n_theta: 24,
            grid_cfl: 0.5,
            sector: SectorChoice::Both,
            amplitude: 1.0,
            center: 0.0,
            width: 6.0,
            ell: 1,
            schedule_t0: 10.0,
            schedule_count: 12,
            r1: 2.25,
            stations: vec![2.1, 2.25, 4.0, 8.0],
            measure_halfwidth: 20.0,
            fit_lo: 40.0,
            fit_hi: 200.0,
            t_final: 100.0,
            outputs_dir: "out".to_string(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: &str| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg: msg.to_string(),
            };
            let as_f64 = |v: &str| v.parse::<f64>().map_err(|e| bad(&e.to_string()));
            let as_usize = |v: &str| v.parse::<usize>().map_err(|e| bad(&e.to_string()));
            match key {
                "mass" => cfg.mass = as_f64(value)?,
                "grid.rstar_min" => cfg.grid_rstar_min = as_f64(value)?,
                "grid.rstar_max" => cfg.grid_rstar_max = as_f64(value)?,
                "grid.n_r" => cfg.grid_n_r = as_usize(value)?,
                "grid.n_theta" => cfg.grid_n_theta = as_usize(value)?,
                "grid.cfl" => cfg.grid_cfl = as_f64(value)?,
                "initial_data.sector" => {
                    cfg.sector = match value {
                        "A" => SectorChoice::A,
                        "B" => SectorChoice::B,
                        "AB" | "both" => SectorChoice::Both,
                        other => return Err(bad(&format!("unknown sector `{other}`"))),
                    }
                }
                "initial_data.amplitude" => cfg.amplitude = as_f64(value)?,
                "initial_data.center" => cfg.center = as_f64(value)?,
                "initial_data.width" => cfg.width = as_f64(value)?,
                "initial_data.ell" => {
                    cfg.ell = value.parse::<u32>().map_err(|e| bad(&e.to_string()))?
                }
                "schedule.t0" => cfg.schedule_t0 = as_f64(value)?,
                "schedule.count" => cfg.schedule_count = as_usize(value)?,
                "h_profile.r1" => cfg.r1 = as_f64(value)?,
                "stations" => {
                    let mut out = Vec::new();
                    for item in value.split(',') {
                        out.push(
                            item.trim()
                                .parse::<f64>()
                                .map_err(|e| bad(&e.to_string()))?,
                        );
                    }
                    cfg.stations = out;
                }
                "measure_halfwidth" => cfg.measure_halfwidth = as_f64(value)?,
                "fit_window.lo" => cfg.fit_lo = as_f64(value)?,
                "fit_window.hi" => cfg.fit_hi = as_f64(value)?,
                "t_final" => cfg.t_final = as_f64(value)?,
                "outputs.dir" => cfg.outputs_dir = value.to_string(),
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.to_string(),
                    });
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Physical invariants re-checked after parse.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.mass > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "mass {} must be positive",
                self.mass
            )));
        }
        if self.grid_rstar_min >= self.grid_rstar_max {
            return Err(ConfigError::Invalid("grid bounds are inverted".into()));
        }
        if self.grid_n_r < 16 {
            return Err(ConfigError::Invalid(format!("n_r {} < 16", self.grid_n_r)));
        }
        if self.grid_n_theta < 2 || self.grid_n_theta > 64 {
            return Err(ConfigError::Invalid(format!(
                "n_theta {} out of [2, 64]",
                self.grid_n_theta
            )));
        }
        if !(self.grid_cfl > 0.0 && self.grid_cfl <= 0.5) {
            return Err(ConfigError::Invalid(format!(
                "cfl {} out of (0, 0.5]",
                self.grid_cfl
            )));
        }
        if !(self.width > 0.0) {
            return Err(ConfigError::Invalid("pulse width must be positive".into()));
        }
        if self.ell != 1 && self.ell != 2 {
            return Err(ConfigError::Invalid(format!(
                "ell {} must be 1 or 2",
                self.ell
            )));
        }
        if !(self.schedule_t0 > 0.0) {
            return Err(ConfigError::Invalid("schedule t0 must be positive".into()));
        }
        if !(self.fit_lo < self.fit_hi) {
            return Err(ConfigError::Invalid("fit window is inverted".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing the echo reproduces the config exactly.
    pub fn echo(&self) -> String {
        let stations = self
            .stations
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "mass = {}\n\
             grid.rstar_min = {}\n\
             grid.rstar_max = {}\n\
             grid.n_r = {}\n\
             grid.n_theta = {}\n\
             grid.cfl = {}\n\
             initial_data.sector = {}\n\
             initial_data.amplitude = {}\n\
             initial_data.center = {}\n\
             initial_data.width = {}\n\
             initial_data.ell = {}\n\
             schedule.t0 = {}\n\
             schedule.count = {}\n\
             h_profile.r1 = {}\n\
             stations = {}\n\
             measure_halfwidth = {}\n\
             fit_window.lo = {}\n\
             fit_window.hi = {}\n\
             t_final = {}\n\
             outputs.dir = {}\n",
            self.mass,
            self.grid_rstar_min,
            self.grid_rstar_max,
            self.grid_n_r,
            self.grid_n_theta,
            self.grid_cfl,
            self.sector,
            self.amplitude,
            self.center,
            self.width,
            self.ell,
            self.schedule_t0,
            self.schedule_count,
            self.r1,
            stations,
            self.measure_halfwidth,
            self.fit_lo,
            self.fit_hi,
            self.t_final,
            self.outputs_dir,
        )
    }

    /// Map into the experiment layer, applying the resolution divisor.
    pub fn to_experiment(
        &self,
        resolution_scale: u32,
        allow_nonunit_mass: bool,
    ) -> ExperimentConfig {
        let mut initial = Vec::new();
        let mk = |sector| InitialDataSpec {
            sector,
            amplitude: self.amplitude,
            center: self.center,
            width: self.width,
            ell: self.ell,
        };
        match self.sector {
            SectorChoice::A => initial.push(mk(Sector::A)),
            SectorChoice::B => initial.push(mk(Sector::B)),
            SectorChoice::Both => {
                initial.push(mk(Sector::A));
                initial.push(mk(Sector::B));
            }
        }
        ExperimentConfig {
            mass: self.mass,
            grid: GridSpec {
                rstar_min: self.grid_rstar_min,
                rstar_max: self.grid_rstar_max,
                n_r: self.grid_n_r,
                n_theta: self.grid_n_theta,
                cfl: self.grid_cfl,
            },
            initial,
            schedule: DyadicSchedule {
                t0: self.schedule_t0,
                count: self.schedule_count,
            },
            r1: self.r1,
            stations_r: self.stations.clone(),
            measure_halfwidth: self.measure_halfwidth,
            fit_window: (self.fit_lo, self.fit_hi),
            t_final: self.t_final,
            resolution_scale,
            allow_nonunit_mass,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo_round_trip() {
        let text = "\
# reference run
mass = 1.0
grid.rstar_min = -120
grid.rstar_max = 120.5
grid.n_r = 512
grid.n_theta = 8
grid.cfl = 0.4
initial_data.sector = B
initial_data.amplitude = 2.5
initial_data.center = -3
initial_data.width = 5
initial_data.ell = 2
schedule.t0 = 7
schedule.count = 9
h_profile.r1 = 2.3
stations = 2.1, 4, 8
measure_halfwidth = 18
fit_window.lo = 20
fit_window.hi = 90
t_final = 95
outputs.dir = results
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.grid_n_r, 512);
        assert_eq!(cfg.sector, SectorChoice::B);
        assert_eq!(cfg.stations, vec![2.1, 4.0, 8.0]);
        let echoed = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, echoed);
    }

    #[test]
    fn parse_rejects_bad_input_with_line_numbers() {
        let err = RunConfig::parse("mass 1.0").unwrap_err();
        assert!(matches!(err, ConfigError::BadLine { line: 1, .. }));
        let err = RunConfig::parse("masss = 1.0").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
        let err = RunConfig::parse("grid.n_r = eel").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 1, .. }));
        let err = RunConfig::parse("mass = -2").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
        let err = RunConfig::parse("initial_data.ell = 5").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn sector_choices_map_to_pulses() {
        let mut cfg = RunConfig::default();
        cfg.sector = SectorChoice::Both;
        let exp = cfg.to_experiment(1, false);
        assert_eq!(exp.initial.len(), 2);
        cfg.sector = SectorChoice::A;
        assert_eq!(cfg.to_experiment(1, false).initial.len(), 1);
    }
}
