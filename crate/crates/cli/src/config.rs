use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("field `{field}`: file {path} does not exist")]
    MissingFile { field: &'static str, path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ValidatePotential,
    Radial,
    RadialSweep,
    Solve,
    Multiplicity,
    Spectrum,
    MorseCheck,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSection {
    /// Mass for `radial`.
    pub gamma: Option<f64>,
    /// Masses for `radial-sweep`.
    pub gammas: Option<Vec<f64>>,
    pub dim: Option<usize>,
    /// Radial spacing.
    pub h: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `plateau`, `photography:x,y`, `noise` or `file:path.csv`.
    pub init: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub newton: Option<bool>,
    /// Eigenvalues to compute after `solve` (0 to skip).
    pub spectrum_k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplicitySection {
    pub seed_pitch: Option<f64>,
    pub seed_points: Option<Vec<(f64, f64)>>,
    pub two_bump: Option<bool>,
    pub spectrum_k: Option<usize>,
    /// Radial threshold `γ̃₀`; computed by a doubling sweep when absent.
    pub gamma0: Option<f64>,
    pub radial_h: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Solution sidecar written by `solve` or `multiplicity`.
    pub solution: Option<PathBuf>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseSection {
    pub indices: Option<Vec<usize>>,
    /// `catalog.json` written by `multiplicity`.
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    /// `kind=quartic a1=1 a2=2`, `kind=table file=w.csv`, ...
    pub potential: Option<String>,
    /// `family=annulus r_in=0.5 r_out=1 h=0.02`, ...
    pub domain: Option<String>,
    #[serde(rename = "V")]
    pub volume: Option<f64>,
    pub eps: Option<f64>,
    #[serde(default)]
    pub radial: RadialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub multiplicity: MultiplicitySection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub morse: MorseSection,
    /// Directory that relative paths in the config refer to.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: Kind, output: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            output: output.into(),
            seed: 0,
            workers: None,
            potential: None,
            domain: None,
            volume: None,
            eps: None,
            radial: RadialSection::default(),
            solver: SolverSection::default(),
            multiplicity: MultiplicitySection::default(),
            spectrum: SpectrumSection::default(),
            morse: MorseSection::default(),
            base_dir: None,
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads a TOML file; relative paths in it, the output directory
    /// included, refer to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut c = Self::from_toml(&text, &path.display().to_string())?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        c.output = c.resolve(&c.output);
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Canonical JSON used for the manifest hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: Option<f64>| match v {
            None => Err(ConfigError::Missing(field)),
            Some(x) if x.is_finite() && x > 0.0 => Ok(()),
            Some(x) => Err(ConfigError::Invalid {
                field,
                message: format!("must be positive, got {x}"),
            }),
        };
        let optional_positive = |field: &'static str, v: Option<f64>| match v {
            Some(_) => positive(field, v),
            None => Ok(()),
        };
        if let Some(0) = self.workers {
            return Err(ConfigError::Invalid {
                field: "workers",
                message: "must be at least 1".into(),
            });
        }
        if let Some(d) = self.radial.dim {
            if !(1..=3).contains(&d) {
                return Err(ConfigError::Invalid {
                    field: "radial.dim",
                    message: format!("must be 1, 2 or 3, got {d}"),
                });
            }
        }
        optional_positive("radial.h", self.radial.h)?;
        optional_positive("solver.tol", self.solver.tol)?;
        optional_positive("multiplicity.seed_pitch", self.multiplicity.seed_pitch)?;
        optional_positive("multiplicity.gamma0", self.multiplicity.gamma0)?;
        optional_positive("multiplicity.radial_h", self.multiplicity.radial_h)?;
        let need_potential = !matches!(self.kind, Kind::MorseCheck);
        if need_potential && self.potential.is_none() {
            return Err(ConfigError::Missing("potential"));
        }
        match self.kind {
            Kind::ValidatePotential => {}
            Kind::Radial => positive("radial.gamma", self.radial.gamma)?,
            Kind::RadialSweep => match &self.radial.gammas {
                None => return Err(ConfigError::Missing("radial.gammas")),
                Some(g) if g.is_empty() || g.iter().any(|x| !(x.is_finite() && *x > 0.0)) => {
                    return Err(ConfigError::Invalid {
                        field: "radial.gammas",
                        message: "needs at least one positive mass".into(),
                    })
                }
                Some(_) => {}
            },
            Kind::Solve | Kind::Multiplicity => {
                if self.domain.is_none() {
                    return Err(ConfigError::Missing("domain"));
                }
                positive("V", self.volume)?;
                positive("eps", self.eps)?;
                if let Some(init) = &self.solver.init {
                    if let Some(file) = init.strip_prefix("file:") {
                        let p = self.resolve(Path::new(file));
                        if !p.exists() {
                            return Err(ConfigError::MissingFile {
                                field: "solver.init",
                                path: p,
                            });
                        }
                    }
                }
            }
            Kind::Spectrum => {
                let p = self.spectrum.solution.as_ref().ok_or(ConfigError::Missing("spectrum.solution"))?;
                let p = self.resolve(p);
                if !p.exists() {
                    return Err(ConfigError::MissingFile {
                        field: "spectrum.solution",
                        path: p,
                    });
                }
                if self.spectrum.k == Some(0) {
                    return Err(ConfigError::Invalid {
                        field: "spectrum.k",
                        message: "must be at least 1".into(),
                    });
                }
            }
            Kind::MorseCheck => {
                if self.domain.is_none() {
                    return Err(ConfigError::Missing("domain"));
                }
                match (&self.morse.indices, &self.morse.catalog) {
                    (None, None) => return Err(ConfigError::Missing("morse.indices")),
                    (_, Some(c)) if !self.resolve(c).exists() => {
                        return Err(ConfigError::MissingFile {
                            field: "morse.catalog",
                            path: self.resolve(c),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
