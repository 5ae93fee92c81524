//! Run configuration (TOML). Every section is optional; missing keys take
//! the defaults below, which are the acceptance-suite settings.
//!
//! ```toml
//! [band]
//! sigma_lower_sq = 0.25
//! sigma_upper_sq = 1.0
//!
//! [tilde]                 # optional dominated generator
//! breakpoints = [-1.0, 1.0]
//! slopes = [0.2, 0.35, 0.5]
//!
//! [pde]
//! dx = 0.01
//! # dt = 5e-5            # explicit step, must satisfy dt <= dx^2/sigma_upper^2
//! domain = 8.0            # half-width of the spatial grid
//! # clamp = 10.0         # clamp for clamped test functions given without one
//!
//! [lattice]
//! steps = 1024
//! sigma_levels = 5
//! scheme = "rademacher"   # or "gauss:8"
//!
//! [mc]
//! paths = 100000
//! seed = 20240601         # SUBLIN_SEED overrides
//!
//! [verify]
//! checks = ["levy", "reflection"]
//! [verify.params.krylov]  # per-check overrides of the report parameters
//! paths = 20000
//!
//! [output]
//! dir = "artifacts"
//! formats = ["json", "csv"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::generator::{default_probe_pairs, DominatedGenerator, VolatilityBand};
use crate::gheat::{SpatialGrid, DEFAULT_DX};
use crate::lattice::{IncrementScheme, SigmaSet, DEFAULT_SIGMA_LEVELS};
use crate::{Error, Result};

pub const SEED_ENV: &str = "SUBLIN_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TildeConfig {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub dx: f64,
    pub dt: Option<f64>,
    pub domain: f64,
    pub clamp: Option<f64>,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            dx: DEFAULT_DX,
            dt: None,
            domain: 8.0,
            clamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub steps: usize,
    pub sigma_levels: usize,
    pub scheme: String,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            steps: 1024,
            sigma_levels: DEFAULT_SIGMA_LEVELS,
            scheme: "rademacher".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub paths: usize,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Checks run by `verify all`; empty means every check.
    pub checks: Vec<String>,
    /// Per-check overrides, keyed by check name, merged over the defaults.
    pub params: BTreeMap<String, toml::Table>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("artifacts"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub band: VolatilityBand,
    pub tilde: Option<TildeConfig>,
    pub pde: PdeSection,
    pub lattice: LatticeSection,
    pub mc: McSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            band: VolatilityBand::new(0.25, 1.0).expect("valid band"),
            tilde: None,
            pde: PdeSection::default(),
            lattice: LatticeSection::default(),
            mc: McSection::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `SUBLIN_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.mc.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config serialization: {e}")))
    }

    /// Checks every precondition that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pde;
        if !(p.dx > 0.0 && p.dx.is_finite()) {
            return Err(Error::config(format!("pde.dx must be > 0, got {}", p.dx)));
        }
        SpatialGrid::symmetric(p.domain, p.dx)?;
        if let Some(dt) = p.dt {
            let limit = p.dx * p.dx / self.band.sigma_upper_sq();
            if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
                return Err(Error::config(format!(
                    "pde.dt = {dt} violates the CFL condition: dt <= dx^2/sigma_upper^2 = {limit} is required"
                )));
            }
        }
        if let Some(c) = p.clamp {
            if !(c > 0.0) {
                return Err(Error::config(format!("pde.clamp must be > 0, got {c}")));
            }
        }
        if self.lattice.steps == 0 {
            return Err(Error::config("lattice.steps must be >= 1"));
        }
        if self.lattice.sigma_levels == 0 {
            return Err(Error::config("lattice.sigma_levels must be >= 1"));
        }
        self.scheme()?.materialize()?;
        if self.mc.paths < 2 {
            return Err(Error::config("mc.paths must be >= 2"));
        }
        if let Some(g) = self.tilde_generator()? {
            let check = g.check_domination(&default_probe_pairs())?;
            if !check.dominated {
                return Err(Error::config(format!(
                    "tilde generator is not dominated by G: {:?}",
                    check.violation
                )));
            }
        }
        for name in self.verify.checks.iter().chain(self.verify.params.keys()) {
            if !crate::cli::CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::config(format!(
                    "unknown check '{name}' in [verify] (known: {})",
                    crate::cli::CHECK_NAMES.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<IncrementScheme> {
        self.lattice.scheme.parse()
    }

    pub fn sigma_set(&self) -> SigmaSet {
        SigmaSet::refined(&self.band, self.lattice.sigma_levels)
    }

    pub fn tilde_generator(&self) -> Result<Option<DominatedGenerator>> {
        self.tilde
            .as_ref()
            .map(|t| DominatedGenerator::new(t.breakpoints.clone(), t.slopes.clone(), self.band))
            .transpose()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Report parameters for `check`: the defaults, then the config's band
    /// and seed (where the parameters have them), then `[verify.params.<check>]`.
    pub fn check_params<P: Serialize + DeserializeOwned + Default>(&self, check: &str) -> Result<P> {
        let mut v = serde_json::to_value(P::default())?;
        if let Value::Object(map) = &mut v {
            if map.contains_key("band") {
                map.insert("band".into(), serde_json::to_value(self.band)?);
            }
            if let (true, Some(g)) = (map.contains_key("generator"), self.tilde_generator()?) {
                map.insert("generator".into(), serde_json::to_value(g)?);
            }
            if map.contains_key("seed") {
                map.insert("seed".into(), Value::from(self.mc.seed));
            }
            if let Some(table) = self.verify.params.get(check) {
                let over = serde_json::to_value(table)?;
                if let Value::Object(over) = over {
                    for (k, val) in over {
                        if !map.contains_key(&k) {
                            return Err(Error::config(format!("unknown parameter '{k}' for check '{check}'")));
                        }
                        map.insert(k, val);
                    }
                }
            }
        }
        serde_json::from_value(v).map_err(|e| Error::config(format!("parameters for '{check}': {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::KrylovParams;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            tilde: Some(TildeConfig {
                breakpoints: vec![-1.0, 1.0],
                slopes: vec![0.2, 0.35, 0.5],
            }),
            ..RunConfig::default()
        };
        cfg.pde.dt = Some(5e-5);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn cfl_violation_names_the_limit() {
        let err = RunConfig::from_toml("[pde]\ndx = 0.01\ndt = 0.001\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("dx^2/sigma_upper^2"), "{err}");
    }

    #[test]
    fn bad_band_and_unknown_keys() {
        assert!(RunConfig::from_toml("[band]\nsigma_lower_sq = 2.0\nsigma_upper_sq = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[pde]\ndz = 0.1\n").is_err());
        assert!(RunConfig::from_toml("[verify]\nchecks = [\"nope\"]\n").is_err());
    }

    #[test]
    fn undominated_tilde_is_rejected() {
        let err = RunConfig::from_toml("[tilde]\nbreakpoints = []\nslopes = [0.7]\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn check_params_overlay() {
        let cfg = RunConfig::from_toml(
            "[band]\nsigma_lower_sq = 0.36\nsigma_upper_sq = 1.0\n[mc]\nseed = 5\n[verify.params.krylov]\npaths = 1234\n",
        )
        .unwrap();
        let p: KrylovParams = cfg.check_params("krylov").unwrap();
        assert_eq!(p.paths, 1234);
        assert_eq!(p.seed, 5);
        assert_eq!(p.band.sigma_lower_sq(), 0.36);
        let bad = RunConfig::from_toml("[verify.params.krylov]\nwidgets = 3\n").unwrap();
        assert!(bad.check_params::<KrylovParams>("krylov").is_err());
    }
}
