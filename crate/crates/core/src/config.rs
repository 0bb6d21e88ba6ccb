//! Run configuration: one JSON document with dotted-path overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::barrier::AubryTolerances;
use crate::error::{Error, Result};
use crate::model::{LagrangianModel, Potential, TrigTerm};
use crate::orbits::TraceSettings;
use crate::solver::SolverSettings;

/// Model family plus coefficients.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `free`, `pendulum`, `double_well`, `double_well_pendulum` or `trig`.
    pub family: String,
    /// Potential terms for the `trig` family.
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
    #[serde(default)]
    pub offset: f64,
    /// Constant drift `b`; zero when empty.
    #[serde(default)]
    pub drift: Vec<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            family: "pendulum".into(),
            terms: Vec::new(),
            offset: 0.0,
            drift: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalSettings {
    /// Aubry neighbourhood excluded from the search, in cells.
    pub u_radius: usize,
    /// Gradient tolerance; `None` means `C_sc·h/2`.
    pub gtol: Option<f64>,
    pub classify_radius: usize,
    /// Nodes sampled for the minimal-norm gradient check.
    pub p3_samples: usize,
    /// Cap on critical representatives paired for minimax witnesses.
    pub max_minimax_points: usize,
}

impl Default for CriticalSettings {
    fn default() -> Self {
        Self {
            u_radius: 3,
            gtol: None,
            classify_radius: 3,
            p3_samples: 16,
            max_minimax_points: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub dimension: usize,
    /// Cohomology class; zero when empty.
    pub c: Vec<f64>,
    pub grid_n: usize,
    pub solver: SolverSettings,
    pub aubry: AubryTolerances,
    /// Decreasing Lasry-Lions parameters; the last one drives critical-point search.
    pub lambdas: Vec<f64>,
    pub critical: CriticalSettings,
    pub orbit: TraceSettings,
    /// Class pair for hetero barriers and connecting orbits.
    pub classes: Option<[usize; 2]>,
    /// Artifact directory; falls back to `WEAKKAM_OUT`, then `./weakkam-out`.
    pub output_dir: Option<String>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            dimension: 1,
            c: Vec::new(),
            grid_n: 256,
            solver: SolverSettings::default(),
            aubry: AubryTolerances::default(),
            lambdas: vec![0.2, 0.1, 0.05],
            critical: CriticalSettings::default(),
            orbit: TraceSettings::default(),
            classes: None,
            output_dir: None,
            workers: None,
        }
    }
}

/// Sets `path` (dot separated) in a JSON tree, creating objects on the way.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key.path=value")))?;
    if path.is_empty() {
        return Err(Error::Config("override with an empty key".into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(Error::Config(format!("`{}` is not an object", keys[..i].join("."))));
            }
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last key")
}

impl RunConfig {
    /// Parses a JSON document (empty for defaults), applies overrides and validates.
    pub fn from_json(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut doc = match text {
            Some(t) => serde_json::from_str(t)?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.dimension, 1 | 2) {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dimension)));
        }
        if !self.grid_n.is_power_of_two() || !(8..=4096).contains(&self.grid_n) {
            return Err(Error::Config(format!(
                "grid_n must be a power of two in [8, 4096], got {}",
                self.grid_n
            )));
        }
        if !self.c.is_empty() && self.c.len() != self.dimension {
            return Err(Error::Config(format!("c has {} entries for dimension {}", self.c.len(), self.dimension)));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("c must be finite".into()));
        }
        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Config(format!("{name} must be positive, got {x}"))),
                _ => Ok(()),
            }
        };
        positive("solver.tau", self.solver.tau)?;
        positive("solver.tol", Some(self.solver.tol))?;
        positive("aubry.eps_aubry", self.aubry.eps_aubry)?;
        positive("aubry.eps_class", self.aubry.eps_class)?;
        positive("aubry.eps_pair", self.aubry.eps_pair)?;
        positive("critical.gtol", self.critical.gtol)?;
        positive("orbit.eps_limit", self.orbit.eps_limit)?;
        if self.solver.max_iter == 0 || self.solver.alpha_window == 0 {
            return Err(Error::Config("solver.max_iter and solver.alpha_window must be positive".into()));
        }
        self.orbit.validate()?;
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas must not be empty".into()));
        }
        for &l in &self.lambdas {
            positive("lambdas", Some(l))?;
        }
        if self.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("lambdas must be strictly decreasing".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some([a, b]) = self.classes {
            if a == b {
                return Err(Error::Config("classes must name two distinct Aubry classes".into()));
            }
        }
        self.build_model()?;
        Ok(())
    }

    pub fn cohomology(&self) -> Vec<f64> {
        if self.c.is_empty() {
            vec![0.0; self.dimension]
        } else {
            self.c.clone()
        }
    }

    pub fn build_model(&self) -> Result<LagrangianModel> {
        let d = self.dimension;
        let mut model = match self.model.family.as_str() {
            "free" => LagrangianModel::free(d),
            "pendulum" => LagrangianModel::pendulum(d),
            "double_well" if d == 1 => LagrangianModel::double_well(),
            "double_well_pendulum" if d == 2 => LagrangianModel::double_well_pendulum(),
            "double_well" | "double_well_pendulum" => {
                return Err(Error::Config(format!(
                    "model family {} does not exist in dimension {d}",
                    self.model.family
                )))
            }
            "trig" => {
                if self.model.terms.iter().any(|t| t.freq.len() != d) {
                    return Err(Error::Config("every trig term needs one frequency per dimension".into()));
                }
                LagrangianModel::new(
                    "trig",
                    Potential {
                        dim: d,
                        offset: self.model.offset,
                        terms: self.model.terms.clone(),
                    },
                    vec![0.0; d],
                )?
            }
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        };
        if !self.model.drift.is_empty() {
            if self.model.drift.len() != d {
                return Err(Error::Config("model.drift needs one entry per dimension".into()));
            }
            model = LagrangianModel::new(model.name.clone(), model.potential.clone(), self.model.drift.clone())?;
        }
        Ok(model)
    }

    /// Canonical JSON of everything that influences results; output location and
    /// worker count are excluded so they cannot change artifact bytes.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("workers");
        }
        serde_json::to_string(&v).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::from_json(None, &[]).unwrap();
        assert_eq!(cfg.grid_n, 256);
        assert_eq!(cfg.build_model().unwrap().name, "pendulum");
        assert_eq!(cfg.cohomology(), vec![0.0]);
    }

    #[test]
    fn dotted_overrides() {
        let cfg = RunConfig::from_json(
            Some(r#"{"grid_n": 64}"#),
            &[
                "model.family=free".into(),
                "c=[1.0]".into(),
                "solver.tol=1e-8".into(),
                "aubry.eps_aubry=0.3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.family, "free");
        assert_eq!(cfg.c, vec![1.0]);
        assert_eq!(cfg.solver.tol, 1e-8);
        assert_eq!(cfg.aubry.eps_aubry, Some(0.3));
        assert_eq!(cfg.grid_n, 64);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            vec!["grid_n=100"],
            vec!["grid_n=4"],
            vec!["dimension=3"],
            vec!["c=[1.0, 2.0]"],
            vec!["solver.tol=-1"],
            vec!["lambdas=[0.1, 0.2]"],
            vec!["model.family=nope"],
            vec!["model.family=double_well", "dimension=2", "c=[0,0]"],
            vec!["workers=0"],
            vec!["grid_n"],
        ] {
            let o: Vec<String> = bad.iter().map(|s| s.to_string()).collect();
            assert!(RunConfig::from_json(None, &o).is_err(), "{bad:?}");
        }
        assert!(RunConfig::from_json(Some(r#"{"bogus": 1}"#), &[]).is_err());
    }

    #[test]
    fn canonical_json_ignores_workers_and_output() {
        let a = RunConfig::from_json(None, &["workers=1".into(), "output_dir=a".into()]).unwrap();
        let b = RunConfig::from_json(None, &["workers=8".into(), "output_dir=b".into()]).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
        let c = RunConfig::from_json(None, &["grid_n=128".into()]).unwrap();
        assert_ne!(a.canonical_json(), c.canonical_json());
    }
}
