use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bifurcation::{
    CensusOptions, Codim2Options, ContinuationOptions, CycleOptions, HomoclinicOptions, PortraitBox, SearchBox,
    SweepAxis,
};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Parameter};
use crate::moments::OdeConfig;
use crate::network::{InitialLaw, SimConfig};
use crate::stats::Window;

/// Either an inline model or a path to one, relative to the recipe file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(ModelSpec),
    Path(PathBuf),
}

/// Parameter scan run by `simulate-net`: every value at every network size,
/// each compared with the mean-field endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    #[serde(with = "crate::bifurcation::parameter_name")]
    pub parameter: Parameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSpec {
    #[serde(with = "crate::bifurcation::parameter_name")]
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub options: ContinuationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codim2Spec {
    #[serde(with = "crate::bifurcation::parameter_name")]
    pub p1: Parameter,
    #[serde(with = "crate::bifurcation::parameter_name")]
    pub p2: Parameter,
    #[serde(rename = "box")]
    pub search_box: SearchBox,
    #[serde(default)]
    pub options: Codim2Options,
    /// `p2` bracket for the homoclinic turning-point estimate.
    #[serde(default)]
    pub homoclinic_bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub homoclinic: HomoclinicOptions,
}

/// Bisection for the noise level where cycles around the repelling focus appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetSpec {
    #[serde(with = "crate::bifurcation::parameter_name")]
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitSpec {
    #[serde(rename = "box")]
    pub bounds: PortraitBox,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub census: CensusOptions,
    #[serde(default)]
    pub continuation: Option<ContinuationSpec>,
    #[serde(default)]
    pub codim2: Option<Codim2Spec>,
    #[serde(default)]
    pub onset: Option<OnsetSpec>,
    #[serde(default)]
    pub portrait: Option<PortraitSpec>,
    #[serde(default)]
    pub cycle: Option<CycleOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSpec {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    #[serde(with = "crate::bifurcation::parameter_name", default = "noise")]
    pub parameter: Parameter,
    pub values: Vec<f64>,
    /// Initial stretch discarded before transforming.
    pub transient: f64,
    #[serde(default)]
    pub window: Window,
    /// The network mean oscillates when its RMS exceeds this multiple of the
    /// finite-size fluctuation scale `√(v₁/N₁)`.
    #[serde(default = "default_noise_multiple")]
    pub noise_multiple: f64,
    /// The moment solution oscillates when its RMS exceeds this floor.
    #[serde(default = "default_mf_floor")]
    pub mf_floor: f64,
    /// Extra settling time of the moment equations before their window.
    #[serde(default = "default_mf_settle")]
    pub mf_settle: f64,
    /// Highest frequency considered when looking for the peak.
    #[serde(default = "default_max_frequency")]
    pub max_frequency: f64,
}

fn noise() -> Parameter {
    Parameter::Noise
}

fn default_noise_multiple() -> f64 {
    10.0
}

fn default_mf_floor() -> f64 {
    1e-4
}

fn default_mf_settle() -> f64 {
    1000.0
}

fn default_max_frequency() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
}

/// One experiment: a model, how to run it, and which analyses to perform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSource,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub init: Option<InitialLaw>,
    #[serde(default)]
    pub ode: Option<OdeConfig>,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub converge: Option<ConvergeSpec>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub validate: Option<ValidateSpec>,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Recipe {
    /// Reads a recipe, applies `key=value` overrides and resolves a model path
    /// into an inline model.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Recipe> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)?;
        if let Some(Value::String(p)) = value.get("model") {
            let model_path = path.parent().unwrap_or(Path::new(".")).join(p);
            let model_text = std::fs::read_to_string(&model_path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read model {}: {e}", model_path.display())))?;
            value["model"] = serde_json::from_str(&model_text)?;
        }
        let mut parameters = Vec::new();
        for ov in overrides {
            let (key, raw) =
                ov.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("override `{ov}` is not key=value")))?;
            let key = key.trim();
            if !key.contains('.') {
                if let Ok(p) = key.parse::<Parameter>() {
                    let x: f64 = raw
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("override `{ov}`: `{raw}` is not a number")))?;
                    parameters.push((p, x));
                    continue;
                }
            }
            set_path(&mut value, key, parse_value(raw))?;
        }
        let mut recipe: Recipe = serde_json::from_value(value)?;
        if !parameters.is_empty() {
            let spec = parameters.iter().fold(recipe.model()?.clone(), |s, (p, x)| p.apply(&s, *x));
            recipe.model = ModelSource::Inline(spec);
        }
        recipe.model()?.validate()?;
        Ok(recipe)
    }

    pub fn model(&self) -> Result<&ModelSpec> {
        match &self.model {
            ModelSource::Inline(m) => Ok(m),
            ModelSource::Path(p) => Err(Error::InvalidConfig(format!("model path {} was not resolved", p.display()))),
        }
    }

    pub fn sim(&self) -> Result<&SimConfig> {
        self.sim.as_ref().ok_or_else(|| Error::InvalidConfig(format!("recipe `{}` has no `sim` section", self.name)))
    }

    pub fn init(&self) -> Result<InitialLaw> {
        let p = self.model()?.n_populations();
        let init = self.init.clone().unwrap_or_else(|| InitialLaw::point(vec![0.0; p]));
        init.validate(p)?;
        Ok(init)
    }

    /// Seed of the network runs (zero when there is no `sim` section).
    pub fn seed(&self) -> u64 {
        self.sim.as_ref().map_or(0, |s| s.seed)
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()))
}

/// Sets `value` at a dotted path such as `sim.n_total` or `model.populations.0.noise`.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("override path `{path}`: `{part}` is not an index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("override path `{path}`: index {idx} ≥ {len}")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(Error::InvalidConfig(format!("override path `{path}` descends into a scalar"))),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_recipe(dir: &Path) -> PathBuf {
        let model = ModelSpec::excitatory_inhibitory(1.0, 1.2, 0.0, -3.0);
        std::fs::write(dir.join("model.json"), model.to_json().unwrap()).unwrap();
        let recipe = serde_json::json!({
            "name": "t",
            "model": "model.json",
            "sim": {"n_total": 100, "dt": 0.01, "t_end": 1.0, "n_realizations": 2, "seed": 5, "record_mode": "population_stats"}
        });
        let path = dir.join("recipe.json");
        std::fs::write(&path, recipe.to_string()).unwrap();
        path
    }

    #[test]
    fn model_path_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_recipe(dir.path());
        let r = Recipe::load(&path, &["sim.n_total=400".into(), "lambda=1.5".into(), "I1=0.25".into()]).unwrap();
        assert_eq!(r.sim().unwrap().n_total, 400);
        let m = r.model().unwrap();
        assert_eq!(m.populations[1].noise.final_value(), 1.5);
        assert_eq!(m.populations[0].input.final_value(), 0.25);
        let r = Recipe::load(&path, &["model.populations.1.tau=2.0".into()]).unwrap();
        assert_eq!(r.model().unwrap().populations[1].tau, 2.0);
    }

    #[test]
    fn bad_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_recipe(dir.path());
        assert!(Recipe::load(&path, &["sim.n_total".into()]).is_err());
        assert!(Recipe::load(&path, &["lambda=abc".into()]).is_err());
        assert!(Recipe::load(&path, &["model.populations.7.tau=1".into()]).is_err());
        assert!(Recipe::load(&path, &["model.populations.0.tau=-1".into()]).is_err());
    }
}
