//! Run configuration: a JSON document with every field optional except the
//! tree, plus command line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ultrametric_vp::checks::Tolerances;
use ultrametric_vp::numeric::parse_rational;
use ultrametric_vp::operator::{KernelForm, DEFAULT_MATRIX_CAP};
use ultrametric_vp::tree::{DiameterSpec, ExplicitShape, Metric, TreeSpec, Vertex};

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "UVP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "uvp-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tree: TreeConfig,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_kernel_form")]
    pub kernel_form: KernelForm,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default = "default_abscissa_tolerance")]
    pub abscissa_tolerance: f64,
    #[serde(default = "default_matrix_cap")]
    pub matrix_cap: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub family: FamilyConfig,
    /// Required except for explicit shapes, whose depth is implied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default)]
    pub metric: MetricConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Padic { p: u32 },
    LevelRegular { branching: Vec<u32> },
    RandomBounded { min: u32, max: u32, seed: u64 },
    Explicit { shape: Value },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Canonical,
    Baire,
    /// Rational strings, one per level `0..=depth`.
    PerLevel(Vec<String>),
    /// Rational strings keyed by dot-separated address (`""` is the root).
    PerVertex(BTreeMap<String, String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Starting leaf; the first leaf when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,
    pub horizon: f64,
    pub paths: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            x0: None,
            horizon: 1.0,
            paths: 200_000,
        }
    }
}

fn default_s() -> f64 {
    3.0
}

fn default_kernel_form() -> KernelForm {
    KernelForm::General
}

fn default_times() -> Vec<f64> {
    vec![0.1, 1.0]
}

fn default_abscissa_tolerance() -> f64 {
    1e-4
}

fn default_matrix_cap() -> usize {
    DEFAULT_MATRIX_CAP
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tree: TreeConfig {
                family: FamilyConfig::Padic { p: 2 },
                depth: Some(3),
                metric: MetricConfig::Canonical,
            },
            s: default_s(),
            kernel_form: default_kernel_form(),
            times: default_times(),
            output_dir: None,
            seed: 0,
            simulate: SimulateConfig::default(),
            abscissa_tolerance: default_abscissa_tolerance(),
            matrix_cap: default_matrix_cap(),
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Check every field and translate the tree section.
    pub fn validate(&self) -> Result<TreeSpec, CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Validation(format!("{field}: {msg}")));
        if !self.s.is_finite() {
            return bad("s", format!("must be finite, got {}", self.s));
        }
        if let Some((i, t)) = self.times.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return bad(&format!("times[{i}]"), format!("must be positive and finite, got {t}"));
        }
        let sim = &self.simulate;
        if !(sim.horizon.is_finite() && sim.horizon > 0.0) {
            return bad("simulate.horizon", format!("must be positive and finite, got {}", sim.horizon));
        }
        if sim.paths == 0 {
            return bad("simulate.paths", "must be at least 1".into());
        }
        if !(self.abscissa_tolerance.is_finite() && self.abscissa_tolerance > 0.0) {
            return bad("abscissa_tolerance", format!("must be positive, got {}", self.abscissa_tolerance));
        }
        if self.matrix_cap == 0 {
            return bad("matrix_cap", "must be at least 1".into());
        }
        let tol = serde_json::to_value(&self.tolerances).expect("plain numbers");
        if let Some((k, v)) = tol.as_object().into_iter().flatten().find(|(_, v)| !v.as_f64().is_some_and(|x| x > 0.0)) {
            return bad(&format!("tolerances.{k}"), format!("must be positive, got {v}"));
        }
        self.tree.to_spec()
    }
}

impl TreeConfig {
    pub fn to_spec(&self) -> Result<TreeSpec, CliError> {
        let bad = |field: &str, msg: String| CliError::Validation(format!("tree.{field}: {msg}"));
        let depth = |family: &str| match self.depth {
            Some(d) if d >= 1 => Ok(d),
            Some(d) => Err(bad("depth", format!("must be at least 1, got {d}"))),
            None => Err(bad("depth", format!("required for the {family} family"))),
        };
        let spec = match &self.family {
            FamilyConfig::Padic { p } => TreeSpec::padic(*p, depth("padic")?),
            FamilyConfig::LevelRegular { branching } => {
                if let Some((i, b)) = branching.iter().enumerate().find(|(_, b)| **b < 2) {
                    return Err(bad(
                        &format!("family.branching[{i}]"),
                        format!("level_regular family needs every branching number >= 2, got {b}"),
                    ));
                }
                TreeSpec::level_regular(branching.clone(), depth("level_regular")?)
            }
            FamilyConfig::RandomBounded { min, max, seed } => {
                if *min < 2 || max < min {
                    return Err(bad(
                        "family",
                        format!("random_bounded family needs 2 <= min <= max, got min {min}, max {max}"),
                    ));
                }
                TreeSpec::random_bounded(*min, *max, *seed, depth("random_bounded")?)
            }
            FamilyConfig::Explicit { shape } => {
                let shape = ExplicitShape::from_json(shape)
                    .map_err(|e| bad("family.shape", format!("explicit family: {e}")))?;
                let spec = TreeSpec::explicit(shape);
                if let Some(d) = self.depth.filter(|&d| d != spec.depth) {
                    return Err(bad("depth", format!("explicit shape has depth {}, config says {d}", spec.depth)));
                }
                spec
            }
        };
        let rational = |field: String, text: &str| {
            parse_rational(text).ok_or_else(|| bad(&field, format!("`{text}` is not a rational number")))
        };
        let metric = match &self.metric {
            MetricConfig::Canonical => Metric::Canonical,
            MetricConfig::Baire => Metric::Baire,
            MetricConfig::PerLevel(values) => Metric::ExplicitDiameters(DiameterSpec::PerLevel(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| rational(format!("metric.per_level[{i}]"), v))
                    .collect::<Result<_, _>>()?,
            )),
            MetricConfig::PerVertex(values) => {
                let mut map = BTreeMap::new();
                for (addr, v) in values {
                    let vertex: Vertex = addr
                        .parse()
                        .map_err(|_| bad(&format!("metric.per_vertex[{addr:?}]"), "malformed address".into()))?;
                    map.insert(vertex, rational(format!("metric.per_vertex[{addr:?}]"), v)?);
                }
                Metric::ExplicitDiameters(DiameterSpec::PerVertex(map))
            }
        };
        Ok(spec.with_metric(metric))
    }
}

/// `padic:2`, `level-regular:2,3`, `random:MIN,MAX,SEED` or `explicit:JSON`.
pub fn parse_family(text: &str) -> Result<FamilyConfig, CliError> {
    let bad = || {
        CliError::Validation(format!(
            "--family `{text}`: expected padic:P, level-regular:B1,B2,..., random:MIN,MAX,SEED or explicit:JSON"
        ))
    };
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let numbers = |s: &str| -> Result<Vec<u64>, CliError> {
        s.split(',').map(|x| x.trim().parse::<u64>().map_err(|_| bad())).collect()
    };
    let small = |x: u64| u32::try_from(x).map_err(|_| bad());
    match kind {
        "padic" | "p-adic" => Ok(FamilyConfig::Padic {
            p: rest.trim().parse().map_err(|_| bad())?,
        }),
        "level-regular" | "level_regular" => Ok(FamilyConfig::LevelRegular {
            branching: numbers(rest)?.into_iter().map(small).collect::<Result<_, _>>()?,
        }),
        "random" | "random-bounded" | "random_bounded" => match numbers(rest)?.as_slice() {
            [min, max, seed] => Ok(FamilyConfig::RandomBounded {
                min: small(*min)?,
                max: small(*max)?,
                seed: *seed,
            }),
            _ => Err(bad()),
        },
        "explicit" => Ok(FamilyConfig::Explicit {
            shape: serde_json::from_str(rest).map_err(|e| CliError::Validation(format!("--family explicit: {e}")))?,
        }),
        _ => Err(bad()),
    }
}

/// `canonical`, `baire` or `per-level:1,1/2,...`.
pub fn parse_metric(text: &str) -> Result<MetricConfig, CliError> {
    match text {
        "canonical" => Ok(MetricConfig::Canonical),
        "baire" => Ok(MetricConfig::Baire),
        _ => match text.split_once(':') {
            Some(("per-level" | "per_level", rest)) => {
                Ok(MetricConfig::PerLevel(rest.split(',').map(|s| s.trim().to_string()).collect()))
            }
            _ => Err(CliError::Validation(format!(
                "--metric `{text}`: expected canonical, baire or per-level:D0,D1,..."
            ))),
        },
    }
}
