use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::catalogue::Catalogue;
use super::integrator::IntegratorSettings;
use super::signal::DisturbanceBox;
use super::{Evaluator, SystemDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub dim: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

/// JSON system definition:
/// `{dimension, disturbance: {dim, box}, rhs: [..] | catalogue: {name, params}}`
/// plus optional `name`, `seed` and `integrator` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalogue: Option<CatalogueConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSettings>,
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SystemConfig::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!(
                "{}: line {}, column {}: {}",
                path.display(),
                j.line(),
                j.column(),
                j
            )),
            other => other,
        })
    }

    pub fn catalogue(name: &str) -> Self {
        SystemConfig {
            catalogue: Some(CatalogueConfig {
                name: name.to_string(),
                params: BTreeMap::new(),
            }),
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn build(&self) -> Result<SystemDef> {
        let bx = match &self.disturbance {
            Some(dc) => {
                if dc.bounds.len() != dc.dim {
                    return Err(Error::Config(format!(
                        "disturbance.dim is {} but box has {} intervals",
                        dc.dim,
                        dc.bounds.len()
                    )));
                }
                Some(DisturbanceBox::new(dc.bounds.clone())?)
            }
            None => None,
        };
        let mut sys = match (&self.rhs, &self.catalogue) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `rhs` or `catalogue`, not both".into()))
            }
            (None, None) => return Err(Error::Config("missing `rhs` or `catalogue`".into())),
            (Some(rhs), None) => {
                if let Some(n) = self.dimension {
                    if n != rhs.len() {
                        return Err(Error::Config(format!(
                            "dimension is {n} but rhs has {} components",
                            rhs.len()
                        )));
                    }
                }
                let refs: Vec<&str> = rhs.iter().map(String::as_str).collect();
                let name = self.name.clone().unwrap_or_else(|| "ode".to_string());
                SystemDef::ode(
                    &name,
                    &refs,
                    bx.clone().unwrap_or_else(DisturbanceBox::none),
                    self.integrator.unwrap_or_default(),
                )?
            }
            (None, Some(c)) => {
                let entry = Catalogue::from_name(&c.name, &c.params)?;
                if let Some(n) = self.dimension {
                    if n != entry.dimension() {
                        return Err(Error::Config(format!(
                            "catalogue system `{}` has dimension {}, config says {n}",
                            c.name,
                            entry.dimension()
                        )));
                    }
                }
                let mut sys = SystemDef::catalogue(entry);
                if let Some(bx) = &bx {
                    if bx.dim() != sys.disturbance.dim() {
                        return Err(Error::Config(format!(
                            "catalogue system `{}` takes a {}-dimensional disturbance",
                            c.name,
                            sys.disturbance.dim()
                        )));
                    }
                    sys.disturbance = bx.clone();
                }
                if let Some(name) = &self.name {
                    sys.name = name.clone();
                }
                sys
            }
        };
        if let Some(s) = self.integrator {
            sys = sys.with_settings(s);
        }
        Ok(sys)
    }
}

impl SystemDef {
    /// A config that rebuilds this system.
    pub fn to_config(&self) -> SystemConfig {
        let disturbance = (self.disturbance.dim() > 0).then(|| DisturbanceConfig {
            dim: self.disturbance.dim(),
            bounds: self.disturbance.bounds().to_vec(),
        });
        match &self.evaluator {
            Evaluator::Analytic(c) => SystemConfig {
                name: Some(self.name.clone()),
                dimension: Some(self.dimension),
                disturbance,
                catalogue: Some(CatalogueConfig {
                    name: c.name().to_string(),
                    params: c.params(),
                }),
                ..Default::default()
            },
            Evaluator::Ode(o) => SystemConfig {
                name: Some(self.name.clone()),
                dimension: Some(self.dimension),
                disturbance,
                rhs: Some(o.expressions().iter().map(|e| e.source().to_string()).collect()),
                integrator: Some(*o.settings()),
                ..Default::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rhs_config() {
        let c = SystemConfig::from_json(
            r#"{"dimension":1,"disturbance":{"dim":1,"box":[[-1,1]]},"rhs":["-x1 + d1"]}"#,
        )
        .unwrap();
        let s = c.build().unwrap();
        assert_eq!(s.dimension(), 1);
        assert_eq!(s.disturbance().dim(), 1);
        assert!(!s.is_analytic());
        let back = s.to_config().build().unwrap();
        assert_eq!(back.to_config(), s.to_config());
    }

    #[test]
    fn parses_catalogue_config() {
        let c = SystemConfig::from_json(
            r#"{"catalogue":{"name":"switched_2d","params":{"a":5}},"seed":7}"#,
        )
        .unwrap();
        assert_eq!(c.seed(), 7);
        let s = c.build().unwrap();
        assert_eq!(s.dimension(), 2);
        assert!(s.is_analytic());
    }

    #[test]
    fn config_errors() {
        assert!(SystemConfig::from_json(r#"{"rhs":["x3"],"dimension":1}"#).unwrap().build().is_err());
        assert!(SystemConfig::from_json(r#"{"dimension":2,"rhs":["x1"]}"#).unwrap().build().is_err());
        assert!(SystemConfig::from_json(r#"{}"#).unwrap().build().is_err());
        assert!(SystemConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert!(SystemConfig::from_json(
            r#"{"disturbance":{"dim":2,"box":[[0,1]]},"rhs":["x1"]}"#
        )
        .unwrap()
        .build()
        .is_err());
    }
}
