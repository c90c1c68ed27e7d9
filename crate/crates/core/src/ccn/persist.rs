//! Saving and loading trained models.
//!
//! A model is a directory holding `manifest.json` and one network file per
//! [`DenseNet`] (see [`crate::nn::io`] for that format). The manifest keeps
//! everything else needed to rebuild the model: the probe range, the
//! covariate standardization, the architecture tag and, for FCCN, which
//! head file is which.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainReport;
use super::{Architecture, CdfModel, CdfNetwork, ZSampler};
use crate::data::Standardizer;
use crate::error::{CcnError, Result};
use crate::fccn::{FccnHeads, Representation};
use crate::nn::io::{load_net, save_net};
use crate::nn::{DenseNet, MonotoneNet};
use crate::scalar::Real;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "ccn-model 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationManifest {
    pub propensity_feature: bool,
    /// Absent in raw mode.
    pub phi_w: Option<String>,
    pub phi_a: Option<String>,
    pub e_head: String,
    pub critic: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub architecture: Architecture,
    pub covariate_dim: usize,
    pub z_range: (f64, f64),
    pub sampler: ZSampler,
    pub standardizer: Standardizer,
    /// Network files of `g0` and `g1`: one for the plain architecture, three
    /// (weights, shifts, log-slopes) for the monotone one.
    pub g0: Vec<String>,
    pub g1: Vec<String>,
    pub representation: Option<RepresentationManifest>,
    pub report: Option<TrainReport>,
}

fn save(net: &DenseNet<impl Real>, dir: &Path, name: &str) -> Result<String> {
    save_net(net, &dir.join(name))?;
    Ok(name.to_string())
}

/// Writes `model` into `dir`, creating it if needed, and returns the manifest.
pub fn save_model<S: Real>(model: &CdfModel<S>, dir: &Path) -> Result<ModelManifest> {
    std::fs::create_dir_all(dir)?;
    let mut g = [Vec::new(), Vec::new()];
    for (t, files) in g.iter_mut().enumerate() {
        let suffixes: &[&str] = match model.architecture() {
            Architecture::Plain => &[""],
            Architecture::Monotone => &["_weight", "_shift", "_log_slope"],
        };
        for (net, suffix) in model.nets[t].nets().into_iter().zip(suffixes) {
            files.push(save(net, dir, &format!("g{t}{suffix}.net"))?);
        }
    }
    let representation = match &model.representation {
        Some(r) => Some(RepresentationManifest {
            propensity_feature: r.propensity_feature,
            phi_w: r.heads.phi_w.as_ref().map(|n| save(n, dir, "phi_w.net")).transpose()?,
            phi_a: r.heads.phi_a.as_ref().map(|n| save(n, dir, "phi_a.net")).transpose()?,
            e_head: save(&r.heads.e_head, dir, "e_head.net")?,
            critic: save(&r.heads.critic, dir, "critic.net")?,
        }),
        None => None,
    };
    let [g0, g1] = g;
    let manifest = ModelManifest {
        format: FORMAT.to_string(),
        architecture: model.architecture(),
        covariate_dim: model.covariate_dim(),
        z_range: model.z_range(),
        sampler: model.sampler,
        standardizer: model.standardizer.clone(),
        g0,
        g1,
        representation,
        report: model.report.clone(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn load_g<S: Real>(dir: &Path, architecture: Architecture, files: &[String]) -> Result<CdfNetwork<S>> {
    match (architecture, files) {
        (Architecture::Plain, [f]) => Ok(CdfNetwork::Plain(load_net(&dir.join(f))?)),
        (Architecture::Monotone, [w, b, a]) => Ok(CdfNetwork::Monotone(MonotoneNet::from_nets(
            load_net(&dir.join(w))?,
            load_net(&dir.join(b))?,
            load_net(&dir.join(a))?,
        )?)),
        _ => Err(CcnError::Format(format!(
            "{architecture:?} architecture cannot be built from {} network files",
            files.len()
        ))),
    }
}

/// Reads a model written by [`save_model`].
pub fn load_model<S: Real>(dir: &Path) -> Result<CdfModel<S>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: ModelManifest = serde_json::from_str(&text)?;
    if m.format != FORMAT {
        return Err(CcnError::Format(format!("unknown model format `{}`", m.format)));
    }
    if m.standardizer.dim() != m.covariate_dim {
        return Err(CcnError::Format("standardizer does not match covariate_dim".into()));
    }
    let g0 = load_g(dir, m.architecture, &m.g0)?;
    let g1 = load_g(dir, m.architecture, &m.g1)?;
    let representation = match &m.representation {
        Some(r) => {
            let opt = |f: &Option<String>| f.as_ref().map(|f| load_net::<S>(&dir.join(f))).transpose();
            Some(Representation {
                heads: FccnHeads {
                    phi_w: opt(&r.phi_w)?,
                    phi_a: opt(&r.phi_a)?,
                    e_head: load_net(&dir.join(&r.e_head))?,
                    critic: load_net(&dir.join(&r.critic))?,
                },
                propensity_feature: r.propensity_feature,
            })
        }
        None => None,
    };
    if let Some(r) = &representation {
        if r.heads.phi_w.is_some() != r.heads.phi_a.is_some() {
            return Err(CcnError::Format("phi_w and phi_a must both be present or both absent".into()));
        }
        if r.heads.covariate_dim() != m.covariate_dim {
            return Err(CcnError::Format("representation heads do not match covariate_dim".into()));
        }
    }
    let mut model = CdfModel::from_parts([g0, g1], m.sampler, m.standardizer, representation)?;
    model.report = m.report;
    Ok(model)
}
