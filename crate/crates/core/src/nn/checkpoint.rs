//! Parameter checkpoints.
//!
//! Layout: one line of UTF-8 JSON ([`CheckpointHeader`]) terminated by `\n`,
//! followed by every parameter as a little-endian `f64`. Networks appear in
//! header order; within a network, layers in order, each layer's weights
//! row-major and then its bias.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, OutputActivation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub output: OutputActivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub agent: String,
    pub architecture: Vec<NetworkSpec>,
    pub seed: u64,
    pub step: u64,
    /// Free-form agent metadata (environment, hyperparameters).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Dimensions and hyperparameters stored in [`CheckpointHeader::meta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_bound: f64,
    pub net: super::NetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saw: Option<crate::saw::SawHyper>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_polyak: Option<f64>,
}

impl CheckpointHeader {
    /// Header for `nets`, named by `names` in the same order.
    pub fn describe(
        agent: &str,
        names: &[&str],
        nets: &[&Mlp],
        seed: u64,
        step: u64,
        meta: &AgentMeta,
    ) -> Result<Self> {
        if names.len() != nets.len() {
            return Err(Error::Shape("one name per network required".into()));
        }
        Ok(CheckpointHeader {
            agent: agent.into(),
            architecture: names
                .iter()
                .zip(nets)
                .map(|(name, net)| NetworkSpec {
                    name: (*name).into(),
                    dims: net.layer_dims(),
                    output: net.output_activation(),
                })
                .collect(),
            seed,
            step,
            meta: serde_json::to_value(meta)?,
        })
    }

    pub fn agent_meta(&self) -> Result<AgentMeta> {
        serde_json::from_value(self.meta.clone())
            .map_err(|e| Error::MalformedHeader(format!("checkpoint meta: {e}")))
    }

    /// Errors unless the header was written by agent `kind`.
    pub fn expect_agent(&self, kind: &str) -> Result<()> {
        if self.agent == kind {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "checkpoint holds a {} agent, not {kind}",
                self.agent
            )))
        }
    }
}

pub fn encode_checkpoint(header: &CheckpointHeader, nets: &[&Mlp]) -> Result<Vec<u8>> {
    if header.architecture.len() != nets.len() {
        return Err(Error::Shape(format!(
            "header lists {} networks, {} given",
            header.architecture.len(),
            nets.len()
        )));
    }
    for (spec, net) in header.architecture.iter().zip(nets) {
        if spec.dims != net.layer_dims() || spec.output != net.output_activation() {
            return Err(Error::Shape(format!(
                "network {} does not match its header entry",
                spec.name
            )));
        }
    }
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for net in nets {
        for v in net.params_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<Mlp>)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let mut payload = bytes[nl + 1..].chunks_exact(8);
    if !payload.remainder().is_empty() {
        return Err(Error::MalformedHeader(
            "payload is not a whole number of f64".into(),
        ));
    }
    let mut nets = Vec::with_capacity(header.architecture.len());
    for spec in &header.architecture {
        let mut net = Mlp::zeros(&spec.dims, spec.output)?;
        let n = net.num_params();
        let values: Vec<f64> = payload
            .by_ref()
            .take(n)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.len() != n {
            return Err(Error::Truncated {
                expected: n,
                found: values.len(),
            });
        }
        net.set_params_flat(&values)?;
        nets.push(net);
    }
    if payload.next().is_some() {
        return Err(Error::MalformedHeader(
            "trailing parameters after last network".into(),
        ));
    }
    Ok((header, nets))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, nets: &[&Mlp]) -> Result<()> {
    let bytes = encode_checkpoint(header, nets)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Mlp>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
