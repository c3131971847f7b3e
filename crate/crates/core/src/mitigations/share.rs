//! C#n LIF sharing along the output-channel dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::SnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareDimension {
    Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareSpec {
    pub n: usize,
    pub dimension: ShareDimension,
}

impl ShareSpec {
    pub fn channel(n: usize) -> Self {
        ShareSpec {
            n,
            dimension: ShareDimension::Channel,
        }
    }
}

/// Every LIF layer gets one membrane per group of `n` consecutive output
/// channels.
pub fn share_lif(model: &SnnModel, spec: ShareSpec) -> Result<SnnModel> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("share n must be >= 1".into()));
    }
    let mut out = model.clone();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        if layer.neuron.is_none() {
            continue;
        }
        let c = layer.out_channels();
        if c % spec.n != 0 {
            return Err(Error::InvalidArgument(format!(
                "share n = {} does not divide the {c} output channels of layer {i}",
                spec.n
            )));
        }
        layer.lif_share = spec.n;
    }
    out.validate()?;
    Ok(out)
}
