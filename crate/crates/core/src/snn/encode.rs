use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Direct encoding: the real-valued input drives the first layer unchanged at
/// every one of the `timesteps` steps.
pub fn direct_encode<S: Real>(input: &Tensor<S>, timesteps: usize) -> Result<Vec<Tensor<S>>> {
    if timesteps < 1 {
        return Err(Error::InvalidArgument(format!(
            "timesteps must be >= 1, got {timesteps}"
        )));
    }
    Ok(vec![input.clone(); timesteps])
}
