//! Flat-vector views over a model's constituent MLPs, for the optimizer,
//! finite-difference checks, and checkpoints.

use bivo_nn::Mlp;

use crate::ModelError;

pub(crate) fn flatten(mlps: &[&Mlp]) -> Vec<f64> {
    let total: usize = mlps.iter().map(|m| m.params.len()).sum();
    let mut out = Vec::with_capacity(total);
    for m in mlps {
        out.extend_from_slice(&m.params);
    }
    out
}

pub(crate) fn scatter(mlps: &mut [&mut Mlp], flat: &[f64]) -> Result<(), ModelError> {
    let total: usize = mlps.iter().map(|m| m.params.len()).sum();
    if flat.len() != total {
        return Err(ModelError::Shape(format!(
            "model has {total} parameters, got {}",
            flat.len()
        )));
    }
    let mut off = 0;
    for m in mlps.iter_mut() {
        let n = m.params.len();
        m.params.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    Ok(())
}
