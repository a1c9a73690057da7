use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelSpec;

/// Bytes per stored value; weights and activations are 32-bit.
pub const BYTES_PER_VALUE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub parameter_count: u64,
    /// One input sample at 4 bytes per value.
    pub input_activation_bytes: u64,
    pub weight_bytes: u64,
    /// Input plus every layer output for one sample.
    pub activation_bytes: u64,
}

pub fn input_activation_bytes(shape: &[usize]) -> u64 {
    shape.iter().map(|&d| d as u64).product::<u64>() * BYTES_PER_VALUE
}

pub fn resource_report(spec: &ModelSpec) -> Result<ResourceReport> {
    let shapes = spec.shapes()?;
    let parameter_count = spec.parameter_count() as u64;
    Ok(ResourceReport {
        parameter_count,
        input_activation_bytes: input_activation_bytes(&spec.input_shape),
        weight_bytes: parameter_count * BYTES_PER_VALUE,
        activation_bytes: shapes.iter().map(|s| input_activation_bytes(s)).sum(),
    })
}
