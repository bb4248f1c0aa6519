//! Reverse-mode differentiable tensor engine.
//!
//! Provides exactly the operations the segmentation networks need: 3-D
//! convolution with dilation, max-pooling, group normalization, pointwise
//! activations, channel concatenation, set averaging, trilinear upsampling,
//! elementwise arithmetic and reductions, plus an Adam-backed parameter store.
//!
//! A [`Graph`] records one forward computation; [`Graph::backward`]
//! accumulates gradients for every recorded tensor that requires them and can
//! hand parameter gradients back to a [`ParameterStore`].

mod checkpoint;
pub mod gradcheck;
mod graph;
#[cfg(target_arch = "x86_64")]
mod kernels;
mod ops;
mod scalar;
mod store;

pub use graph::{Graph, NodeRef, UnaryKind};
pub use scalar::Scalar;
pub use store::{AdamConfig, Param, ParameterStore};

use crate::error::{DdlError, Result};
use serde::{Deserialize, Serialize};

/// Tensor extents. Activations are 5-D `[batch, channels, depth, height,
/// width]`; scalars are `[1]`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Interpret as `[n, c, d, h, w]`.
    pub fn as_5d(&self) -> Result<[usize; 5]> {
        match self.0.as_slice() {
            &[n, c, d, h, w] => Ok([n, c, d, h, w]),
            other => Err(DdlError::ShapeMismatch(format!(
                "expected 5-D activation, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Configuration of one 3-D convolution, dilated or plain.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Kernel extents per spatial axis `[kd, kh, kw]`.
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    /// Zero padding per spatial axis.
    pub padding: [usize; 3],
    pub dilation: [usize; 3],
    pub bias: bool,
}

impl ConvSpec {
    /// Plain unit-stride convolution with symmetric padding.
    pub fn unit(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: [kernel; 3],
            stride: [1; 3],
            padding: [padding; 3],
            dilation: [1; 3],
            bias: true,
        }
    }

    /// Dilated unit-stride convolution padded to preserve extents for odd kernels.
    pub fn dilated(in_channels: usize, out_channels: usize, kernel: usize, rate: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: [kernel; 3],
            stride: [1; 3],
            padding: [rate * (kernel - 1) / 2; 3],
            dilation: [rate; 3],
            bias: true,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(vec![
            self.out_channels,
            self.in_channels,
            self.kernel[0],
            self.kernel[1],
            self.kernel[2],
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation.iter().any(|&d| d == 0) {
            return Err(DdlError::InvalidArgument(
                "convolution dilation must be >= 1 on every axis".into(),
            ));
        }
        if self.stride.iter().any(|&s| s == 0) {
            return Err(DdlError::InvalidArgument(
                "convolution stride must be >= 1 on every axis".into(),
            ));
        }
        if self.kernel.iter().any(|&k| k == 0) || self.in_channels == 0 || self.out_channels == 0 {
            return Err(DdlError::InvalidArgument(
                "convolution kernel and channel counts must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Output spatial extent along one axis, by the dilated-convolution formula.
    pub fn out_extent(&self, axis: usize, input: usize) -> Result<usize> {
        let span = self.dilation[axis] * (self.kernel[axis] - 1) + 1;
        let padded = input + 2 * self.padding[axis];
        if padded < span {
            return Err(DdlError::ShapeMismatch(format!(
                "convolution produces zero-sized output: input extent {input} with padding {} \
                 is smaller than dilated kernel span {span}",
                self.padding[axis]
            )));
        }
        Ok((padded - span) / self.stride[axis] + 1)
    }
}
