//! Uniform 1-D meshes and node-major vector fields on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform mesh on `[x_min, x_max]` with `nodes` points (endpoints included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl Mesh {
    pub fn new(x_min: f64, x_max: f64, nodes: usize) -> Result<Self> {
        if !(x_max > x_min) || nodes < 3 {
            return Err(Error::InvalidParameter(format!(
                "mesh needs x_max > x_min and at least 3 nodes (got [{x_min}, {x_max}], {nodes})"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nodes,
        })
    }

    pub fn symmetric(halfwidth: f64, nodes: usize) -> Result<Self> {
        Self::new(-halfwidth, halfwidth, nodes)
    }

    /// Mesh on `[x_min, x_max]` with spacing as close to `h` as possible.
    pub fn with_spacing(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        let cells = ((x_max - x_min) / h).round().max(2.0) as usize;
        Self::new(x_min, x_max, cells + 1)
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nodes - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.nodes).map(move |i| self.x_min + i as f64 * h)
    }

    /// Same interval, spacing halved.
    pub fn refined(&self) -> Mesh {
        Mesh {
            nodes: 2 * self.nodes - 1,
            ..*self
        }
    }

    /// Cell index `i` and fraction `θ ∈ [0, 1)` with `x = x_i + θ h`;
    /// `None` outside the mesh.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= self.x_min && x <= self.x_max) {
            return None;
        }
        let h = self.spacing();
        let s = (x - self.x_min) / h;
        let i = (s.floor() as usize).min(self.nodes - 2);
        Some((i, s - i as f64))
    }

    pub fn same_as(&self, other: &Mesh) -> bool {
        self.nodes == other.nodes
            && (self.x_min - other.x_min).abs() <= 1e-12 * (1.0 + self.x_min.abs())
            && (self.x_max - other.x_max).abs() <= 1e-12 * (1.0 + self.x_max.abs())
    }
}

/// Vector-valued samples stored node-major: `data[i * dim + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeField {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl NodeField {
    pub fn zeros(dim: usize, nodes: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * nodes],
        }
    }

    pub fn from_fn<F: FnMut(usize, &mut [f64])>(dim: usize, nodes: usize, mut f: F) -> Self {
        let mut out = Self::zeros(dim, nodes);
        for i in 0..nodes {
            f(i, out.node_mut(i));
        }
        out
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// Euclidean norm at each node.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn axpy(&mut self, a: f64, other: &NodeField) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &NodeField) -> NodeField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn scaled(&self, a: f64) -> NodeField {
        NodeField {
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Trapezoid integral of each component.
    pub fn integral(&self, h: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|c| crate::quadrature::trapezoid(&self.component(c), h))
            .collect()
    }
}

/// Cubic Hermite interpolation on a cell of width `h`.
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, theta: f64, h: f64) -> f64 {
    let t = theta;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

/// Four-point cubic Lagrange interpolation of uniformly sampled `values`
/// at `x`; linear near the ends, `None` outside the mesh.
pub fn cubic_sample(mesh: &Mesh, values: &[f64], x: f64) -> Option<f64> {
    let (i, t) = mesh.locate(x)?;
    let n = mesh.nodes;
    if i == 0 || i + 2 >= n {
        return Some(values[i] * (1.0 - t) + values[i + 1] * t);
    }
    let (ym, y0, y1, y2) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
    Some(
        -t * (t - 1.0) * (t - 2.0) / 6.0 * ym + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * y0
            - (t + 1.0) * t * (t - 2.0) / 2.0 * y1
            + (t + 1.0) * t * (t - 1.0) / 6.0 * y2,
    )
}
