use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle to one parameter matrix inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of parameter matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            values: self
                .values
                .iter()
                .map(|v| Array2::zeros(v.raw_dim()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// All scalars in parameter order, row-major within each matrix.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape(self.num_scalars(), flat.len()));
        }
        let mut offset = 0;
        for v in &mut self.values {
            for (dst, src) in v.iter_mut().zip(&flat[offset..]) {
                *dst = *src;
            }
            offset += v.len();
        }
        Ok(())
    }

    pub fn to_named(&self) -> Vec<NamedArray> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| NamedArray {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites every parameter from `named`, which must match names and shapes exactly.
    pub fn load_named(&mut self, named: &[NamedArray]) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.len(),
                named.len()
            )));
        }
        for (i, arr) in named.iter().enumerate() {
            if arr.name != self.names[i] {
                return Err(Error::Checkpoint(format!(
                    "parameter {i}: expected `{}`, found `{}`",
                    self.names[i], arr.name
                )));
            }
            let shape = [self.values[i].nrows(), self.values[i].ncols()];
            if arr.shape != shape || arr.data.len() != shape[0] * shape[1] {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}`: expected shape {shape:?}, found {:?}",
                    arr.name, arr.shape
                )));
            }
            self.values[i] = Array2::from_shape_vec((shape[0], shape[1]), arr.data.clone())
                .expect("shape checked above");
        }
        if !self.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(())
    }
}

/// Gradient buffers mirroring a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub values: Vec<Array2<f64>>,
}

impl Grads {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            v.mapv_inplace(|x| x * s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Serialized parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Uniform `U(-bound, bound)` matrix with `bound = sqrt(gain / fan_in)`.
pub(crate) fn fan_in_uniform<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    fan_in: usize,
    gain: f64,
) -> Array2<f64> {
    let bound = (gain / fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}
