use super::{NnError, Real};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Shape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn from_vec(data: Vec<F>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Location of one named parameter inside a flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    #[inline]
    pub fn of<'a, F>(&self, buf: &'a [F]) -> &'a [F] {
        &buf[self.range()]
    }

    #[inline]
    pub fn of_mut<'a, F>(&self, buf: &'a mut [F]) -> &'a mut [F] {
        &mut buf[self.range()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub slot: Slot,
}

/// All trainable values of a model in one contiguous buffer, with a
/// registry of named tensors. Gradient buffers share the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    specs: Vec<ParamSpec>,
    values: Vec<F>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            specs: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Registers a tensor. Panics on duplicate names: layer construction is
    /// static and a clash is a programming error.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<F>) -> Slot {
        let name = name.into();
        assert!(
            self.specs.iter().all(|s| s.name != name),
            "duplicate parameter name {name}"
        );
        let len: usize = shape.iter().product();
        assert_eq!(len, values.len(), "parameter {name} shape/value mismatch");
        let slot = Slot {
            offset: self.values.len(),
            len,
        };
        self.values.extend(values);
        self.specs.push(ParamSpec { name, shape, slot });
        slot
    }

    /// Registers a tensor initialised uniformly in `[-bound, bound]`. Draws
    /// happen in `f64` so `f32` and `f64` models built from the same stream
    /// hold the same values up to rounding.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut super::RngStream,
    ) -> Slot {
        let len: usize = shape.iter().product();
        let values = (0..len)
            .map(|_| F::of((rng.uniform() * 2.0 - 1.0) * bound))
            .collect();
        self.add(name, shape, values)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Slot {
        let len: usize = shape.iter().product();
        self.add(name, shape, vec![F::zero(); len])
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grads(&self) -> Vec<F> {
        vec![F::zero(); self.values.len()]
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor<F>> {
        self.spec(name).map(|s| Tensor {
            shape: s.shape.clone(),
            data: s.slot.of(&self.values).to_vec(),
        })
    }

    /// Overwrites a named tensor. Returns an error when the shape differs.
    pub fn set(&mut self, name: &str, shape: &[usize], data: &[F]) -> Result<(), NnError> {
        let spec = self
            .specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| NnError::Shape {
                shape: shape.to_vec(),
                len: data.len(),
            })?;
        if spec.shape != shape || spec.slot.len != data.len() {
            return Err(NnError::Shape {
                shape: spec.shape.clone(),
                len: data.len(),
            });
        }
        let slot = spec.slot;
        slot.of_mut(&mut self.values).copy_from_slice(data);
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            specs: self.specs.clone(),
            values: self.values.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A sequence of equal-width vectors stored row-major (`len × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Seq<F> {
    dim: usize,
    data: Vec<F>,
}

impl<F: Real> Seq<F> {
    pub fn new(dim: usize, data: Vec<F>) -> Result<Self, NnError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(NnError::Shape {
                shape: vec![dim],
                len: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![F::zero(); len * dim],
        }
    }

    pub fn from_rows<R: AsRef<[F]>>(dim: usize, rows: &[R]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            super::check_dim("sequence row", dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [F] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn push(&mut self, row: &[F]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for t in (0..self.len()).rev() {
            data.extend_from_slice(self.row(t));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    pub fn cast<G: Real>(&self) -> Seq<G> {
        Seq {
            dim: self.dim,
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }
}
