use super::{ParamStore, Real, RngStream, Slot};

/// Lookup table of `rows × dim` trainable vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Slot,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    /// Uniform ±`bound` initialisation.
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        rows: usize,
        dim: usize,
        bound: f64,
        rng: &mut RngStream,
    ) -> Self {
        let table = store.add_uniform(name.to_string(), vec![rows, dim], bound, rng);
        Self { table, rows, dim }
    }

    /// Panics on an out-of-range id; ids are validated when datasets are built.
    #[inline]
    pub fn row<'a, F>(&self, params: &'a [F], id: u32) -> &'a [F] {
        let id = id as usize;
        assert!(id < self.rows, "embedding id {id} out of range {}", self.rows);
        let start = self.table.offset + id * self.dim;
        &params[start..start + self.dim]
    }

    #[inline]
    pub fn accumulate<F: Real>(&self, grads: &mut [F], id: u32, d: &[F]) {
        let start = self.table.offset + id as usize * self.dim;
        for (g, v) in grads[start..start + self.dim].iter_mut().zip(d) {
            *g += *v;
        }
    }
}
