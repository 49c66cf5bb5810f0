//! Named parameters and the layers built from them.

use std::collections::BTreeMap;

use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Gradients, Tape, Var};
use crate::scalar::{lit, Scalar};

/// Trainable tensors plus non-trainable buffers (batch-norm running statistics),
/// both keyed by dotted names such as `icb.cross.v.w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar> {
    params: BTreeMap<String, Matrix<T>>,
    buffers: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) {
        self.params.insert(name.into(), value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Matrix<T>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix<T>> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Matrix<T>> {
        self.buffers.get(name)
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut Matrix<T>> {
        self.buffers.get_mut(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Matrix<T>)> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Matrix<T>)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Matrix<T>)> {
        self.buffers.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Matrix::len).sum()
    }

    /// Dense layer `x W + b` with fan-in scaled Gaussian weights, or zeros.
    pub fn add_linear<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        zero: bool,
        rng: &mut R,
    ) {
        let w = if zero {
            Matrix::zeros(fan_in, fan_out)
        } else {
            Matrix::randn(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
        };
        self.insert(format!("{prefix}.w"), w);
        self.insert(format!("{prefix}.b"), Matrix::zeros(1, fan_out));
    }

    /// Affine part of a normalization layer: unit gain, zero shift.
    pub fn add_norm(&mut self, prefix: &str, dim: usize) {
        self.insert(format!("{prefix}.g"), Matrix::filled(1, dim, T::one()));
        self.insert(format!("{prefix}.b"), Matrix::zeros(1, dim));
    }

    /// Binds every parameter onto `tape`; trainable ones become leaves.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .params
            .iter()
            .map(|(name, value)| {
                let v = if trainable {
                    tape.leaf(value.clone())
                } else {
                    tape.constant(value.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { tape, vars }
    }
}

/// Weight decay applies to matrices named `*.w`; biases, gains, and gates are exempt.
pub fn decays(name: &str) -> bool {
    name.ends_with(".w")
}

/// Parameters bound to one tape.
pub struct Bound<'t, T: Scalar> {
    tape: &'t Tape<T>,
    vars: BTreeMap<String, Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn var(&self, name: &str) -> Var<'t, T> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' is not registered"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Replaces a bound variable, used to inject externally computed tensors.
    pub fn override_var(&mut self, name: &str, var: Var<'t, T>) {
        self.vars.insert(name.to_owned(), var);
    }

    /// Collects gradients for every bound parameter; untouched ones are zero.
    pub fn gradients(&self, grads: &mut Gradients<T>) -> BTreeMap<String, Matrix<T>> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let (r, c) = v.shape();
                let g = grads.take(v).unwrap_or_else(|| Matrix::zeros(r, c));
                (name.clone(), g)
            })
            .collect()
    }

    pub fn linear(&self, prefix: &str, x: Var<'t, T>) -> Var<'t, T> {
        x.matmul(self.var(&format!("{prefix}.w")))
            .add_row(self.var(&format!("{prefix}.b")))
    }

    pub fn layer_norm(&self, prefix: &str, x: Var<'t, T>) -> Var<'t, T> {
        x.layer_norm_rows(lit(1e-5))
            .mul_row(self.var(&format!("{prefix}.g")))
            .add_row(self.var(&format!("{prefix}.b")))
    }

    /// Multi-head scaled dot-product attention with `{q,k,v,o}` projections
    /// under `prefix`. Returns the projected output and the per-head
    /// attention probabilities (`queries x keys` each).
    pub fn attention(
        &self,
        prefix: &str,
        queries: Var<'t, T>,
        keys: Var<'t, T>,
        n_heads: usize,
    ) -> (Var<'t, T>, Vec<Var<'t, T>>) {
        let q = self.linear(&format!("{prefix}.q"), queries);
        let k = self.linear(&format!("{prefix}.k"), keys);
        let v = self.linear(&format!("{prefix}.v"), keys);
        let width = q.shape().1;
        assert_eq!(width % n_heads, 0, "width {width} not divisible by {n_heads} heads");
        let dh = width / n_heads;
        let scale: T = lit(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(n_heads);
        let mut probs = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = q.slice_cols(a, b);
            let kh = k.slice_cols(a, b);
            let vh = v.slice_cols(a, b);
            let p = qh.matmul(kh.transpose()).scale(scale).softmax_rows();
            heads.push(p.matmul(vh));
            probs.push(p);
        }
        let joined = if n_heads == 1 {
            heads[0]
        } else {
            self.tape.concat_cols(&heads)
        };
        (self.linear(&format!("{prefix}.o"), joined), probs)
    }

    /// Two-layer GELU perceptron under `prefix.fc1` / `prefix.fc2`.
    pub fn mlp(&self, prefix: &str, x: Var<'t, T>) -> Var<'t, T> {
        let h = self.linear(&format!("{prefix}.fc1"), x).gelu();
        self.linear(&format!("{prefix}.fc2"), h)
    }
}

/// Registers `{q,k,v,o}` projections for [`Bound::attention`]; the output
/// projection is zeroed when `zero_out` is set.
pub fn add_attention<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    width: usize,
    zero_out: bool,
    rng: &mut R,
) {
    for p in ["q", "k", "v"] {
        store.add_linear(&format!("{prefix}.{p}"), width, width, false, rng);
    }
    store.add_linear(&format!("{prefix}.o"), width, width, zero_out, rng);
}

pub fn add_mlp<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
    zero_out: bool,
    rng: &mut R,
) {
    store.add_linear(&format!("{prefix}.fc1"), input, hidden, false, rng);
    store.add_linear(&format!("{prefix}.fc2"), hidden, output, zero_out, rng);
}
