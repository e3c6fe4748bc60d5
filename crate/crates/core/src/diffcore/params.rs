use std::collections::BTreeMap;

use rand::Rng;

use super::Tensor;

/// Gradient of a scalar with respect to each named parameter.
pub type Gradients = BTreeMap<String, Tensor>;

/// Named model parameters, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        Self { tensors }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }

    /// Inserts a tensor drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_uniform(&mut self, rng: &mut impl Rng, name: &str, shape: &[usize], fan_in: usize) {
        self.init_scaled(rng, name, shape, fan_in, (1.0f64 / 3.0).sqrt());
    }

    /// Variance-preserving draw for a layer followed by a leaky rectifier
    /// of the given negative slope (slope 1 means a linear layer).
    pub fn init_rectifier(&mut self, rng: &mut impl Rng, name: &str, shape: &[usize], fan_in: usize, slope: f64) {
        self.init_scaled(rng, name, shape, fan_in, (2.0 / (1.0 + slope * slope)).sqrt());
    }

    /// `U(-b, b)` with `b = gain * sqrt(3 / fan_in)`, so the output variance
    /// of a unit-variance input is `gain^2`.
    fn init_scaled(&mut self, rng: &mut impl Rng, name: &str, shape: &[usize], fan_in: usize, gain: f64) {
        let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        let t = Tensor::new(shape.to_vec(), data).expect("shape and data agree");
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }
}
