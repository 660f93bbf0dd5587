//! Configuration space, the pluggable scalar energy contract, and two
//! concrete models: a periodic 2D Ising lattice and an adapter over the
//! tiny network.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tiny_autodiff::{Network, NetworkError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config has {got} sites, model expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("config value {value} at site {site} out of range [0, {cardinality})")]
    ValueOutOfRange { site: usize, value: u16, cardinality: u16 },
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("unknown model '{0}' (expected ising:L=<n> or nn:<weights-file>)")]
    UnknownModel(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Discrete product space {0..V-1}^D with an optional 2D layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub dims: usize,
    pub cardinality: u16,
    pub shape: Option<(usize, usize)>,
}

impl ConfigSpace {
    pub fn new(dims: usize, cardinality: u16) -> Self {
        assert!(dims >= 1 && cardinality >= 2);
        ConfigSpace { dims, cardinality, shape: None }
    }

    pub fn grid(height: usize, width: usize, cardinality: u16) -> Self {
        assert!(height * width >= 1 && cardinality >= 2);
        ConfigSpace { dims: height * width, cardinality, shape: Some((height, width)) }
    }

    pub fn contains(&self, config: &Config) -> Result<(), ModelError> {
        if config.values.len() != self.dims {
            return Err(ModelError::DimensionMismatch { got: config.values.len(), want: self.dims });
        }
        for (site, &value) in config.values.iter().enumerate() {
            if value >= self.cardinality {
                return Err(ModelError::ValueOutOfRange { site, value, cardinality: self.cardinality });
            }
        }
        Ok(())
    }
}

/// One point of the input space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub values: Vec<u16>,
}

impl Config {
    pub fn new(values: Vec<u16>) -> Self {
        Config { values }
    }

    pub fn zeros(space: &ConfigSpace) -> Self {
        Config { values: vec![0; space.dims] }
    }

    pub fn with_site(&self, site: usize, value: u16) -> Self {
        let mut values = self.values.clone();
        values[site] = value;
        Config { values }
    }
}

/// Dense D x V gradient of the scalar output with respect to the one-hot
/// embedding of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMatrix {
    pub dims: usize,
    pub cardinality: u16,
    data: Vec<f64>,
}

impl GradMatrix {
    pub fn zeros(dims: usize, cardinality: u16) -> Self {
        GradMatrix { dims, cardinality, data: vec![0.0; dims * cardinality as usize] }
    }

    pub fn from_vec(dims: usize, cardinality: u16, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dims * cardinality as usize);
        GradMatrix { dims, cardinality, data }
    }

    #[inline]
    pub fn get(&self, site: usize, value: u16) -> f64 {
        self.data[site * self.cardinality as usize + value as usize]
    }

    #[inline]
    pub fn set(&mut self, site: usize, value: u16, g: f64) {
        self.data[site * self.cardinality as usize + value as usize] = g;
    }

    pub fn scaled(&self, factor: f64) -> GradMatrix {
        GradMatrix {
            dims: self.dims,
            cardinality: self.cardinality,
            data: self.data.iter().map(|&g| g * factor).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Deterministic scalar map over configs plus its one-hot input gradient.
pub trait EnergyModel {
    fn space(&self) -> &ConfigSpace;
    fn name(&self) -> &str;
    fn energy(&self, x: &Config) -> Result<f64, ModelError>;
    fn grad_onehot(&self, x: &Config) -> Result<GradMatrix, ModelError>;

    /// Both in one call; concrete models override this when a single pass
    /// produces both.
    fn energy_and_grad(&self, x: &Config) -> Result<(f64, GradMatrix), ModelError> {
        Ok((self.energy(x)?, self.grad_onehot(x)?))
    }
}

/// Nearest-neighbor Ising lattice with periodic boundaries;
/// E = -sum over right/down bonds of s_i s_j with s = 2v - 1.
#[derive(Debug, Clone)]
pub struct IsingModel {
    side: usize,
    space: ConfigSpace,
    name: String,
}

impl IsingModel {
    pub fn new(side: usize) -> Self {
        assert!(side >= 2);
        IsingModel {
            side,
            space: ConfigSpace::grid(side, side, 2),
            name: format!("ising:L={}", side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn check(&self, x: &Config) -> Result<(), ModelError> {
        self.space.contains(x)
    }

    #[inline]
    fn spin(&self, x: &Config, row: usize, col: usize) -> f64 {
        let l = self.side;
        2.0 * x.values[(row % l) * l + (col % l)] as f64 - 1.0
    }

    /// Sum of the four neighboring spins of a site (neighbors coincide on
    /// lattices smaller than 3, which double-counts bonds as the
    /// multilinear extension requires).
    fn neighbor_sum(&self, x: &Config, row: usize, col: usize) -> f64 {
        let l = self.side;
        self.spin(x, row + 1, col)
            + self.spin(x, row + l - 1, col)
            + self.spin(x, row, col + 1)
            + self.spin(x, row, col + l - 1)
    }
}

impl EnergyModel for IsingModel {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn energy(&self, x: &Config) -> Result<f64, ModelError> {
        self.check(x)?;
        let l = self.side;
        let mut e = 0.0;
        for row in 0..l {
            for col in 0..l {
                let s = self.spin(x, row, col);
                e -= s * (self.spin(x, row, col + 1) + self.spin(x, row + 1, col));
            }
        }
        Ok(e)
    }

    fn grad_onehot(&self, x: &Config) -> Result<GradMatrix, ModelError> {
        self.check(x)?;
        let l = self.side;
        let mut grad = GradMatrix::zeros(self.space.dims, 2);
        for row in 0..l {
            for col in 0..l {
                let nb = self.neighbor_sum(x, row, col);
                let site = row * l + col;
                grad.set(site, 0, nb); // s = -1 contributes -(-1)*nb
                grad.set(site, 1, -nb);
            }
        }
        Ok(grad)
    }
}

/// Adapter exposing a tiny network's logit as the energy.
pub struct NnModel {
    network: Network,
    name: String,
}

impl NnModel {
    pub fn new(network: Network, name: String) -> Self {
        NnModel { network, name }
    }

    pub fn from_weights_file(path: &Path) -> Result<Self, ModelError> {
        let network = Network::load(path)?;
        Ok(NnModel { network, name: format!("nn:{}", path.display()) })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }
}

impl EnergyModel for NnModel {
    fn space(&self) -> &ConfigSpace {
        self.network.space()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn energy(&self, x: &Config) -> Result<f64, ModelError> {
        Ok(self.network.forward(x)?.0)
    }

    fn grad_onehot(&self, x: &Config) -> Result<GradMatrix, ModelError> {
        Ok(self.energy_and_grad(x)?.1)
    }

    fn energy_and_grad(&self, x: &Config) -> Result<(f64, GradMatrix), ModelError> {
        let (logit, acts) = self.network.forward(x)?;
        let grad = self.network.backward_input(&acts)?;
        Ok((logit, grad))
    }
}

/// Registry lookup keyed by model name, e.g. `ising:L=4` or
/// `nn:weights.json`.
pub fn build_model(name: &str) -> Result<Box<dyn EnergyModel>, ModelError> {
    if let Some(rest) = name.strip_prefix("ising:L=") {
        let side: usize = rest
            .parse()
            .map_err(|_| ModelError::UnknownModel(name.to_string()))?;
        if side < 2 {
            return Err(ModelError::UnknownModel(name.to_string()));
        }
        return Ok(Box::new(IsingModel::new(side)));
    }
    if let Some(path) = name.strip_prefix("nn:") {
        return Ok(Box::new(NnModel::from_weights_file(Path::new(path))?));
    }
    Err(ModelError::UnknownModel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(side: usize, values: &[u16]) -> Config {
        assert_eq!(values.len(), side * side);
        Config::new(values.to_vec())
    }

    #[test]
    fn ising_energy_examples() {
        let m2 = IsingModel::new(2);
        assert_eq!(m2.energy(&lattice(2, &[1, 1, 1, 1])).unwrap(), -8.0);
        assert_eq!(m2.energy(&lattice(2, &[1, 0, 0, 1])).unwrap(), 8.0);
        let m4 = IsingModel::new(4);
        assert_eq!(m4.energy(&lattice(4, &[1; 16])).unwrap(), -32.0);
    }

    #[test]
    fn ising_global_flip_invariance() {
        let m = IsingModel::new(3);
        let x = lattice(3, &[1, 0, 1, 0, 0, 1, 1, 1, 0]);
        let flipped = Config::new(x.values.iter().map(|&v| 1 - v).collect());
        assert_eq!(m.energy(&x).unwrap(), m.energy(&flipped).unwrap());
    }

    #[test]
    fn ising_rejects_bad_shape() {
        let m = IsingModel::new(2);
        assert!(m.energy(&Config::new(vec![1, 1, 1])).is_err());
        assert!(m.energy(&Config::new(vec![2, 0, 0, 0])).is_err());
    }

    /// Multilinear extension of the Ising energy over one-hot inputs,
    /// evaluated at a relaxed point; finite-difference oracle for the
    /// analytic gradient.
    fn multilinear_energy(side: usize, onehot: &[f64]) -> f64 {
        let l = side;
        let spin = |site: usize| -> f64 { onehot[site * 2 + 1] - onehot[site * 2] };
        let mut e = 0.0;
        for row in 0..l {
            for col in 0..l {
                let site = row * l + col;
                let right = row * l + (col + 1) % l;
                let down = ((row + 1) % l) * l + col;
                e -= spin(site) * (spin(right) + spin(down));
            }
        }
        e
    }

    #[test]
    fn ising_grad_matches_finite_difference() {
        let m = IsingModel::new(2);
        let x = lattice(2, &[1, 1, 1, 1]);
        let grad = m.grad_onehot(&x).unwrap();
        assert_eq!(grad.get(0, 1), -4.0);
        let mut onehot = vec![0.0; 8];
        for (site, &v) in x.values.iter().enumerate() {
            onehot[site * 2 + v as usize] = 1.0;
        }
        let step = 1e-6;
        for site in 0..4 {
            for v in 0..2u16 {
                let idx = site * 2 + v as usize;
                let mut up = onehot.clone();
                up[idx] += step;
                let mut dn = onehot.clone();
                dn[idx] -= step;
                let fd = (multilinear_energy(2, &up) - multilinear_energy(2, &dn)) / (2.0 * step);
                assert!(
                    (fd - grad.get(site, v)).abs() < 1e-5,
                    "site {} v {}: fd {} vs {}",
                    site,
                    v,
                    fd,
                    grad.get(site, v)
                );
            }
        }
    }

    #[test]
    fn ising_grad_antisymmetry_and_uniform_column() {
        let m = IsingModel::new(3);
        let x = lattice(3, &[1, 0, 1, 0, 0, 1, 1, 1, 0]);
        let grad = m.grad_onehot(&x).unwrap();
        for site in 0..9 {
            assert_eq!(grad.get(site, 0), -grad.get(site, 1));
        }
        let all_up = lattice(3, &[1; 9]);
        let g = m.grad_onehot(&all_up).unwrap();
        for site in 0..9 {
            assert_eq!(g.get(site, 1), -4.0);
        }
    }

    #[test]
    fn single_flip_delta_matches_grad_rows() {
        let m = IsingModel::new(4);
        let x = lattice(4, &[0, 1, 1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1]);
        let e0 = m.energy(&x).unwrap();
        let grad = m.grad_onehot(&x).unwrap();
        for site in 0..16 {
            let flipped = x.with_site(site, 1 - x.values[site]);
            let delta = m.energy(&flipped).unwrap() - e0;
            let predicted = grad.get(site, 1 - x.values[site]) - grad.get(site, x.values[site]);
            assert!((delta - predicted).abs() < 1e-12, "site {}", site);
        }
    }

    #[test]
    fn registry_parses_names() {
        assert_eq!(build_model("ising:L=4").unwrap().name(), "ising:L=4");
        assert!(build_model("ising:L=x").is_err());
        assert!(build_model("bogus").is_err());
        assert!(build_model("nn:/no/such/file.json").is_err());
    }
}
