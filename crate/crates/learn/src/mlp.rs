//! Fully connected network with tanh hidden layers and a linear head.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out × in`) followed by the bias vector. Optimizers, Polyak
//! averaging and checkpoints all work on that flat view.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
///
/// `acts[0]` is the input and `acts[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * w[0] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::shape("at least two positive layer sizes", format!("{sizes:?}")));
        }
        let n = param_count(sizes);
        if params.len() != n {
            return Err(Error::shape(format!("{n} parameters"), params.len()));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).acts.pop().unwrap()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Cache {
        assert_eq!(x.len(), self.input_dim(), "MLP input size");
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_out * n_in];
            let b = &self.params[offset + n_out * n_in..offset + n_out * n_in + n_out];
            let input = &acts[l];
            let hidden = l + 1 < layers;
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            offset += n_out * n_in + n_out;
        }
        Cache { acts }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`, and returns `∂L/∂input`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "parameter gradient size");
        self.backprop(cache, grad_out, Some(grad))
    }

    /// `∂L/∂input` only, leaving parameter gradients untouched.
    pub fn input_gradient(&self, cache: &Cache, grad_out: &[f64]) -> Vec<f64> {
        self.backprop(cache, grad_out, None)
    }

    fn backprop(&self, cache: &Cache, grad_out: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.output_dim(), "output gradient size");
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[1] * w[0] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            let w = &self.params[off..off + n_out * n_in];
            let mut delta_in = vec![0.0; n_in];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g[off..off + n_out * n_in + n_out].split_at_mut(n_out * n_in);
                for o in 0..n_out {
                    let d = delta[o];
                    gb[o] += d;
                    for (gi, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *gi += d * a;
                    }
                }
            }
            for o in 0..n_out {
                let d = delta[o];
                for (di, wi) in delta_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *di += d * wi;
                }
            }
            if l > 0 {
                for (di, a) in delta_in.iter_mut().zip(input) {
                    *di *= 1.0 - a * a;
                }
            }
            delta = delta_in;
        }
        delta
    }

    /// `self ← (1 − c)·self + c·other`.
    pub fn blend_from(&mut self, other: &Mlp, c: f64) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::shape(format!("{:?}", self.sizes), format!("{:?}", other.sizes)));
        }
        if c == 1.0 {
            self.params.copy_from_slice(&other.params);
            return Ok(());
        }
        for (t, o) in self.params.iter_mut().zip(&other.params) {
            *t += c * (o - *t);
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gradcheck::{max_relative_error, numeric_gradient, REL_TOL, STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn assert_grad_close(analytic: &[f64], numeric: &[f64]) {
        let err = max_relative_error(analytic, numeric);
        assert!(err < REL_TOL, "relative gradient error {err}");
    }

    #[test]
    fn layout_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        assert_eq!(net.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(Mlp::from_params(&[3, 4, 2], vec![0.0; 5]).is_err());
        assert!(Mlp::from_params(&[3], vec![]).is_err());
    }

    #[test]
    fn hand_computed_forward() {
        // 2 → 1 (tanh) → 1 linear.
        let net = Mlp::from_params(&[2, 1, 1], vec![0.5, -1.0, 0.1, 2.0, 0.3]).unwrap();
        let x = [1.0, 0.5];
        let hidden = (0.5 - 0.5 + 0.1f64).tanh();
        let y = net.forward(&x);
        assert!((y[0] - (2.0 * hidden + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(&[8, 16, 4], &mut rng);
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            // L = Σ c_i y_i + ½ Σ y_i²
            let loss = |n: &Mlp| -> f64 {
                n.forward(&x)
                    .iter()
                    .zip(&c)
                    .map(|(y, ci)| ci * y + 0.5 * y * y)
                    .sum()
            };
            let cache = net.forward_cached(&x);
            let g_out: Vec<f64> = cache.output().iter().zip(&c).map(|(y, ci)| ci + y).collect();
            let mut grad = net.zero_grad();
            let g_in = net.backward(&cache, &g_out, &mut grad);

            let numeric = numeric_gradient(net.params(), STEP, |p| {
                loss(&Mlp::from_params(net.sizes(), p.to_vec()).unwrap())
            });
            assert_grad_close(&grad, &numeric);

            let numeric_in = numeric_gradient(&x, STEP, |xi| {
                net.forward(xi)
                    .iter()
                    .zip(&c)
                    .map(|(y, ci)| ci * y + 0.5 * y * y)
                    .sum()
            });
            assert_grad_close(&g_in, &numeric_in);
        }
    }

    #[test]
    fn blend_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = Mlp::new(&[2, 3, 1], &mut rng);
        let original = Mlp::new(&[2, 3, 1], &mut rng);

        let mut t = original.clone();
        t.blend_from(&online, 0.0).unwrap();
        assert_eq!(t, original);
        t.blend_from(&online, 1.0).unwrap();
        assert_eq!(t, online);
        t.blend_from(&online, 0.3).unwrap();
        assert_eq!(t, online);

        let other = Mlp::new(&[2, 4, 1], &mut rng);
        assert!(matches!(t.blend_from(&other, 0.5), Err(Error::Shape { .. })));
    }
}
