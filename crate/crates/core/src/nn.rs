//! A minimal dense network: rectifier hidden layers, a linear or softmax
//! head, analytic backpropagation and Adam.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! `out x in` weight matrix row-major followed by its bias.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has dimension {got}, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite gradient; update rejected")]
    NonFiniteGradient,
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

/// Per-layer activations from one forward pass, needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`
    /// (logits for the last layer).
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("at least input")
    }
}

const MAGIC: &[u8; 4] = b"MLP1";

impl Mlp {
    /// All parameters zero.
    pub fn zeros(dims: &[usize], head: Head) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|d| *d > 0), "need at least input and output dims");
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { dims: dims.to_vec(), head, params: vec![0.0; n] }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], head: Head, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(dims, head);
        let mut off = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Forward pass keeping the activations. The trace holds pre-head logits.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NnError> {
        self.check_input(x)?;
        let layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Ok(Trace { acts })
    }

    /// Raw final-layer outputs (before any softmax).
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_trace(x)?.acts.pop().expect("output layer"))
    }

    /// Network output: logits for a linear head, probabilities for softmax.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let z = self.logits(x)?;
        Ok(match self.head {
            Head::Linear => z,
            Head::Softmax => softmax(&z),
        })
    }

    /// Accumulate into `grads` the parameter gradient given the gradient of
    /// the loss with respect to the final-layer logits.
    pub fn backward_logits(&self, trace: &Trace, dlogits: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer shape");
        assert_eq!(dlogits.len(), self.output_dim(), "upstream gradient shape");
        let layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dlogits.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let input = &trace.acts[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // Rectifier derivative: pass gradient only where the unit was active.
            for (p, a) in prev.iter_mut().zip(&input[..]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Accumulate the parameter gradient given the gradient with respect to
    /// the network output (probabilities for a softmax head).
    pub fn backward(&self, trace: &Trace, upstream: &[f64], grads: &mut [f64]) {
        match self.head {
            Head::Linear => self.backward_logits(trace, upstream, grads),
            Head::Softmax => {
                let p = softmax(trace.logits());
                let dot: f64 = p.iter().zip(upstream).map(|(pi, gi)| pi * gi).sum();
                let dz: Vec<f64> = p.iter().zip(upstream).map(|(pi, gi)| pi * (gi - dot)).collect();
                self.backward_logits(trace, &dz, grads)
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        w.write_all(&[match self.head {
            Head::Linear => 0,
            Head::Softmax => 1,
        }])?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Snapshot("missing MLP1 header".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if !(2..=64).contains(&n) {
            return Err(NnError::Snapshot(format!("implausible layer count {n}")));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u32buf)?;
            dims.push(u32::from_le_bytes(u32buf) as usize);
        }
        if dims.contains(&0) {
            return Err(NnError::Snapshot("zero-width layer".into()));
        }
        let mut head = [0u8; 1];
        r.read_exact(&mut head)?;
        let head = match head[0] {
            0 => Head::Linear,
            1 => Head::Softmax,
            h => return Err(NnError::Snapshot(format!("unknown head {h}"))),
        };
        let mut net = Mlp::zeros(&dims, head);
        let mut f64buf = [0u8; 8];
        for p in &mut net.params {
            r.read_exact(&mut f64buf)?;
            *p = f64::from_le_bytes(f64buf);
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax restricted to the entries where `allowed` is true; the rest get 0.
pub fn masked_softmax(z: &[f64], allowed: &[bool]) -> Vec<f64> {
    let max = z.iter().zip(allowed).filter(|(_, a)| **a).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().zip(allowed).map(|(v, a)| if *a { (v - max).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.num_params(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descend along `grads`. Rejects the whole step if any entry is non-finite.
    pub fn step(&mut self, net: &mut Mlp, grads: &[f64]) -> Result<(), NnError> {
        assert_eq!(grads.len(), net.params.len(), "gradient shape");
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            net.params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(net: &Mlp, x: &[f64], g: &[f64]) -> f64 {
        net.forward(x).unwrap().iter().zip(g).map(|(o, gi)| o * gi).sum()
    }

    #[test]
    fn zero_net_outputs() {
        let lin = Mlp::zeros(&[4, 3, 2], Head::Linear);
        assert_eq!(lin.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        let sm = Mlp::zeros(&[4, 3, 5], Head::Softmax);
        for p in sm.forward(&[1.0, 0.0, 0.0, 1.0]).unwrap() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert!(matches!(lin.forward(&[1.0]), Err(NnError::Dimension { expected: 4, got: 1 })));
    }

    #[test]
    fn forward_matches_straight_line_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::glorot(&[3, 4, 2], Head::Linear, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let p = net.params();
        // Layer 1: W1 (4x3) at 0..12, b1 at 12..16; layer 2: W2 (2x4) at 16..24, b2 at 24..26.
        let mut h = [0.0; 4];
        for (o, hv) in h.iter_mut().enumerate() {
            let z = p[o * 3] * x[0] + p[o * 3 + 1] * x[1] + p[o * 3 + 2] * x[2] + p[12 + o];
            *hv = if z > 0.0 { z } else { 0.0 };
        }
        let mut y = [0.0; 2];
        for (o, yv) in y.iter_mut().enumerate() {
            *yv = (0..4).map(|i| p[16 + o * 4 + i] * h[i]).sum::<f64>() + p[24 + o];
        }
        let out = net.forward(&x).unwrap();
        for i in 0..2 {
            assert!((out[i] - y[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_layer_gradient_is_outer_product() {
        let net = Mlp::zeros(&[3, 2], Head::Linear);
        let x = [1.0, 2.0, 3.0];
        let g = [0.5, -1.0];
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&net.forward_trace(&x).unwrap(), &g, &mut grads);
        assert_eq!(grads, vec![0.5, 1.0, 1.5, -1.0, -2.0, -3.0, 0.5, -1.0]);
        let mut zero = vec![0.0; net.num_params()];
        net.backward(&net.forward_trace(&x).unwrap(), &[0.0, 0.0], &mut zero);
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for head in [Head::Linear, Head::Softmax] {
            for _ in 0..20 {
                let dims = [5, 7, 6, 3];
                let mut net = Mlp::glorot(&dims, head, &mut rng);
                // Nonzero biases keep rectifier inputs off the kink at 0.
                for p in net.params_mut() {
                    *p += rng.random_range(-0.3..0.3);
                }
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut grads = vec![0.0; net.num_params()];
                net.backward(&net.forward_trace(&x).unwrap(), &g, &mut grads);
                let h = 1e-5;
                for i in 0..net.num_params() {
                    let mut up = net.clone();
                    up.params[i] += h;
                    let mut down = net.clone();
                    down.params[i] -= h;
                    let numeric = (loss(&up, &x, &g) - loss(&down, &x, &g)) / (2.0 * h);
                    let scale = numeric.abs().max(grads[i].abs()).max(1e-6);
                    assert!(
                        (numeric - grads[i]).abs() / scale <= 1e-4,
                        "{head:?} param {i}: analytic {} numeric {numeric}",
                        grads[i]
                    );
                }
            }
        }
    }

    #[test]
    fn adam_first_step_and_rejection() {
        let mut net = Mlp::zeros(&[1, 1], Head::Linear);
        let mut adam = Adam::for_net(&net, 1e-3);
        adam.step(&mut net, &[0.2, -3.0]).unwrap();
        // m_hat = g, v_hat = g², so each parameter moves by lr * sign(g).
        assert!((net.params()[0] + 1e-3 * 0.2 / (0.2 + 1e-8)).abs() < 1e-15);
        assert!((net.params()[1] - 1e-3 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        let before = net.clone();
        assert!(matches!(adam.step(&mut net, &[f64::NAN, 0.0]), Err(NnError::NonFiniteGradient)));
        assert_eq!(net, before);
        let mut fresh = Mlp::zeros(&[1, 1], Head::Linear);
        Adam::for_net(&fresh, 1e-3).step(&mut fresh, &[0.0, 0.0]).unwrap();
        assert!(fresh.params().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn adam_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::glorot(&[2, 3, 2], Head::Linear, &mut rng);
        let grads: Vec<f64> = (0..net.num_params()).map(|i| i as f64 * 0.1 - 0.5).collect();
        let (mut a, mut b) = (net.clone(), net.clone());
        Adam::for_net(&a, 1e-3).step(&mut a, &grads).unwrap();
        Adam::for_net(&b, 1e-3).step(&mut b, &grads).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::glorot(&[37, 64, 64, 3], Head::Softmax, &mut rng);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 * 4 + 1 + 8 * net.num_params());
        assert_eq!(Mlp::read_from(buf.as_slice()).unwrap(), net);
        assert!(Mlp::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn masked_softmax_ignores_disallowed() {
        let p = masked_softmax(&[100.0, 0.0, 0.0], &[false, true, true]);
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }
}
