//! Named parameter store shared by a network and its optimizer.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Mat,
    pub grad: Mat,
    /// AdamW first moment.
    pub m: Mat,
    /// AdamW second moment.
    pub v: Mat,
    /// Weight decay applies only to weight matrices, not biases or norms.
    pub decay: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Params {
    entries: Vec<ParamEntry>,
}

impl Params {
    pub fn new() -> Self {
        Params { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, decay: bool) -> ParamId {
        let (r, c) = (value.rows, value.cols);
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            grad: Mat::zeros(r, c),
            m: Mat::zeros(r, c),
            v: Mat::zeros(r, c),
            decay,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].grad
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    pub fn grads_all_zero(&self) -> bool {
        self.entries.iter().all(|e| e.grad.data.iter().all(|&g| g == 0.0))
    }

    pub fn grads_all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.all_finite())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Flatten all values in declaration order (checkpoint payload order).
    pub fn flatten_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for e in &self.entries {
            out.extend_from_slice(&e.value.data);
        }
        out
    }

    pub fn flatten_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let mut m = Vec::with_capacity(self.scalar_count());
        let mut v = Vec::with_capacity(self.scalar_count());
        for e in &self.entries {
            m.extend_from_slice(&e.m.data);
            v.extend_from_slice(&e.v.data);
        }
        (m, v)
    }

    pub fn load_values(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.scalar_count() {
            return false;
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.value.len();
            e.value.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        true
    }

    pub fn load_moments(&mut self, m: &[f64], v: &[f64]) -> bool {
        if m.len() != self.scalar_count() || v.len() != self.scalar_count() {
            return false;
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.value.len();
            e.m.data.copy_from_slice(&m[off..off + n]);
            e.v.data.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        true
    }
}

/// N(0, std²) init.
pub fn gaussian_init(rows: usize, cols: usize, std: f64, rng: &mut ChaCha12Rng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in &mut m.data {
        *v = std * standard_normal(rng);
    }
    m
}

/// Box-Muller standard normal; avoids a rand_distr dependency and keeps the
/// draw sequence under our control for reproducibility.
pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen::<f64>();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}
