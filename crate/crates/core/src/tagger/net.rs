//! Embeddings, stacked bidirectional LSTMs and softmax heads with
//! hand-written backpropagation through time.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Feed part-of-speech embeddings alongside word embeddings.
    pub use_pos: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            word_dim: 32,
            pos_dim: 8,
            hidden: 100,
            layers: 2,
            use_pos: true,
        }
    }
}

impl NetConfig {
    fn input_dim(&self) -> usize {
        self.word_dim + if self.use_pos { self.pos_dim } else { 0 }
    }
}

/// One LSTM direction. Gate rows are ordered input, forget, output,
/// candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Parameters of a sequence labeler with one softmax head per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetConfig,
    pub word_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    /// (forward, backward) per layer.
    pub layers: Vec<(Lstm, Lstm)>,
    pub heads: Vec<Head>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    let u = Uniform::new_inclusive(-scale, scale).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || u.sample(rng))
}

fn uniform1<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Array1<f64> {
    let u = Uniform::new_inclusive(-scale, scale).unwrap();
    Array1::from_shape_simple_fn(n, || u.sample(rng))
}

impl Lstm {
    fn new<R: Rng>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Lstm {
        Lstm {
            wx: uniform(4 * hidden, input, scale, rng),
            wh: uniform(4 * hidden, hidden, scale, rng),
            b: uniform1(4 * hidden, scale, rng),
        }
    }

    fn zeros_like(&self) -> Lstm {
        Lstm {
            wx: Array2::zeros(self.wx.raw_dim()),
            wh: Array2::zeros(self.wh.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    /// Run over the rows of `x` (one per time step).
    fn forward(&self, x: &Array2<f64>) -> LstmCache {
        let t_len = x.nrows();
        let h = self.hidden();
        let zx = x.dot(&self.wx.t()) + &self.b;
        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut hs = Array2::zeros((t_len, h));
        let mut cs = Array2::zeros((t_len, h));
        let mut tanh_c = Array2::zeros((t_len, h));
        let mut h_prev = Array1::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..t_len {
            let z = &zx.row(t) + &self.wh.dot(&h_prev);
            let mut g = gates.row_mut(t);
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let o_g = sigmoid(z[2 * h + j]);
                let c_g = z[3 * h + j].tanh();
                g[j] = i_g;
                g[h + j] = f_g;
                g[2 * h + j] = o_g;
                g[3 * h + j] = c_g;
                let c = f_g * c_prev[j] + i_g * c_g;
                cs[[t, j]] = c;
                tanh_c[[t, j]] = c.tanh();
                hs[[t, j]] = o_g * tanh_c[[t, j]];
            }
            h_prev = hs.row(t).to_owned();
            c_prev = cs.row(t).to_owned();
        }
        LstmCache {
            x: x.clone(),
            gates,
            hs,
            cs,
            tanh_c,
        }
    }

    /// Accumulate parameter gradients into `grad` and return the gradient
    /// with respect to the inputs.
    fn backward(&self, cache: &LstmCache, dh_out: &Array2<f64>, grad: &mut Lstm) -> Array2<f64> {
        let t_len = cache.x.nrows();
        let h = self.hidden();
        let mut dz = Array2::zeros((t_len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        let wh_t = self.wh.t().as_standard_layout().into_owned();
        for t in (0..t_len).rev() {
            let g = cache.gates.row(t);
            let mut dzr = dz.row_mut(t);
            for j in 0..h {
                let dh = dh_out[[t, j]] + dh_next[j];
                let (i_g, f_g, o_g, c_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = cache.tanh_c[[t, j]];
                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                let c_prev = if t > 0 { cache.cs[[t - 1, j]] } else { 0.0 };
                dzr[j] = dc * c_g * i_g * (1.0 - i_g);
                dzr[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                dzr[2 * h + j] = dh * tc * o_g * (1.0 - o_g);
                dzr[3 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                dc_next[j] = dc * f_g;
            }
            dh_next = wh_t.dot(&dz.row(t));
        }
        grad.wx += &dz.t().dot(&cache.x);
        if t_len > 1 {
            grad.wh += &dz
                .slice(s![1.., ..])
                .t()
                .dot(&cache.hs.slice(s![..t_len - 1, ..]));
        }
        grad.b += &dz.sum_axis(Axis(0));
        dz.dot(&self.wx)
    }
}

struct LstmCache {
    x: Array2<f64>,
    gates: Array2<f64>,
    hs: Array2<f64>,
    cs: Array2<f64>,
    tanh_c: Array2<f64>,
}

fn reversed(a: &Array2<f64>) -> Array2<f64> {
    a.slice(s![..;-1, ..]).to_owned()
}

/// Everything the backward pass needs from a forward pass.
pub struct Forward {
    words: Vec<usize>,
    pos: Vec<usize>,
    layers: Vec<(LstmCache, LstmCache)>,
    /// Final encoder states, one row per token.
    pub v: Array2<f64>,
    /// Softmax outputs per head, one row per token.
    pub probs: Vec<Array2<f64>>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

impl Network {
    /// Weights uniform in `[-scale, scale]`; the UNK and NUMBER word
    /// embeddings (rows 0 and 1) are drawn from N(0, 0.5²).
    pub fn new<R: Rng>(
        config: NetConfig,
        vocab: usize,
        pos_vocab: usize,
        head_sizes: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Network {
        let mut word_emb = uniform(vocab, config.word_dim, scale, rng);
        let normal = Normal::new(0.0, 0.5).unwrap();
        for r in 0..vocab.min(2) {
            word_emb.row_mut(r).mapv_inplace(|_| normal.sample(rng));
        }
        let pos_emb = uniform(
            pos_vocab,
            if config.use_pos { config.pos_dim } else { 0 },
            scale,
            rng,
        );
        let mut layers = Vec::with_capacity(config.layers);
        let mut input = config.input_dim();
        for _ in 0..config.layers {
            let f = Lstm::new(input, config.hidden, scale, rng);
            let b = Lstm::new(input, config.hidden, scale, rng);
            layers.push((f, b));
            input = 2 * config.hidden;
        }
        let heads = head_sizes
            .iter()
            .map(|&c| Head {
                w: uniform(c, 2 * config.hidden, scale, rng),
                b: uniform1(c, scale, rng),
            })
            .collect();
        Network {
            config,
            word_emb,
            pos_emb,
            layers,
            heads,
        }
    }

    pub fn zeros_like(&self) -> Network {
        Network {
            config: self.config,
            word_emb: Array2::zeros(self.word_emb.raw_dim()),
            pos_emb: Array2::zeros(self.pos_emb.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|(f, b)| (f.zeros_like(), b.zeros_like()))
                .collect(),
            heads: self
                .heads
                .iter()
                .map(|h| Head {
                    w: Array2::zeros(h.w.raw_dim()),
                    b: Array1::zeros(h.b.len()),
                })
                .collect(),
        }
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.word_emb.as_slice().unwrap(),
            self.pos_emb.as_slice().unwrap(),
        ];
        for (f, b) in &self.layers {
            for l in [f, b] {
                out.push(l.wx.as_slice().unwrap());
                out.push(l.wh.as_slice().unwrap());
                out.push(l.b.as_slice().unwrap());
            }
        }
        for h in &self.heads {
            out.push(h.w.as_slice().unwrap());
            out.push(h.b.as_slice().unwrap());
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.word_emb.as_slice_mut().unwrap(),
            self.pos_emb.as_slice_mut().unwrap(),
        ];
        for (f, b) in &mut self.layers {
            for l in [f, b] {
                out.push(l.wx.as_slice_mut().unwrap());
                out.push(l.wh.as_slice_mut().unwrap());
                out.push(l.b.as_slice_mut().unwrap());
            }
        }
        for h in &mut self.heads {
            out.push(h.w.as_slice_mut().unwrap());
            out.push(h.b.as_slice_mut().unwrap());
        }
        out
    }

    fn input(&self, words: &[usize], pos: &[usize]) -> Array2<f64> {
        let rows: Vec<ArrayView1<f64>> = words.iter().map(|&w| self.word_emb.row(w)).collect();
        let we = ndarray::stack(Axis(0), &rows).unwrap();
        if !self.config.use_pos {
            return we;
        }
        let prow: Vec<ArrayView1<f64>> = pos.iter().map(|&p| self.pos_emb.row(p)).collect();
        let pe = ndarray::stack(Axis(0), &prow).unwrap();
        concatenate(Axis(1), &[we.view(), pe.view()]).unwrap()
    }

    /// Forward pass over one sentence of (word, POS) indices.
    pub fn forward(&self, words: &[usize], pos: &[usize]) -> Forward {
        assert_eq!(words.len(), pos.len());
        assert!(!words.is_empty(), "empty sentence");
        let mut x = self.input(words, pos);
        let mut caches = Vec::with_capacity(self.layers.len());
        for (f, b) in &self.layers {
            let cf = f.forward(&x);
            let cb = b.forward(&reversed(&x));
            x = concatenate(Axis(1), &[cf.hs.view(), reversed(&cb.hs).view()]).unwrap();
            caches.push((cf, cb));
        }
        let probs = self
            .heads
            .iter()
            .map(|h| softmax_rows(&(x.dot(&h.w.t()) + &h.b)))
            .collect();
        Forward {
            words: words.to_vec(),
            pos: pos.to_vec(),
            layers: caches,
            v: x,
            probs,
        }
    }

    /// Sum over heads and tokens of the cross-entropy of `labels[head][t]`.
    pub fn loss(fw: &Forward, labels: &[Vec<usize>]) -> f64 {
        let mut loss = 0.0;
        for (p, lab) in fw.probs.iter().zip(labels) {
            for (t, &y) in lab.iter().enumerate() {
                loss -= p[[t, y]].max(1e-300).ln();
            }
        }
        loss
    }

    /// Accumulate the gradient of [`Network::loss`] into `grad`.
    pub fn backward(&self, fw: &Forward, labels: &[Vec<usize>], grad: &mut Network) {
        let h = self.config.hidden;
        let mut dv = Array2::<f64>::zeros(fw.v.raw_dim());
        for ((head, g), (p, lab)) in self
            .heads
            .iter()
            .zip(grad.heads.iter_mut())
            .zip(fw.probs.iter().zip(labels))
        {
            let mut dl = p.clone();
            for (t, &y) in lab.iter().enumerate() {
                dl[[t, y]] -= 1.0;
            }
            g.w += &dl.t().dot(&fw.v);
            g.b += &dl.sum_axis(Axis(0));
            dv += &dl.dot(&head.w);
        }
        for (li, ((f, b), (cf, cb))) in self.layers.iter().zip(&fw.layers).enumerate().rev() {
            let dhf = dv.slice(s![.., ..h]).to_owned();
            let dhb = reversed(&dv.slice(s![.., h..]).to_owned());
            let (gf, gb) = &mut grad.layers[li];
            let dxf = f.backward(cf, &dhf, gf);
            let dxb = b.backward(cb, &dhb, gb);
            dv = dxf + reversed(&dxb);
        }
        let dw = self.config.word_dim;
        for (t, (&w, &p)) in fw.words.iter().zip(&fw.pos).enumerate() {
            let row = dv.row(t);
            Zip::from(grad.word_emb.row_mut(w))
                .and(row.slice(s![..dw]))
                .for_each(|g, &d| *g += d);
            if self.config.use_pos {
                Zip::from(grad.pos_emb.row_mut(p))
                    .and(row.slice(s![dw..]))
                    .for_each(|g, &d| *g += d);
            }
        }
    }
}

/// RMSProp with decay `rho`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub rho: f64,
    pub eps: f64,
    cache: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(net: &Network, rho: f64, eps: f64) -> RmsProp {
        RmsProp {
            rho,
            eps,
            cache: net.slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grad: &Network, lr: f64) {
        for ((p, g), c) in net
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(&mut self.cache)
        {
            for ((p, &g), c) in p.iter_mut().zip(g).zip(c.iter_mut()) {
                *c = self.rho * *c + (1.0 - self.rho) * g * g;
                *p -= lr * g / (c.sqrt() + self.eps);
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network, beta1: f64, beta2: f64, eps: f64) -> Adam {
        let zeros: Vec<Vec<f64>> = net.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Network, grad: &Network, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in net
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Largest relative error `‖a - n‖ / (‖a‖ + ‖n‖)` over parameter tensors,
/// comparing analytic gradients `a` with central differences `n`. Tensors
/// whose gradients are both zero are skipped.
pub fn gradient_check(
    net: &Network,
    words: &[usize],
    pos: &[usize],
    labels: &[Vec<usize>],
    step: f64,
) -> f64 {
    let mut analytic = net.zeros_like();
    let fw = net.forward(words, pos);
    net.backward(&fw, labels, &mut analytic);
    let mut probe = net.clone();
    let sizes: Vec<usize> = net.slices().iter().map(|s| s.len()).collect();
    let mut worst: f64 = 0.0;
    for (ti, &len) in sizes.iter().enumerate() {
        let mut numeric = vec![0.0; len];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.slices()[ti][idx];
            probe.slices_mut()[ti][idx] = orig + step;
            let up = Network::loss(&probe.forward(words, pos), labels);
            probe.slices_mut()[ti][idx] = orig - step;
            let down = Network::loss(&probe.forward(words, pos), labels);
            probe.slices_mut()[ti][idx] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let a = analytic.slices()[ti];
        let diff: f64 = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt()
            + numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            worst = worst.max(diff / norm);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> Network {
        let cfg = NetConfig {
            word_dim: 3,
            pos_dim: 2,
            hidden: 4,
            layers: 2,
            use_pos: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::new(cfg, 5, 3, &[2, 2], 0.5, &mut rng)
    }

    #[test]
    fn probabilities_are_normalized() {
        let net = small(1);
        let fw = net.forward(&[2, 3, 4], &[0, 1, 2]);
        for p in &fw.probs {
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let net = small(seed);
            let err = gradient_check(&net, &[2, 4], &[1, 0], &[vec![1, 0], vec![0, 1]], 1e-5);
            assert!(err < 1e-4, "seed {seed}: {err}");
            let err = gradient_check(
                &net,
                &[0, 1, 3, 2],
                &[1, 0, 2, 2],
                &[vec![1, 0, 0, 1], vec![0, 1, 1, 1]],
                1e-5,
            );
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn optimizers_reduce_loss() {
        for use_adam in [false, true] {
            let mut net = small(7);
            let labels = vec![vec![1, 0, 1], vec![0, 0, 1]];
            let before = Network::loss(&net.forward(&[2, 3, 4], &[0, 1, 2]), &labels);
            let mut rms = RmsProp::new(&net, 0.9, 1e-8);
            let mut adam = Adam::new(&net, 0.9, 0.999, 1e-8);
            for _ in 0..50 {
                let mut g = net.zeros_like();
                let fw = net.forward(&[2, 3, 4], &[0, 1, 2]);
                net.backward(&fw, &labels, &mut g);
                if use_adam {
                    adam.step(&mut net, &g, 0.01);
                } else {
                    rms.step(&mut net, &g, 0.01);
                }
            }
            let after = Network::loss(&net.forward(&[2, 3, 4], &[0, 1, 2]), &labels);
            assert!(after < before * 0.5, "{before} -> {after}");
        }
    }
}
