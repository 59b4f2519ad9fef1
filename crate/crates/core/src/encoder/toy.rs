//! Toy masked-LM encoder with hand-written backpropagation.
//!
//! Each layer mixes a token's state with two context summaries through a
//! residual tanh block, `h' = h + tanh(W h + U g + V c + b)`, where `g` is the
//! mean of every other position and `c` the mean of the adjacent positions.
//! A masked-LM head reads the top layer at masked positions and a two-way
//! next-sentence head reads the `[CLS]` position.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::train::TrainingInstance;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerParams {
    pub w: Vec<f32>,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub b: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ToyParams {
    pub vocab: usize,
    pub hidden: usize,
    pub max_positions: usize,
    pub tok: Vec<f32>,
    pub pos: Vec<f32>,
    pub seg: Vec<f32>,
    pub layers: Vec<LayerParams>,
    pub mlm_w: Vec<f32>,
    pub mlm_b: Vec<f32>,
    pub nsp_w: Vec<f32>,
    pub nsp_b: Vec<f32>,
}

/// Name and shape of one stored parameter block.
pub(crate) type BlockSpec = (String, Vec<usize>);

impl ToyParams {
    pub fn zeros(vocab: usize, hidden: usize, max_positions: usize, num_layers: usize) -> Self {
        let z = |n: usize| vec![0.0f32; n];
        ToyParams {
            vocab,
            hidden,
            max_positions,
            tok: z(vocab * hidden),
            pos: z(max_positions * hidden),
            seg: z(2 * hidden),
            layers: (0..num_layers)
                .map(|_| LayerParams {
                    w: z(hidden * hidden),
                    u: z(hidden * hidden),
                    v: z(hidden * hidden),
                    b: z(hidden),
                })
                .collect(),
            mlm_w: z(vocab * hidden),
            mlm_b: z(vocab),
            nsp_w: z(2 * hidden),
            nsp_b: z(2),
        }
    }

    pub fn init(
        vocab: usize,
        hidden: usize,
        max_positions: usize,
        num_layers: usize,
        seed: u64,
    ) -> Self {
        let mut p = Self::zeros(vocab, hidden, max_positions, num_layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (hidden as f32).sqrt();
        let emb = Normal::new(0.0f32, scale).expect("finite std");
        let head = Normal::new(0.0f32, 0.02).expect("finite std");
        let mut fill = |v: &mut Vec<f32>, d: &Normal<f32>| {
            v.iter_mut().for_each(|x| *x = d.sample(&mut rng));
        };
        fill(&mut p.tok, &emb);
        fill(&mut p.pos, &emb);
        fill(&mut p.seg, &emb);
        for layer in &mut p.layers {
            fill(&mut layer.w, &emb);
            fill(&mut layer.u, &emb);
            fill(&mut layer.v, &emb);
        }
        fill(&mut p.mlm_w, &head);
        fill(&mut p.nsp_w, &head);
        p
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(
            self.vocab,
            self.hidden,
            self.max_positions,
            self.num_layers(),
        )
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        let (v, h) = (self.vocab, self.hidden);
        let mut out = vec![
            ("token_embeddings".to_string(), vec![v, h]),
            (
                "position_embeddings".to_string(),
                vec![self.max_positions, h],
            ),
            ("segment_embeddings".to_string(), vec![2, h]),
        ];
        for l in 0..self.num_layers() {
            out.push((format!("layer{l}.w"), vec![h, h]));
            out.push((format!("layer{l}.u"), vec![h, h]));
            out.push((format!("layer{l}.v"), vec![h, h]));
            out.push((format!("layer{l}.b"), vec![h]));
        }
        out.push(("mlm.w".to_string(), vec![v, h]));
        out.push(("mlm.b".to_string(), vec![v]));
        out.push(("nsp.w".to_string(), vec![2, h]));
        out.push(("nsp.b".to_string(), vec![2]));
        out
    }

    /// Blocks in the order given by [`Self::block_specs`].
    pub fn blocks(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = vec![&self.tok, &self.pos, &self.seg];
        for l in &self.layers {
            out.extend([l.w.as_slice(), &l.u, &l.v, &l.b]);
        }
        out.extend([self.mlm_w.as_slice(), &self.mlm_b, &self.nsp_w, &self.nsp_b]);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = vec![&mut self.tok, &mut self.pos, &mut self.seg];
        for l in &mut self.layers {
            out.extend([&mut l.w, &mut l.u, &mut l.v, &mut l.b]);
        }
        out.extend([
            &mut self.mlm_w,
            &mut self.mlm_b,
            &mut self.nsp_w,
            &mut self.nsp_b,
        ]);
        out
    }

    /// Euclidean norm over every parameter.
    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f32, other: &ToyParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y);
        }
    }

    pub fn forward(&self, ids: &[u32], segments: &[u8]) -> Forward {
        let (h, n) = (self.hidden, ids.len());
        let mut x = vec![0.0f32; n * h];
        for (i, (&id, &s)) in ids.iter().zip(segments).enumerate() {
            let row = &mut x[i * h..(i + 1) * h];
            let t = &self.tok[id as usize * h..][..h];
            let p = &self.pos[i * h..][..h];
            let g = &self.seg[s as usize * h..][..h];
            for k in 0..h {
                row[k] = t[k] + p[k] + g[k];
            }
        }
        let mut states = vec![x];
        let mut globals = Vec::with_capacity(self.num_layers());
        let mut locals = Vec::with_capacity(self.num_layers());
        let mut acts = Vec::with_capacity(self.num_layers());
        for layer in &self.layers {
            let input = states.last().expect("embedding layer present");
            let g = global_means(input, n, h);
            let c = neighbour_means(input, n, h);
            let mut act = vec![0.0f32; n * h];
            for row in act.chunks_exact_mut(h) {
                row.copy_from_slice(&layer.b);
            }
            for (x, m) in [(input, &layer.w), (&g, &layer.u), (&c, &layer.v)] {
                // act += x m^T
                gemm(n, h, h, x, Layout::Normal, m, Layout::Transposed, &mut act);
            }
            act.iter_mut().for_each(|z| *z = z.tanh());
            let mut out = input.clone();
            out.iter_mut().zip(&act).for_each(|(o, t)| *o += t);
            globals.push(g);
            locals.push(c);
            acts.push(act);
            states.push(out);
        }
        Forward {
            n,
            states,
            globals,
            locals,
            acts,
        }
    }

    pub fn mlm_logits(&self, state: &[f32]) -> Vec<f32> {
        let h = self.hidden;
        (0..self.vocab)
            .map(|v| self.mlm_b[v] + dot(&self.mlm_w[v * h..(v + 1) * h], state))
            .collect()
    }

    fn nsp_logits(&self, state: &[f32]) -> [f32; 2] {
        let h = self.hidden;
        [
            self.nsp_b[0] + dot(&self.nsp_w[..h], state),
            self.nsp_b[1] + dot(&self.nsp_w[h..], state),
        ]
    }

    /// Adds the gradient of `mlm_scale * sum(masked CE) + nsp_scale * NSP CE`
    /// for one instance into `grad`; returns the unscaled (mlm, nsp) losses.
    pub fn accumulate_gradient(
        &self,
        inst: &TrainingInstance,
        grad: &mut ToyParams,
        mlm_scale: f32,
        nsp_scale: f32,
    ) -> (f64, f64) {
        let h = self.hidden;
        let fwd = self.forward(&inst.input_ids, &inst.segment_ids);
        let n = fwd.n;
        let top = fwd.states.last().expect("at least the embedding layer");
        let mut d = vec![0.0f32; n * h];
        let mut mlm_loss = 0.0f64;
        let m = inst.masked_positions.len();
        if m > 0 {
            let mut states = Vec::with_capacity(m * h);
            for &p in &inst.masked_positions {
                states.extend_from_slice(&top[p * h..(p + 1) * h]);
            }
            let v = self.vocab;
            let mut probs = vec![0.0f32; m * v];
            for row in probs.chunks_exact_mut(v) {
                row.copy_from_slice(&self.mlm_b);
            }
            gemm(
                m,
                h,
                v,
                &states,
                Layout::Normal,
                &self.mlm_w,
                Layout::Transposed,
                &mut probs,
            );
            for (row, &label) in probs.chunks_exact_mut(v).zip(&inst.masked_labels) {
                mlm_loss += softmax_in_place(row, label as usize);
                row[label as usize] -= 1.0;
                row.iter_mut().for_each(|g| *g *= mlm_scale);
                grad.mlm_b
                    .iter_mut()
                    .zip(row.iter())
                    .for_each(|(b, g)| *b += g);
            }
            // d mlm_w += dlogits^T states, d states = dlogits mlm_w
            gemm(
                v,
                m,
                h,
                &probs,
                Layout::Transposed,
                &states,
                Layout::Normal,
                &mut grad.mlm_w,
            );
            let mut d_states = vec![0.0f32; m * h];
            gemm(
                m,
                v,
                h,
                &probs,
                Layout::Normal,
                &self.mlm_w,
                Layout::Normal,
                &mut d_states,
            );
            for (&p, ds) in inst.masked_positions.iter().zip(d_states.chunks_exact(h)) {
                d[p * h..(p + 1) * h]
                    .iter_mut()
                    .zip(ds)
                    .for_each(|(a, b)| *a += b);
            }
        }
        let mut nsp_loss = 0.0f64;
        if let Some(is_next) = inst.is_next {
            let label = usize::from(!is_next);
            let state = &top[..h];
            let logits = self.nsp_logits(state);
            let mut probs = logits.to_vec();
            nsp_loss = softmax_in_place(&mut probs, label);
            probs[label] -= 1.0;
            for (c, &g) in probs.iter().enumerate() {
                let g = g * nsp_scale;
                grad.nsp_b[c] += g;
                for k in 0..h {
                    grad.nsp_w[c * h + k] += g * state[k];
                    d[k] += g * self.nsp_w[c * h + k];
                }
            }
        }

        for l in (0..self.num_layers()).rev() {
            let layer = &self.layers[l];
            let gl = &mut grad.layers[l];
            let input = &fwd.states[l];
            let (g, c, act) = (&fwd.globals[l], &fwd.locals[l], &fwd.acts[l]);
            let dz: Vec<f32> = d.iter().zip(act).map(|(d, t)| d * (1.0 - t * t)).collect();
            for row in dz.chunks_exact(h) {
                gl.b.iter_mut().zip(row).for_each(|(b, x)| *b += x);
            }
            let mut d_in = d;
            let mut d_g = vec![0.0f32; n * h];
            let mut d_c = vec![0.0f32; n * h];
            for (x, w, gw, dx) in [
                (input, &layer.w, &mut gl.w, &mut d_in),
                (g, &layer.u, &mut gl.u, &mut d_g),
                (c, &layer.v, &mut gl.v, &mut d_c),
            ] {
                // gw += dz^T x, dx += dz w
                gemm(h, n, h, &dz, Layout::Transposed, x, Layout::Normal, gw);
                gemm(n, h, h, &dz, Layout::Normal, w, Layout::Normal, dx);
            }
            // both context operators feed back into the layer input
            let back_g = global_means(&d_g, n, h);
            let back_c = neighbour_means_adjoint(&d_c, n, h);
            for ((x, a), b) in d_in.iter_mut().zip(&back_g).zip(&back_c) {
                *x += a + b;
            }
            d = d_in;
        }

        for (i, (&id, &s)) in inst.input_ids.iter().zip(&inst.segment_ids).enumerate() {
            let di = &d[i * h..(i + 1) * h];
            for k in 0..h {
                grad.tok[id as usize * h + k] += di[k];
                grad.pos[i * h + k] += di[k];
                grad.seg[s as usize * h + k] += di[k];
            }
        }
        (mlm_loss, nsp_loss)
    }
}

/// Intermediate values of one forward pass, flattened `n * hidden` per layer.
pub(crate) struct Forward {
    pub n: usize,
    /// Embedding sum first, then the output of every layer.
    pub states: Vec<Vec<f32>>,
    globals: Vec<Vec<f32>>,
    locals: Vec<Vec<f32>>,
    acts: Vec<Vec<f32>>,
}

// Mean over all other positions. The operator is symmetric, so it is also
// its own adjoint.
fn global_means(x: &[f32], n: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; n * h];
    if n < 2 {
        return out;
    }
    let mut total = vec![0.0f32; h];
    for row in x.chunks_exact(h) {
        total.iter_mut().zip(row).for_each(|(t, v)| *t += v);
    }
    let inv = 1.0 / (n - 1) as f32;
    for (o, row) in out.chunks_exact_mut(h).zip(x.chunks_exact(h)) {
        for k in 0..h {
            o[k] = (total[k] - row[k]) * inv;
        }
    }
    out
}

fn neighbour_count(i: usize, n: usize) -> usize {
    usize::from(i > 0) + usize::from(i + 1 < n)
}

// Mean of positions i - 1 and i + 1 where they exist.
fn neighbour_means(x: &[f32], n: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; n * h];
    for i in 0..n {
        let cnt = neighbour_count(i, n);
        if cnt == 0 {
            continue;
        }
        let inv = 1.0 / cnt as f32;
        for j in [i.wrapping_sub(1), i + 1] {
            if j < n {
                for k in 0..h {
                    out[i * h + k] += x[j * h + k] * inv;
                }
            }
        }
    }
    out
}

fn neighbour_means_adjoint(d: &[f32], n: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; n * h];
    for i in 0..n {
        let cnt = neighbour_count(i, n);
        if cnt == 0 {
            continue;
        }
        let inv = 1.0 / cnt as f32;
        for j in [i.wrapping_sub(1), i + 1] {
            if j < n {
                for k in 0..h {
                    out[j * h + k] += d[i * h + k] * inv;
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

/// `c += a b` for row-major `c` of shape `m x n`. `a` is `m x k` as stored,
/// or `k x m` when `Transposed`; likewise `b` is `k x n` or `n x k`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], la: Layout, b: &[f32], lb: Layout, c: &mut [f32]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = match la {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the assertion above bounds every index the strides can reach.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

// Eight independent accumulators let the compiler vectorize the loop.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Turns logits into probabilities and returns the cross-entropy of `label`.
fn softmax_in_place(v: &mut [f32], label: usize) -> f64 {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for x in v.iter_mut() {
        let e = ((*x - max) as f64).exp();
        *x = e as f32;
        sum += e;
    }
    let loss = -((v[label] as f64) / sum).ln();
    v.iter_mut().for_each(|x| *x = (*x as f64 / sum) as f32);
    loss
}
