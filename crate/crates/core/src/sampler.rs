//! Exact sampling.
//!
//! A direction on the unit sphere `{f = 1}` is drawn top-down: every inner
//! node splits its value among its children with Dirichlet weights
//! `(n_k / p)` raised to `1/p`, and leaves receive independent random signs.
//! Scaling by a radius drawn from the radial law gives the full sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::density::LpNestedModel;
use crate::radial::ln_gamma_variate;
use crate::tree::LpTree;

/// Scratch space and per-node constants for repeated draws.
struct DirectionSampler<'a> {
    tree: &'a LpTree,
    ln_v: Vec<f64>,
    ln_w: Vec<f64>,
    shapes: Vec<f64>,
    visits: u64,
}

impl<'a> DirectionSampler<'a> {
    fn new(tree: &'a LpTree) -> Self {
        let nodes = tree.nodes();
        let shapes = nodes
            .iter()
            .map(|node| match node.parent {
                Some(parent) => {
                    node.leaf_count() as f64 / tree.node(parent).p.expect("parent is inner")
                }
                None => 0.0,
            })
            .collect();
        DirectionSampler {
            tree,
            ln_v: vec![0.0; nodes.len()],
            ln_w: Vec::new(),
            shapes,
            visits: 0,
        }
    }

    /// Writes a point with `f(out) = exp(ln_root)` into `out`.
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, ln_root: f64, out: &mut [f64]) {
        self.ln_v[0] = ln_root;
        for (idx, node) in self.tree.nodes().iter().enumerate() {
            self.visits += 1;
            match node.p {
                None => {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    out[node.leaves.start] = sign * self.ln_v[idx].exp();
                }
                Some(p) => {
                    self.ln_w.clear();
                    for &c in &node.children {
                        self.ln_w.push(ln_gamma_variate(rng, self.shapes[c]));
                    }
                    let max = self.ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + self.ln_w.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                    for (k, &c) in node.children.iter().enumerate() {
                        // v_child = v · s_k^{1/p}
                        self.ln_v[c] = self.ln_v[idx] + (self.ln_w[k] - lse) / p;
                    }
                }
            }
        }
    }
}

/// Uniform samples from the unit ball `{f ≤ 1}`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(tree: &LpTree, rng: &mut R, count: usize) -> Dataset {
    sample_uniform_ball_counted(tree, rng, count).0
}

/// As [`sample_uniform_ball`], also returning the number of tree nodes
/// visited.
pub fn sample_uniform_ball_counted<R: Rng + ?Sized>(
    tree: &LpTree,
    rng: &mut R,
    count: usize,
) -> (Dataset, u64) {
    let n = tree.n();
    let mut sampler = DirectionSampler::new(tree);
    let mut values = vec![0.0; n * count];
    for row in values.chunks_exact_mut(n) {
        // v_root ~ Beta(n, 1)
        let u: f64 = 1.0 - rng.random::<f64>();
        sampler.draw(rng, u.ln() / n as f64, row);
    }
    (Dataset::from_flat(n, values).expect("shape"), sampler.visits)
}

/// Samples from the uniform distribution on the unit sphere `{f = 1}`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(tree: &LpTree, rng: &mut R, count: usize) -> Dataset {
    let n = tree.n();
    let mut sampler = DirectionSampler::new(tree);
    let mut scratch = vec![0.0; tree.nodes().len()];
    let mut values = vec![0.0; n * count];
    for row in values.chunks_exact_mut(n) {
        sampler.draw(rng, 0.0, row);
        let f = tree.evaluate_into(row, &mut scratch);
        row.iter_mut().for_each(|v| *v /= f);
    }
    Dataset::from_flat(n, values).expect("shape")
}

/// Samples `x` such that `W(x − μ)` follows the model's symmetric law.
pub fn sample<R: Rng + ?Sized>(model: &LpNestedModel, rng: &mut R, count: usize) -> Dataset {
    sample_counted(model, rng, count).0
}

/// As [`sample`], also returning the number of tree nodes visited.
pub fn sample_counted<R: Rng + ?Sized>(
    model: &LpNestedModel,
    rng: &mut R,
    count: usize,
) -> (Dataset, u64) {
    let tree = model.tree();
    let n = tree.n();
    let mut sampler = DirectionSampler::new(tree);
    let mut scratch = vec![0.0; tree.nodes().len()];
    let mut y = vec![0.0; n];
    let mut values = vec![0.0; n * count];
    for row in values.chunks_exact_mut(n) {
        sampler.draw(rng, 0.0, &mut y);
        // renormalize to remove rounding drift, then scale
        let f = tree.evaluate_into(&y, &mut scratch);
        let r = model.radial().sample_one(rng);
        y.iter_mut().for_each(|v| *v *= r / f);
        row.copy_from_slice(&model.from_latent(&y).expect("dimension"));
    }
    (Dataset::from_flat(n, values).expect("shape"), sampler.visits)
}

/// Default number of samples generated from one RNG stream by
/// [`sample_seeded`].
pub const CHUNK_SIZE: usize = 4096;

/// Deterministic sampling from a seed. Chunk `c` of [`CHUNK_SIZE`] samples
/// uses stream `c` of a ChaCha8 generator seeded with `seed`, so the output
/// does not depend on `threads`.
pub fn sample_seeded(model: &LpNestedModel, seed: u64, count: usize, threads: usize) -> Dataset {
    let n = model.n();
    let chunks = count.div_ceil(CHUNK_SIZE);
    let mut values = vec![0.0; n * count];
    let threads = threads.max(1).min(chunks.max(1));
    let mut pieces: Vec<(usize, &mut [f64])> = values.chunks_mut(CHUNK_SIZE * n).enumerate().collect();
    let per_thread = pieces.len().div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        while !pieces.is_empty() {
            let take = per_thread.min(pieces.len());
            let batch: Vec<(usize, &mut [f64])> = pieces.drain(..take).collect();
            scope.spawn(move || {
                for (c, out) in batch {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(c as u64);
                    let data = sample(model, &mut rng, out.len() / n);
                    out.copy_from_slice(data.as_flat());
                }
            });
        }
    });
    Dataset::from_flat(n, values).expect("shape")
}

/// Monte Carlo estimate of the marginal density of coordinate `coord` of
/// `W(x − μ)` on `bins` equal bins over `range`. Single-coordinate
/// marginals have no closed form in general.
pub fn marginal_histogram<R: Rng + ?Sized>(
    model: &LpNestedModel,
    rng: &mut R,
    coord: usize,
    range: (f64, f64),
    bins: usize,
    count: usize,
) -> Vec<f64> {
    let latent = LpNestedModel::new(model.tree().clone(), model.radial().clone())
        .expect("validated radial");
    let data = sample(&latent, rng, count);
    let width = (range.1 - range.0) / bins as f64;
    let mut hist = vec![0.0; bins];
    for row in data.rows() {
        let v = row[coord];
        if v >= range.0 && v < range.1 {
            hist[((v - range.0) / width) as usize] += 1.0;
        }
    }
    hist.iter().map(|h| h / (count as f64 * width)).collect()
}
