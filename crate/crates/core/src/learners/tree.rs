//! Histogram-binned CART used by both the forest and the booster.
//!
//! Each row carries a gradient `g` and hessian `h`. Splits maximise
//! `G_L^2/(H_L+λ) + G_R^2/(H_R+λ) - G^2/(H+λ)` and leaves predict `G/(H+λ)`.
//! With `g = y`, `h = 1`, `λ = 0` this is the usual variance-reduction
//! regression tree with leaf means.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

const MAX_BINS: usize = 64;

/// Per-feature cut points learned from the training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Binner {
    cuts: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let cuts = (0..x.ncols())
            .map(|j| {
                let mut v: Vec<f64> = x.column(j).iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.len() <= MAX_BINS {
                    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut c: Vec<f64> = (1..MAX_BINS)
                        .map(|b| {
                            let pos = b * (v.len() - 1) / MAX_BINS;
                            0.5 * (v[pos] + v[pos + 1])
                        })
                        .collect();
                    c.dedup();
                    c
                }
            })
            .collect();
        Self { cuts }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    /// Column-major bin indices.
    pub fn transform(&self, x: &DMatrix<f64>) -> Vec<Vec<u8>> {
        (0..x.ncols())
            .map(|j| {
                let cuts = &self.cuts[j];
                x.column(j)
                    .iter()
                    .map(|&v| cuts.partition_point(|&c| c < v) as u8)
                    .collect()
            })
            .collect()
    }

    fn threshold(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature][bin]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per node; `None` means all.
    pub mtry: Option<usize>,
    pub lambda: f64,
}

impl Tree {
    /// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
    pub fn grow<R: Rng>(
        binner: &Binner,
        bins: &[Vec<u8>],
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(binner, bins, grad, hess, rows, 0, params, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng>(
        &mut self,
        binner: &Binner,
        bins: &[Vec<u8>],
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: TreeParams,
        rng: &mut R,
    ) -> usize {
        let g: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| hess[i]).sum();
        let leaf_value = g / (h + params.lambda);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(leaf_value));
        if depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
            return id;
        }
        let Some((feature, bin)) = best_split(binner, bins, grad, hess, &rows, g, h, params, rng) else {
            return id;
        };
        let col = &bins[feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| (col[i] as usize) <= bin);
        let left = self.build(binner, bins, grad, hess, left_rows, depth + 1, params, rng);
        let right = self.build(binner, bins, grad, hess, right_rows, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold: binner.threshold(feature, bin),
            left,
            right,
        };
        id
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if x[(i, *feature)] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[allow(clippy::too_many_arguments)]
fn best_split<R: Rng>(
    binner: &Binner,
    bins: &[Vec<u8>],
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    g_total: f64,
    h_total: f64,
    params: TreeParams,
    rng: &mut R,
) -> Option<(usize, usize)> {
    let p = bins.len();
    let features: Vec<usize> = match params.mtry {
        Some(m) if m < p => sample(rng, p, m).into_vec(),
        _ => (0..p).collect(),
    };
    let lambda = params.lambda;
    let parent = g_total * g_total / (h_total + lambda);
    let mut best: Option<(f64, usize, usize)> = None;
    for &f in &features {
        let nb = binner.n_bins(f);
        if nb < 2 {
            continue;
        }
        let mut gs = vec![0.0; nb];
        let mut hs = vec![0.0; nb];
        let mut cs = vec![0usize; nb];
        let col = &bins[f];
        for &i in rows {
            let b = col[i] as usize;
            gs[b] += grad[i];
            hs[b] += hess[i];
            cs[b] += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for b in 0..nb - 1 {
            gl += gs[b];
            hl += hs[b];
            cl += cs[b];
            let cr = rows.len() - cl;
            if cl < params.min_leaf || cr < params.min_leaf {
                continue;
            }
            if cs[b] == 0 && b > 0 {
                // same partition as the previous cut
                continue;
            }
            let gr = g_total - gl;
            let hr = h_total - hl;
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if gain > 1e-12 * (1.0 + parent.abs()) && best.map_or(true, |(bg, _, _)| gain > bg) {
                best = Some((gain, f, b));
            }
        }
    }
    best.map(|(_, f, b)| (f, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn step_function_single_split() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 10.0 - 2.0).collect();
        let y: Vec<f64> = xs.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let binner = Binner::fit(&x);
        let bins = binner.transform(&x);
        let hess = vec![1.0; y.len()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = TreeParams {
            max_depth: 1,
            min_leaf: 1,
            mtry: None,
            lambda: 0.0,
        };
        let t = Tree::grow(&binner, &bins, &y, &hess, (0..y.len()).collect(), params, &mut rng);
        assert_eq!(t.n_leaves(), 2);
        for i in 0..y.len() {
            assert_eq!(t.predict_row(&x, i), y[i]);
        }
    }

    #[test]
    fn many_unique_values_are_capped() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let b = Binner::fit(&x);
        assert!(b.n_bins(0) <= MAX_BINS);
        let bins = b.transform(&x);
        assert!(bins[0].iter().all(|&v| (v as usize) < b.n_bins(0)));
    }
}
