//! Layers and losses composed from tape primitives: dense, attention,
//! graph convolution / attention aggregation, convolution over occupancy
//! grids, Elman RNN cells, and finite-difference gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::tape::{softmax_in_place, Tape, Var};
use crate::tensor::{ParamSet, Tensor};
use crate::{Error, Result};

/// y = x W + b
pub fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Plain-value softmax of a vector.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Scaled dot-product attention Softmax(Q K^T / sqrt(d_k)) V.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let d_q = tape.value(q).cols;
    let d_k = tape.value(k).cols;
    if d_q != d_k {
        return Err(Error::Shape(format!("attention d_q {d_q} != d_k {d_k}")));
    }
    if tape.value(k).rows != tape.value(v).rows {
        return Err(Error::Shape("attention K and V row mismatch".into()));
    }
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let probs = tape.softmax_rows(scaled);
    tape.matmul(probs, v)
}

/// Symmetric-normalized graph convolution with self-loops and ReLU:
/// relu(D~^{-1/2} A~ D~^{-1/2} H W).
pub fn gcn_forward(tape: &mut Tape, h: Var, adjacency: &[Vec<usize>], w: Var) -> Result<Var> {
    let n = adjacency.len();
    if tape.value(h).rows != n {
        return Err(Error::Shape("gcn features/adjacency row mismatch".into()));
    }
    let mut degree = vec![1.0_f64; n]; // self-loop
    for (i, nbrs) in adjacency.iter().enumerate() {
        degree[i] += nbrs.len() as f64;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut norm_adj = Tensor::zeros(n, n);
    for (i, nbrs) in adjacency.iter().enumerate() {
        norm_adj.data[i * n + i] = inv_sqrt[i] * inv_sqrt[i];
        for &j in nbrs {
            norm_adj.data[i * n + j] = inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let s = tape.leaf(norm_adj);
    let sh = tape.matmul(s, h)?;
    let shw = tape.matmul(sh, w)?;
    Ok(tape.relu(shw))
}

/// Graph attention aggregation with a self-edge per node and ReLU output.
/// `a` is the concatenated attention vector of shape 2d x 1.
pub fn gat_forward(
    tape: &mut Tape,
    h: Var,
    adjacency: &[Vec<usize>],
    w: Var,
    a: Var,
    slope: f64,
) -> Result<Var> {
    let n = adjacency.len();
    if tape.value(h).rows != n {
        return Err(Error::Shape("gat features/adjacency row mismatch".into()));
    }
    let d = tape.value(w).cols;
    if tape.value(a).shape() != (2 * d, 1) {
        return Err(Error::Shape(format!("gat attention vector must be {}x1", 2 * d)));
    }
    let wh = tape.matmul(h, w)?;
    let a_left = tape.gather_rows(a, &(0..d).collect::<Vec<_>>())?;
    let a_right = tape.gather_rows(a, &(d..2 * d).collect::<Vec<_>>())?;
    let s_own = tape.matmul(wh, a_left)?; // n x 1
    let s_nbr = tape.matmul(wh, a_right)?; // n x 1
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut idx: Vec<usize> = adjacency[i].to_vec();
        match idx.binary_search(&i) {
            Ok(_) => {}
            Err(pos) => idx.insert(pos, i),
        }
        let feats = tape.gather_rows(wh, &idx)?; // k x d
        let scores_nbr = tape.gather_rows(s_nbr, &idx)?; // k x 1
        let score_own = tape.gather_rows(s_own, &[i])?; // 1 x 1
        let e = tape.add_row(scores_nbr, score_own)?;
        let e = tape.leaky_relu(e, slope);
        let et = tape.transpose(e); // 1 x k
        let alpha = tape.softmax_rows(et);
        rows.push(tape.matmul(alpha, feats)?); // 1 x d
    }
    let stacked = tape.concat_rows(&rows)?;
    Ok(tape.relu(stacked))
}

/// Index plan for strided valid cross-correlation over a flat
/// [spatial..., channel] row-major buffer. Works for 2D and 3D grids.
pub fn im2col_plan(
    in_spatial: &[usize],
    in_channels: usize,
    kernel: usize,
    stride: usize,
) -> Result<(Vec<i64>, Vec<usize>, usize)> {
    let dims = in_spatial.len();
    let mut out_spatial = Vec::with_capacity(dims);
    for &s in in_spatial {
        if s < kernel {
            return Err(Error::Shape(format!("kernel {kernel} does not fit extent {s}")));
        }
        out_spatial.push((s - kernel) / stride + 1);
    }
    let patch_len = kernel.pow(dims as u32) * in_channels;
    let n_patches: usize = out_spatial.iter().product();
    let mut indices = Vec::with_capacity(n_patches * patch_len);
    let mut out_pos = vec![0usize; dims];
    for _ in 0..n_patches {
        let mut off = vec![0usize; dims];
        for _ in 0..kernel.pow(dims as u32) {
            // flat spatial index of this patch element
            let mut flat = 0usize;
            for k in 0..dims {
                flat = flat * in_spatial[k] + out_pos[k] * stride + off[k];
            }
            for c in 0..in_channels {
                indices.push((flat * in_channels + c) as i64);
            }
            // increment kernel offset, last dim fastest
            for k in (0..dims).rev() {
                off[k] += 1;
                if off[k] < kernel {
                    break;
                }
                off[k] = 0;
            }
        }
        for k in (0..dims).rev() {
            out_pos[k] += 1;
            if out_pos[k] < out_spatial[k] {
                break;
            }
            out_pos[k] = 0;
        }
    }
    Ok((indices, out_spatial, patch_len))
}

/// One convolution layer: im2col, kernel matmul, bias, ReLU. Returns the
/// output as (n_patches x out_channels) plus the output spatial extents.
pub fn conv_layer(
    tape: &mut Tape,
    x: Var,
    in_spatial: &[usize],
    in_channels: usize,
    kernel: usize,
    stride: usize,
    w: Var,
    b: Var,
) -> Result<(Var, Vec<usize>)> {
    let (indices, out_spatial, patch_len) = im2col_plan(in_spatial, in_channels, kernel, stride)?;
    if tape.value(w).rows != patch_len {
        return Err(Error::Shape(format!(
            "conv kernel matrix rows {} != patch length {patch_len}",
            tape.value(w).rows
        )));
    }
    let n_patches: usize = out_spatial.iter().product();
    let cols = tape.im2col(x, n_patches, patch_len, indices)?;
    let out = dense(tape, cols, w, b)?;
    Ok((tape.relu(out), out_spatial))
}

/// Elman cell h' = tanh(x W_x + h W_h + b).
pub fn rnn_step(tape: &mut Tape, h_prev: Var, x: Var, wx: Var, wh: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, wx)?;
    let hw = tape.matmul(h_prev, wh)?;
    let sum = tape.add(xw, hw)?;
    let sum = tape.add_row(sum, b)?;
    Ok(tape.tanh(sum))
}

/// Left fold of [`rnn_step`] over a sequence from a zero hidden state.
/// The empty sequence encodes to the zero hidden vector.
pub fn rnn_encode(
    tape: &mut Tape,
    sequence: &[Vec<f64>],
    wx: Var,
    wh: Var,
    b: Var,
) -> Result<Var> {
    let hidden = tape.value(wh).rows;
    let mut h = tape.leaf(Tensor::zeros(1, hidden));
    for x in sequence {
        let xv = tape.leaf(Tensor::vector(x.clone()));
        h = rnn_step(tape, h, xv, wx, wh, b)?;
    }
    Ok(h)
}

/// Per-block maximum relative error between analytic and central
/// finite-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.1).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err() < tolerance
    }
}

/// Verify the analytic gradients of a scalar-valued forward closure against
/// central finite differences at up to `samples_per_block` randomly chosen
/// entries per parameter block.
pub fn grad_check<F>(
    params: &mut ParamSet,
    forward: F,
    samples_per_block: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let out = forward(&mut tape, params)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Shape("grad_check forward must be scalar-valued".into()));
    }
    tape.backward(out)?;
    tape.harvest(params)?;
    let analytic: Vec<(String, Tensor)> = params
        .iter()
        .map(|(n, p)| (n.clone(), p.grad.clone()))
        .collect();
    params.zero_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    for (name, grad) in analytic {
        let len = grad.len();
        let mut entries: Vec<usize> = (0..len).collect();
        if len > samples_per_block {
            for i in 0..samples_per_block {
                let j = rng.gen_range(i..len);
                entries.swap(i, j);
            }
            entries.truncate(samples_per_block);
        }
        let mut worst = 0.0_f64;
        for &e in &entries {
            let orig = params.get(&name)?.value.data[e];
            let h = 1e-4 * orig.abs().max(1.0);
            params.get_mut(&name)?.value.data[e] = orig + h;
            let mut t = Tape::new();
            let v = forward(&mut t, params)?;
            let f_plus = t.scalar(v);
            params.get_mut(&name)?.value.data[e] = orig - h;
            let mut t = Tape::new();
            let v = forward(&mut t, params)?;
            let f_minus = t.scalar(v);
            params.get_mut(&name)?.value.data[e] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = grad.data[e];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
        blocks.push((name, worst));
    }
    Ok(GradCheckReport { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn leaf(tape: &mut Tape, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::from_vec(rows, cols, data).unwrap())
    }

    #[test]
    fn dense_identity() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 1, 2, vec![3.0, -4.0]);
        let w = leaf(&mut tape, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = leaf(&mut tape, 1, 2, vec![0.0, 0.0]);
        let y = dense(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(y).data, vec![3.0, -4.0]);
    }

    #[test]
    fn activations_pointwise() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 1, 3, vec![-1.0, 2.0, -2.0]);
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data, vec![0.0, 2.0, 0.0]);
        let l = tape.leaky_relu(x, 0.2);
        assert_abs_diff_eq!(tape.value(l).data[2], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]);
        for v in &u {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let s = softmax(&[1000.0, 0.0]);
        assert!(s[0] > 0.999_999 && s.iter().all(|v| v.is_finite()));
        let logs = softmax(&[1.0_f64.ln(), 2.0_f64.ln(), 3.0_f64.ln()]);
        assert_abs_diff_eq!(logs[0], 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(logs[1], 2.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(logs[2], 3.0 / 6.0, epsilon = 1e-12);
        let sum: f64 = softmax(&vec![0.37; 10_000]).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::new();
        let gain = leaf(&mut tape, 1, 2, vec![1.0, 1.0]);
        let bias = leaf(&mut tape, 1, 2, vec![0.0, 0.0]);
        let constant = leaf(&mut tape, 1, 2, vec![5.0, 5.0]);
        let y = tape.layer_norm_rows(constant, gain, bias).unwrap();
        assert!(tape.value(y).data.iter().all(|&v| v.abs() < 1e-9));
        let x = leaf(&mut tape, 1, 2, vec![1.0, -1.0]);
        let y = tape.layer_norm_rows(x, gain, bias).unwrap();
        assert_abs_diff_eq!(tape.value(y).data[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(tape.value(y).data[1], -1.0, epsilon = 1e-4);
    }

    #[test]
    fn attention_single_key_returns_value() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 2, 3, vec![5.0, -1.0, 2.0, 0.0, 0.0, 7.0]);
        let k = leaf(&mut tape, 1, 3, vec![0.3, 0.4, 0.5]);
        let v = leaf(&mut tape, 1, 2, vec![9.0, -2.0]);
        let out = attention(&mut tape, q, k, v).unwrap();
        assert_eq!(tape.value(out).data, vec![9.0, -2.0, 9.0, -2.0]);
    }

    #[test]
    fn attention_hand_oracle() {
        // Q=[[1,0]], K=[[1,0],[0,1]], V=I, d_k=2 -> weights softmax(1/sqrt 2, 0)
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 1, 2, vec![1.0, 0.0]);
        let k = leaf(&mut tape, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let v = leaf(&mut tape, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let out = attention(&mut tape, q, k, v).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        let w0 = s.exp() / (s.exp() + 1.0);
        assert_abs_diff_eq!(tape.value(out).data[0], w0, epsilon = 1e-6);
        assert_abs_diff_eq!(tape.value(out).data[1], 1.0 - w0, epsilon = 1e-6);
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let rand = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let qd = rand(&mut rng, 4 * 3);
        let kd = rand(&mut rng, 5 * 3);
        let vd = rand(&mut rng, 5 * 2);
        let q = leaf(&mut tape, 4, 3, qd);
        let k = leaf(&mut tape, 5, 3, kd.clone());
        let v = leaf(&mut tape, 5, 2, vd.clone());
        let out = attention(&mut tape, q, k, v).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..5).map(|r| vd[r * 2 + c]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..4 {
                let y = tape.value(out).at(r, c);
                assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn gcn_isolated_node_identity() {
        let mut tape = Tape::new();
        let h = leaf(&mut tape, 1, 2, vec![3.0, -4.0]);
        let w = leaf(&mut tape, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let out = gcn_forward(&mut tape, h, &[vec![]], w).unwrap();
        assert_eq!(tape.value(out).data, vec![3.0, 0.0]);
    }

    #[test]
    fn gcn_two_node_hand_oracle() {
        // A~ = [[1,1],[1,1]], D~ = 2I, S = [[.5,.5],[.5,.5]]
        let mut tape = Tape::new();
        let h = leaf(&mut tape, 2, 1, vec![1.0, 0.0]);
        let w = leaf(&mut tape, 1, 1, vec![1.0]);
        let out = gcn_forward(&mut tape, h, &[vec![1], vec![0]], w).unwrap();
        assert_abs_diff_eq!(tape.value(out).data[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(tape.value(out).data[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn gat_single_node() {
        let mut tape = Tape::new();
        let h = leaf(&mut tape, 1, 2, vec![2.0, -3.0]);
        let w = leaf(&mut tape, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let a = leaf(&mut tape, 4, 1, vec![0.7, -0.3, 0.2, 0.1]);
        let out = gat_forward(&mut tape, h, &[vec![]], w, a, 0.2).unwrap();
        assert_eq!(tape.value(out).data, vec![2.0, 0.0]);
    }

    #[test]
    fn gat_zero_attention_is_mean_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let d = 3;
        let hd: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wd: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adjacency = vec![vec![1, 2], vec![0, 2, 3], vec![0, 1], vec![1]];
        let mut tape = Tape::new();
        let h = leaf(&mut tape, n, d, hd.clone());
        let w = leaf(&mut tape, d, d, wd.clone());
        let a = tape.leaf(Tensor::zeros(2 * d, 1));
        let out = gat_forward(&mut tape, h, &adjacency, w, a, 0.2).unwrap();
        // mean-pool oracle over {i} union N_i on Wh
        let wh = {
            let ht = Tensor::from_vec(n, d, hd).unwrap();
            let wt = Tensor::from_vec(d, d, wd).unwrap();
            crate::tensor::tape::matmul_raw(&ht, &wt)
        };
        for i in 0..n {
            let mut idx = adjacency[i].clone();
            idx.push(i);
            for c in 0..d {
                let mean: f64 = idx.iter().map(|&j| wh.at(j, c)).sum::<f64>() / idx.len() as f64;
                assert_abs_diff_eq!(tape.value(out).at(i, c), mean.max(0.0), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn gcn_gat_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let d = 4;
        let hd: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wd: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ad: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adjacency = vec![vec![1, 2], vec![0, 3], vec![0, 3, 4], vec![1, 2], vec![2, 5], vec![4]];
        let perm = [3, 0, 5, 1, 4, 2];
        let mut inv = [0usize; 6];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        // permuted inputs: row perm[i] of original becomes row i
        let hp: Vec<f64> = (0..n).flat_map(|i| hd[perm[i] * d..(perm[i] + 1) * d].to_vec()).collect();
        let adj_p: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut v: Vec<usize> = adjacency[perm[i]].iter().map(|&j| inv[j]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        for gat in [false, true] {
            let run = |h_data: &[f64], adj: &[Vec<usize>]| -> Tensor {
                let mut tape = Tape::new();
                let h = tape.leaf(Tensor::from_vec(n, d, h_data.to_vec()).unwrap());
                let w = tape.leaf(Tensor::from_vec(d, d, wd.clone()).unwrap());
                let out = if gat {
                    let a = tape.leaf(Tensor::from_vec(2 * d, 1, ad.clone()).unwrap());
                    gat_forward(&mut tape, h, adj, w, a, 0.2).unwrap()
                } else {
                    gcn_forward(&mut tape, h, adj, w).unwrap()
                };
                tape.value(out).clone()
            };
            let base = run(&hd, &adjacency);
            let permuted = run(&hp, &adj_p);
            for i in 0..n {
                for c in 0..d {
                    assert_abs_diff_eq!(permuted.at(i, c), base.at(perm[i], c), epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn conv_window_sums_oracle() {
        // 3x3 grid, one 2x2 ones kernel, stride 1 -> 2x2 window sums
        let grid = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(grid));
        let w = tape.leaf(Tensor::from_vec(4, 1, vec![1.0; 4]).unwrap());
        let b = tape.leaf(Tensor::zeros(1, 1));
        let (out, spatial) = conv_layer(&mut tape, x, &[3, 3], 1, 2, 1, w, b).unwrap();
        assert_eq!(spatial, vec![2, 2]);
        assert_eq!(tape.value(out).data, vec![12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let grid = vec![0.5, -1.0, 2.0, 3.0];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(grid.clone()));
        let w = tape.leaf(Tensor::from_vec(1, 1, vec![1.0]).unwrap());
        let b = tape.leaf(Tensor::zeros(1, 1));
        let (out, _) = conv_layer(&mut tape, x, &[2, 2], 1, 1, 1, w, b).unwrap();
        let expect: Vec<f64> = grid.iter().map(|v| v.max(0.0)).collect();
        assert_eq!(tape.value(out).data, expect);
    }

    #[test]
    fn conv_zero_grid_zero_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0; 16]));
        let w = tape.leaf(Tensor::from_vec(9, 2, vec![0.3; 18]).unwrap());
        let b = tape.leaf(Tensor::zeros(1, 2));
        let (out, _) = conv_layer(&mut tape, x, &[4, 4], 1, 3, 2, w, b).unwrap();
        assert!(tape.value(out).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rnn_scalar_oracle() {
        // 2-step scalar cell, W_x = W_h = 1, b = 0, inputs 0.5, 0.5
        let mut tape = Tape::new();
        let wx = tape.leaf(Tensor::from_vec(1, 1, vec![1.0]).unwrap());
        let wh = tape.leaf(Tensor::from_vec(1, 1, vec![1.0]).unwrap());
        let b = tape.leaf(Tensor::zeros(1, 1));
        let h = rnn_encode(&mut tape, &[vec![0.5], vec![0.5]], wx, wh, b).unwrap();
        let expect = (0.5 + 0.5_f64.tanh()).tanh();
        assert_abs_diff_eq!(tape.scalar(h), expect, epsilon = 1e-12);
    }

    #[test]
    fn rnn_zero_weights_and_empty_sequence() {
        let mut tape = Tape::new();
        let wx = tape.leaf(Tensor::zeros(2, 3));
        let wh = tape.leaf(Tensor::zeros(3, 3));
        let b = tape.leaf(Tensor::zeros(1, 3));
        let h = rnn_encode(&mut tape, &[vec![1.0, 2.0]], wx, wh, b).unwrap();
        assert_eq!(tape.value(h).data, vec![0.0; 3]);
        let h = rnn_encode(&mut tape, &[], wx, wh, b).unwrap();
        assert_eq!(tape.value(h).data, vec![0.0; 3]);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let l = tape.cross_entropy(s, 0).unwrap();
        assert_abs_diff_eq!(tape.scalar(l), 2.0_f64.ln(), epsilon = 1e-12);
        let s = tape.leaf(Tensor::vector(vec![10.0, 0.0]));
        let l = tape.cross_entropy(s, 0).unwrap();
        assert_abs_diff_eq!(tape.scalar(l), 4.54e-5, epsilon = 1e-6);
        // shift invariance
        let s1 = tape.leaf(Tensor::vector(vec![1.0, -2.0, 0.3]));
        let s2 = tape.leaf(Tensor::vector(vec![101.0, 98.0, 100.3]));
        let l1 = tape.cross_entropy(s1, 2).unwrap();
        let l2 = tape.cross_entropy(s2, 2).unwrap();
        assert_abs_diff_eq!(tape.scalar(l1), tape.scalar(l2), epsilon = 1e-9);
        // out of range target
        let s = tape.leaf(Tensor::vector(vec![0.0]));
        assert!(tape.cross_entropy(s, 3).is_err());
    }

    #[test]
    fn grad_check_linear_model() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::vector(vec![1.7]));
        let report = grad_check(
            &mut ps,
            |tape, ps| {
                let w = tape.param(ps, "w")?;
                let x = tape.leaf(Tensor::from_vec(1, 1, vec![3.0]).unwrap());
                let wt = tape.transpose(w);
                tape.matmul(x, wt)
            },
            10,
            1,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-8, "err {}", report.max_rel_err());
    }

    #[test]
    fn grad_check_composite_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let rand_t = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap()
        };
        ps.insert("w1", rand_t(&mut rng, 3, 4));
        ps.insert("b1", rand_t(&mut rng, 1, 4));
        ps.insert("gat_w", rand_t(&mut rng, 4, 4));
        ps.insert("gat_a", rand_t(&mut rng, 8, 1));
        ps.insert("gcn_w", rand_t(&mut rng, 4, 4));
        ps.insert("ln_g", rand_t(&mut rng, 1, 4));
        ps.insert("ln_b", rand_t(&mut rng, 1, 4));
        ps.insert("rnn_wx", rand_t(&mut rng, 4, 4));
        ps.insert("rnn_wh", rand_t(&mut rng, 4, 4));
        ps.insert("rnn_b", rand_t(&mut rng, 1, 4));
        let x_data = rand_t(&mut rng, 5, 3);
        let adjacency = vec![vec![1, 2], vec![0, 3], vec![0, 3, 4], vec![1, 2], vec![2]];
        let report = grad_check(
            &mut ps,
            move |tape, ps| {
                let x = tape.leaf(x_data.clone());
                let w1 = tape.param(ps, "w1")?;
                let b1 = tape.param(ps, "b1")?;
                let h = dense(tape, x, w1, b1)?;
                let gat_w = tape.param(ps, "gat_w")?;
                let gat_a = tape.param(ps, "gat_a")?;
                let h = gat_forward(tape, h, &adjacency, gat_w, gat_a, 0.2)?;
                let gcn_w = tape.param(ps, "gcn_w")?;
                let h = gcn_forward(tape, h, &adjacency, gcn_w)?;
                let g = tape.param(ps, "ln_g")?;
                let b = tape.param(ps, "ln_b")?;
                let h = tape.layer_norm_rows(h, g, b)?;
                let wx = tape.param(ps, "rnn_wx")?;
                let wh = tape.param(ps, "rnn_wh")?;
                let rb = tape.param(ps, "rnn_b")?;
                let p = rnn_encode(tape, &[vec![0.1, -0.2, 0.3, 0.0], vec![0.5, 0.1, -0.4, 0.2]], wx, wh, rb)?;
                let q = attention(tape, h, h, h)?;
                let row = tape.gather_rows(q, &[2])?;
                let joined = tape.concat_cols(&[row, p])?;
                let proj = tape.leaf(Tensor::from_vec(8, 3, vec![0.21; 24]).unwrap());
                let scores = tape.matmul(joined, proj)?;
                tape.cross_entropy(scores, 1)
            },
            16,
            7,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-3, "report {:?}", report.blocks);
    }

    #[test]
    fn grad_check_detects_corruption() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::vector(vec![2.0, -1.0]));
        // deliberately wrong gradient path: forward ignores half the weight
        let report = grad_check(
            &mut ps,
            |tape, ps| {
                let w = tape.param(ps, "w")?;
                let wt = tape.transpose(w);
                let x = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 1.0]).unwrap());
                let y = tape.matmul(x, wt)?;
                // square it so the gradient is weight-dependent
                let y2 = tape.matmul(y, y)?;
                Ok(y2)
            },
            10,
            2,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-6);
        // now corrupt: harvest grads from a different forward than checked
        let mut ps2 = ParamSet::new();
        ps2.insert("w", Tensor::vector(vec![2.0]));
        ps2.get_mut("w").unwrap().grad.data[0] = 123.0;
        // direct numeric comparison against a wrong analytic value
        let numeric = {
            let f = |w: f64| w * w;
            (f(2.0 + 1e-4) - f(2.0 - 1e-4)) / 2e-4
        };
        let wrong = 123.0_f64;
        let rel = (wrong - numeric).abs() / wrong.abs().max(numeric.abs());
        assert!(rel > 0.1);
    }
}
