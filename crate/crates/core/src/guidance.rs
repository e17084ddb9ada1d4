//! The guidance model: an occupancy-grid obstacle encoder, a GAT+GCN node
//! encoder, an RNN path encoder, attention fusion with a residual
//! layer-norm, and an edge decoder that scores each neighbor of a vertex.
//!
//! Every forward is a pure function of (params, rgg, grid, path, vertex).
//! Tape-level methods build the differentiable graph for training; the
//! value-level wrappers run a throwaway tape and return plain tensors. The
//! planner uses [`EnvCache`] plus the incremental path hidden state so only
//! path-dependent stages are recomputed per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::graph::{Rgg, GOAL_INDEX};
use crate::tensor::nn::{conv_layer, dense, gat_forward, gcn_forward, im2col_plan, rnn_encode, rnn_step};
use crate::tensor::tape::{Tape, Var};
use crate::tensor::{ParamSet, Tensor};
use crate::{Error, Result};

/// Guidance values for one vertex; entries are (neighbor, omega) sorted by
/// neighbor index and cover the vertex's adjacency exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRow {
    pub vertex: usize,
    pub entries: Vec<(usize, f64)>,
}

impl GuidanceRow {
    /// Neighbors ordered by guidance value descending, ties broken by
    /// ascending node index.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceMatrix {
    pub rows: Vec<GuidanceRow>,
}

/// Normalize a state to [-1, 1] per-axis and zero-pad to `pad_to` entries.
pub fn normalize_state(x: &[f64], bounds: &[[f64; 2]], pad_to: usize) -> Result<Vec<f64>> {
    if x.len() != bounds.len() {
        return Err(Error::Shape(format!(
            "state dim {} vs bounds dim {}",
            x.len(),
            bounds.len()
        )));
    }
    if x.len() > pad_to {
        return Err(Error::Shape(format!("state dim {} exceeds pad width {pad_to}", x.len())));
    }
    let mut out = vec![0.0; pad_to];
    for (o, (&v, b)) in out.iter_mut().zip(x.iter().zip(bounds)) {
        *o = 2.0 * (v - b[0]) / (b[1] - b[0]) - 1.0;
    }
    Ok(out)
}

/// Row i is [normalized state i, normalized goal state], each padded to
/// `pad_to` coordinates.
pub fn node_features(rgg: &Rgg, bounds: &[[f64; 2]], pad_to: usize) -> Result<Tensor> {
    if rgg.nodes.is_empty() {
        return Err(Error::Input("node_features on empty graph".into()));
    }
    let goal = normalize_state(&rgg.nodes[GOAL_INDEX], bounds, pad_to)?;
    let mut data = Vec::with_capacity(rgg.node_count() * 2 * pad_to);
    for node in &rgg.nodes {
        data.extend(normalize_state(node, bounds, pad_to)?);
        data.extend_from_slice(&goal);
    }
    Tensor::from_vec(rgg.node_count(), 2 * pad_to, data)
}

/// Per-graph cache of the path-independent forward stages.
#[derive(Debug, Clone)]
pub struct EnvCache {
    pub o: Tensor,
    pub k_e: Tensor,
    pub v_e: Tensor,
}

pub struct GuidanceModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl GuidanceModel {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains, all from
    /// one seeded stream so construction is reproducible.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let c = config.clone();
        let (patch1, patch2, flat) = conv_shapes(&c)?;
        let sdm = c.state_dim_max;
        let (d, d_o, h, hid) = (c.d, c.d_o, c.h, c.decoder_hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let mut weight = |ps: &mut ParamSet, name: &str, rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
            ps.insert(name, Tensor::from_vec(rows, cols, data).unwrap());
        };
        let zeros = |ps: &mut ParamSet, name: &str, cols: usize| {
            ps.insert(name, Tensor::zeros(1, cols));
        };
        let ones = |ps: &mut ParamSet, name: &str, cols: usize| {
            ps.insert(name, Tensor::vector(vec![1.0; cols]));
        };

        // small positive conv biases keep empty-grid patches off the ReLU
        // kink, where finite-difference gradient checks break down
        weight(&mut ps, "conv1/w", patch1, c.conv_channels[0]);
        ps.insert("conv1/b", Tensor::vector(vec![0.05; c.conv_channels[0]]));
        weight(&mut ps, "conv2/w", patch2, c.conv_channels[1]);
        ps.insert("conv2/b", Tensor::vector(vec![0.05; c.conv_channels[1]]));
        weight(&mut ps, "obs/w", flat, d);
        zeros(&mut ps, "obs/b", d);
        weight(&mut ps, "gat/w", 2 * sdm, d);
        weight(&mut ps, "gat/a", 2 * d, 1);
        weight(&mut ps, "gcn/w", d, d);
        weight(&mut ps, "env/w1", 2 * d, d_o);
        zeros(&mut ps, "env/b1", d_o);
        weight(&mut ps, "env/w2", d_o, d_o);
        zeros(&mut ps, "env/b2", d_o);
        ones(&mut ps, "env/ln_g", d_o);
        zeros(&mut ps, "env/ln_b", d_o);
        weight(&mut ps, "rnn/wx", sdm, h);
        weight(&mut ps, "rnn/wh", h, h);
        zeros(&mut ps, "rnn/b", h);
        weight(&mut ps, "fuse/wq_e", d_o, d_o);
        weight(&mut ps, "fuse/wk_e", d_o, d_o);
        weight(&mut ps, "fuse/wv_e", d_o, d_o);
        weight(&mut ps, "fuse/wq_p", h, d_o);
        weight(&mut ps, "fuse/wv_p", h, d_o);
        ones(&mut ps, "fuse/ln_g", d_o);
        zeros(&mut ps, "fuse/ln_b", d_o);
        weight(&mut ps, "dec/w1", 2 * d_o + sdm, hid);
        zeros(&mut ps, "dec/b1", hid);
        weight(&mut ps, "dec/w2", hid, hid);
        zeros(&mut ps, "dec/b2", hid);
        weight(&mut ps, "score/w1", hid, hid);
        zeros(&mut ps, "score/b1", hid);
        weight(&mut ps, "score/w2", hid, 1);
        zeros(&mut ps, "score/b2", 1);

        Ok(GuidanceModel { config: c, params: ps })
    }

    /// Load a checkpoint and verify it matches this config's block layout.
    pub fn load(config: &ModelConfig, path: &std::path::Path) -> Result<Self> {
        let params = ParamSet::load(path)?;
        let expected = GuidanceModel::init(config, 0)?;
        if params.len() != expected.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} blocks, config expects {}",
                params.len(),
                expected.params.len()
            )));
        }
        for (name, p) in expected.params.iter() {
            let got = params
                .get(name)
                .map_err(|_| Error::Checkpoint(format!("checkpoint missing block {name}")))?;
            if got.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "block {name} has shape {:?}, config expects {:?}",
                    got.value.shape(),
                    p.value.shape()
                )));
            }
            if !got.value.all_finite() {
                return Err(Error::Checkpoint(format!("block {name} has non-finite values")));
            }
        }
        Ok(GuidanceModel { config: config.clone(), params })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.params.save(path)
    }

    /// Obstacle vector y: two strided conv layers over the flat occupancy
    /// grid, flattened, then a linear dense layer to R^d.
    pub fn tape_obstacle_code(&self, tape: &mut Tape, grid: &[f64]) -> Result<Var> {
        let c = &self.config;
        let expected = c.m.pow(c.workspace_dim as u32);
        if grid.len() != expected {
            return Err(Error::Shape(format!(
                "grid has {} cells, config expects {expected}",
                grid.len()
            )));
        }
        let x = tape.leaf(Tensor::vector(grid.to_vec()));
        let w1 = tape.param(&self.params, "conv1/w")?;
        let b1 = tape.param(&self.params, "conv1/b")?;
        let spatial = vec![c.m; c.workspace_dim];
        let (h1, out1) =
            conv_layer(tape, x, &spatial, 1, c.conv_kernel, c.conv_stride, w1, b1)?;
        let w2 = tape.param(&self.params, "conv2/w")?;
        let b2 = tape.param(&self.params, "conv2/b")?;
        let (h2, out2) =
            conv_layer(tape, h1, &out1, c.conv_channels[0], c.conv_kernel, c.conv_stride, w2, b2)?;
        let flat_len = out2.iter().product::<usize>() * c.conv_channels[1];
        let flat = tape.reshape(h2, 1, flat_len)?;
        let ow = tape.param(&self.params, "obs/w")?;
        let ob = tape.param(&self.params, "obs/b")?;
        dense(tape, flat, ow, ob)
    }

    /// O: per-node environment embedding. Node features pass through a GAT
    /// then a GCN layer; each node embedding is concatenated with the
    /// obstacle vector and mapped through a two-layer MLP plus layer norm.
    pub fn tape_encode_environment(
        &self,
        tape: &mut Tape,
        rgg: &Rgg,
        grid: &[f64],
        bounds: &[[f64; 2]],
    ) -> Result<Var> {
        let y = self.tape_obstacle_code(tape, grid)?;
        let feats = node_features(rgg, bounds, self.config.state_dim_max)?;
        let h = tape.leaf(feats);
        let gw = tape.param(&self.params, "gat/w")?;
        let ga = tape.param(&self.params, "gat/a")?;
        let h = gat_forward(tape, h, &rgg.adjacency, gw, ga, self.config.gat_slope)?;
        let cw = tape.param(&self.params, "gcn/w")?;
        let x = gcn_forward(tape, h, &rgg.adjacency, cw)?;
        let y_rows = tape.gather_rows(y, &vec![0; rgg.node_count()])?;
        let xy = tape.concat_cols(&[x, y_rows])?;
        let w1 = tape.param(&self.params, "env/w1")?;
        let b1 = tape.param(&self.params, "env/b1")?;
        let h1 = dense(tape, xy, w1, b1)?;
        let h1 = tape.relu(h1);
        let w2 = tape.param(&self.params, "env/w2")?;
        let b2 = tape.param(&self.params, "env/b2")?;
        let h2 = dense(tape, h1, w2, b2)?;
        let g = tape.param(&self.params, "env/ln_g")?;
        let b = tape.param(&self.params, "env/ln_b")?;
        tape.layer_norm_rows(h2, g, b)
    }

    /// P: Elman RNN over the normalized path states in visit order; the
    /// empty path encodes to the zero hidden vector.
    pub fn tape_encode_path(
        &self,
        tape: &mut Tape,
        states: &[Vec<f64>],
        bounds: &[[f64; 2]],
    ) -> Result<Var> {
        let seq: Vec<Vec<f64>> = states
            .iter()
            .map(|s| normalize_state(s, bounds, self.config.state_dim_max))
            .collect::<Result<_>>()?;
        let wx = tape.param(&self.params, "rnn/wx")?;
        let wh = tape.param(&self.params, "rnn/wh")?;
        let b = tape.param(&self.params, "rnn/b")?;
        rnn_encode(tape, &seq, wx, wh, b)
    }

    /// K_e and V_e projections of O, shared across planning steps.
    fn tape_projections(&self, tape: &mut Tape, o: Var) -> Result<(Var, Var)> {
        let wk = tape.param(&self.params, "fuse/wk_e")?;
        let wv = tape.param(&self.params, "fuse/wv_e")?;
        Ok((tape.matmul(o, wk)?, tape.matmul(o, wv)?))
    }

    /// Fused embeddings for the selected node rows. Each query row attends
    /// over all node keys plus one path slot (scored by the path query
    /// against that node's own key), with values [V_e ; V_p], then a
    /// residual add of O and layer norm.
    fn tape_fuse_rows(
        &self,
        tape: &mut Tape,
        o: Var,
        k_e: Var,
        v_e: Var,
        p: Var,
        idx: &[usize],
    ) -> Result<Var> {
        let wq = tape.param(&self.params, "fuse/wq_e")?;
        let o_sel = tape.gather_rows(o, idx)?;
        let q_sel = tape.matmul(o_sel, wq)?;
        let k_t = tape.transpose(k_e);
        let env_scores = tape.matmul(q_sel, k_t)?;
        let wqp = tape.param(&self.params, "fuse/wq_p")?;
        let q_p = tape.matmul(p, wqp)?;
        let qp_t = tape.transpose(q_p);
        let path_scores_all = tape.matmul(k_e, qp_t)?;
        let path_scores = tape.gather_rows(path_scores_all, idx)?;
        let scores = tape.concat_cols(&[env_scores, path_scores])?;
        let scaled = tape.scale(scores, 1.0 / (self.config.d_o as f64).sqrt());
        let probs = tape.softmax_rows(scaled);
        let wvp = tape.param(&self.params, "fuse/wv_p")?;
        let v_p = tape.matmul(p, wvp)?;
        let values = tape.concat_rows(&[v_e, v_p])?;
        let attn = tape.matmul(probs, values)?;
        let res = tape.add(attn, o_sel)?;
        let g = tape.param(&self.params, "fuse/ln_g")?;
        let b = tape.param(&self.params, "fuse/ln_b")?;
        tape.layer_norm_rows(res, g, b)
    }

    /// Edge scores from pre-gathered fused rows: row 0 is the vertex, rows
    /// 1.. are its neighbors in `deltas` order. Returns a k x 1 column.
    fn tape_decode_rows(&self, tape: &mut Tape, fused_sel: Var, deltas: Tensor) -> Result<Var> {
        let k = deltas.rows;
        let fv = tape.gather_rows(fused_sel, &vec![0; k])?;
        let fj = tape.gather_rows(fused_sel, &(1..=k).collect::<Vec<_>>())?;
        let dl = tape.leaf(deltas);
        let feats = tape.concat_cols(&[fv, dl, fj])?;
        let w1 = tape.param(&self.params, "dec/w1")?;
        let b1 = tape.param(&self.params, "dec/b1")?;
        let h1 = dense(tape, feats, w1, b1)?;
        let h1 = tape.relu(h1);
        let w2 = tape.param(&self.params, "dec/w2")?;
        let b2 = tape.param(&self.params, "dec/b2")?;
        let h2 = dense(tape, h1, w2, b2)?;
        let h2 = tape.relu(h2);
        let s1w = tape.param(&self.params, "score/w1")?;
        let s1b = tape.param(&self.params, "score/b1")?;
        let s1 = dense(tape, h2, s1w, s1b)?;
        let s1 = tape.relu(s1);
        let s2w = tape.param(&self.params, "score/w2")?;
        let s2b = tape.param(&self.params, "score/b2")?;
        dense(tape, s1, s2w, s2b)
    }

    fn delta_features(
        &self,
        rgg: &Rgg,
        vertex: usize,
        nbrs: &[usize],
        bounds: &[[f64; 2]],
    ) -> Result<Tensor> {
        let sdm = self.config.state_dim_max;
        let xv = normalize_state(&rgg.nodes[vertex], bounds, sdm)?;
        let mut data = Vec::with_capacity(nbrs.len() * sdm);
        for &j in nbrs {
            let xj = normalize_state(&rgg.nodes[j], bounds, sdm)?;
            data.extend(xv.iter().zip(&xj).map(|(a, b)| a - b));
        }
        Tensor::from_vec(nbrs.len(), sdm, data)
    }

    /// Full differentiable forward to the neighbor scores of `vertex`,
    /// conditioned on the visited `path` (node indices). Returns the 1 x k
    /// score row plus the neighbor order, or None for an isolated vertex.
    pub fn tape_guidance_scores(
        &self,
        tape: &mut Tape,
        rgg: &Rgg,
        grid: &[f64],
        bounds: &[[f64; 2]],
        path: &[usize],
        vertex: usize,
    ) -> Result<Option<(Var, Vec<usize>)>> {
        let nbrs = rgg.neighbors(vertex)?.to_vec();
        if nbrs.is_empty() {
            return Ok(None);
        }
        let o = self.tape_encode_environment(tape, rgg, grid, bounds)?;
        let (k_e, v_e) = self.tape_projections(tape, o)?;
        let states: Vec<Vec<f64>> = path.iter().map(|&i| rgg.nodes[i].clone()).collect();
        let p = self.tape_encode_path(tape, &states, bounds)?;
        let mut idx = Vec::with_capacity(1 + nbrs.len());
        idx.push(vertex);
        idx.extend_from_slice(&nbrs);
        let fused = self.tape_fuse_rows(tape, o, k_e, v_e, p, &idx)?;
        let deltas = self.delta_features(rgg, vertex, &nbrs, bounds)?;
        let col = self.tape_decode_rows(tape, fused, deltas)?;
        let row = tape.transpose(col);
        Ok(Some((row, nbrs)))
    }

    // ---- value-level wrappers ----

    pub fn obstacle_code(&self, grid: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = self.tape_obstacle_code(&mut tape, grid)?;
        Ok(tape.value(v).clone())
    }

    pub fn encode_environment(
        &self,
        rgg: &Rgg,
        grid: &[f64],
        bounds: &[[f64; 2]],
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = self.tape_encode_environment(&mut tape, rgg, grid, bounds)?;
        Ok(tape.value(v).clone())
    }

    pub fn encode_path(&self, states: &[Vec<f64>], bounds: &[[f64; 2]]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = self.tape_encode_path(&mut tape, states, bounds)?;
        Ok(tape.value(v).clone())
    }

    /// Fused embeddings for every node from precomputed O and P.
    pub fn fuse(&self, o: &Tensor, p: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let ov = tape.leaf(o.clone());
        let pv = tape.leaf(p.clone());
        let (k_e, v_e) = self.tape_projections(&mut tape, ov)?;
        let idx: Vec<usize> = (0..o.rows).collect();
        let fused = self.tape_fuse_rows(&mut tape, ov, k_e, v_e, pv, &idx)?;
        Ok(tape.value(fused).clone())
    }

    /// Score the neighbors of `vertex` from a full fused embedding matrix.
    pub fn decode(
        &self,
        fused: &Tensor,
        rgg: &Rgg,
        vertex: usize,
        bounds: &[[f64; 2]],
    ) -> Result<GuidanceRow> {
        let nbrs = rgg.neighbors(vertex)?.to_vec();
        if nbrs.is_empty() {
            return Ok(GuidanceRow { vertex, entries: Vec::new() });
        }
        let mut data = fused.row(vertex).to_vec();
        for &j in &nbrs {
            data.extend_from_slice(fused.row(j));
        }
        let mut tape = Tape::new();
        let sel = tape.leaf(Tensor::from_vec(1 + nbrs.len(), fused.cols, data)?);
        let deltas = self.delta_features(rgg, vertex, &nbrs, bounds)?;
        let col = self.tape_decode_rows(&mut tape, sel, deltas)?;
        let entries = nbrs.iter().zip(&tape.value(col).data).map(|(&j, &w)| (j, w)).collect();
        Ok(GuidanceRow { vertex, entries })
    }

    pub fn guidance_row(
        &self,
        rgg: &Rgg,
        grid: &[f64],
        bounds: &[[f64; 2]],
        path: &[usize],
        vertex: usize,
    ) -> Result<GuidanceRow> {
        let mut tape = Tape::new();
        match self.tape_guidance_scores(&mut tape, rgg, grid, bounds, path, vertex)? {
            None => Ok(GuidanceRow { vertex, entries: Vec::new() }),
            Some((row, nbrs)) => {
                let entries =
                    nbrs.iter().zip(&tape.value(row).data).map(|(&j, &w)| (j, w)).collect();
                Ok(GuidanceRow { vertex, entries })
            }
        }
    }

    /// One fuse pass shared across all vertices.
    pub fn guidance_matrix(
        &self,
        rgg: &Rgg,
        grid: &[f64],
        bounds: &[[f64; 2]],
        path: &[usize],
    ) -> Result<GuidanceMatrix> {
        let mut tape = Tape::new();
        let o = self.tape_encode_environment(&mut tape, rgg, grid, bounds)?;
        let (k_e, v_e) = self.tape_projections(&mut tape, o)?;
        let states: Vec<Vec<f64>> = path.iter().map(|&i| rgg.nodes[i].clone()).collect();
        let p = self.tape_encode_path(&mut tape, &states, bounds)?;
        let idx: Vec<usize> = (0..rgg.node_count()).collect();
        let fused_var = self.tape_fuse_rows(&mut tape, o, k_e, v_e, p, &idx)?;
        let fused = tape.value(fused_var).clone();
        let mut rows = Vec::with_capacity(rgg.node_count());
        for vertex in 0..rgg.node_count() {
            rows.push(self.decode(&fused, rgg, vertex, bounds)?);
        }
        Ok(GuidanceMatrix { rows })
    }

    // ---- planner-facing cached forward ----

    pub fn env_cache(&self, rgg: &Rgg, grid: &[f64], bounds: &[[f64; 2]]) -> Result<EnvCache> {
        let mut tape = Tape::new();
        let o = self.tape_encode_environment(&mut tape, rgg, grid, bounds)?;
        let (k_e, v_e) = self.tape_projections(&mut tape, o)?;
        Ok(EnvCache {
            o: tape.value(o).clone(),
            k_e: tape.value(k_e).clone(),
            v_e: tape.value(v_e).clone(),
        })
    }

    pub fn zero_hidden(&self) -> Tensor {
        Tensor::zeros(1, self.config.h)
    }

    /// One RNN step appending `state` to the encoded path.
    pub fn push_path_state(
        &self,
        hidden: &Tensor,
        state: &[f64],
        bounds: &[[f64; 2]],
    ) -> Result<Tensor> {
        let x = normalize_state(state, bounds, self.config.state_dim_max)?;
        let mut tape = Tape::new();
        let h = tape.leaf(hidden.clone());
        let xv = tape.leaf(Tensor::vector(x));
        let wx = tape.param(&self.params, "rnn/wx")?;
        let wh = tape.param(&self.params, "rnn/wh")?;
        let b = tape.param(&self.params, "rnn/b")?;
        let out = rnn_step(&mut tape, h, xv, wx, wh, b)?;
        Ok(tape.value(out).clone())
    }

    /// Bit-identical to [`GuidanceModel::guidance_row`] when `hidden` was
    /// built by folding [`GuidanceModel::push_path_state`] over the path.
    pub fn guidance_row_cached(
        &self,
        cache: &EnvCache,
        hidden: &Tensor,
        rgg: &Rgg,
        vertex: usize,
        bounds: &[[f64; 2]],
    ) -> Result<GuidanceRow> {
        let nbrs = rgg.neighbors(vertex)?.to_vec();
        if nbrs.is_empty() {
            return Ok(GuidanceRow { vertex, entries: Vec::new() });
        }
        let mut tape = Tape::new();
        let o = tape.leaf(cache.o.clone());
        let k_e = tape.leaf(cache.k_e.clone());
        let v_e = tape.leaf(cache.v_e.clone());
        let p = tape.leaf(hidden.clone());
        let mut idx = Vec::with_capacity(1 + nbrs.len());
        idx.push(vertex);
        idx.extend_from_slice(&nbrs);
        let fused = self.tape_fuse_rows(&mut tape, o, k_e, v_e, p, &idx)?;
        let deltas = self.delta_features(rgg, vertex, &nbrs, bounds)?;
        let col = self.tape_decode_rows(&mut tape, fused, deltas)?;
        let entries = nbrs.iter().zip(&tape.value(col).data).map(|(&j, &w)| (j, w)).collect();
        Ok(GuidanceRow { vertex, entries })
    }
}

fn conv_shapes(c: &ModelConfig) -> Result<(usize, usize, usize)> {
    let spatial = vec![c.m; c.workspace_dim];
    let (_, out1, patch1) = im2col_plan(&spatial, 1, c.conv_kernel, c.conv_stride)?;
    let (_, out2, patch2) = im2col_plan(&out1, c.conv_channels[0], c.conv_kernel, c.conv_stride)?;
    let flat = out2.iter().product::<usize>() * c.conv_channels[1];
    Ok((patch1, patch2, flat))
}
