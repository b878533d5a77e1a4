//! The policy network core: a ReLU trunk with either dense early TP
//! conditioning or a late recurrent bottleneck, plus exact reverse-mode
//! gradients for the L1 imitation loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::world::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// TPs enter only through the hidden-state init of a narrow recurrent
    /// waypoint decoder; the speed head never sees them.
    LateBottleneck,
    /// TPs are part of the trunk input alongside the scene features.
    EarlyDense,
}

impl std::str::FromStr for Conditioning {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "late_bottleneck" => Ok(Conditioning::LateBottleneck),
            "early_dense" => Ok(Conditioning::EarlyDense),
            other => Err(format!(
                "unknown conditioning `{other}` (late_bottleneck|early_dense)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
            .collect();
        Linear {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        y.clear();
        y.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(acc);
        }
    }

    /// Accumulates dL/dw, dL/db, and (optionally) dL/dx for upstream grads.
    fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        for o in 0..self.out_dim {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let row = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
            for (wi, xi) in row.iter_mut().zip(x) {
                *wi += g * xi;
            }
        }
        if let Some(dx) = dx {
            for o in 0..self.out_dim {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += g * wi;
                }
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The differentiable policy graph. Dimensions are free so tests can build
/// tiny instances; production sizes come from `PolicyConfig`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyNet {
    pub conditioning: Conditioning,
    /// Trunk input width (includes the TP scalars under early conditioning).
    pub input_dim: usize,
    pub tp_dim: usize,
    pub n_waypoints: usize,
    pub trunk: Vec<Linear>,
    /// Early conditioning: feature -> 2·n_waypoints.
    pub wp_head: Option<Linear>,
    /// Late conditioning: tp -> bottleneck, feature -> bottleneck,
    /// bottleneck -> bottleneck, bottleneck -> 2.
    pub tp_embed: Option<Linear>,
    pub rnn_xh: Option<Linear>,
    pub rnn_hh: Option<Linear>,
    pub wp_out: Option<Linear>,
    pub speed_head: Linear,
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("non-finite activation in `{0}`")]
    NonFinite(&'static str),
    #[error("input length {got} does not match trunk input {want}")]
    InputShape { got: usize, want: usize },
    #[error("tp length {got} does not match tp_dim {want}")]
    TpShape { got: usize, want: usize },
}

/// Everything the backward pass needs from one forward evaluation.
pub struct FwdCache {
    pub input: Vec<f64>,
    pub tp: Vec<f64>,
    /// Pre-activation of each trunk layer.
    pub trunk_pre: Vec<Vec<f64>>,
    /// Post-ReLU of each trunk layer; last entry is the feature vector.
    pub trunk_post: Vec<Vec<f64>>,
    /// Hidden states h_0..h_T (late conditioning).
    pub h: Vec<Vec<f64>>,
    pub v_raw: f64,
    pub waypoints: Vec<Vec2>,
    pub target_speed: f64,
}

impl PolicyNet {
    /// Builds a net with seeded initialization.
    pub fn new(
        conditioning: Conditioning,
        scene_dim: usize,
        tp_dim: usize,
        trunk_widths: &[usize],
        bottleneck_width: usize,
        n_waypoints: usize,
        seed: u64,
    ) -> PolicyNet {
        let mut rng = stream(seed, "policy-init");
        let input_dim = match conditioning {
            Conditioning::EarlyDense => scene_dim + tp_dim,
            Conditioning::LateBottleneck => scene_dim,
        };
        let mut trunk = Vec::new();
        let mut prev = input_dim;
        for &w in trunk_widths {
            trunk.push(Linear::new(prev, w, &mut rng));
            prev = w;
        }
        let feat = prev;
        let (wp_head, tp_embed, rnn_xh, rnn_hh, wp_out) = match conditioning {
            Conditioning::EarlyDense => (
                Some(Linear::new(feat, 2 * n_waypoints, &mut rng)),
                None,
                None,
                None,
                None,
            ),
            Conditioning::LateBottleneck => (
                None,
                Some(Linear::new(tp_dim, bottleneck_width, &mut rng)),
                Some(Linear::new(feat, bottleneck_width, &mut rng)),
                Some(Linear::new(bottleneck_width, bottleneck_width, &mut rng)),
                Some(Linear::new(bottleneck_width, 2, &mut rng)),
            ),
        };
        PolicyNet {
            conditioning,
            input_dim,
            tp_dim,
            n_waypoints,
            trunk,
            wp_head,
            tp_embed,
            rnn_xh,
            rnn_hh,
            wp_out,
            speed_head: Linear::new(feat, 1, &mut rng),
        }
    }

    /// All parameter tensors in checkpoint order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.trunk.len() {
            names.push(format!("trunk.{i}.w"));
            names.push(format!("trunk.{i}.b"));
        }
        match self.conditioning {
            Conditioning::EarlyDense => {
                names.push("wp_head.w".into());
                names.push("wp_head.b".into());
            }
            Conditioning::LateBottleneck => {
                for n in [
                    "tp_embed.w",
                    "tp_embed.b",
                    "rnn_xh.w",
                    "rnn_xh.b",
                    "rnn_hh.w",
                    "rnn_hh.b",
                    "wp_out.w",
                    "wp_out.b",
                ] {
                    names.push(n.into());
                }
            }
        }
        names.push("speed_head.w".into());
        names.push("speed_head.b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.trunk {
            out.push(&l.w);
            out.push(&l.b);
        }
        match self.conditioning {
            Conditioning::EarlyDense => {
                let l = self.wp_head.as_ref().expect("early head");
                out.push(&l.w);
                out.push(&l.b);
            }
            Conditioning::LateBottleneck => {
                for l in [
                    self.tp_embed.as_ref().expect("tp_embed"),
                    self.rnn_xh.as_ref().expect("rnn_xh"),
                    self.rnn_hh.as_ref().expect("rnn_hh"),
                    self.wp_out.as_ref().expect("wp_out"),
                ] {
                    out.push(&l.w);
                    out.push(&l.b);
                }
            }
        }
        out.push(&self.speed_head.w);
        out.push(&self.speed_head.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        match self.conditioning {
            Conditioning::EarlyDense => {
                let l = self.wp_head.as_mut().expect("early head");
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
            Conditioning::LateBottleneck => {
                let (e, xh, hh, o) = (
                    self.tp_embed.as_mut().expect("tp_embed"),
                    self.rnn_xh.as_mut().expect("rnn_xh"),
                    self.rnn_hh.as_mut().expect("rnn_hh"),
                    self.wp_out.as_mut().expect("wp_out"),
                );
                out.push(&mut e.w);
                out.push(&mut e.b);
                out.push(&mut xh.w);
                out.push(&mut xh.b);
                out.push(&mut hh.w);
                out.push(&mut hh.b);
                out.push(&mut o.w);
                out.push(&mut o.b);
            }
        }
        out.push(&mut self.speed_head.w);
        out.push(&mut self.speed_head.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Forward pass with full cache.
    ///
    /// `scene` is the trunk input WITHOUT the TP scalars; `tp` carries them.
    /// Early conditioning concatenates them internally, the late variant
    /// routes `tp` through the bottleneck init.
    pub fn forward(&self, scene: &[f64], tp: &[f64]) -> Result<FwdCache, NetError> {
        if tp.len() != self.tp_dim {
            return Err(NetError::TpShape {
                got: tp.len(),
                want: self.tp_dim,
            });
        }
        let input: Vec<f64> = match self.conditioning {
            Conditioning::EarlyDense => scene.iter().chain(tp.iter()).copied().collect(),
            Conditioning::LateBottleneck => scene.to_vec(),
        };
        if input.len() != self.input_dim {
            return Err(NetError::InputShape {
                got: input.len(),
                want: self.input_dim,
            });
        }
        let mut trunk_pre = Vec::with_capacity(self.trunk.len());
        let mut trunk_post = Vec::with_capacity(self.trunk.len());
        let mut cur = input.clone();
        for (i, layer) in self.trunk.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&cur, &mut z);
            if z.iter().any(|v| !v.is_finite()) {
                let _ = i;
                return Err(NetError::NonFinite("trunk"));
            }
            let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            trunk_pre.push(z);
            trunk_post.push(a.clone());
            cur = a;
        }
        let feat = trunk_post.last().cloned().unwrap_or_else(|| input.clone());

        let mut h = Vec::new();
        let waypoints: Vec<Vec2> = match self.conditioning {
            Conditioning::EarlyDense => {
                let head = self.wp_head.as_ref().expect("early head");
                let mut out = Vec::new();
                head.forward(&feat, &mut out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(NetError::NonFinite("wp_head"));
                }
                (0..self.n_waypoints)
                    .map(|i| Vec2::new(out[2 * i], out[2 * i + 1]))
                    .collect()
            }
            Conditioning::LateBottleneck => {
                let embed = self.tp_embed.as_ref().expect("tp_embed");
                let xh = self.rnn_xh.as_ref().expect("rnn_xh");
                let hh = self.rnn_hh.as_ref().expect("rnn_hh");
                let out_l = self.wp_out.as_ref().expect("wp_out");
                let mut h0 = Vec::new();
                embed.forward(tp, &mut h0);
                h.push(h0);
                let mut feat_part = Vec::new();
                xh.forward(&feat, &mut feat_part);
                let mut wps = Vec::new();
                let mut wp = Vec2::ZERO;
                for _ in 0..self.n_waypoints {
                    let prev = h.last().expect("h0 present");
                    let mut u = Vec::new();
                    hh.forward(prev, &mut u);
                    for (ui, fi) in u.iter_mut().zip(&feat_part) {
                        *ui += fi;
                    }
                    let ht: Vec<f64> = u.iter().map(|&v| v.tanh()).collect();
                    if ht.iter().any(|v| !v.is_finite()) {
                        return Err(NetError::NonFinite("rnn"));
                    }
                    let mut delta = Vec::new();
                    out_l.forward(&ht, &mut delta);
                    wp = wp + Vec2::new(delta[0], delta[1]);
                    wps.push(wp);
                    h.push(ht);
                }
                wps
            }
        };
        if waypoints.iter().any(|w| !w.x.is_finite() || !w.y.is_finite()) {
            return Err(NetError::NonFinite("waypoints"));
        }

        let mut v_out = Vec::new();
        self.speed_head.forward(&feat, &mut v_out);
        let v_raw = v_out[0];
        if !v_raw.is_finite() {
            return Err(NetError::NonFinite("speed_head"));
        }
        Ok(FwdCache {
            input,
            tp: tp.to_vec(),
            trunk_pre,
            trunk_post,
            h,
            v_raw,
            waypoints,
            target_speed: softplus(v_raw),
        })
    }
}

/// Gradient buffers aligned with `PolicyNet::tensors()`.
#[derive(Debug, Clone)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &PolicyNet) -> Grads {
        Grads {
            tensors: net.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// L1 imitation loss: mean absolute error over the waypoint scalars plus the
/// absolute speed error.
pub fn l1_loss(pred_wps: &[Vec2], pred_speed: f64, label_wps: &[Vec2], label_speed: f64) -> f64 {
    let n = (pred_wps.len() * 2) as f64;
    let mut acc = 0.0;
    for (p, l) in pred_wps.iter().zip(label_wps) {
        acc += (p.x - l.x).abs() + (p.y - l.y).abs();
    }
    acc / n + (pred_speed - label_speed).abs()
}

/// Backward pass for one sample; accumulates `scale ×` gradients of the L1
/// loss into `grads`. Returns the sample loss.
pub fn backward_sample(
    net: &PolicyNet,
    cache: &FwdCache,
    label_wps: &[Vec2],
    label_speed: f64,
    scale: f64,
    grads: &mut Grads,
) -> f64 {
    let loss = l1_loss(&cache.waypoints, cache.target_speed, label_wps, label_speed);
    let n_wp_scalars = (net.n_waypoints * 2) as f64;

    let feat = cache
        .trunk_post
        .last()
        .cloned()
        .unwrap_or_else(|| cache.input.clone());
    let mut d_feat = vec![0.0; feat.len()];

    // Gradient tensor layout mirrors tensors(): trunk pairs, then heads.
    let trunk_tensor_count = net.trunk.len() * 2;

    // Speed head through softplus.
    let d_v = sign(cache.target_speed - label_speed) * scale;
    let d_v_raw = d_v * sigmoid(cache.v_raw);
    {
        let (dw, db) = speed_grad_slices(net, grads);
        net.speed_head
            .backward(&feat, &[d_v_raw], dw, db, Some(&mut d_feat));
    }

    // Waypoint path.
    let d_wp: Vec<f64> = cache
        .waypoints
        .iter()
        .zip(label_wps)
        .flat_map(|(p, l)| {
            [
                sign(p.x - l.x) / n_wp_scalars * scale,
                sign(p.y - l.y) / n_wp_scalars * scale,
            ]
        })
        .collect();
    match net.conditioning {
        Conditioning::EarlyDense => {
            let head = net.wp_head.as_ref().expect("early head");
            let (dw, db) = pair_slices(grads, trunk_tensor_count);
            head.backward(&feat, &d_wp, dw, db, Some(&mut d_feat));
        }
        Conditioning::LateBottleneck => {
            let embed = net.tp_embed.as_ref().expect("tp_embed");
            let xh = net.rnn_xh.as_ref().expect("rnn_xh");
            let hh = net.rnn_hh.as_ref().expect("rnn_hh");
            let out_l = net.wp_out.as_ref().expect("wp_out");
            let hwidth = hh.in_dim;
            // Cumulative waypoints: dL/d(delta_t) = suffix sums of dL/d(wp_u).
            let mut suffix = [0.0f64; 2];
            let mut d_delta: Vec<[f64; 2]> = vec![[0.0; 2]; net.n_waypoints];
            for t in (0..net.n_waypoints).rev() {
                suffix[0] += d_wp[2 * t];
                suffix[1] += d_wp[2 * t + 1];
                d_delta[t] = suffix;
            }
            // Recompute the shared feature projection for backprop through it.
            let mut feat_part = Vec::new();
            xh.forward(&feat, &mut feat_part);
            let mut d_h_next = vec![0.0; hwidth];
            let mut d_feat_part = vec![0.0; hwidth];
            for t in (0..net.n_waypoints).rev() {
                let ht = &cache.h[t + 1];
                let h_prev = &cache.h[t];
                // wp_out backward at step t.
                let mut d_ht = std::mem::take(&mut d_h_next);
                {
                    let (dw, db) = late_slices(grads, trunk_tensor_count, 3);
                    out_l.backward(ht, &d_delta[t], dw, db, Some(&mut d_ht));
                }
                // Through tanh.
                let d_u: Vec<f64> = d_ht
                    .iter()
                    .zip(ht)
                    .map(|(g, h)| g * (1.0 - h * h))
                    .collect();
                // u = rnn_hh(h_prev) + rnn_xh(feat); the xh bias rides in u once
                // per step, so db accumulates there.
                let mut d_h_prev = vec![0.0; hwidth];
                {
                    let (dw, db) = late_slices(grads, trunk_tensor_count, 2);
                    hh.backward(h_prev, &d_u, dw, db, Some(&mut d_h_prev));
                }
                for (a, b) in d_feat_part.iter_mut().zip(&d_u) {
                    *a += b;
                }
                d_h_next = d_h_prev;
            }
            // h0 = tp_embed(tp).
            {
                let (dw, db) = late_slices(grads, trunk_tensor_count, 0);
                embed.backward(&cache.tp, &d_h_next, dw, db, None);
            }
            // feat_part = rnn_xh(feat), used at every step.
            {
                let (dw, db) = late_slices(grads, trunk_tensor_count, 1);
                xh.backward(&feat, &d_feat_part, dw, db, Some(&mut d_feat));
            }
            let _ = feat_part;
        }
    }

    // Trunk backward through the ReLUs.
    let mut d_cur = d_feat;
    for i in (0..net.trunk.len()).rev() {
        let pre = &cache.trunk_pre[i];
        let d_z: Vec<f64> = d_cur
            .iter()
            .zip(pre)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        let x = if i == 0 {
            &cache.input
        } else {
            &cache.trunk_post[i - 1]
        };
        let mut d_x = vec![0.0; x.len()];
        {
            let (dw, db) = pair_slices(grads, i * 2);
            net.trunk[i].backward(x, &d_z, dw, db, if i > 0 { Some(&mut d_x) } else { None });
        }
        d_cur = d_x;
    }
    loss
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// (dw, db) gradient slices for the tensor pair starting at `base`.
fn pair_slices(grads: &mut Grads, base: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads.tensors.split_at_mut(base + 1);
    (a[base].as_mut_slice(), b[0].as_mut_slice())
}

/// Late-conditioning head pairs come after the trunk tensors in order
/// tp_embed(0), rnn_xh(1), rnn_hh(2), wp_out(3).
fn late_slices(grads: &mut Grads, trunk_tensors: usize, head_idx: usize) -> (&mut [f64], &mut [f64]) {
    pair_slices(grads, trunk_tensors + head_idx * 2)
}

/// The speed head is always the last tensor pair.
fn speed_grad_slices<'g>(net: &PolicyNet, grads: &'g mut Grads) -> (&'g mut [f64], &'g mut [f64]) {
    let n = net.tensors().len();
    pair_slices(grads, n - 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(conditioning: Conditioning, seed: u64) -> PolicyNet {
        PolicyNet::new(conditioning, 6, 2, &[5, 4], 3, 4, seed)
    }

    fn finite_diff_check(net: &PolicyNet, scene: &[f64], tp: &[f64], label: &[Vec2], lv: f64) {
        let cache = net.forward(scene, tp).unwrap();
        let mut grads = Grads::zeros_like(net);
        backward_sample(net, &cache, label, lv, 1.0, &mut grads);
        let eps = 1e-5;
        let mut net_plus = net.clone();
        let mut net_minus = net.clone();
        let n_tensors = net.tensors().len();
        for ti in 0..n_tensors {
            let len = net.tensors()[ti].len();
            for pi in 0..len {
                {
                    let mut tp_ = net_plus.tensors_mut();
                    tp_[ti][pi] += eps;
                    let mut tm = net_minus.tensors_mut();
                    tm[ti][pi] -= eps;
                }
                let cp = net_plus.forward(scene, tp).unwrap();
                let cm = net_minus.forward(scene, tp).unwrap();
                let lp = l1_loss(&cp.waypoints, cp.target_speed, label, lv);
                let lm = l1_loss(&cm.waypoints, cm.target_speed, label, lv);
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = grads.tensors[ti][pi];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                let rel = (numeric - analytic).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "tensor {ti} param {pi}: analytic {analytic} vs numeric {numeric}"
                );
                {
                    let mut tp_ = net_plus.tensors_mut();
                    tp_[ti][pi] -= eps;
                    let mut tm = net_minus.tensors_mut();
                    tm[ti][pi] += eps;
                }
            }
        }
    }

    #[test]
    fn gradcheck_early_dense() {
        for seed in 0..3u64 {
            let net = tiny(Conditioning::EarlyDense, seed);
            let mut rng = stream(seed, "gradcheck-data");
            let scene: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let tp: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let label: Vec<Vec2> = (0..4)
                .map(|_| Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() * 3.0))
                .collect();
            finite_diff_check(&net, &scene, &tp, &label, 2.0);
        }
    }

    #[test]
    fn gradcheck_late_bottleneck_includes_recurrent_params() {
        for seed in 0..3u64 {
            let net = tiny(Conditioning::LateBottleneck, seed);
            let mut rng = stream(seed + 100, "gradcheck-data");
            let scene: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let tp: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let label: Vec<Vec2> = (0..4)
                .map(|_| Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() * 3.0))
                .collect();
            finite_diff_check(&net, &scene, &tp, &label, 1.5);
        }
    }

    #[test]
    fn zero_weights_early_dense_outputs_zero_waypoints() {
        let mut net = tiny(Conditioning::EarlyDense, 0);
        for t in net.tensors_mut() {
            for v in t.iter_mut() {
                *v = 0.0;
            }
        }
        let cache = net.forward(&[0.5; 6], &[0.1, 0.2]).unwrap();
        for wp in &cache.waypoints {
            assert_eq!(wp.x, 0.0);
            assert_eq!(wp.y, 0.0);
        }
        assert!((cache.target_speed - softplus(0.0)).abs() < 1e-15);
    }

    #[test]
    fn late_speed_head_ignores_tp_bitwise() {
        let net = tiny(Conditioning::LateBottleneck, 7);
        let scene = [0.3, -0.2, 0.9, 0.0, -0.5, 0.4];
        let a = net.forward(&scene, &[0.1, 0.8]).unwrap();
        let b = net.forward(&scene, &[-0.9, -0.3]).unwrap();
        assert_eq!(a.target_speed.to_bits(), b.target_speed.to_bits());
        assert_ne!(a.waypoints[0], b.waypoints[0]);
    }

    #[test]
    fn zero_loss_batch_gives_zero_gradients() {
        let net = tiny(Conditioning::EarlyDense, 3);
        let scene = [0.1; 6];
        let tp = [0.2, -0.2];
        let cache = net.forward(&scene, &tp).unwrap();
        let mut grads = Grads::zeros_like(&net);
        let loss = backward_sample(
            &net,
            &cache,
            &cache.waypoints.clone(),
            cache.target_speed,
            1.0,
            &mut grads,
        );
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn l1_loss_matches_manual_recomputation() {
        let pred = vec![
            Vec2::new(1.0, 2.0),
            Vec2::new(3.0, 4.0),
            Vec2::new(5.0, 6.0),
            Vec2::new(7.0, 8.0),
        ];
        let label: Vec<Vec2> = pred.iter().map(|p| Vec2::new(p.x + 1.0, p.y + 1.0)).collect();
        let loss = l1_loss(&pred, 3.0, &label, 3.0);
        assert!((loss - 1.0).abs() < 1e-12);
        let loss2 = l1_loss(&pred, 2.5, &label, 3.25);
        assert!((loss2 - 1.75).abs() < 1e-12);
    }

    #[test]
    fn zeros_helper_matches_shapes() {
        let net = tiny(Conditioning::LateBottleneck, 1);
        let g = Grads::zeros_like(&net);
        assert_eq!(g.tensors.len(), net.tensors().len());
    }
}
