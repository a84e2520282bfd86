use super::params::{Layout, ModelDims, ModelParams, Variant, OUTPUT_DIM};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = b + W x`, W row-major with `out.len()` rows.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] + dot(&w[i * n..(i + 1) * n], x);
    }
}

/// `out += W x`.
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&w[i * n..(i + 1) * n], x);
    }
}

/// `gw += dy x^T`.
fn add_outer(gw: &mut [f64], dy: &[f64], x: &[f64]) {
    let n = x.len();
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (g, &v) in gw[i * n..(i + 1) * n].iter_mut().zip(x) {
            *g += d * v;
        }
    }
}

/// `dx += W^T dy`.
fn add_matt(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let n = dx.len();
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (o, &v) in dx.iter_mut().zip(&w[i * n..(i + 1) * n]) {
            *o += d * v;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Fixed input scaling applied before the channel masks: MV pixels / 4,
/// signed log for DCT means, log for block energies.
pub(crate) fn preprocess(dims: &ModelDims, variant: Variant, feat: &[f64]) -> (Vec<f64>, [f64; 4]) {
    let (m, d) = (dims.mv_len, dims.dct_len);
    let mut x = Vec::with_capacity(m + d);
    if variant.uses_mv() {
        x.extend(feat[..m].iter().map(|v| v / 4.0));
    } else {
        x.extend(std::iter::repeat_n(0.0, m));
    }
    if variant.uses_dct() {
        x.extend(feat[m..m + d].iter().enumerate().map(|(i, &v)| {
            if i % 4 == 3 {
                v.max(0.0).ln_1p() / 8.0
            } else {
                signed_log(v) / 4.0
            }
        }));
    } else {
        x.extend(std::iter::repeat_n(0.0, d));
    }
    let g = &feat[m + d..m + d + 4];
    (x, [g[0], g[1], g[2], g[3]])
}

#[derive(Debug, Clone, Default)]
struct DirCache {
    /// Activated gates `[i, f, g, o]` per time step.
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

/// Everything the backward pass needs from one sequence's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct SeqCache {
    geom: Vec<[f64; 4]>,
    box_h: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    dirs: [DirCache; 2],
    u: Vec<Vec<f64>>,
    pub out: Vec<[f64; OUTPUT_DIM]>,
}

impl SeqCache {
    pub fn len(&self) -> usize {
        self.out.len()
    }
}

/// Runs one proposal's feature sequence through the network.
pub(crate) fn forward_seq(p: &ModelParams, l: &Layout, feats: &[&[f64]]) -> SeqCache {
    let d = &p.dims;
    let v = &p.values;
    let t_len = feats.len();
    let (eb, f, h, hh) = (d.box_embed, d.fused, d.hidden, d.head_hidden);
    let mut cache = SeqCache {
        geom: Vec::with_capacity(t_len),
        box_h: Vec::with_capacity(t_len),
        x: Vec::with_capacity(t_len),
        e: Vec::with_capacity(t_len),
        dirs: Default::default(),
        u: Vec::with_capacity(t_len),
        out: Vec::with_capacity(t_len),
    };
    for feat in feats {
        let (mut x, geom) = preprocess(d, p.variant, feat);
        let mut a1 = vec![0.0; eb];
        affine(&v[l.box_w1.clone()], &v[l.box_b1.clone()], &geom, &mut a1);
        let bh: Vec<f64> = a1.iter().map(|a| a.tanh()).collect();
        let mut emb = vec![0.0; eb];
        affine(&v[l.box_w2.clone()], &v[l.box_b2.clone()], &bh, &mut emb);
        x.extend_from_slice(&emb);
        let mut e = vec![0.0; f];
        affine(&v[l.fuse_w.clone()], &v[l.fuse_b.clone()], &x, &mut e);
        cache.geom.push(geom);
        cache.box_h.push(bh);
        cache.x.push(x);
        cache.e.push(e);
    }
    for (dir, ll) in l.lstm.iter().enumerate() {
        let dc = &mut cache.dirs[dir];
        dc.gates = vec![Vec::new(); t_len];
        dc.c = vec![Vec::new(); t_len];
        dc.h = vec![Vec::new(); t_len];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for step in 0..t_len {
            let t = if dir == 0 { step } else { t_len - 1 - step };
            let mut z = vec![0.0; 4 * h];
            affine(&v[ll.wx.clone()], &v[ll.b.clone()], &cache.e[t], &mut z);
            matvec_add(&v[ll.wh.clone()], &h_prev, &mut z);
            for k in 0..4 * h {
                z[k] = if (2 * h..3 * h).contains(&k) { z[k].tanh() } else { sigmoid(z[k]) };
            }
            let mut c = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for k in 0..h {
                c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
                hn[k] = z[3 * h + k] * c[k].tanh();
            }
            h_prev.clone_from(&hn);
            c_prev.clone_from(&c);
            dc.gates[t] = z;
            dc.c[t] = c;
            dc.h[t] = hn;
        }
    }
    for t in 0..t_len {
        let mut hc = Vec::with_capacity(2 * h);
        hc.extend_from_slice(&cache.dirs[0].h[t]);
        hc.extend_from_slice(&cache.dirs[1].h[t]);
        let mut a = vec![0.0; hh];
        affine(&v[l.head_w1.clone()], &v[l.head_b1.clone()], &hc, &mut a);
        let u: Vec<f64> = a.iter().map(|x| x.tanh()).collect();
        let mut out = [0.0; OUTPUT_DIM];
        affine(&v[l.head_w2.clone()], &v[l.head_b2.clone()], &u, &mut out);
        cache.u.push(u);
        cache.out.push(out);
    }
    cache
}

/// Accumulates into `grad` the gradient of `sum_t dout[t] . out[t]`.
pub(crate) fn backward_seq(p: &ModelParams, l: &Layout, cache: &SeqCache, dout: &[[f64; OUTPUT_DIM]], grad: &mut [f64]) {
    let d = &p.dims;
    let v = &p.values;
    let t_len = cache.len();
    let (eb, f, h, hh) = (d.box_embed, d.fused, d.hidden, d.head_hidden);
    let mut dh = [vec![vec![0.0; h]; t_len], vec![vec![0.0; h]; t_len]];

    for t in 0..t_len {
        let dy = &dout[t];
        if dy.iter().all(|&x| x == 0.0) {
            continue;
        }
        let u = &cache.u[t];
        add_outer(&mut grad[l.head_w2.clone()], dy, u);
        add_into(&mut grad[l.head_b2.clone()], dy);
        let mut du = vec![0.0; hh];
        add_matt(&v[l.head_w2.clone()], dy, &mut du);
        let da: Vec<f64> = du.iter().zip(u).map(|(g, u)| g * (1.0 - u * u)).collect();
        let mut hc = Vec::with_capacity(2 * h);
        hc.extend_from_slice(&cache.dirs[0].h[t]);
        hc.extend_from_slice(&cache.dirs[1].h[t]);
        add_outer(&mut grad[l.head_w1.clone()], &da, &hc);
        add_into(&mut grad[l.head_b1.clone()], &da);
        let mut dhc = vec![0.0; 2 * h];
        add_matt(&v[l.head_w1.clone()], &da, &mut dhc);
        add_into(&mut dh[0][t], &dhc[..h]);
        add_into(&mut dh[1][t], &dhc[h..]);
    }

    let mut de = vec![vec![0.0; f]; t_len];
    for (dir, ll) in l.lstm.iter().enumerate() {
        let dc_cache = &cache.dirs[dir];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        // reverse of the processing order
        for step in (0..t_len).rev() {
            let t = if dir == 0 { step } else { t_len - 1 - step };
            let prev = if step == 0 {
                None
            } else if dir == 0 {
                Some(t - 1)
            } else {
                Some(t + 1)
            };
            let z = &dc_cache.gates[t];
            let c = &dc_cache.c[t];
            let mut dz = vec![0.0; 4 * h];
            for k in 0..h {
                let dhk = dh[dir][t][k] + dh_next[k];
                let (i, fg, g, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let tc = c[k].tanh();
                let dck = dhk * o * (1.0 - tc * tc) + dc_next[k];
                let c_prev = prev.map_or(0.0, |pt| dc_cache.c[pt][k]);
                dz[k] = dck * g * i * (1.0 - i);
                dz[h + k] = dck * c_prev * fg * (1.0 - fg);
                dz[2 * h + k] = dck * i * (1.0 - g * g);
                dz[3 * h + k] = dhk * tc * o * (1.0 - o);
                dc_next[k] = dck * fg;
            }
            add_outer(&mut grad[ll.wx.clone()], &dz, &cache.e[t]);
            add_into(&mut grad[ll.b.clone()], &dz);
            add_matt(&v[ll.wx.clone()], &dz, &mut de[t]);
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            if let Some(pt) = prev {
                add_outer(&mut grad[ll.wh.clone()], &dz, &dc_cache.h[pt]);
                add_matt(&v[ll.wh.clone()], &dz, &mut dh_next);
            }
        }
    }

    let feat_len = d.mv_len + d.dct_len;
    for t in 0..t_len {
        add_outer(&mut grad[l.fuse_w.clone()], &de[t], &cache.x[t]);
        add_into(&mut grad[l.fuse_b.clone()], &de[t]);
        let mut dx = vec![0.0; feat_len + eb];
        add_matt(&v[l.fuse_w.clone()], &de[t], &mut dx);
        let demb = &dx[feat_len..];
        let bh = &cache.box_h[t];
        add_outer(&mut grad[l.box_w2.clone()], demb, bh);
        add_into(&mut grad[l.box_b2.clone()], demb);
        let mut dbh = vec![0.0; eb];
        add_matt(&v[l.box_w2.clone()], demb, &mut dbh);
        let da1: Vec<f64> = dbh.iter().zip(bh).map(|(g, y)| g * (1.0 - y * y)).collect();
        add_outer(&mut grad[l.box_w1.clone()], &da1, &cache.geom[t]);
        add_into(&mut grad[l.box_b1.clone()], &da1);
    }
}
