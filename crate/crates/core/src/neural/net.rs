//! Recurrent actor-critic: tanh encoder → GRU cell → categorical heads + value.
//!
//! All parameters live in one flat vector so the optimizer, gradient
//! clipping, finite-difference checks and checkpoints see a single array.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    /// Action count of each categorical head.
    pub heads: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Spans {
    pub we: Span,
    pub be: Span,
    pub wz: Span,
    pub wr: Span,
    pub wn: Span,
    pub uz: Span,
    pub ur: Span,
    pub un: Span,
    pub bz: Span,
    pub br: Span,
    pub bn: Span,
    /// Recurrent bias of the candidate, applied inside the reset gate.
    pub bun: Span,
    pub head_w: Vec<Span>,
    pub head_b: Vec<Span>,
    pub vw: Span,
    pub vb: Span,
    pub total: usize,
}

impl Layout {
    pub fn spans(&self) -> Spans {
        let mut at = 0;
        let mut take = |rows: usize, cols: usize| {
            let s = Span { start: at, rows, cols };
            at += rows * cols;
            s
        };
        let (d, h) = (self.input, self.hidden);
        let we = take(h, d);
        let be = take(h, 1);
        let wz = take(h, h);
        let wr = take(h, h);
        let wn = take(h, h);
        let uz = take(h, h);
        let ur = take(h, h);
        let un = take(h, h);
        let bz = take(h, 1);
        let br = take(h, 1);
        let bn = take(h, 1);
        let bun = take(h, 1);
        let mut head_w = Vec::new();
        let mut head_b = Vec::new();
        for &n in &self.heads {
            head_w.push(take(n, h));
            head_b.push(take(n, 1));
        }
        let vw = take(1, h);
        let vb = take(1, 1);
        Spans { we, be, wz, wr, wn, uz, ur, un, bz, br, bn, bun, head_w, head_b, vw, vb, total: at }
    }

    /// Named tensors in storage order.
    pub fn named_spans(&self) -> Vec<(String, Span)> {
        let s = self.spans();
        let mut out: Vec<(String, Span)> = [
            ("encoder.w", s.we),
            ("encoder.b", s.be),
            ("gru.w_z", s.wz),
            ("gru.w_r", s.wr),
            ("gru.w_n", s.wn),
            ("gru.u_z", s.uz),
            ("gru.u_r", s.ur),
            ("gru.u_n", s.un),
            ("gru.b_z", s.bz),
            ("gru.b_r", s.br),
            ("gru.b_n", s.bn),
            ("gru.b_un", s.bun),
        ]
        .into_iter()
        .map(|(n, s)| (n.to_string(), s))
        .collect();
        for (k, (w, b)) in s.head_w.iter().zip(&s.head_b).enumerate() {
            out.push((format!("head{k}.w"), *w));
            out.push((format!("head{k}.b"), *b));
        }
        out.push(("value.w".into(), s.vw));
        out.push(("value.b".into(), s.vb));
        out
    }

    pub fn param_count(&self) -> usize {
        self.spans().total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.param_count();
        Self { layout, data: vec![0.0; n] }
    }

    /// Uniform fan-in initialization; actor heads start near-uniform.
    pub fn init<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout);
        let s = p.layout.spans();
        let (d, h) = (p.layout.input as f64, p.layout.hidden as f64);
        let mut fill = |span: Span, bound: f64| {
            for v in &mut p.data[span.range()] {
                *v = rng.gen_range(-bound..bound);
            }
        };
        fill(s.we, 1.0 / d.sqrt());
        for span in [s.wz, s.wr, s.wn, s.uz, s.ur, s.un] {
            fill(span, 1.0 / h.sqrt());
        }
        for span in &s.head_w {
            fill(*span, 0.01 / h.sqrt());
        }
        fill(s.vw, 1.0 / h.sqrt());
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.layout.param_count() {
            return Err(Error::InvalidConfig(format!(
                "parameter vector has {} entries, layout needs {}",
                self.data.len(),
                self.layout.param_count()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<Vec<f64>>,
    pub value: f64,
    pub hidden: Vec<f64>,
}

/// Intermediate values of one step kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    nz: Vec<usize>,
    pub e: Vec<f64>,
    pub h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    g: Vec<f64>,
    pub h: Vec<f64>,
    pub out: StepOutput,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += W x` for a row-major `rows × cols` matrix.
fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W x` touching only the columns listed in `nz`.
fn matvec_sparse_add(w: &[f64], cols: usize, x: &[f64], nz: &[usize], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o += nz.iter().map(|&j| row[j] * x[j]).sum::<f64>();
    }
}

/// `out += Wᵀ dy`.
fn matvec_t_add(w: &[f64], cols: usize, dy: &[f64], out: &mut [f64]) {
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * d;
        }
    }
}

/// `gw += dy xᵀ`.
fn outer_add(gw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[i * cols..(i + 1) * cols];
        for (g, a) in row.iter_mut().zip(x) {
            *g += d * a;
        }
    }
}

fn outer_add_sparse(gw: &mut [f64], cols: usize, dy: &[f64], x: &[f64], nz: &[usize]) {
    for (i, &d) in dy.iter().enumerate() {
        let row = &mut gw[i * cols..(i + 1) * cols];
        for &j in nz {
            row[j] += d * x[j];
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn entropy(logits: &[f64]) -> f64 {
    softmax(logits).iter().zip(log_softmax(logits)).map(|(p, lp)| -p * lp).sum()
}

impl PolicyParams {
    fn t(&self, s: Span) -> &[f64] {
        &self.data[s.range()]
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.layout.hidden]
    }

    /// One recurrent step, keeping what the backward pass needs.
    pub fn forward_cached(&self, x: &[f64], h_prev: &[f64]) -> Result<StepCache> {
        let s = self.layout.spans();
        let (d, hd) = (self.layout.input, self.layout.hidden);
        if x.len() != d || h_prev.len() != hd {
            return Err(Error::InvalidConfig(format!(
                "forward expects input {d} and hidden {hd}, got {} and {}",
                x.len(),
                h_prev.len()
            )));
        }
        let nz: Vec<usize> = (0..d).filter(|&j| x[j] != 0.0).collect();

        let mut e = self.t(s.be).to_vec();
        matvec_sparse_add(self.t(s.we), d, x, &nz, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());

        let mut z = self.t(s.bz).to_vec();
        matvec_add(self.t(s.wz), hd, &e, &mut z);
        matvec_add(self.t(s.uz), hd, h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = self.t(s.br).to_vec();
        matvec_add(self.t(s.wr), hd, &e, &mut r);
        matvec_add(self.t(s.ur), hd, h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut g = self.t(s.bun).to_vec();
        matvec_add(self.t(s.un), hd, h_prev, &mut g);
        let mut n = self.t(s.bn).to_vec();
        matvec_add(self.t(s.wn), hd, &e, &mut n);
        for i in 0..hd {
            n[i] = (n[i] + r[i] * g[i]).tanh();
        }

        let h: Vec<f64> = (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]).collect();

        let mut logits = Vec::with_capacity(s.head_w.len());
        for (w, b) in s.head_w.iter().zip(&s.head_b) {
            let mut l = self.t(*b).to_vec();
            matvec_add(self.t(*w), hd, &h, &mut l);
            logits.push(l);
        }
        let value = self.t(s.vb)[0] + self.t(s.vw).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();

        if !value.is_finite() || logits.iter().flatten().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy forward"));
        }
        let out = StepOutput { logits, value, hidden: h.clone() };
        Ok(StepCache { x: x.to_vec(), nz, e, h_prev: h_prev.to_vec(), z, r, n, g, h, out })
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64]) -> Result<StepOutput> {
        self.forward_cached(x, h_prev).map(|c| c.out)
    }

    /// Accumulates parameter gradients of one step into `grad` given the loss
    /// gradients w.r.t. its logits, value and output hidden state. Returns the
    /// gradient w.r.t. the input hidden state.
    pub fn backward_step(
        &self,
        cache: &StepCache,
        dlogits: &[Vec<f64>],
        dvalue: f64,
        dh_out: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let s = self.layout.spans();
        let (d, hd) = (self.layout.input, self.layout.hidden);

        let mut dh = dh_out.to_vec();
        for (k, dl) in dlogits.iter().enumerate() {
            let (w, b) = (s.head_w[k], s.head_b[k]);
            matvec_t_add(self.t(w), hd, dl, &mut dh);
            outer_add(&mut grad[w.range()], hd, dl, &cache.h);
            for (g, v) in grad[b.range()].iter_mut().zip(dl) {
                *g += v;
            }
        }
        for i in 0..hd {
            dh[i] += self.t(s.vw)[i] * dvalue;
            grad[s.vw.start + i] += dvalue * cache.h[i];
        }
        grad[s.vb.start] += dvalue;

        let (z, r, n, g, hp) = (&cache.z, &cache.r, &cache.n, &cache.g, &cache.h_prev);
        let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * z[i]).collect();
        let mut da_z = vec![0.0; hd];
        let mut da_r = vec![0.0; hd];
        let mut da_n = vec![0.0; hd];
        let mut dg = vec![0.0; hd];
        for i in 0..hd {
            let dn = dh[i] * (1.0 - z[i]);
            let dz = dh[i] * (hp[i] - n[i]);
            da_n[i] = dn * (1.0 - n[i] * n[i]);
            let dr = da_n[i] * g[i];
            dg[i] = da_n[i] * r[i];
            da_z[i] = dz * z[i] * (1.0 - z[i]);
            da_r[i] = dr * r[i] * (1.0 - r[i]);
        }

        let mut de = vec![0.0; hd];
        for (da, w, u, b) in [(&da_z, s.wz, s.uz, s.bz), (&da_r, s.wr, s.ur, s.br)] {
            outer_add(&mut grad[w.range()], hd, da, &cache.e);
            outer_add(&mut grad[u.range()], hd, da, hp);
            for (gb, v) in grad[b.range()].iter_mut().zip(da.iter()) {
                *gb += v;
            }
            matvec_t_add(self.t(w), hd, da, &mut de);
            matvec_t_add(self.t(u), hd, da, &mut dh_prev);
        }
        outer_add(&mut grad[s.wn.range()], hd, &da_n, &cache.e);
        for (gb, v) in grad[s.bn.range()].iter_mut().zip(&da_n) {
            *gb += v;
        }
        matvec_t_add(self.t(s.wn), hd, &da_n, &mut de);
        outer_add(&mut grad[s.un.range()], hd, &dg, hp);
        for (gb, v) in grad[s.bun.range()].iter_mut().zip(&dg) {
            *gb += v;
        }
        matvec_t_add(self.t(s.un), hd, &dg, &mut dh_prev);

        let da_e: Vec<f64> = (0..hd).map(|i| de[i] * (1.0 - cache.e[i] * cache.e[i])).collect();
        outer_add_sparse(&mut grad[s.we.range()], d, &da_e, &cache.x, &cache.nz);
        for (gb, v) in grad[s.be.range()].iter_mut().zip(&da_e) {
            *gb += v;
        }
        dh_prev
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> Layout {
        Layout { input: 17, hidden: 9, heads: vec![4, 3] }
    }

    /// Straight-line reimplementation over nested vectors.
    fn reference_forward(p: &PolicyParams, x: &[f64], h: &[f64]) -> (Vec<Vec<f64>>, f64, Vec<f64>) {
        let named: std::collections::HashMap<String, Span> = p.layout.named_spans().into_iter().collect();
        let mat = |name: &str| -> Vec<Vec<f64>> {
            let s = named[name];
            (0..s.rows).map(|i| p.data[s.start + i * s.cols..s.start + (i + 1) * s.cols].to_vec()).collect()
        };
        let vec_ = |name: &str| -> Vec<f64> { p.data[named[name].range()].to_vec() };
        let mv = |m: &Vec<Vec<f64>>, v: &[f64]| -> Vec<f64> { m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
        let add = |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + y).collect() };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());

        let e: Vec<f64> = add(mv(&mat("encoder.w"), x), vec_("encoder.b")).into_iter().map(f64::tanh).collect();
        let z: Vec<f64> = add(add(mv(&mat("gru.w_z"), &e), mv(&mat("gru.u_z"), h)), vec_("gru.b_z")).into_iter().map(sig).collect();
        let r: Vec<f64> = add(add(mv(&mat("gru.w_r"), &e), mv(&mat("gru.u_r"), h)), vec_("gru.b_r")).into_iter().map(sig).collect();
        let inner = add(mv(&mat("gru.u_n"), h), vec_("gru.b_un"));
        let gated: Vec<f64> = r.iter().zip(&inner).map(|(a, b)| a * b).collect();
        let n: Vec<f64> = add(add(mv(&mat("gru.w_n"), &e), vec_("gru.b_n")), gated).into_iter().map(f64::tanh).collect();
        let hn: Vec<f64> = (0..h.len()).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
        let logits = (0..p.layout.heads.len())
            .map(|k| add(mv(&mat(&format!("head{k}.w")), &hn), vec_(&format!("head{k}.b"))))
            .collect();
        let value = mv(&mat("value.w"), &hn)[0] + vec_("value.b")[0];
        (logits, value, hn)
    }

    #[test]
    fn zero_weights_give_uniform_heads() {
        let p = PolicyParams::zeros(layout());
        let out = p.forward(&[0.7; 17], &[0.3; 9]).unwrap();
        assert!(out.logits.iter().flatten().all(|&l| l == 0.0));
        assert_eq!(out.value, 0.0);
        // z = 0.5, n = 0: the hidden state halves.
        assert!(out.hidden.iter().all(|&h| (h - 0.15).abs() < 1e-15));
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut p = PolicyParams::init(layout(), &mut rng);
            for v in &mut p.data {
                *v += rng.gen_range(-0.5..0.5);
            }
            let x: Vec<f64> = (0..17).map(|i| if i % 3 == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
            let h: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = p.forward(&x, &h).unwrap();
            let (logits, value, hn) = reference_forward(&p, &x, &h);
            for (a, b) in out.logits.iter().flatten().zip(logits.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((out.value - value).abs() < 1e-12);
            for (a, b) in out.hidden.iter().zip(&hn) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(out, p.forward(&x, &h).unwrap());
        }
    }

    #[test]
    fn softmax_normalizes_and_shifts() {
        let l = [2.0, -1.0, 0.0];
        let p = softmax(&l);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = l.iter().map(|v| v + 100.0).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((entropy(&[0.0; 3]) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_reported() {
        let mut p = PolicyParams::zeros(layout());
        let vb = p.layout.spans().vb;
        p.data[vb.start] = f64::NAN;
        assert!(matches!(p.forward(&[0.0; 17], &[0.0; 9]), Err(Error::NonFinite(_))));
        assert!(p.validate().is_err());
    }
}
