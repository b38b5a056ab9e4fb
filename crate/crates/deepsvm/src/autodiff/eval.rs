//! Single-point forward jet propagation and reverse accumulation.
//!
//! The trunk carries a 7-component jet per neuron (value, the three first
//! partials in physical x/nu/tau, and the xx, nunu, xnu second partials);
//! the branch sees only mu so it propagates plain values. Weight gradients
//! come from reverse accumulation over the jet computation, which is why
//! activations need third derivatives: the forward rule for a second-order
//! jet component contains g'', and its adjoint with respect to the
//! pre-activation value brings in g'''.
//!
//! Jets are stored padded to 8 lanes and cacheline-aligned so the affine
//! and contraction loops vectorize; the pad lane is identically zero.

use super::{Jet2, ParamGradient};
use crate::domain::{
    normalization_scales, normalize_inputs, payoff, payoff_dx, payoff_dxx, DomainError,
    DomainPoint, HestonParams,
};
use crate::network::act::{gelu_derivs, softplus_derivs};
use crate::network::{DeepOnet, Dense};

impl Jet2 {
    #[cfg(test)]
    pub(crate) fn axpy(&mut self, c: f64, o: &Jet2) {
        self.u += c * o.u;
        self.du_dx += c * o.du_dx;
        self.du_dnu += c * o.du_dnu;
        self.du_dtau += c * o.du_dtau;
        self.d2u_dx2 += c * o.d2u_dx2;
        self.d2u_dnu2 += c * o.d2u_dnu2;
        self.d2u_dxdnu += c * o.d2u_dxdnu;
    }

    #[inline]
    pub(crate) fn scaled(&self, c: f64) -> Jet2 {
        Jet2 {
            u: c * self.u,
            du_dx: c * self.du_dx,
            du_dnu: c * self.du_dnu,
            du_dtau: c * self.du_dtau,
            d2u_dx2: c * self.d2u_dx2,
            d2u_dnu2: c * self.d2u_dnu2,
            d2u_dxdnu: c * self.d2u_dxdnu,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite()
            && self.du_dx.is_finite()
            && self.du_dnu.is_finite()
            && self.du_dtau.is_finite()
            && self.d2u_dx2.is_finite()
            && self.d2u_dnu2.is_finite()
            && self.d2u_dxdnu.is_finite()
    }
}

// lane indices of the padded jet
const L_U: usize = 0;
const L_DX: usize = 1;
const L_DNU: usize = 2;
const L_DTAU: usize = 3;
const L_DXX: usize = 4;
const L_DNN: usize = 5;
const L_DXN: usize = 6;

/// Padded jet: 7 live lanes plus a zero pad, cacheline-aligned.
#[derive(Clone, Copy, Debug)]
#[repr(align(64))]
struct J8([f64; 8]);

impl J8 {
    const ZERO: J8 = J8([0.0; 8]);

    #[inline(always)]
    fn axpy(&mut self, c: f64, o: &J8) {
        for l in 0..8 {
            self.0[l] += c * o.0[l];
        }
    }

    #[inline(always)]
    fn dot(&self, o: &J8) -> f64 {
        let mut acc = 0.0;
        for l in 0..8 {
            acc += self.0[l] * o.0[l];
        }
        acc
    }

    #[inline(always)]
    fn scaled(&self, c: f64) -> J8 {
        let mut out = [0.0; 8];
        for l in 0..8 {
            out[l] = c * self.0[l];
        }
        J8(out)
    }

    fn to_jet(self) -> Jet2 {
        Jet2 {
            u: self.0[L_U],
            du_dx: self.0[L_DX],
            du_dnu: self.0[L_DNU],
            du_dtau: self.0[L_DTAU],
            d2u_dx2: self.0[L_DXX],
            d2u_dnu2: self.0[L_DNN],
            d2u_dxdnu: self.0[L_DXN],
        }
    }

    fn from_jet(j: &Jet2) -> J8 {
        let mut v = [0.0; 8];
        v[L_U] = j.u;
        v[L_DX] = j.du_dx;
        v[L_DNU] = j.du_dnu;
        v[L_DTAU] = j.du_dtau;
        v[L_DXX] = j.d2u_dx2;
        v[L_DNN] = j.d2u_dnu2;
        v[L_DXN] = j.d2u_dxdnu;
        J8(v)
    }
}

/// Chain rule through a scalar function with derivatives `(g1, g2)`.
#[inline(always)]
fn unary_forward(z: &J8, value: f64, g1: f64, g2: f64) -> J8 {
    let zv = &z.0;
    let mut out = [0.0; 8];
    out[L_U] = value;
    out[L_DX] = g1 * zv[L_DX];
    out[L_DNU] = g1 * zv[L_DNU];
    out[L_DTAU] = g1 * zv[L_DTAU];
    out[L_DXX] = g2 * zv[L_DX] * zv[L_DX] + g1 * zv[L_DXX];
    out[L_DNN] = g2 * zv[L_DNU] * zv[L_DNU] + g1 * zv[L_DNN];
    out[L_DXN] = g2 * zv[L_DX] * zv[L_DNU] + g1 * zv[L_DXN];
    J8(out)
}

/// Adjoint of [`unary_forward`] with respect to the input jet.
#[inline(always)]
fn unary_reverse(z: &J8, adj: &J8, g1: f64, g2: f64, g3: f64) -> J8 {
    let zv = &z.0;
    let a = &adj.0;
    let mut out = [0.0; 8];
    out[L_U] = a[L_U] * g1
        + g2 * (a[L_DX] * zv[L_DX] + a[L_DNU] * zv[L_DNU] + a[L_DTAU] * zv[L_DTAU])
        + a[L_DXX] * (g3 * zv[L_DX] * zv[L_DX] + g2 * zv[L_DXX])
        + a[L_DNN] * (g3 * zv[L_DNU] * zv[L_DNU] + g2 * zv[L_DNN])
        + a[L_DXN] * (g3 * zv[L_DX] * zv[L_DNU] + g2 * zv[L_DXN]);
    out[L_DX] = a[L_DX] * g1 + a[L_DXX] * 2.0 * g2 * zv[L_DX] + a[L_DXN] * g2 * zv[L_DNU];
    out[L_DNU] = a[L_DNU] * g1 + a[L_DNN] * 2.0 * g2 * zv[L_DNU] + a[L_DXN] * g2 * zv[L_DX];
    out[L_DTAU] = a[L_DTAU] * g1;
    out[L_DXX] = a[L_DXX] * g1;
    out[L_DNN] = a[L_DNN] * g1;
    out[L_DXN] = a[L_DXN] * g1;
    J8(out)
}

fn affine_values(layer: &Dense, h: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
        let mut acc = layer.b[i];
        for (w, x) in row.iter().zip(h) {
            acc += w * x;
        }
        *o = acc;
    }
}

fn affine_jets(layer: &Dense, h: &[J8], out: &mut [J8]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
        let mut acc = J8::ZERO;
        acc.0[L_U] = layer.b[i];
        for (w, hj) in row.iter().zip(h) {
            acc.axpy(*w, hj);
        }
        *o = acc;
    }
}

/// Per-point evaluation state. Holds the forward activations needed by the
/// reverse pass; reuse one evaluator per worker chunk to avoid allocation.
pub(crate) struct Evaluator<'m> {
    model: &'m DeepOnet,
    scales: [f64; 8],
    // branch (values)
    b_in: [f64; 5],
    bz: Vec<Vec<f64>>,
    bh: Vec<Vec<f64>>,
    bg1: Vec<Vec<f64>>,
    b_emb: Vec<f64>,
    // trunk (jets)
    t_in: [J8; 3],
    tz: Vec<Vec<J8>>,
    th: Vec<Vec<J8>>,
    // cached GELU derivatives (g1, g2, g3) per trunk neuron; the reverse
    // pass reuses them instead of re-evaluating the error function
    tg: Vec<Vec<(f64, f64, f64)>>,
    t_emb: Vec<J8>,
    raw: J8,
    s_jet: J8,
    sp_derivs: (f64, f64, f64),
    tau: f64,
    // scratch adjoints
    adj_a: Vec<J8>,
    adj_b: Vec<J8>,
    adj_emb: Vec<J8>,
    badj_a: Vec<f64>,
    badj_b: Vec<f64>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m DeepOnet) -> Self {
        let bw = model.branch.spec.hidden_width;
        let bd = model.branch.spec.hidden_depth;
        let tw = model.trunk.spec.hidden_width;
        let td = model.trunk.spec.hidden_depth;
        let p = model.p();
        Self {
            model,
            scales: normalization_scales(&model.bounds),
            b_in: [0.0; 5],
            bz: (0..bd).map(|_| vec![0.0; bw]).collect(),
            bh: (0..bd).map(|_| vec![0.0; bw]).collect(),
            bg1: (0..bd).map(|_| vec![0.0; bw]).collect(),
            b_emb: vec![0.0; p],
            t_in: [J8::ZERO; 3],
            tz: (0..td).map(|_| vec![J8::ZERO; tw]).collect(),
            th: (0..td).map(|_| vec![J8::ZERO; tw]).collect(),
            tg: (0..td).map(|_| vec![(0.0, 0.0, 0.0); tw]).collect(),
            t_emb: vec![J8::ZERO; p],
            raw: J8::ZERO,
            s_jet: J8::ZERO,
            sp_derivs: (0.0, 0.0, 0.0),
            tau: 0.0,
            adj_a: vec![J8::ZERO; tw.max(p)],
            adj_b: vec![J8::ZERO; tw],
            adj_emb: vec![J8::ZERO; p],
            badj_a: vec![0.0; bw.max(p)],
            badj_b: vec![0.0; bw],
        }
    }

    /// Forward pass with jets; leaves the state needed by [`Self::reverse`].
    pub fn forward(&mut self, p: &HestonParams, d: &DomainPoint) -> Result<Jet2, DomainError> {
        let t = normalize_inputs(p, d, &self.model.bounds)?;
        self.b_in.copy_from_slice(&t[..5]);
        self.tau = d.tau;

        // branch: plain values, caching g1 for the reverse pass
        let branch = &self.model.branch;
        let bd = branch.spec.hidden_depth;
        affine_values(&branch.layers[0], &self.b_in, &mut self.bz[0]);
        for i in 0..branch.spec.hidden_width {
            let (v, g1, _, _) = gelu_derivs(self.bz[0][i]);
            self.bh[0][i] = v;
            self.bg1[0][i] = g1;
        }
        for k in 1..bd {
            let (prev, rest) = self.bh.split_at_mut(k);
            affine_values(&branch.layers[k], &prev[k - 1], &mut self.bz[k]);
            for i in 0..branch.spec.hidden_width {
                let (v, g1, _, _) = gelu_derivs(self.bz[k][i]);
                rest[0][i] = prev[k - 1][i] + v;
                self.bg1[k][i] = g1;
            }
        }
        affine_values(&branch.layers[bd], &self.bh[bd - 1], &mut self.b_emb);

        // trunk: jets seeded with the normalization slopes
        self.t_in[0] = J8::ZERO;
        self.t_in[0].0[L_U] = t[5];
        self.t_in[0].0[L_DX] = self.scales[5];
        self.t_in[1] = J8::ZERO;
        self.t_in[1].0[L_U] = t[6];
        self.t_in[1].0[L_DNU] = self.scales[6];
        self.t_in[2] = J8::ZERO;
        self.t_in[2].0[L_U] = t[7];
        self.t_in[2].0[L_DTAU] = self.scales[7];

        let trunk = &self.model.trunk;
        let td = trunk.spec.hidden_depth;
        affine_jets(&trunk.layers[0], &self.t_in, &mut self.tz[0]);
        for i in 0..trunk.spec.hidden_width {
            let z = self.tz[0][i];
            let (v, g1, g2, g3) = gelu_derivs(z.0[L_U]);
            self.tg[0][i] = (g1, g2, g3);
            self.th[0][i] = unary_forward(&z, v, g1, g2);
        }
        for k in 1..td {
            let (prev, rest) = self.th.split_at_mut(k);
            affine_jets(&trunk.layers[k], &prev[k - 1], &mut self.tz[k]);
            for i in 0..trunk.spec.hidden_width {
                let z = self.tz[k][i];
                let (v, g1, g2, g3) = gelu_derivs(z.0[L_U]);
                self.tg[k][i] = (g1, g2, g3);
                let mut hj = unary_forward(&z, v, g1, g2);
                hj.axpy(1.0, &prev[k - 1][i]); // identity skip
                rest[0][i] = hj;
            }
        }
        affine_jets(&trunk.layers[td], &self.th[td - 1], &mut self.t_emb);

        // inner product: branch values weight the trunk jets
        let mut raw = J8::ZERO;
        for (b, tj) in self.b_emb.iter().zip(&self.t_emb) {
            raw.axpy(*b, tj);
        }
        self.raw = raw;

        // ansatz: u = phi(x) + tau * softplus(raw)
        let (sv, s1, s2, s3) = softplus_derivs(raw.0[L_U]);
        self.sp_derivs = (s1, s2, s3);
        self.s_jet = unary_forward(&raw, sv, s1, s2);
        let s = &self.s_jet.0;
        let tau = d.tau;
        Ok(Jet2 {
            u: payoff(d.x) + tau * s[L_U],
            du_dx: payoff_dx(d.x) + tau * s[L_DX],
            du_dnu: tau * s[L_DNU],
            du_dtau: s[L_U] + tau * s[L_DTAU],
            d2u_dx2: payoff_dxx(d.x) + tau * s[L_DXX],
            d2u_dnu2: tau * s[L_DNN],
            d2u_dxdnu: tau * s[L_DXN],
        })
    }

    /// Jet of the unconstrained network output from the last forward pass.
    pub fn raw_jet(&self) -> Jet2 {
        self.raw.to_jet()
    }

    /// Accumulates `d loss / d weights` into `grad`, given the adjoint of
    /// the prediction jet from the most recent [`Self::forward`] call.
    pub fn reverse(&mut self, u_adj: &Jet2, grad: &mut ParamGradient) {
        let tau = self.tau;
        // ansatz: u = phi + tau * s, with u_tau = s + tau * s_tau
        let ua = J8::from_jet(u_adj);
        let mut s_adj = ua.scaled(tau);
        s_adj.0[L_U] += ua.0[L_DTAU];
        let (s1, s2, s3) = self.sp_derivs;
        let raw_adj = unary_reverse(&self.raw, &s_adj, s1, s2, s3);

        // inner product
        for k in 0..self.model.p() {
            self.adj_emb[k] = raw_adj.scaled(self.b_emb[k]);
            self.badj_a[k] = raw_adj.dot(&self.t_emb[k]);
        }

        // trunk reverse
        let trunk = &self.model.trunk;
        let td = trunk.spec.hidden_depth;
        let tw = trunk.spec.hidden_width;
        {
            // output layer (linear)
            let layer = &trunk.layers[td];
            let g = &mut grad.trunk[td];
            let h = &self.th[td - 1];
            for i in 0..layer.rows {
                let a = &self.adj_emb[i];
                let grow = &mut g.w[i * layer.cols..(i + 1) * layer.cols];
                for (gw, hj) in grow.iter_mut().zip(h) {
                    *gw += a.dot(hj);
                }
                g.b[i] += a.0[L_U];
            }
            for slot in self.adj_a[..tw].iter_mut() {
                *slot = J8::ZERO;
            }
            for i in 0..layer.rows {
                let a = self.adj_emb[i];
                let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
                for (slot, w) in self.adj_a[..tw].iter_mut().zip(row) {
                    slot.axpy(*w, &a);
                }
            }
        }
        // hidden layers, last to first; adj_a holds the adjoint of h_{k+1}
        for k in (0..td).rev() {
            let layer = &trunk.layers[k];
            let g = &mut grad.trunk[k];
            // adjoint of the gelu output is adj_a; the skip (k > 0) passes
            // adj_a through to h_k as well
            for i in 0..tw {
                let (g1, g2, g3) = self.tg[k][i];
                self.adj_b[i] = unary_reverse(&self.tz[k][i], &self.adj_a[i], g1, g2, g3);
            }
            if k == 0 {
                let h: &[J8] = &self.t_in;
                for i in 0..layer.rows {
                    let a = &self.adj_b[i];
                    let grow = &mut g.w[i * layer.cols..(i + 1) * layer.cols];
                    for (gw, hj) in grow.iter_mut().zip(h) {
                        *gw += a.dot(hj);
                    }
                    g.b[i] += a.0[L_U];
                }
            } else {
                let h = &self.th[k - 1];
                for i in 0..layer.rows {
                    let a = &self.adj_b[i];
                    let grow = &mut g.w[i * layer.cols..(i + 1) * layer.cols];
                    for (gw, hj) in grow.iter_mut().zip(h) {
                        *gw += a.dot(hj);
                    }
                    g.b[i] += a.0[L_U];
                }
                // h_k adjoint: skip path plus W^T z_adj
                for i in 0..layer.rows {
                    let a = self.adj_b[i];
                    let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
                    for (slot, w) in self.adj_a[..tw].iter_mut().zip(row) {
                        slot.axpy(*w, &a);
                    }
                }
            }
        }

        // branch reverse (plain values)
        let branch = &self.model.branch;
        let bd = branch.spec.hidden_depth;
        let bw = branch.spec.hidden_width;
        {
            let layer = &branch.layers[bd];
            let g = &mut grad.branch[bd];
            let h = &self.bh[bd - 1];
            for i in 0..layer.rows {
                let a = self.badj_a[i];
                let grow = &mut g.w[i * layer.cols..(i + 1) * layer.cols];
                for (gw, hv) in grow.iter_mut().zip(h) {
                    *gw += a * hv;
                }
                g.b[i] += a;
            }
            for slot in self.badj_b[..bw].iter_mut() {
                *slot = 0.0;
            }
            for i in 0..layer.rows {
                let a = self.badj_a[i];
                let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
                for (slot, w) in self.badj_b[..bw].iter_mut().zip(row) {
                    *slot += w * a;
                }
            }
            self.badj_a[..bw].copy_from_slice(&self.badj_b[..bw]);
        }
        for k in (0..bd).rev() {
            let layer = &branch.layers[k];
            let g = &mut grad.branch[k];
            for i in 0..bw {
                self.badj_b[i] = self.badj_a[i] * self.bg1[k][i];
            }
            let h: &[f64] = if k == 0 { &self.b_in } else { &self.bh[k - 1] };
            for i in 0..layer.rows {
                let a = self.badj_b[i];
                let grow = &mut g.w[i * layer.cols..(i + 1) * layer.cols];
                for (gw, hv) in grow.iter_mut().zip(h) {
                    *gw += a * hv;
                }
                g.b[i] += a;
            }
            if k > 0 {
                // skip keeps badj_a; add W^T contribution
                for i in 0..layer.rows {
                    let a = self.badj_b[i];
                    let row = &layer.w[i * layer.cols..(i + 1) * layer.cols];
                    for (slot, w) in self.badj_a[..bw].iter_mut().zip(row) {
                        *slot += w * a;
                    }
                }
            }
        }
    }
}
