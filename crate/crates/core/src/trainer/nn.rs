//! Recurrent actor-critic network over a flat parameter vector, with a
//! hand-written backward pass.
//!
//! Batches are time-major. At each step the live rows are a prefix of the
//! batch, so sequences are sorted longest first and shorter ones simply drop
//! off the end.

use crate::episode::{PIXEL_SIZE, SYMBOLIC_WIDTH};
use crate::{Error, Result};
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Previous action (4) and previous reward (1).
pub const PREV_WIDTH: usize = 5;
pub const HEAD_WIDTH: usize = 64;
/// Two continuous locations and two binary log-odds.
pub const POLICY_OUT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Symbolic {
        input: usize,
        encoder: usize,
        hidden: usize,
    },
    Pixel {
        hidden: usize,
    },
}

impl Arch {
    pub fn symbolic(hidden: usize) -> Self {
        Arch::Symbolic {
            input: SYMBOLIC_WIDTH,
            encoder: 128,
            hidden,
        }
    }

    pub fn pixel() -> Self {
        Arch::Pixel { hidden: 256 }
    }

    pub fn input_width(&self) -> usize {
        match *self {
            Arch::Symbolic { input, .. } => input,
            Arch::Pixel { .. } => 3 * PIXEL_SIZE * PIXEL_SIZE,
        }
    }

    pub fn hidden(&self) -> usize {
        match *self {
            Arch::Symbolic { hidden, .. } | Arch::Pixel { hidden } => hidden,
        }
    }
}

/// `c = beta * c + op(a) * op(b)` with `op(a)` of shape m×k and `op(b)` k×n.
#[allow(clippy::too_many_arguments)]
fn mm(
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let av = if ta {
        ArrayView2::from_shape((k, m), a).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).unwrap()
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).unwrap()
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).unwrap();
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}

fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

fn relu_back(pre: &[f64], d: &mut [f64]) {
    for (g, p) in d.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn forward(&self, p: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(rows * self.out);
        for _ in 0..rows {
            y.extend_from_slice(&p[self.b..self.b + self.out]);
        }
        mm(
            x,
            false,
            self.weights(p),
            false,
            &mut y,
            rows,
            self.inp,
            self.out,
            1.0,
        );
        y
    }

    fn weights<'p>(&self, p: &'p [f64]) -> &'p [f64] {
        &p[self.w..self.w + self.inp * self.out]
    }

    /// Accumulates weight gradients and returns the input gradient.
    fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        dy: &[f64],
        rows: usize,
        g: &mut [f64],
        want_dx: bool,
    ) -> Vec<f64> {
        mm(
            x,
            true,
            dy,
            false,
            &mut g[self.w..self.w + self.inp * self.out],
            self.inp,
            rows,
            self.out,
            1.0,
        );
        let gb = &mut g[self.b..self.b + self.out];
        for r in 0..rows {
            for (gj, d) in gb.iter_mut().zip(&dy[r * self.out..(r + 1) * self.out]) {
                *gj += d;
            }
        }
        if !want_dx {
            return Vec::new();
        }
        let mut dx = vec![0.0; rows * self.inp];
        mm(
            dy,
            false,
            self.weights(p),
            true,
            &mut dx,
            rows,
            self.out,
            self.inp,
            0.0,
        );
        dx
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    hin: usize,
    hout: usize,
    /// Input stored channel-major; otherwise position-major.
    chw: bool,
}

impl Conv {
    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.hout * self.hout
    }

    fn in_size(&self) -> usize {
        self.cin * self.hin * self.hin
    }

    fn input_index(&self, c: usize, y: usize, x: usize) -> usize {
        if self.chw {
            (c * self.hin + y) * self.hin + x
        } else {
            (y * self.hin + x) * self.cin + c
        }
    }

    fn each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let patch = self.patch();
        for oy in 0..self.hout {
            for ox in 0..self.hout {
                let row = (oy * self.hout + ox) * patch;
                for c in 0..self.cin {
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let col = (c * self.k + ky) * self.k + kx;
                            f(
                                row + col,
                                self.input_index(c, oy * self.stride + ky, ox * self.stride + kx),
                            );
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let per = self.positions() * self.patch();
        let mut cols = vec![0.0; rows * per];
        for r in 0..rows {
            let xi = &x[r * self.in_size()..(r + 1) * self.in_size()];
            let ci = &mut cols[r * per..(r + 1) * per];
            self.each_tap(|dst, src| ci[dst] = xi[src]);
        }
        cols
    }

    /// Returns the im2col buffer and the position-major pre-activations.
    fn forward(&self, p: &[f64], x: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
        let cols = self.im2col(x, rows);
        let n = rows * self.positions();
        let mut y = Vec::with_capacity(n * self.cout);
        for _ in 0..n {
            y.extend_from_slice(&p[self.b..self.b + self.cout]);
        }
        let w = &p[self.w..self.w + self.cout * self.patch()];
        mm(
            &cols,
            false,
            w,
            true,
            &mut y,
            n,
            self.patch(),
            self.cout,
            1.0,
        );
        (cols, y)
    }

    fn backward(
        &self,
        p: &[f64],
        cols: &[f64],
        dy: &[f64],
        rows: usize,
        g: &mut [f64],
        want_dx: bool,
    ) -> Vec<f64> {
        let n = rows * self.positions();
        let patch = self.patch();
        mm(
            dy,
            true,
            cols,
            false,
            &mut g[self.w..self.w + self.cout * patch],
            self.cout,
            n,
            patch,
            1.0,
        );
        let gb = &mut g[self.b..self.b + self.cout];
        for r in 0..n {
            for (gj, d) in gb.iter_mut().zip(&dy[r * self.cout..(r + 1) * self.cout]) {
                *gj += d;
            }
        }
        if !want_dx {
            return Vec::new();
        }
        let mut dcols = vec![0.0; n * patch];
        mm(
            dy,
            false,
            &p[self.w..self.w + self.cout * patch],
            false,
            &mut dcols,
            n,
            self.cout,
            patch,
            0.0,
        );
        let per = self.positions() * patch;
        let mut dx = vec![0.0; rows * self.in_size()];
        for r in 0..rows {
            let di = &mut dx[r * self.in_size()..(r + 1) * self.in_size()];
            let ci = &dcols[r * per..(r + 1) * per];
            self.each_tap(|src, dst| di[dst] += ci[src]);
        }
        dx
    }
}

/// Named blocks of the flat parameter vector, for stratified checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

#[derive(Clone, Debug)]
pub struct Network {
    pub arch: Arch,
    convs: Vec<Conv>,
    enc: Dense,
    /// Input-to-gates weights and the gate bias.
    lstm_x: Dense,
    /// Hidden-to-gates weights, H × 4H.
    lstm_h: usize,
    pi: [Dense; 3],
    v: [Dense; 3],
    log_std: usize,
    len: usize,
}

struct Alloc(usize);

impl Alloc {
    fn dense(&mut self, inp: usize, out: usize) -> Dense {
        let w = self.0;
        let b = w + inp * out;
        self.0 = b + out;
        Dense { w, b, inp, out }
    }

    fn take(&mut self, n: usize) -> usize {
        let at = self.0;
        self.0 += n;
        at
    }
}

impl Network {
    pub fn new(arch: Arch) -> Self {
        let mut a = Alloc(0);
        let mut convs = Vec::new();
        let enc_in = match arch {
            Arch::Symbolic { input, .. } => input,
            Arch::Pixel { .. } => {
                let mut hin = PIXEL_SIZE;
                let mut cin = 3;
                for (i, (cout, k, stride)) in
                    [(32, 8, 4), (64, 4, 2), (64, 3, 1)].into_iter().enumerate()
                {
                    let hout = (hin - k) / stride + 1;
                    let w = a.take(cout * cin * k * k);
                    let b = a.take(cout);
                    convs.push(Conv {
                        w,
                        b,
                        cin,
                        cout,
                        k,
                        stride,
                        hin,
                        hout,
                        chw: i == 0,
                    });
                    hin = hout;
                    cin = cout;
                }
                cin * hin * hin
            }
        };
        let enc_out = match arch {
            Arch::Symbolic { encoder, .. } => encoder,
            Arch::Pixel { .. } => 256,
        };
        let h = arch.hidden();
        let enc = a.dense(enc_in, enc_out);
        let lstm_x = a.dense(enc_out + PREV_WIDTH, 4 * h);
        let lstm_h = a.take(h * 4 * h);
        let pi = [
            a.dense(h, HEAD_WIDTH),
            a.dense(HEAD_WIDTH, HEAD_WIDTH),
            a.dense(HEAD_WIDTH, POLICY_OUT),
        ];
        let v = [
            a.dense(h, HEAD_WIDTH),
            a.dense(HEAD_WIDTH, HEAD_WIDTH),
            a.dense(HEAD_WIDTH, 1),
        ];
        let log_std = a.take(2);
        Network {
            arch,
            convs,
            enc,
            lstm_x,
            lstm_h,
            pi,
            v,
            log_std,
            len: a.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.len
    }

    pub fn hidden(&self) -> usize {
        self.arch.hidden()
    }

    pub fn input_width(&self) -> usize {
        self.arch.input_width()
    }

    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        self.log_std..self.log_std + 2
    }

    pub fn blocks(&self) -> Vec<Block> {
        let dense = |name: &str, d: &Dense| Block {
            name: name.to_string(),
            range: d.w..d.b + d.out,
        };
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push(Block {
                name: format!("conv{}", i + 1),
                range: c.w..c.b + c.cout,
            });
        }
        out.push(dense("encoder", &self.enc));
        out.push(Block {
            name: "recurrent".into(),
            range: self.lstm_x.w..self.lstm_h + self.hidden() * 4 * self.hidden(),
        });
        for (i, d) in self.pi.iter().enumerate() {
            out.push(dense(&format!("policy{}", i + 1), d));
        }
        for (i, d) in self.v.iter().enumerate() {
            out.push(dense(&format!("value{}", i + 1), d));
        }
        out.push(Block {
            name: "log_std".into(),
            range: self.log_std_range(),
        });
        out
    }

    /// Value-head parameter range.
    pub fn value_range(&self) -> std::ops::Range<usize> {
        self.v[0].w..self.v[2].b + 1
    }

    pub fn init<R: Rng>(&self, rng: &mut R) -> PolicyParams {
        let mut data = vec![0.0; self.len];
        let mut fill = |data: &mut [f64], at: usize, n: usize, std: f64| {
            let normal = Normal::new(0.0, std).unwrap();
            for v in &mut data[at..at + n] {
                *v = normal.sample(rng);
            }
        };
        for c in &self.convs {
            fill(
                &mut data,
                c.w,
                c.cout * c.patch(),
                (2.0 / c.patch() as f64).sqrt(),
            );
        }
        fill(
            &mut data,
            self.enc.w,
            self.enc.inp * self.enc.out,
            (2.0 / self.enc.inp as f64).sqrt(),
        );
        let h = self.hidden();
        fill(
            &mut data,
            self.lstm_x.w,
            self.lstm_x.inp * 4 * h,
            (1.0 / self.lstm_x.inp as f64).sqrt(),
        );
        fill(&mut data, self.lstm_h, h * 4 * h, (1.0 / h as f64).sqrt());
        // Forget gate starts open.
        for v in &mut data[self.lstm_x.b + h..self.lstm_x.b + 2 * h] {
            *v = 1.0;
        }
        for heads in [&self.pi, &self.v] {
            for d in &heads[..2] {
                fill(&mut data, d.w, d.inp * d.out, (2.0 / d.inp as f64).sqrt());
            }
        }
        fill(&mut data, self.pi[2].w, HEAD_WIDTH * POLICY_OUT, 0.01);
        fill(
            &mut data,
            self.v[2].w,
            HEAD_WIDTH,
            (1.0 / HEAD_WIDTH as f64).sqrt(),
        );
        PolicyParams {
            arch: self.arch,
            data,
        }
    }

    pub fn zeros(&self) -> PolicyParams {
        PolicyParams {
            arch: self.arch,
            data: vec![0.0; self.len],
        }
    }

    pub fn check(&self, params: &PolicyParams) -> Result<()> {
        if params.arch != self.arch || params.data.len() != self.len {
            return Err(Error::Shape(format!(
                "parameters of length {} do not fit a network of length {}",
                params.data.len(),
                self.len
            )));
        }
        Ok(())
    }

    /// One recurrent step for `rows` rows. `h` and `c` hold at least `rows`
    /// rows of the previous state.
    pub fn step(
        &self,
        p: &[f64],
        x: &[f64],
        prev: &[f64],
        h: &[f64],
        c: &[f64],
        rows: usize,
    ) -> Result<StepCache> {
        let d = self.input_width();
        let hd = self.hidden();
        if x.len() != rows * d
            || prev.len() != rows * PREV_WIDTH
            || h.len() < rows * hd
            || c.len() < rows * hd
        {
            return Err(Error::Shape(format!(
                "step over {rows} rows expects inputs of width {d}, got {} values",
                x.len()
            )));
        }
        let mut conv_cols = Vec::new();
        let mut conv_pre = Vec::new();
        let mut flat = x.to_vec();
        for conv in &self.convs {
            let (cols, pre) = conv.forward(p, &flat, rows);
            flat = relu(&pre);
            conv_cols.push(cols);
            conv_pre.push(pre);
        }
        let enc_pre = self.enc.forward(p, &flat, rows);
        let e = self.enc.out;
        let zi = e + PREV_WIDTH;
        let mut z = vec![0.0; rows * zi];
        for r in 0..rows {
            for j in 0..e {
                z[r * zi + j] = enc_pre[r * e + j].max(0.0);
            }
            z[r * zi + e..(r + 1) * zi]
                .copy_from_slice(&prev[r * PREV_WIDTH..(r + 1) * PREV_WIDTH]);
        }
        let mut gates = self.lstm_x.forward(p, &z, rows);
        mm(
            &h[..rows * hd],
            false,
            &p[self.lstm_h..self.lstm_h + hd * 4 * hd],
            false,
            &mut gates,
            rows,
            hd,
            4 * hd,
            1.0,
        );
        let mut c_new = vec![0.0; rows * hd];
        let mut tc = vec![0.0; rows * hd];
        let mut h_new = vec![0.0; rows * hd];
        for r in 0..rows {
            let g = &mut gates[r * 4 * hd..(r + 1) * 4 * hd];
            for j in 0..hd {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hd + j]);
                let gg = g[2 * hd + j].tanh();
                let o = sigmoid(g[3 * hd + j]);
                g[j] = i;
                g[hd + j] = f;
                g[2 * hd + j] = gg;
                g[3 * hd + j] = o;
                let cn = f * c[r * hd + j] + i * gg;
                c_new[r * hd + j] = cn;
                tc[r * hd + j] = cn.tanh();
                h_new[r * hd + j] = o * tc[r * hd + j];
            }
        }
        let head = |layers: &[Dense; 3]| {
            let a1 = layers[0].forward(p, &h_new, rows);
            let a2 = layers[1].forward(p, &relu(&a1), rows);
            let out = layers[2].forward(p, &relu(&a2), rows);
            ([a1, a2], out)
        };
        let (pi_pre, pi_out) = head(&self.pi);
        let (v_pre, v_out) = head(&self.v);
        Ok(StepCache {
            rows,
            x: x.to_vec(),
            conv_cols,
            conv_pre,
            enc_pre,
            z,
            gates,
            c: c_new,
            tc,
            h: h_new,
            pi_pre,
            pi_out,
            v_pre,
            v_out,
        })
    }

    /// Runs a whole batch of sequences. `inputs[t]` holds the inputs of
    /// the live rows at step t, whose counts must be non-increasing.
    pub fn forward_seq(
        &self,
        p: &[f64],
        inputs: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Vec<StepCache>> {
        let hd = self.hidden();
        let rows0 = inputs
            .first()
            .map_or(0, |(_, prev)| prev.len() / PREV_WIDTH);
        let zeros = vec![0.0; rows0 * hd];
        let mut out: Vec<StepCache> = Vec::with_capacity(inputs.len());
        for (x, prev) in inputs {
            let rows = prev.len() / PREV_WIDTH;
            let cache = match out.last() {
                Some(last) => {
                    if rows > last.rows {
                        return Err(Error::Shape("live rows must not grow over time".into()));
                    }
                    self.step(p, x, prev, &last.h, &last.c, rows)?
                }
                None => self.step(p, x, prev, &zeros, &zeros, rows)?,
            };
            out.push(cache);
        }
        Ok(out)
    }

    /// Backpropagates through a sequence. `dpi[t]` and `dv[t]` are the
    /// loss gradients at the policy and value outputs. Gradients accumulate
    /// into `g`.
    pub fn backward_seq(
        &self,
        p: &[f64],
        caches: &[StepCache],
        dpi: &[Vec<f64>],
        dv: &[Vec<f64>],
        g: &mut [f64],
    ) {
        let hd = self.hidden();
        let mut dh_next: Vec<f64> = Vec::new();
        let mut dc_next: Vec<f64> = Vec::new();
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let rows = cache.rows;
            let mut dh = vec![0.0; rows * hd];
            let mut dc = vec![0.0; rows * hd];
            dh[..dh_next.len()].copy_from_slice(&dh_next);
            dc[..dc_next.len()].copy_from_slice(&dc_next);
            let head_back =
                |layers: &[Dense; 3], pre: &[Vec<f64>; 2], dout: &[f64], g: &mut [f64]| {
                    let a1 = relu(&pre[0]);
                    let a2 = relu(&pre[1]);
                    let mut d2 = layers[2].backward(p, &a2, dout, rows, g, true);
                    relu_back(&pre[1], &mut d2);
                    let mut d1 = layers[1].backward(p, &a1, &d2, rows, g, true);
                    relu_back(&pre[0], &mut d1);
                    layers[0].backward(p, &cache.h, &d1, rows, g, true)
                };
            for dx in [
                head_back(&self.pi, &cache.pi_pre, &dpi[t], g),
                head_back(&self.v, &cache.v_pre, &dv[t], g),
            ] {
                for (a, b) in dh.iter_mut().zip(dx) {
                    *a += b;
                }
            }
            let zero = vec![0.0; rows * hd];
            let (h_prev, c_prev) = if t > 0 {
                (&caches[t - 1].h[..rows * hd], &caches[t - 1].c[..rows * hd])
            } else {
                (&zero[..], &zero[..])
            };
            let mut dgates = vec![0.0; rows * 4 * hd];
            let mut dc_prev = vec![0.0; rows * hd];
            for r in 0..rows {
                let gt = &cache.gates[r * 4 * hd..(r + 1) * 4 * hd];
                let dg = &mut dgates[r * 4 * hd..(r + 1) * 4 * hd];
                for j in 0..hd {
                    let k = r * hd + j;
                    let (i, f, gg, o) = (gt[j], gt[hd + j], gt[2 * hd + j], gt[3 * hd + j]);
                    let tc = cache.tc[k];
                    let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                    dg[j] = dct * gg * i * (1.0 - i);
                    dg[hd + j] = dct * c_prev[k] * f * (1.0 - f);
                    dg[2 * hd + j] = dct * i * (1.0 - gg * gg);
                    dg[3 * hd + j] = dh[k] * tc * o * (1.0 - o);
                    dc_prev[k] = dct * f;
                }
            }
            let dz = self.lstm_x.backward(p, &cache.z, &dgates, rows, g, true);
            let wh = self.lstm_h..self.lstm_h + hd * 4 * hd;
            mm(
                h_prev,
                true,
                &dgates,
                false,
                &mut g[wh.clone()],
                hd,
                rows,
                4 * hd,
                1.0,
            );
            let mut dh_prev = vec![0.0; rows * hd];
            mm(
                &dgates,
                false,
                &p[wh],
                true,
                &mut dh_prev,
                rows,
                4 * hd,
                hd,
                0.0,
            );

            let e = self.enc.out;
            let zi = e + PREV_WIDTH;
            let mut denc = vec![0.0; rows * e];
            for r in 0..rows {
                denc[r * e..(r + 1) * e].copy_from_slice(&dz[r * zi..r * zi + e]);
            }
            relu_back(&cache.enc_pre, &mut denc);
            let enc_in = match self.convs.last() {
                Some(_) => relu(cache.conv_pre.last().unwrap()),
                None => cache.x.clone(),
            };
            let mut dflat = self
                .enc
                .backward(p, &enc_in, &denc, rows, g, !self.convs.is_empty());
            for li in (0..self.convs.len()).rev() {
                relu_back(&cache.conv_pre[li], &mut dflat);
                dflat = self.convs[li].backward(p, &cache.conv_cols[li], &dflat, rows, g, li > 0);
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub rows: usize,
    x: Vec<f64>,
    conv_cols: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    enc_pre: Vec<f64>,
    z: Vec<f64>,
    /// Gate activations after their nonlinearities, in i, f, g, o order.
    gates: Vec<f64>,
    pub c: Vec<f64>,
    tc: Vec<f64>,
    pub h: Vec<f64>,
    pi_pre: [Vec<f64>; 2],
    /// Rows × 4: turn and forward locations, grasp and activate log-odds.
    pub pi_out: Vec<f64>,
    v_pre: [Vec<f64>; 2],
    pub v_out: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Arch,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn log_std(&self, net: &Network) -> [f64; 2] {
        let r = net.log_std_range();
        [self.data[r.start], self.data[r.start + 1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Network {
        Network::new(Arch::Symbolic {
            input: 7,
            encoder: 6,
            hidden: 5,
        })
    }

    fn inputs(net: &Network, lens: &[usize], rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
        let t_max = lens[0];
        (0..t_max)
            .map(|t| {
                let rows = lens.iter().filter(|l| **l > t).count();
                let x = (0..rows * net.input_width())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                let prev = (0..rows * PREV_WIDTH)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                (x, prev)
            })
            .collect()
    }

    #[test]
    fn zero_network_outputs() {
        let net = Network::new(Arch::symbolic(64));
        let p = net.zeros();
        let x = vec![0.3; SYMBOLIC_WIDTH];
        let s = net
            .step(&p.data, &x, &[0.0; 5], &[0.0; 64], &[0.0; 64], 1)
            .unwrap();
        assert_eq!(s.pi_out, vec![0.0; 4]);
        assert_eq!(s.v_out, vec![0.0]);
        assert_eq!(p.log_std(&net), [0.0, 0.0]);
    }

    #[test]
    fn output_widths() {
        let net = Network::new(Arch::symbolic(64));
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(1));
        let s = net
            .step(
                &p.data,
                &vec![0.1; 2 * SYMBOLIC_WIDTH],
                &[0.0; 10],
                &[0.0; 128],
                &[0.0; 128],
                2,
            )
            .unwrap();
        assert_eq!(s.pi_out.len(), 2 * POLICY_OUT);
        assert_eq!(s.v_out.len(), 2);
        assert_eq!(net.log_std_range().len(), 2);
    }

    #[test]
    fn pixel_shapes() {
        let net = Network::new(Arch::pixel());
        assert_eq!(
            net.convs.iter().map(|c| c.hout).collect::<Vec<_>>(),
            vec![15, 6, 4]
        );
        assert_eq!(net.enc.inp, 1024);
        assert_eq!(net.hidden(), 256);
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(1));
        let x = vec![0.5; net.input_width()];
        let s = net
            .step(&p.data, &x, &[0.0; 5], &[0.0; 256], &[0.0; 256], 1)
            .unwrap();
        assert_eq!(s.pi_out.len(), 4);
        assert_eq!(s.h.len(), 256);
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = small();
        let p = net.zeros();
        assert!(matches!(
            net.step(&p.data, &[0.0; 6], &[0.0; 5], &[0.0; 5], &[0.0; 5], 1),
            Err(Error::Shape(_))
        ));
        assert!(net
            .check(&Network::new(Arch::symbolic(64)).zeros())
            .is_err());
    }

    #[test]
    fn two_step_sequence_equals_chained_steps() {
        let net = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = net.init(&mut rng);
        let inp = inputs(&net, &[2], &mut rng);
        let seq = net.forward_seq(&p.data, &inp).unwrap();
        let a = net
            .step(&p.data, &inp[0].0, &inp[0].1, &[0.0; 5], &[0.0; 5], 1)
            .unwrap();
        let b = net
            .step(&p.data, &inp[1].0, &inp[1].1, &a.h, &a.c, 1)
            .unwrap();
        assert_eq!(seq[1].pi_out, b.pi_out);
        assert_eq!(seq[1].v_out, b.v_out);
    }

    #[test]
    fn rows_do_not_interact() {
        let net = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = net.init(&mut rng);
        let inp = inputs(&net, &[3, 2], &mut rng);
        let both = net.forward_seq(&p.data, &inp).unwrap();
        let first: Vec<_> = inp
            .iter()
            .map(|(x, prev)| (x[..net.input_width()].to_vec(), prev[..PREV_WIDTH].to_vec()))
            .collect();
        let alone = net.forward_seq(&p.data, &first).unwrap();
        for t in 0..3 {
            assert_eq!(both[t].pi_out[..4], alone[t].pi_out[..]);
        }
    }

    // Central differences on a scalar function of all outputs.
    #[test]
    fn backward_matches_finite_differences() {
        for arch_pixel in [false, true] {
            let net = if arch_pixel {
                Network::new(Arch::pixel())
            } else {
                small()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let p = net.init(&mut rng);
            let lens: &[usize] = if arch_pixel { &[1] } else { &[3, 2, 2] };
            let inp = inputs(&net, lens, &mut rng);
            let wpi: Vec<Vec<f64>> = inp
                .iter()
                .map(|(_, prev)| {
                    (0..prev.len() / PREV_WIDTH * POLICY_OUT)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let wv: Vec<Vec<f64>> = inp
                .iter()
                .map(|(_, prev)| {
                    (0..prev.len() / PREV_WIDTH)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let f = |data: &[f64]| {
                let seq = net.forward_seq(data, &inp).unwrap();
                seq.iter()
                    .enumerate()
                    .map(|(t, s)| {
                        s.pi_out
                            .iter()
                            .zip(&wpi[t])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            + s.v_out.iter().zip(&wv[t]).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .sum::<f64>()
            };
            let seq = net.forward_seq(&p.data, &inp).unwrap();
            let mut g = vec![0.0; net.param_count()];
            net.backward_seq(&p.data, &seq, &wpi, &wv, &mut g);
            for block in net.blocks() {
                if block.name == "log_std" {
                    continue;
                }
                for k in 0..6 {
                    let i = block.range.start + (k * 7919) % block.range.len();
                    let mut q = p.data.clone();
                    q[i] += 1e-5;
                    let up = f(&q);
                    q[i] -= 2e-5;
                    let down = f(&q);
                    let num = (up - down) / 2e-5;
                    let err = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6);
                    assert!(
                        err < 1e-4,
                        "{} [{i}]: analytic {} numeric {num}",
                        block.name,
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, -1.0];
        adam.apply(&mut p, &[0.5, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
