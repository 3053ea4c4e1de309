//! Backward finite-difference solver of the mollified `n`-player Bellman
//! equation in its per-player supremum form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{GridHeader, ValueGrid};
use crate::mfc::Mollified;
use crate::{Error, Result};

/// Largest `n d` handled on grids.
pub const GRID_DIMENSION_CAP: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    Implicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Radius of the region of interest; the box radius is derived from it
    /// unless `radius` is set.
    pub support: f64,
    pub radius: Option<f64>,
    /// Nodes per axis.
    pub points: usize,
    /// Number of time steps; chosen from the stability bound when absent.
    pub steps: Option<usize>,
    pub scheme: Scheme,
    /// Keep every `store_every`-th time slice (the first and last are always
    /// kept).
    pub store_every: usize,
    /// Convergence tolerance of the implicit relaxation.
    pub tolerance: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { support: 1.0, radius: None, points: 101, steps: None, scheme: Scheme::Explicit, store_every: 1, tolerance: 1e-11 }
    }
}

/// `R = support + K T + 6 sqrt((K^2 + ε^2) T)`.
pub fn box_radius(k: f64, horizon: f64, eps: f64, support: f64) -> f64 {
    support + k * horizon + 6.0 * ((k * k + eps * eps) * horizon).sqrt()
}

/// Precomputed coefficients at every node for one control.
struct NodeData {
    /// Per node: `n` running rewards, `n d` drifts, `n d d` diffusion entries.
    data: Vec<f64>,
    stride: usize,
}

struct Layout {
    n: usize,
    d: usize,
    dims: usize,
    points: usize,
    h: f64,
    strides: Vec<usize>,
}

impl Layout {
    fn coord(&self, flat: usize, a: usize) -> usize {
        (flat / self.strides[a]) % self.points
    }

    /// Neighbour in direction `dir` along axis `a`, clamped at the faces.
    fn step(&self, flat: usize, a: usize, dir: isize) -> usize {
        let k = self.coord(flat, a) as isize + dir;
        if k < 0 || k >= self.points as isize {
            flat
        } else {
            (flat as isize + dir * self.strides[a] as isize) as usize
        }
    }
}

/// `(f_part, Σ c v_nb, Σ c)` of player `i` at `node` so that the player's
/// contribution to the Hamiltonian is `f_part + Σ c v_nb - (Σ c) v_node`.
fn player_parts(lay: &Layout, nd: &NodeData, node: usize, i: usize, v: &[f64]) -> (f64, f64, f64) {
    let (n, d, h) = (lay.n, lay.d, lay.h);
    let row = &nd.data[node * nd.stride..(node + 1) * nd.stride];
    let f = row[i] / n as f64;
    let b = &row[n + i * d..n + (i + 1) * d];
    let a = &row[n + n * d + i * d * d..n + n * d + (i + 1) * d * d];
    let (mut sv, mut sc) = (0.0, 0.0);
    for k in 0..d {
        let axis = i * d + k;
        let (up, down) = (lay.step(node, axis, 1), lay.step(node, axis, -1));
        let diff = 0.5 * a[k * d + k] / (h * h);
        let bk = b[k];
        let (cu, cd) = if bk.abs() * h <= a[k * d + k] {
            (diff + bk / (2.0 * h), diff - bk / (2.0 * h))
        } else if bk > 0.0 {
            (diff + bk / h, diff)
        } else {
            (diff, diff - bk / h)
        };
        for (idx, c) in [(up, cu), (down, cd)] {
            if idx != node {
                sv += c * v[idx];
                sc += c;
            }
        }
        for l in (k + 1)..d {
            let akl = a[k * d + l];
            if akl == 0.0 {
                continue;
            }
            let c = akl / (4.0 * h * h);
            let other = i * d + l;
            for (s1, s2, sign) in [(1isize, 1isize, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                let idx = lay.step(lay.step(node, axis, s1), other, s2);
                sv += sign * c * v[idx];
                sc += sign * c;
            }
        }
    }
    (f, sv, sc)
}

/// Diagonal weight `Σ c` of the player's operator, for the stability bound.
fn player_weight(lay: &Layout, nd: &NodeData, node: usize, i: usize) -> f64 {
    let (n, d, h) = (lay.n, lay.d, lay.h);
    let row = &nd.data[node * nd.stride..(node + 1) * nd.stride];
    let b = &row[n + i * d..n + (i + 1) * d];
    let a = &row[n + n * d + i * d * d..n + n * d + (i + 1) * d * d];
    let mut s = 0.0;
    for k in 0..d {
        let akk = a[k * d + k];
        s += akk / (h * h) + if b[k].abs() * h <= akk { 0.0 } else { b[k].abs() / h };
        for l in 0..d {
            if l != k {
                s += a[k * d + l].abs() / (2.0 * h * h);
            }
        }
    }
    s
}

fn node_data(mo: &Mollified, lay: &Layout, t: f64, eps: f64, control: &[f64], radius: f64) -> NodeData {
    let (n, d) = (lay.n, lay.d);
    let stride = n + n * d + n * d * d;
    let nodes = lay.points.pow(lay.dims as u32);
    let coords: Vec<f64> = (0..lay.points).map(|k| -radius + k as f64 * lay.h).collect();
    let mut data = vec![0.0; nodes * stride];
    data.par_chunks_mut(stride).enumerate().for_each(|(node, row)| {
        let x: Vec<f64> = (0..lay.dims).map(|a| coords[lay.coord(node, a)]).collect();
        let f = mo.f_all(t, &x, control);
        let b = mo.b_all(t, &x, control);
        row[..n].copy_from_slice(&f);
        row[n..n + n * d].copy_from_slice(&b);
        for i in 0..n {
            let a = mo.coeffs.diffusion_matrix(t, &x[i * d..(i + 1) * d], control, eps);
            row[n + n * d + i * d * d..n + n * d + (i + 1) * d * d].copy_from_slice(&a);
        }
    });
    NodeData { data, stride }
}

/// Solves `∂_t v + Σ_i sup_a {f^i/n + ⟨b^i, ∂_{x_i} v⟩ + ½ tr[(σσ^T + ε^2) ∂²_{x_i x_i} v]} = 0`
/// backwards from `v(T) = (1/n) Σ_i g^i`, with central differences where
/// they are monotone and upwind differences otherwise, and reflecting
/// neighbours at the box faces.
pub fn solve_hjb(mo: &Mollified, eps: f64, params: &GridParams) -> Result<ValueGrid> {
    let c = &mo.coeffs;
    let (n, d) = (mo.n, c.d);
    let dims = n * d;
    if dims > GRID_DIMENSION_CAP {
        return Err(Error::DimensionCap { found: dims, cap: GRID_DIMENSION_CAP });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} must be positive")));
    }
    if params.points < 3 || params.store_every == 0 {
        return Err(Error::InvalidParameter("need at least 3 points per axis and store_every >= 1".into()));
    }
    let horizon = c.horizon;
    let radius = params.radius.unwrap_or_else(|| box_radius(c.k, horizon, eps, params.support));
    if !(radius > params.support) {
        return Err(Error::InvalidParameter(format!("box radius {radius} does not exceed support {}", params.support)));
    }
    let p = params.points;
    let mut strides = vec![1usize; dims];
    for a in 1..dims {
        strides[a] = strides[a - 1] * p;
    }
    let lay = Layout { n, d, dims, points: p, h: 2.0 * radius / (p - 1) as f64, strides };
    let nodes = p.pow(dims as u32);

    let build = |t: f64| -> Vec<NodeData> { c.controls.iter().map(|a| node_data(mo, &lay, t, eps, a, radius)).collect() };
    let mut data = build(horizon);
    let rate = (0..nodes)
        .into_par_iter()
        .map(|node| (0..n).map(|i| data.iter().map(|nd| player_weight(&lay, nd, node, i)).fold(0.0, f64::max)).sum::<f64>())
        .reduce(|| 0.0, f64::max);
    let limit = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    let steps = match params.steps {
        Some(s) if s > 0 => {
            let dt = horizon / s as f64;
            if params.scheme == Scheme::Explicit && dt > limit * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt, limit });
            }
            s
        }
        Some(_) => return Err(Error::InvalidParameter("steps must be positive".into())),
        None => match params.scheme {
            Scheme::Explicit => (horizon / limit).ceil().max(1.0) as usize,
            Scheme::Implicit => (horizon / (4.0 * limit)).ceil().max(1.0) as usize,
        },
    };
    let dt = horizon / steps as f64;

    let coords: Vec<f64> = (0..p).map(|k| -radius + k as f64 * lay.h).collect();
    let mut v: Vec<f64> = (0..nodes)
        .into_par_iter()
        .map(|node| {
            let x: Vec<f64> = (0..dims).map(|a| coords[lay.coord(node, a)]).collect();
            mo.terminal(&x)
        })
        .collect();
    let mut slices = vec![(horizon, v.clone())];
    let mut next = vec![0.0; nodes];
    for k in (0..steps).rev() {
        let t_now = k as f64 * dt;
        match params.scheme {
            Scheme::Explicit => {
                let data_ref = &data;
                let v_ref = &v;
                next.par_iter_mut().enumerate().for_each(|(node, out)| {
                    let mut hsum = 0.0;
                    for i in 0..n {
                        let mut best = f64::NEG_INFINITY;
                        for nd in data_ref {
                            let (f, sv, sc) = player_parts(&lay, nd, node, i, v_ref);
                            best = best.max(f + sv - sc * v_ref[node]);
                        }
                        hsum += best;
                    }
                    *out = v_ref[node] + dt * hsum;
                });
                std::mem::swap(&mut v, &mut next);
            }
            Scheme::Implicit => {
                let old = v.clone();
                let mut iterations = 0;
                loop {
                    let mut change = 0.0f64;
                    for node in 0..nodes {
                        let (mut fs, mut svs, mut scs) = (0.0, 0.0, 0.0);
                        for i in 0..n {
                            let mut best = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
                            for nd in &data {
                                let (f, sv, sc) = player_parts(&lay, nd, node, i, &v);
                                let val = f + sv - sc * v[node];
                                if val > best.0 {
                                    best = (val, f, sv, sc);
                                }
                            }
                            fs += best.1;
                            svs += best.2;
                            scs += best.3;
                        }
                        let new = (old[node] + dt * (fs + svs)) / (1.0 + dt * scs);
                        change = change.max((new - v[node]).abs());
                        v[node] = new;
                    }
                    iterations += 1;
                    if change <= params.tolerance {
                        break;
                    }
                    if iterations >= 100_000 {
                        return Err(Error::NonConvergence { iterations });
                    }
                }
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { step: steps - k });
        }
        if k % params.store_every == 0 {
            slices.push((t_now, v.clone()));
        }
        if !c.time_homogeneous && k > 0 {
            data = build(t_now);
        }
    }
    slices.reverse();
    let times = slices.iter().map(|(t, _)| *t).collect();
    let values = slices.into_iter().flat_map(|(_, s)| s).collect();
    Ok(ValueGrid {
        header: GridHeader {
            n,
            d,
            m: mo.m,
            eps,
            coefficients: c.name.clone(),
            horizon,
            radius,
            points: p,
            support: params.support,
            times,
            steps,
        },
        values,
    })
}
