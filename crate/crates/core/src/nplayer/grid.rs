//! Value grids on `[0, T] x [-R, R]^{dn}`, their persistence and cubic
//! interpolation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Metadata stored in front of the grid values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub n: usize,
    pub d: usize,
    /// Mollification parameter.
    pub m: usize,
    pub eps: f64,
    pub coefficients: String,
    pub horizon: f64,
    pub radius: f64,
    /// Nodes per axis, including both end points.
    pub points: usize,
    /// Radius of the region of interest inside the box.
    pub support: f64,
    /// Times of the stored slices, increasing.
    pub times: Vec<f64>,
    /// Time steps used by the solver.
    pub steps: usize,
}

/// Grid values `v̄(t_k, x̄)` with axis 0 varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub header: GridHeader,
    pub values: Vec<f64>,
}

/// Cubic Catmull-Rom weights of the four stencil points and their first and
/// second derivatives in the local coordinate `s` in `[0, 1)`.
fn cubic_weights(s: f64) -> [[f64; 4]; 3] {
    let (s2, s3) = (s * s, s * s * s);
    [
        [0.5 * (-s + 2.0 * s2 - s3), 0.5 * (2.0 - 5.0 * s2 + 3.0 * s3), 0.5 * (s + 4.0 * s2 - 3.0 * s3), 0.5 * (-s2 + s3)],
        [0.5 * (-1.0 + 4.0 * s - 3.0 * s2), 0.5 * (-10.0 * s + 9.0 * s2), 0.5 * (1.0 + 8.0 * s - 9.0 * s2), 0.5 * (-2.0 * s + 3.0 * s2)],
        [0.5 * (4.0 - 6.0 * s), 0.5 * (-10.0 + 18.0 * s), 0.5 * (8.0 - 18.0 * s), 0.5 * (-2.0 + 6.0 * s)],
    ]
}

/// Interpolated value with gradient and Hessian in all `dn` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolant {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn dims(&self) -> usize {
        self.header.n * self.header.d
    }

    pub fn nodes_per_slice(&self) -> usize {
        self.header.points.pow(self.dims() as u32)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.header.radius / (self.header.points - 1) as f64
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        -self.header.radius + k as f64 * self.spacing()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let w = self.nodes_per_slice();
        &self.values[k * w..(k + 1) * w]
    }

    /// Multi-index of a flat node index.
    pub fn node_index(&self, mut flat: usize) -> Vec<usize> {
        let p = self.header.points;
        (0..self.dims())
            .map(|_| {
                let k = flat % p;
                flat /= p;
                k
            })
            .collect()
    }

    pub fn node_point(&self, flat: usize) -> Vec<f64> {
        self.node_index(flat).into_iter().map(|k| self.coordinate(k)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.header.radius)
    }

    /// Stored slices bracketing `t` and the linear weight of the later one.
    fn time_bracket(&self, t: f64) -> (usize, usize, f64) {
        let times = &self.header.times;
        if t <= times[0] {
            return (0, 0, 0.0);
        }
        let last = times.len() - 1;
        if t >= times[last] {
            return (last, last, 0.0);
        }
        let k = times.partition_point(|&s| s <= t) - 1;
        let w = (t - times[k]) / (times[k + 1] - times[k]);
        (k, k + 1, w)
    }

    /// Tensor Catmull-Rom interpolation in space of slice `k`, clamping the
    /// stencil at the box faces.
    pub fn interpolate_slice(&self, k: usize, x: &[f64]) -> Interpolant {
        let dims = self.dims();
        let p = self.header.points;
        let h = self.spacing();
        let slice = self.slice(k);
        let mut base = Vec::with_capacity(dims);
        let mut w = Vec::with_capacity(dims);
        for &xa in x {
            let r = ((xa + self.header.radius) / h).clamp(0.0, (p - 1) as f64);
            let i = (r.floor() as usize).min(p - 2);
            base.push(i);
            w.push(cubic_weights(r - i as f64));
        }
        let mut out = Interpolant { value: 0.0, grad: vec![0.0; dims], hess: vec![vec![0.0; dims]; dims] };
        let mut strides = vec![1usize; dims];
        for a in 1..dims {
            strides[a] = strides[a - 1] * p;
        }
        for corner in 0..4usize.pow(dims as u32) {
            let mut c = corner;
            let mut flat = 0;
            let mut offs = [0usize; 8];
            for a in 0..dims {
                let o = c % 4;
                c /= 4;
                offs[a] = o;
                let idx = (base[a] as isize + o as isize - 1).clamp(0, p as isize - 1) as usize;
                flat += idx * strides[a];
            }
            let v = slice[flat];
            let prod = |skip: &[usize], order: &dyn Fn(usize) -> usize| -> f64 {
                let mut r = 1.0;
                for a in 0..dims {
                    let ord = if skip.contains(&a) { order(a) } else { 0 };
                    r *= w[a][ord][offs[a]];
                }
                r
            };
            out.value += v * prod(&[], &|_| 0);
            for i in 0..dims {
                out.grad[i] += v * prod(&[i], &|_| 1) / h;
                for j in 0..dims {
                    let term = if i == j { prod(&[i], &|_| 2) } else { prod(&[i, j], &|_| 1) };
                    out.hess[i][j] += v * term / (h * h);
                }
            }
        }
        out
    }

    /// Interpolation at `(t, x̄)`, linear in time between stored slices.
    pub fn interpolate(&self, t: f64, x: &[f64]) -> Interpolant {
        let (a, b, w) = self.time_bracket(t);
        let mut ia = self.interpolate_slice(a, x);
        if w == 0.0 {
            return ia;
        }
        let ib = self.interpolate_slice(b, x);
        ia.value = (1.0 - w) * ia.value + w * ib.value;
        for (g, gb) in ia.grad.iter_mut().zip(&ib.grad) {
            *g = (1.0 - w) * *g + w * gb;
        }
        for (r, rb) in ia.hess.iter_mut().zip(&ib.hess) {
            for (h, hb) in r.iter_mut().zip(rb) {
                *h = (1.0 - w) * *h + w * hb;
            }
        }
        ia
    }

    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let (a, b, w) = self.time_bracket(t);
        let va = self.interpolate_slice(a, x).value;
        if w == 0.0 {
            va
        } else {
            (1.0 - w) * va + w * self.interpolate_slice(b, x).value
        }
    }

    /// Time derivative of the interpolant, by differences of the bracketing
    /// stored slices.
    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        let times = &self.header.times;
        if times.len() < 2 {
            return 0.0;
        }
        let (mut a, mut b, _) = self.time_bracket(t);
        if a == b {
            if a + 1 < times.len() {
                b = a + 1;
            } else {
                a -= 1;
            }
        }
        (self.interpolate_slice(b, x).value - self.interpolate_slice(a, x).value) / (times[b] - times[a])
    }

    /// Writes a little-endian `u64` header length, the JSON header, then the
    /// values as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(Error::Parse(format!("grid header of {len} bytes is implausible")));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: GridHeader = serde_json::from_slice(&header)?;
        let count = header.times.len() * header.points.pow((header.n * header.d) as u32);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::Parse(format!("expected {} value bytes, found {}", count * 8, bytes.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        Ok(Self { header, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
