use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, TargetDensity};
use crate::diffcore::Tensor;
use crate::error::{contract_err, Result};
use crate::math::{exp, ln, sqrt};

/// Pixels below this fraction of the brightest one are raised to it.
pub const IMAGE_FLOOR: f64 = 1e-6;

/// Density from a grayscale picture on a square domain.
///
/// Pixel values sit on the vertices of a regular grid spanning the domain
/// (first row at the top edge) and are interpolated bilinearly. Outside the
/// domain the density continues from its boundary value with a Gaussian
/// falloff of width `tail_scale`, so `log rho` is finite everywhere. All of
/// these pieces integrate in closed form, so the density is normalized
/// exactly and ground-truth sampling is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTarget {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    lo: f64,
    hi: f64,
    tail_scale: f64,
    /// Component masses in sampling order: cells, then edge segments
    /// (top, bottom, left, right), then corners; cumulative.
    cumulative: Vec<f64>,
}

enum Piece {
    Cell {
        row: usize,
        col: usize,
    },
    /// Edge segment `k` of side `side` (0 top, 1 bottom, 2 left, 3 right).
    Edge {
        side: usize,
        k: usize,
    },
    Corner {
        side_x: f64,
        side_y: f64,
    },
}

impl ImageTarget {
    /// `pixels` is row-major with the first row at the top of the picture.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: &[f64],
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if width < 2 || height < 2 || pixels.len() != width * height {
            return Err(contract_err!(
                "image needs at least 2x2 pixels and width*height values"
            ));
        }
        if !(hi > lo) {
            return Err(contract_err!("image domain must have positive width"));
        }
        if pixels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(contract_err!(
                "pixel values must be finite and non-negative"
            ));
        }
        let max = pixels.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(contract_err!("image is entirely black"));
        }
        let floor = IMAGE_FLOOR * max;
        let pixels: Vec<f64> = pixels.iter().map(|&p| p.max(floor) / max).collect();
        let mut t = Self {
            width,
            height,
            pixels,
            lo,
            hi,
            tail_scale: 0.05 * (hi - lo) / 8.0,
            cumulative: Vec::new(),
        };
        let masses = t.piece_masses();
        let total: f64 = masses.iter().sum();
        t.pixels.iter_mut().for_each(|p| *p /= total);
        let mut acc = 0.0;
        t.cumulative = masses
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(t)
    }

    /// A procedural 48x48 face on `[-4, 4]^2`: a ring, two eyes and a mouth.
    pub fn builtin() -> Self {
        let n = 48;
        let mut pixels = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let x = -4.0 + 8.0 * c as f64 / (n - 1) as f64;
                let y = 4.0 - 8.0 * r as f64 / (n - 1) as f64;
                let blob = |cx: f64, cy: f64, s: f64| {
                    exp(-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s))
                };
                let radius = sqrt(x * x + y * y);
                let ring = exp(-(radius - 2.8).powi(2) / (2.0 * 0.25 * 0.25));
                let mouth =
                    exp(-(sqrt(x * x + (y - 0.3).powi(2)) - 1.6).powi(2) / (2.0 * 0.18 * 0.18))
                        * if y < -0.2 { 1.0 } else { 0.0 };
                pixels.push(ring + 1.5 * blob(-1.0, 0.9, 0.3) + 1.5 * blob(1.0, 0.9, 0.3) + mouth);
            }
        }
        Self::from_pixels(n, n, &pixels, -4.0, 4.0).expect("valid procedural image")
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn hx(&self) -> f64 {
        (self.hi - self.lo) / (self.width - 1) as f64
    }

    fn hy(&self) -> f64 {
        (self.hi - self.lo) / (self.height - 1) as f64
    }

    fn px(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    /// `int_0^inf exp(-r^2 / (2 s^2)) dr`.
    fn tail_mass(&self) -> f64 {
        self.tail_scale * sqrt(0.5 * core::f64::consts::PI)
    }

    fn edge_values(&self, side: usize, k: usize) -> (f64, f64, f64) {
        let (w, h) = (self.width, self.height);
        match side {
            0 => (self.px(0, k), self.px(0, k + 1), self.hx()),
            1 => (self.px(h - 1, k), self.px(h - 1, k + 1), self.hx()),
            2 => (self.px(k, 0), self.px(k + 1, 0), self.hy()),
            _ => (self.px(k, w - 1), self.px(k + 1, w - 1), self.hy()),
        }
    }

    fn edge_len(&self, side: usize) -> usize {
        if side < 2 {
            self.width - 1
        } else {
            self.height - 1
        }
    }

    fn corners(&self) -> [(f64, f64, f64); 4] {
        let (w, h) = (self.width, self.height);
        [
            (-1.0, 1.0, self.px(0, 0)),
            (1.0, 1.0, self.px(0, w - 1)),
            (-1.0, -1.0, self.px(h - 1, 0)),
            (1.0, -1.0, self.px(h - 1, w - 1)),
        ]
    }

    fn piece_masses(&self) -> Vec<f64> {
        let (hx, hy) = (self.hx(), self.hy());
        let mut m = Vec::new();
        for r in 0..self.height - 1 {
            for c in 0..self.width - 1 {
                let s =
                    self.px(r, c) + self.px(r, c + 1) + self.px(r + 1, c) + self.px(r + 1, c + 1);
                m.push(0.25 * s * hx * hy);
            }
        }
        let tail = self.tail_mass();
        for side in 0..4 {
            for k in 0..self.edge_len(side) {
                let (a, b, len) = self.edge_values(side, k);
                m.push(0.5 * (a + b) * len * tail);
            }
        }
        for (_, _, v) in self.corners() {
            m.push(v * tail * tail);
        }
        m
    }

    fn piece(&self, index: usize) -> Piece {
        let cells = (self.width - 1) * (self.height - 1);
        if index < cells {
            return Piece::Cell {
                row: index / (self.width - 1),
                col: index % (self.width - 1),
            };
        }
        let mut rest = index - cells;
        for side in 0..4 {
            let n = self.edge_len(side);
            if rest < n {
                return Piece::Edge { side, k: rest };
            }
            rest -= n;
        }
        let (side_x, side_y, _) = self.corners()[rest];
        Piece::Corner { side_x, side_y }
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let cx = x.clamp(self.lo, self.hi);
        let cy = y.clamp(self.lo, self.hi);
        let u = (cx - self.lo) / self.hx();
        let v = (self.hi - cy) / self.hy();
        let c0 = (u as usize).min(self.width - 2);
        let r0 = (v as usize).min(self.height - 2);
        let (fu, fv) = (u - c0 as f64, v - r0 as f64);
        let top = self.px(r0, c0) * (1.0 - fu) + self.px(r0, c0 + 1) * fu;
        let bottom = self.px(r0 + 1, c0) * (1.0 - fu) + self.px(r0 + 1, c0 + 1) * fu;
        let inside = top * (1.0 - fv) + bottom * fv;
        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if d2 == 0.0 {
            inside
        } else {
            inside * exp(-0.5 * d2 / (self.tail_scale * self.tail_scale))
        }
    }

    fn log_density(&self, x: f64, y: f64) -> f64 {
        let cx = x.clamp(self.lo, self.hi);
        let cy = y.clamp(self.lo, self.hi);
        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        ln(self.density(cx, cy)) - 0.5 * d2 / (self.tail_scale * self.tail_scale)
    }
}

/// Draw from `p(u) ~ a (1 - u) + b u` on `[0, 1]`.
fn linear_draw(a: f64, b: f64, rng: &mut dyn RngCore) -> f64 {
    let pick: f64 = rng.random();
    let u: f64 = rng.random();
    if pick * (a + b) < a {
        1.0 - sqrt(u)
    } else {
        sqrt(u)
    }
}

fn half_normal(scale: f64, rng: &mut dyn RngCore) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    scale * z.abs()
}

impl TargetDensity for ImageTarget {
    fn name(&self) -> String {
        "image".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_dim(x, 2)?;
        Ok((0..x.rows())
            .map(|i| self.log_density(x.row(i)[0], x.row(i)[1]))
            .collect())
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(0.0)
    }

    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        let (hx, hy) = (self.hx(), self.hy());
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let idx = self
                .cumulative
                .partition_point(|&c| c < u)
                .min(self.cumulative.len() - 1);
            let (x, y) = match self.piece(idx) {
                Piece::Cell { row, col } => {
                    let (a, b) = (self.px(row, col), self.px(row, col + 1));
                    let (c, d) = (self.px(row + 1, col), self.px(row + 1, col + 1));
                    let fu = linear_draw(a + c, b + d, rng);
                    let fv = linear_draw(a * (1.0 - fu) + b * fu, c * (1.0 - fu) + d * fu, rng);
                    (
                        self.lo + (col as f64 + fu) * hx,
                        self.hi - (row as f64 + fv) * hy,
                    )
                }
                Piece::Edge { side, k } => {
                    let (a, b, _) = self.edge_values(side, k);
                    let f = linear_draw(a, b, rng);
                    let out = half_normal(self.tail_scale, rng);
                    match side {
                        0 => (self.lo + (k as f64 + f) * hx, self.hi + out),
                        1 => (self.lo + (k as f64 + f) * hx, self.lo - out),
                        2 => (self.lo - out, self.hi - (k as f64 + f) * hy),
                        _ => (self.hi + out, self.hi - (k as f64 + f) * hy),
                    }
                }
                Piece::Corner { side_x, side_y } => {
                    let bx = if side_x > 0.0 { self.hi } else { self.lo };
                    let by = if side_y > 0.0 { self.hi } else { self.lo };
                    (
                        bx + side_x * half_normal(self.tail_scale, rng),
                        by + side_y * half_normal(self.tail_scale, rng),
                    )
                }
            };
            data.push(x);
            data.push(y);
        }
        Tensor::matrix(n, 2, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riemann_mass(t: &ImageTarget, f: impl Fn(f64, f64) -> f64) -> f64 {
        let (lo, hi) = (-4.6, 4.6);
        let n = 1500;
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                let y = lo + (j as f64 + 0.5) * h;
                s += t.density(x, y) * f(x, y);
            }
        }
        s * h * h
    }

    #[test]
    fn density_integrates_to_one() {
        let t = ImageTarget::builtin();
        let mass = riemann_mass(&t, |_, _| 1.0);
        assert!((mass - 1.0).abs() < 2e-3, "{mass}");
        assert!((t.cumulative.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_density_is_finite_far_away() {
        let t = ImageTarget::builtin();
        let x = Tensor::from_rows(&[
            alloc::vec![1e3, -1e3],
            alloc::vec![0.0, 0.0],
            alloc::vec![4.0, 4.0],
        ])
        .unwrap();
        assert!(t.log_rho(&x).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn exact_samples_reproduce_the_mean() {
        let pixels: Vec<f64> = (0..12)
            .map(|k| (k % 5) as f64 + 0.5 * (k / 4) as f64)
            .collect();
        let t = ImageTarget::from_pixels(4, 3, &pixels, -4.0, 4.0).unwrap();
        let mx = riemann_mass(&t, |x, _| x);
        let my = riemann_mass(&t, |_, y| y);
        let s = t.gt_sample(200_000, &mut crate::seeded_rng(25, 0)).unwrap();
        let n = s.rows() as f64;
        let ex = (0..s.rows()).map(|i| s.row(i)[0]).sum::<f64>() / n;
        let ey = (0..s.rows()).map(|i| s.row(i)[1]).sum::<f64>() / n;
        assert!((ex - mx).abs() < 0.03, "{ex} vs {mx}");
        assert!((ey - my).abs() < 0.03, "{ey} vs {my}");
    }

    #[test]
    fn rejects_degenerate_images() {
        assert!(ImageTarget::from_pixels(1, 3, &[1.0; 3], -4.0, 4.0).is_err());
        assert!(ImageTarget::from_pixels(2, 2, &[0.0; 4], -4.0, 4.0).is_err());
        assert!(ImageTarget::from_pixels(2, 2, &[1.0; 3], -4.0, 4.0).is_err());
    }
}
