use std::fmt::Write;

use anyhow::{ensure, Result};
use cds_core::diffcore::Tensor;
use cds_core::targets::TargetDensity;

/// Layout of a 2-d scatter plot.
#[derive(Clone, Debug)]
pub struct PlotOptions {
    /// Side length of the square canvas in pixels.
    pub size: f64,
    /// Plotted square `[lo, hi]^2`; `None` fits the samples.
    pub extent: Option<(f64, f64)>,
    /// Resolution of the density grid used for contours.
    pub grid: usize,
    /// Contour levels as offsets below the maximum of `log rho` on the grid.
    pub levels: Vec<f64>,
    pub title: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            size: 480.0,
            extent: None,
            grid: 64,
            levels: vec![1.0, 3.0, 6.0],
            title: String::new(),
        }
    }
}

/// Square bounding box of the finite samples, padded by 5%.
fn fit_extent(samples: &Tensor) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in samples.data().iter().filter(|v| v.is_finite()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Segments of the `level` isoline of `values` (an `n x n` grid of nodes at
/// `coord(i)`), by marching squares with linear interpolation along edges.
fn contour_segments(
    values: &[f64],
    n: usize,
    level: f64,
    coord: impl Fn(usize) -> f64,
) -> Vec<[(f64, f64); 2]> {
    let at = |ix: usize, iy: usize| values[iy * n + ix];
    let mut segments = Vec::new();
    for iy in 0..n - 1 {
        for ix in 0..n - 1 {
            // Corners counter-clockwise from bottom-left.
            let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
            let v: Vec<f64> = corners.iter().map(|&(x, y)| at(x, y)).collect();
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (v[a] >= level) != (v[b] >= level) {
                    let s = (level - v[a]) / (v[b] - v[a]);
                    let (pa, pb) = (corners[a], corners[b]);
                    let x = coord(pa.0) + s * (coord(pb.0) - coord(pa.0));
                    let y = coord(pa.1) + s * (coord(pb.1) - coord(pa.1));
                    crossings.push((x, y));
                }
            }
            match crossings.len() {
                2 => segments.push([crossings[0], crossings[1]]),
                4 => {
                    // Saddle: the centre value decides which corners connect.
                    let centre = v.iter().sum::<f64>() / 4.0;
                    if (centre >= level) == (v[0] >= level) {
                        segments.push([crossings[0], crossings[3]]);
                        segments.push([crossings[1], crossings[2]]);
                    } else {
                        segments.push([crossings[0], crossings[1]]);
                        segments.push([crossings[2], crossings[3]]);
                    }
                }
                _ => {}
            }
        }
    }
    segments
}

/// SVG 1.1 scatter of 2-d samples, with `log rho` contours when a density
/// is supplied.
pub fn scatter_svg(
    samples: &Tensor,
    density: Option<&dyn TargetDensity>,
    opts: &PlotOptions,
) -> Result<String> {
    ensure!(
        samples.cols() == 2,
        "scatter plots need 2-d samples, got {}-d",
        samples.cols()
    );
    ensure!(opts.grid >= 2, "contour grid must be at least 2x2");
    let (lo, hi) = opts.extent.unwrap_or_else(|| fit_extent(samples));
    let size = opts.size;
    let px = |x: f64| (x - lo) / (hi - lo) * size;
    let py = |y: f64| size - (y - lo) / (hi - lo) * size;

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    )?;
    if !opts.title.is_empty() {
        writeln!(svg, "<title>{}</title>", escape(&opts.title))?;
    }
    writeln!(
        svg,
        r#"<rect width="{size}" height="{size}" fill="white"/>"#
    )?;

    if let Some(target) = density {
        ensure!(target.dim() == 2, "contours need a 2-d density");
        let n = opts.grid;
        let coord = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let grid = Tensor::from_fn(
            n * n,
            2,
            |k, j| if j == 0 { coord(k % n) } else { coord(k / n) },
        );
        let values = target.log_rho(&grid)?;
        let max = values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            writeln!(
                svg,
                r##"<g fill="none" stroke="#3366cc" stroke-width="1">"##
            )?;
            for offset in &opts.levels {
                let mut d = String::new();
                for [a, b] in contour_segments(&values, n, max - offset, coord) {
                    write!(
                        d,
                        "M{:.2} {:.2}L{:.2} {:.2}",
                        px(a.0),
                        py(a.1),
                        px(b.0),
                        py(b.1)
                    )?;
                }
                if !d.is_empty() {
                    writeln!(svg, r#"<path d="{d}"/>"#)?;
                }
            }
            writeln!(svg, "</g>")?;
        }
    }

    writeln!(svg, r##"<g fill="#d62728" fill-opacity="0.5">"##)?;
    for i in 0..samples.rows() {
        let (x, y) = (samples.row(i)[0], samples.row(i)[1]);
        if x.is_finite() && y.is_finite() && (lo..=hi).contains(&x) && (lo..=hi).contains(&y) {
            writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.2"/>"#,
                px(x),
                py(y)
            )?;
        }
    }
    writeln!(svg, "</g>")?;
    writeln!(svg, "</svg>")?;
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cds_core::targets::GmmTarget;

    #[test]
    fn circle_contour_has_the_right_radius() {
        let n = 65;
        let coord = |i: usize| -2.0 + 4.0 * i as f64 / (n - 1) as f64;
        let values: Vec<f64> = (0..n * n)
            .map(|k| -(coord(k % n).powi(2) + coord(k / n).powi(2)))
            .collect();
        let segs = contour_segments(&values, n, -1.0, coord);
        assert!(segs.len() > 20);
        for [a, b] in segs {
            for p in [a, b] {
                let r = (p.0 * p.0 + p.1 * p.1).sqrt();
                assert!((r - 1.0).abs() < 0.01, "{r}");
            }
        }
    }

    #[test]
    fn plot_contains_points_and_contours() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let gmm = GmmTarget::grid9();
        let svg = scatter_svg(
            &x,
            Some(&gmm),
            &PlotOptions {
                extent: Some((-7.0, 7.0)),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(svg.contains("version=\"1.1\""));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("<path d=\"M"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn rejects_non_planar_samples() {
        let x = Tensor::zeros(&[3, 5]);
        assert!(scatter_svg(&x, None, &PlotOptions::default()).is_err());
    }
}
