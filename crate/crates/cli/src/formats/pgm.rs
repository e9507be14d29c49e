use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

/// A grayscale image with intensities scaled to `[0, 1]`, row-major from the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

/// Parses ASCII ("P2") PGM text; `#` starts a comment running to end of line.
pub fn parse_pgm(text: &str) -> Result<Pgm> {
    let mut tokens = text
        .lines()
        .flat_map(|line| line.split('#').next().unwrap_or("").split_whitespace());
    let magic = tokens.next().context("empty PGM file")?;
    if magic != "P2" {
        bail!("unsupported PGM variant '{magic}' (only ASCII P2 is supported)");
    }
    let mut number = |what: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .with_context(|| format!("PGM ended before {what}"))?;
        tok.parse::<usize>()
            .with_context(|| format!("bad PGM {what} '{tok}'"))
    };
    let (width, height, maxval) = (number("width")?, number("height")?, number("maxval")?);
    ensure!(width > 0 && height > 0, "PGM has zero size");
    ensure!(
        (1..=65535).contains(&maxval),
        "PGM maxval {maxval} out of range"
    );
    let mut pixels = Vec::with_capacity(width * height);
    for k in 0..width * height {
        let v = number("pixel")?;
        ensure!(v <= maxval, "pixel {k} value {v} exceeds maxval {maxval}");
        pixels.push(v as f64 / maxval as f64);
    }
    Ok(Pgm {
        width,
        height,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_pgm(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let p = parse_pgm("P2\n# a comment\n3 2\n4\n0 1 2 # trailing\n3 4 0\n").unwrap();
        assert_eq!((p.width, p.height), (3, 2));
        assert_eq!(p.pixels, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_pgm("P5\n1 1\n255\n0").is_err());
        assert!(parse_pgm("P2\n2 2\n255\n0 1 2").is_err());
        assert!(parse_pgm("P2\n1 1\n10\n11").is_err());
        assert!(parse_pgm("").is_err());
    }
}
