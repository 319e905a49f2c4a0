//! Regular-grid terrain heightfield and its `NAVVOX-HF v1` text format.

use std::fmt::Write as _;
use std::path::Path;

use glam::DVec3;

use crate::error::{Error, Result};

pub const HEADER: &str = "NAVVOX-HF v1";

/// Terrain heights sampled on a regular grid. Sample `(i, j)` sits at
/// `origin + (i * cell_size, j * cell_size)` and has world height
/// `origin.z + heights[j * width + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub origin: DVec3,
    pub cell_size: f64,
    pub width: usize,
    pub depth: usize,
    pub heights: Vec<f64>,
}

impl HeightField {
    pub fn new(
        origin: DVec3,
        cell_size: f64,
        width: usize,
        depth: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if width < 2 || depth < 2 {
            return Err(Error::Invalid(format!(
                "heightfield needs at least 2x2 samples, got {width}x{depth}"
            )));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::Invalid(format!("bad cell size {cell_size}")));
        }
        if heights.len() != width * depth {
            return Err(Error::Invalid(format!(
                "expected {} heights, got {}",
                width * depth,
                heights.len()
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite height at sample ({}, {})",
                i % width,
                i / width
            )));
        }
        if !origin.is_finite() {
            return Err(Error::Invalid("non-finite heightfield origin".into()));
        }
        Ok(HeightField {
            origin,
            cell_size,
            width,
            depth,
            heights,
        })
    }

    /// Builds a heightfield by evaluating `f(x, y)` at every sample position.
    pub fn from_fn(
        origin: DVec3,
        cell_size: f64,
        width: usize,
        depth: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(width * depth);
        for j in 0..depth {
            for i in 0..width {
                let x = origin.x + i as f64 * cell_size;
                let y = origin.y + j as f64 * cell_size;
                heights.push(f(x, y) - origin.z);
            }
        }
        HeightField::new(origin, cell_size, width, depth, heights)
    }

    /// World-space heights of all samples, row by row.
    pub fn heights_world(&self) -> impl Iterator<Item = f64> + '_ {
        self.heights.iter().map(|h| self.origin.z + h)
    }

    pub fn sample(&self, i: usize, j: usize) -> f64 {
        self.origin.z + self.heights[j * self.width + i]
    }

    pub fn max_x(&self) -> f64 {
        self.origin.x + (self.width - 1) as f64 * self.cell_size
    }

    pub fn max_y(&self) -> f64 {
        self.origin.y + (self.depth - 1) as f64 * self.cell_size
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin.x && x <= self.max_x() && y >= self.origin.y && y <= self.max_y()
    }

    /// Bilinear interpolation of the four surrounding samples.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok(self.bilinear(x, y))
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin.x) / self.cell_size;
        let fy = (y - self.origin.y) / self.cell_size;
        let i = (fx.floor().max(0.0) as usize).min(self.width - 2);
        let j = (fy.floor().max(0.0) as usize).min(self.depth - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let h00 = self.sample(i, j);
        let h10 = self.sample(i + 1, j);
        let h01 = self.sample(i, j + 1);
        let h11 = self.sample(i + 1, j + 1);
        if tx == 0.0 && ty == 0.0 {
            return h00;
        }
        let a = h00 + (h10 - h00) * tx;
        let b = h01 + (h11 - h01) * tx;
        a + (b - a) * ty
    }

    /// Upward unit normal from central differences with a one-cell stencil.
    /// The stencil must fit inside the footprint.
    pub fn surface_normal(&self, x: f64, y: f64) -> Result<DVec3> {
        let c = self.cell_size;
        if !(x - c >= self.origin.x
            && x + c <= self.max_x()
            && y - c >= self.origin.y
            && y + c <= self.max_y())
        {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok(self.normal_clamped(x, y))
    }

    /// Like [`surface_normal`](Self::surface_normal) but falls back to a
    /// one-sided stencil near the border.
    pub fn normal_clamped(&self, x: f64, y: f64) -> DVec3 {
        let c = self.cell_size;
        let x0 = (x - c).max(self.origin.x);
        let x1 = (x + c).min(self.max_x());
        let y0 = (y - c).max(self.origin.y);
        let y1 = (y + c).min(self.max_y());
        let yc = y.clamp(self.origin.y, self.max_y());
        let xc = x.clamp(self.origin.x, self.max_x());
        let dhdx = (self.bilinear(x1, yc) - self.bilinear(x0, yc)) / (x1 - x0);
        let dhdy = (self.bilinear(xc, y1) - self.bilinear(xc, y0)) / (y1 - y0);
        DVec3::new(-dhdx, -dhdy, 1.0).normalize()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let o = self.origin;
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "origin {} {} {}", o.x, o.y, o.z);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "{} {}", self.width, self.depth);
        for row in self.heights.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let mut next_line = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of file, expected {what}")))
        };

        let (ln, header) = next_line("header")?;
        if header != HEADER {
            return Err(Error::parse(path, ln, format!("expected `{HEADER}`")));
        }

        let (ln, line) = next_line("origin")?;
        let fields = keyed(line, "origin");
        let origin = match parse_floats(&fields, path, ln)?.as_slice() {
            [x, y, z] => DVec3::new(*x, *y, *z),
            _ => return Err(Error::parse(path, ln, "origin needs three values")),
        };

        let (ln, line) = next_line("cell_size")?;
        let cell_size = match parse_floats(&keyed(line, "cell_size"), path, ln)?.as_slice() {
            [c] => *c,
            _ => return Err(Error::parse(path, ln, "cell_size needs one value")),
        };

        let (ln, line) = next_line("width depth")?;
        let dims = keyed(line, "size");
        let dims: Vec<usize> = dims
            .iter()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(path, ln, format!("bad dimension `{t}`")))
            })
            .collect::<Result<_>>()?;
        let (width, depth) = match dims.as_slice() {
            [w, d] => (*w, *d),
            _ => return Err(Error::parse(path, ln, "expected `width depth`")),
        };

        let mut heights = Vec::with_capacity(width * depth);
        let mut last_line = ln;
        for (ln, line) in lines {
            last_line = ln;
            for (col, tok) in line.split_whitespace().enumerate() {
                let h: f64 = tok.parse().map_err(|_| {
                    Error::parse(path, ln, format!("token {} `{tok}` is not a number", col + 1))
                })?;
                if !h.is_finite() {
                    return Err(Error::parse(
                        path,
                        ln,
                        format!("non-finite height `{tok}` at token {}", col + 1),
                    ));
                }
                heights.push(h);
            }
        }
        if heights.len() != width * depth {
            return Err(Error::parse(
                path,
                last_line,
                format!("expected {} heights, found {}", width * depth, heights.len()),
            ));
        }
        HeightField::new(origin, cell_size, width, depth, heights)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Splits a line, dropping a leading keyword if present.
fn keyed<'a>(line: &'a str, key: &str) -> Vec<&'a str> {
    let mut toks: Vec<&str> = line.split_whitespace().collect();
    if toks.first() == Some(&key) {
        toks.remove(0);
    }
    toks
}

fn parse_floats(toks: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| {
            let v: f64 = t
                .parse()
                .map_err(|_| Error::parse(path, line, format!("`{t}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, line, format!("non-finite value `{t}`")))
            }
        })
        .collect()
}

pub fn load_heightfield(path: &Path) -> Result<HeightField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    HeightField::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.hf")
    }

    #[test]
    fn flat_2x2() {
        let text = "NAVVOX-HF v1\norigin 0 0 0\ncell_size 1\n2 2\n0 0\n0 0\n";
        let hf = HeightField::parse(text, p()).unwrap();
        assert_eq!(hf.width, 2);
        assert_eq!(hf.heights, vec![0.0; 4]);
        assert_eq!(hf.height_at(0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn nan_rejected_with_line() {
        let text = "NAVVOX-HF v1\norigin 0 0 0\ncell_size 1\n2 2\n0 0\n0 NaN\n";
        match HeightField::parse(text, p()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("non-finite"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn short_body_and_bad_header() {
        let text = "NAVVOX-HF v1\norigin 0 0 0\ncell_size 1\n2 2\n0 0 0\n";
        assert!(matches!(HeightField::parse(text, p()), Err(Error::Parse { .. })));
        assert!(matches!(
            HeightField::parse("NAVVOX-HF v2\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn too_small() {
        assert!(HeightField::new(DVec3::ZERO, 1.0, 1, 4, vec![0.0; 4]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let hf = HeightField::from_fn(DVec3::new(-1.5, 2.25, 0.1), 0.3, 5, 4, |x, y| {
            (x * 1.7).sin() + y / 3.0
        })
        .unwrap();
        let back = HeightField::parse(&hf.to_text(), p()).unwrap();
        assert_eq!(back, hf);
    }

    #[test]
    fn flat_normal_is_up() {
        let hf = HeightField::from_fn(DVec3::ZERO, 1.0, 5, 5, |_, _| 2.0).unwrap();
        assert_eq!(hf.surface_normal(2.0, 2.0).unwrap(), DVec3::Z);
    }

    #[test]
    fn plane_normal_is_45_degrees() {
        let hf = HeightField::from_fn(DVec3::ZERO, 0.25, 17, 17, |x, _| x).unwrap();
        let n = hf.surface_normal(2.1, 1.3).unwrap();
        assert!((n.length() - 1.0).abs() < 1e-12);
        let theta = n.dot(DVec3::Z).acos();
        assert!((theta - std::f64::consts::FRAC_PI_4).abs() < 1e-9, "{theta}");
    }

    #[test]
    fn normal_out_of_bounds() {
        let hf = HeightField::from_fn(DVec3::ZERO, 1.0, 4, 4, |_, _| 0.0).unwrap();
        assert!(matches!(
            hf.surface_normal(0.5, 1.5),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(hf.surface_normal(1.5, 1.5).is_ok());
    }
}
