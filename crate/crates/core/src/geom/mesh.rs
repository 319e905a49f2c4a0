//! Collision triangle meshes in a Wavefront-style subset.
//!
//! Only `v x y z` and `f i j k` (1-based) lines carry data. A comment line
//! `# navvox: nav_excluded` marks the whole mesh as excluded from navigation.

use std::fmt::Write as _;
use std::path::Path;

use glam::DVec3;
use log::warn;

use crate::error::{Error, Result};

/// Triangles with area below this (m²) are dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-12;

const EXCLUDED_FLAG: &str = "navvox: nav_excluded";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionMesh {
    pub vertices: Vec<DVec3>,
    pub triangles: Vec<[u32; 3]>,
    pub nav_excluded: bool,
}

impl CollisionMesh {
    /// Validates indices and drops degenerate triangles.
    pub fn new(vertices: Vec<DVec3>, triangles: Vec<[u32; 3]>, nav_excluded: bool) -> Result<Self> {
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len() as u32;
        let mut kept = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.into_iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Invalid(format!(
                    "triangle {t} references vertex out of range ({n} vertices)"
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(c - a).length();
            if area < DEGENERATE_AREA {
                warn!("dropping degenerate triangle {t} (area {area:e})");
                continue;
            }
            kept.push(tri);
        }
        Ok(CollisionMesh {
            vertices,
            triangles: kept,
            nav_excluded,
        })
    }

    pub fn triangle(&self, t: usize) -> [DVec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Closed axis-aligned box as 12 outward-facing triangles.
    pub fn cuboid(min: DVec3, max: DVec3) -> Self {
        let v = |x: bool, y: bool, z: bool| {
            DVec3::new(
                if x { max.x } else { min.x },
                if y { max.y } else { min.y },
                if z { max.z } else { min.z },
            )
        };
        let vertices = vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        CollisionMesh {
            vertices,
            triangles,
            nav_excluded: false,
        }
    }

    /// Concatenates meshes sharing the same exclusion flag.
    pub fn merge(meshes: &[CollisionMesh], nav_excluded: bool) -> Self {
        let mut out = CollisionMesh {
            nav_excluded,
            ..Default::default()
        };
        for m in meshes {
            let base = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&m.vertices);
            out.triangles
                .extend(m.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.nav_excluded {
            let _ = writeln!(out, "# {EXCLUDED_FLAG}");
        }
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut nav_excluded = false;
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim() == EXCLUDED_FLAG {
                    nav_excluded = true;
                }
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next() {
                None => {}
                Some("v") => {
                    let vals: Vec<f64> = toks
                        .map(|t| {
                            t.parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| Error::parse(path, ln, format!("bad coordinate `{t}`")))
                        })
                        .collect::<Result<_>>()?;
                    if vals.len() < 3 {
                        return Err(Error::parse(path, ln, "vertex needs three coordinates"));
                    }
                    vertices.push(DVec3::new(vals[0], vals[1], vals[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = toks
                        .map(|t| {
                            let head = t.split('/').next().unwrap_or(t);
                            match head.parse::<u32>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(Error::parse(path, ln, format!("bad face index `{t}`"))),
                            }
                        })
                        .collect::<Result<_>>()?;
                    let tri: [u32; 3] = idx.try_into().map_err(|v: Vec<u32>| {
                        Error::parse(path, ln, format!("faces must be triangles, got {} indices", v.len()))
                    })?;
                    if tri.iter().any(|&i| i as usize >= vertices.len()) {
                        return Err(Error::parse(path, ln, "face references an undefined vertex"));
                    }
                    triangles.push(tri);
                }
                // Other Wavefront directives carry nothing collision-relevant.
                Some("vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib") => {}
                Some(other) => {
                    return Err(Error::parse(path, ln, format!("unsupported directive `{other}`")))
                }
            }
        }
        CollisionMesh::new(vertices, triangles, nav_excluded)
    }
}

pub fn load_collision_mesh(path: &Path) -> Result<CollisionMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CollisionMesh::parse(&text, path)
}
