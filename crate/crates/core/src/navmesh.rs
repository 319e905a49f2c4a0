//! Navigation mesh model and the query layer: point projection and
//! polygon-graph reachability.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: &str = "NAVVOX-NM v1";

/// Planarity tolerance for polygon vertices, m.
pub const PLANAR_TOL: f64 = 1e-4;

/// Snap tolerances for projecting world points onto the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavQueryConfig {
    pub proj_radius: f64,
    pub height_tol: f64,
}

impl NavQueryConfig {
    /// Defaults tied to the voxel resolution and step height. The snap
    /// radius stays well below half a cell so a point never snaps onto the
    /// polygons of a neighboring cell.
    pub fn for_agent(resolution: f64, h_step: f64) -> Self {
        NavQueryConfig {
            proj_radius: resolution / 8.0,
            height_tol: h_step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.proj_radius > 0.0 && self.height_tol > 0.0) {
            return Err(Error::Invalid(format!("navmesh query tolerances must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    normal: DVec3,
    d: f64,
}

impl Plane {
    fn height(&self, x: f64, y: f64) -> f64 {
        (self.d - self.normal.x * x - self.normal.y * y) / self.normal.z
    }
}

/// Convex-polygon navigation mesh. Immutable after construction; polygon
/// adjacency and component labels are computed once.
#[derive(Debug, Clone)]
pub struct NavMesh {
    vertices: Vec<DVec3>,
    polygons: Vec<Vec<u32>>,
    adjacency: Vec<Vec<u32>>,
    planes: Vec<Plane>,
    bounds: Vec<(DVec2, DVec2)>,
    components: Vec<u32>,
    component_count: usize,
    bucket: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl NavMesh {
    /// Validates polygons (convex, CCW from above, planar, manifold) and
    /// derives adjacency from shared vertex-index edges. Polygons may carry
    /// collinear vertices, so two neighbors can share several edge segments.
    pub fn new(vertices: Vec<DVec3>, polygons: Vec<Vec<u32>>) -> Result<Self> {
        let mut planes = Vec::with_capacity(polygons.len());
        let mut bounds = Vec::with_capacity(polygons.len());
        for (pi, poly) in polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(Error::Invalid(format!("polygon {} has fewer than 3 vertices", pi + 1)));
            }
            if let Some(bad) = poly.iter().find(|&&v| v as usize >= vertices.len()) {
                return Err(Error::Invalid(format!("polygon {} references missing vertex {}", pi + 1, bad + 1)));
            }
            let pts: Vec<DVec3> = poly.iter().map(|&v| vertices[v as usize]).collect();
            check_convex(&pts).map_err(|_| Error::NonConvex(pi))?;
            planes.push(fit_plane(&pts).ok_or(Error::NonPlanar(pi))?);
            let lo = pts.iter().fold(DVec2::splat(f64::INFINITY), |a, p| a.min(p.truncate()));
            let hi = pts.iter().fold(DVec2::splat(f64::NEG_INFINITY), |a, p| a.max(p.truncate()));
            bounds.push((lo, hi));
        }

        let mut edges: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for (pi, poly) in polygons.iter().enumerate() {
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                let users = edges.entry((a.min(b), a.max(b))).or_default();
                users.push(pi as u32);
                if users.len() > 2 {
                    return Err(Error::NonManifold(a as usize, b as usize));
                }
            }
        }
        let mut adjacency = vec![Vec::new(); polygons.len()];
        for users in edges.values() {
            if let [a, b] = users[..] {
                if a != b {
                    adjacency[a as usize].push(b);
                    adjacency[b as usize].push(a);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }

        let (components, component_count) = label_components(&adjacency);

        let mean_extent = if bounds.is_empty() {
            1.0
        } else {
            bounds.iter().map(|(lo, hi)| (*hi - *lo).max_element()).sum::<f64>() / bounds.len() as f64
        };
        let bucket = mean_extent.max(1e-3);
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (pi, (lo, hi)) in bounds.iter().enumerate() {
            let (x0, y0) = bucket_of(*lo, bucket);
            let (x1, y1) = bucket_of(*hi, bucket);
            for bx in x0..=x1 {
                for by in y0..=y1 {
                    buckets.entry((bx, by)).or_default().push(pi as u32);
                }
            }
        }

        Ok(NavMesh {
            vertices,
            polygons,
            adjacency,
            planes,
            bounds,
            components,
            component_count,
            bucket,
            buckets,
        })
    }

    pub fn vertices(&self) -> &[DVec3] {
        &self.vertices
    }

    /// Polygons as 0-based vertex indices.
    pub fn polygons(&self) -> &[Vec<u32>] {
        &self.polygons
    }

    pub fn polygon_count(&self) -> usize {
        self.polygons.len()
    }

    pub fn adjacency(&self, poly: u32) -> &[u32] {
        &self.adjacency[poly as usize]
    }

    pub fn component(&self, poly: u32) -> u32 {
        self.components[poly as usize]
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Height of the polygon's plane at `(x, y)`.
    pub fn polygon_height(&self, poly: u32, x: f64, y: f64) -> f64 {
        self.planes[poly as usize].height(x, y)
    }

    pub fn centroid(&self, poly: u32) -> DVec3 {
        let poly = &self.polygons[poly as usize];
        poly.iter().map(|&v| self.vertices[v as usize]).sum::<DVec3>() / poly.len() as f64
    }

    fn footprint(&self, poly: u32) -> Vec<DVec2> {
        self.polygons[poly as usize]
            .iter()
            .map(|&v| self.vertices[v as usize].truncate())
            .collect()
    }

    /// Closest point of the polygon footprint to `q` and its distance
    /// (zero when `q` lies inside).
    pub fn closest_xy(&self, poly: u32, q: DVec2) -> (DVec2, f64) {
        closest_in_convex(&self.footprint(poly), q)
    }

    /// Horizontal distance from `q` to the nearest polygon accepted by `keep`.
    pub fn distance_xy_to(&self, q: DVec2, keep: impl Fn(u32) -> bool) -> f64 {
        (0..self.polygons.len() as u32)
            .filter(|&p| keep(p))
            .map(|p| {
                let (lo, hi) = self.bounds[p as usize];
                (lo, hi, p)
            })
            .fold(f64::INFINITY, |best, (lo, hi, p)| {
                let gap = (lo - q).max(q - hi).max(DVec2::ZERO).length();
                if gap >= best {
                    best
                } else {
                    best.min(self.closest_xy(p, q).1)
                }
            })
    }

    /// Polygon `p` projects onto: candidates whose footprint contains `p`'s
    /// (x, y) win over those merely within `proj_radius`; among the winning
    /// group the smallest vertical distance (within `height_tol`) is chosen,
    /// ties going to the lowest id.
    pub fn project_point(&self, p: DVec3, cfg: &NavQueryConfig) -> Option<u32> {
        let q = p.truncate();
        let (x0, y0) = bucket_of(q - DVec2::splat(cfg.proj_radius), self.bucket);
        let (x1, y1) = bucket_of(q + DVec2::splat(cfg.proj_radius), self.bucket);
        let mut candidates = Vec::new();
        for bx in x0..=x1 {
            for by in y0..=y1 {
                if let Some(list) = self.buckets.get(&(bx, by)) {
                    candidates.extend_from_slice(list);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        self.pick(p, cfg, candidates.into_iter())
    }

    /// Same rule as [`project_point`](Self::project_point) over every polygon.
    pub fn project_point_brute(&self, p: DVec3, cfg: &NavQueryConfig) -> Option<u32> {
        self.pick(p, cfg, 0..self.polygons.len() as u32)
    }

    fn pick(&self, p: DVec3, cfg: &NavQueryConfig, candidates: impl Iterator<Item = u32>) -> Option<u32> {
        let q = p.truncate();
        // (contained?, vertical distance, id) compared lexicographically.
        let mut best: Option<(bool, f64, u32)> = None;
        for poly in candidates {
            let (lo, hi) = self.bounds[poly as usize];
            let r = cfg.proj_radius;
            if q.x < lo.x - r || q.x > hi.x + r || q.y < lo.y - r || q.y > hi.y + r {
                continue;
            }
            let (c, dist) = self.closest_xy(poly, q);
            if dist > cfg.proj_radius {
                continue;
            }
            let dz = (p.z - self.polygon_height(poly, c.x, c.y)).abs();
            if dz > cfg.height_tol {
                continue;
            }
            let inside = dist == 0.0;
            let better = match best {
                None => true,
                Some((b_in, b_dz, b_id)) => {
                    (inside && !b_in) || (inside == b_in && (dz < b_dz || (dz == b_dz && poly < b_id)))
                }
            };
            if better {
                best = Some((inside, dz, poly));
            }
        }
        best.map(|(_, _, id)| id)
    }

    /// Whether `seed` and `query` project into the same polygon component.
    /// An off-mesh seed is an error; an off-mesh query is unreachable.
    pub fn nav_reachable(&self, seed: DVec3, query: DVec3, cfg: &NavQueryConfig) -> Result<bool> {
        let s = self.project_point(seed, cfg).ok_or(Error::SeedOffMesh {
            x: seed.x,
            y: seed.y,
            z: seed.z,
        })?;
        Ok(self
            .project_point(query, cfg)
            .is_some_and(|q| self.components[q as usize] == self.components[s as usize]))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for poly in &self.polygons {
            out.push('p');
            for &i in poly {
                let _ = write!(out, " {}", i + 1);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut polygons = Vec::new();
        let mut seen_header = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != HEADER {
                    return Err(Error::parse(path, line_no, format!("expected header `{HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let xyz: Vec<f64> = parts
                        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<_>>()
                        .ok_or_else(|| Error::parse(path, line_no, "vertex coordinates must be finite numbers"))?;
                    if xyz.len() != 3 {
                        return Err(Error::parse(path, line_no, "vertex needs exactly 3 coordinates"));
                    }
                    vertices.push(DVec3::new(xyz[0], xyz[1], xyz[2]));
                }
                Some("p") => {
                    let idx: Vec<u32> = parts
                        .map(|t| t.parse::<u32>().ok().filter(|&i| i >= 1).map(|i| i - 1))
                        .collect::<Option<_>>()
                        .ok_or_else(|| Error::parse(path, line_no, "polygon indices must be 1-based integers"))?;
                    if idx.len() < 3 {
                        return Err(Error::parse(path, line_no, "polygon needs at least 3 vertices"));
                    }
                    polygons.push(idx);
                }
                Some(other) => {
                    return Err(Error::parse(path, line_no, format!("unknown directive `{other}`")));
                }
                None => {}
            }
        }
        if !seen_header {
            return Err(Error::parse(path, 1, format!("missing header `{HEADER}`")));
        }
        NavMesh::new(vertices, polygons)
    }
}

pub fn load_navmesh(path: &Path) -> Result<NavMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NavMesh::parse(&text, path)
}

fn bucket_of(p: DVec2, size: f64) -> (i64, i64) {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
}

fn cross2(a: DVec2, b: DVec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Convex and counter-clockwise seen from +z; collinear vertices allowed.
fn check_convex(pts: &[DVec3]) -> std::result::Result<(), ()> {
    let n = pts.len();
    let xy: Vec<DVec2> = pts.iter().map(|p| p.truncate()).collect();
    let scale = xy.iter().fold(0.0f64, |m, p| m.max(p.abs().max_element())).max(1.0);
    let eps = 1e-9 * scale * scale;
    let area: f64 = (0..n).map(|i| cross2(xy[i], xy[(i + 1) % n])).sum::<f64>() * 0.5;
    if area <= eps {
        return Err(());
    }
    let mut turning = 0.0;
    for i in 0..n {
        let a = xy[i];
        let b = xy[(i + 1) % n];
        let c = xy[(i + 2) % n];
        let (e1, e2) = (b - a, c - b);
        if e1.length_squared() == 0.0 {
            return Err(());
        }
        let cr = cross2(e1, e2);
        if cr < -eps {
            return Err(());
        }
        turning += cr.atan2(e1.dot(e2));
    }
    // Star-shaped self-intersecting outlines turn more than once around.
    if (turning - std::f64::consts::TAU).abs() > 1e-6 {
        return Err(());
    }
    Ok(())
}

/// Newell plane; `None` when a vertex strays more than [`PLANAR_TOL`] or the
/// polygon is vertical.
fn fit_plane(pts: &[DVec3]) -> Option<Plane> {
    let n = pts.len();
    let mut normal = DVec3::ZERO;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        normal += DVec3::new((a.y - b.y) * (a.z + b.z), (a.z - b.z) * (a.x + b.x), (a.x - b.x) * (a.y + b.y));
    }
    let normal = normal.try_normalize()?;
    if normal.z <= 1e-9 {
        return None;
    }
    let centroid = pts.iter().sum::<DVec3>() / n as f64;
    let d = normal.dot(centroid);
    pts.iter()
        .all(|p| (normal.dot(*p) - d).abs() <= PLANAR_TOL)
        .then_some(Plane { normal, d })
}

fn closest_in_convex(poly: &[DVec2], q: DVec2) -> (DVec2, f64) {
    let n = poly.len();
    let inside = (0..n).all(|i| cross2(poly[(i + 1) % n] - poly[i], q - poly[i]) >= 0.0);
    if inside {
        return (q, 0.0);
    }
    let mut best = (poly[0], f64::INFINITY);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let ab = b - a;
        let t = ((q - a).dot(ab) / ab.length_squared()).clamp(0.0, 1.0);
        let c = a + ab * t;
        let d = c.distance(q);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn label_components(adjacency: &[Vec<u32>]) -> (Vec<u32>, usize) {
    let mut label = vec![u32::MAX; adjacency.len()];
    let mut count = 0u32;
    for start in 0..adjacency.len() {
        if label[start] != u32::MAX {
            continue;
        }
        label[start] = count;
        let mut queue = VecDeque::from([start as u32]);
        while let Some(p) = queue.pop_front() {
            for &n in &adjacency[p as usize] {
                if label[n as usize] == u32::MAX {
                    label[n as usize] = count;
                    queue.push_back(n);
                }
            }
        }
        count += 1;
    }
    (label, count as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quads() -> NavMesh {
        let v = vec![
            DVec3::new(0.0, 0.0, 0.0),
            DVec3::new(1.0, 0.0, 0.0),
            DVec3::new(1.0, 1.0, 0.0),
            DVec3::new(0.0, 1.0, 0.0),
            DVec3::new(2.0, 0.0, 0.0),
            DVec3::new(2.0, 1.0, 0.0),
        ];
        NavMesh::new(v, vec![vec![0, 1, 2, 3], vec![1, 4, 5, 2]]).unwrap()
    }

    fn cfg() -> NavQueryConfig {
        NavQueryConfig {
            proj_radius: 0.1,
            height_tol: 0.5,
        }
    }

    #[test]
    fn single_quad_has_no_neighbors() {
        let text = "NAVVOX-NM v1\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\np 1 2 3 4\n";
        let m = NavMesh::parse(text, Path::new("q")).unwrap();
        assert_eq!(m.polygon_count(), 1);
        assert!(m.adjacency(0).is_empty());
    }

    #[test]
    fn shared_edge_adjacency_and_round_trip() {
        let m = quads();
        assert_eq!(m.adjacency(0), &[1]);
        assert_eq!(m.adjacency(1), &[0]);
        let again = NavMesh::parse(&m.to_text(), Path::new("rt")).unwrap();
        assert_eq!(again.to_text(), m.to_text());
    }

    #[test]
    fn rejects_bad_polygons() {
        let v = vec![
            DVec3::new(0.0, 0.0, 0.0),
            DVec3::new(1.0, 0.0, 0.0),
            DVec3::new(0.2, 0.2, 0.0),
            DVec3::new(0.0, 1.0, 0.0),
        ];
        assert!(matches!(NavMesh::new(v.clone(), vec![vec![0, 1, 2, 3]]), Err(Error::NonConvex(0))));
        assert!(matches!(NavMesh::new(v.clone(), vec![vec![0, 3, 1]]), Err(Error::NonConvex(0))));
        let mut bent = quads().vertices().to_vec();
        bent[2].z = 0.01;
        assert!(matches!(NavMesh::new(bent, vec![vec![0, 1, 2, 3]]), Err(Error::NonPlanar(0))));
        let t = vec![DVec3::ZERO, DVec3::X, DVec3::Y, DVec3::new(1.0, 1.0, 0.0), DVec3::new(-1.0, 0.5, 0.0)];
        let fan = vec![vec![0, 1, 2], vec![1, 3, 2], vec![0, 2, 4]];
        assert!(NavMesh::new(t.clone(), fan).is_ok());
        let triple = vec![vec![0, 1, 2], vec![1, 0, 3], vec![0, 1, 4]];
        let three = vec![DVec3::ZERO, DVec3::X, DVec3::Y, DVec3::new(0.5, -1.0, 0.0), DVec3::new(0.5, 2.0, 1.0)];
        assert!(matches!(NavMesh::new(three, triple), Err(Error::NonManifold(0, 1))));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = NavMesh::parse("NAVVOX-NM v1\nv 0 0\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(NavMesh::parse("v 0 0 0\n", Path::new("x")).is_err());
    }

    #[test]
    fn projection_basics() {
        let m = quads();
        let c = cfg();
        assert_eq!(m.project_point(DVec3::new(0.5, 0.5, 0.0), &c), Some(0));
        assert_eq!(m.project_point(DVec3::new(1.5, 0.5, 0.2), &c), Some(1));
        assert_eq!(m.project_point(DVec3::new(0.5, 0.5, 10.0), &c), None);
        assert_eq!(m.project_point(DVec3::new(2.05, 0.5, 0.0), &c), Some(1));
        assert_eq!(m.project_point(DVec3::new(2.5, 0.5, 0.0), &c), None);
        // Shared edge: both contain it, lowest id wins.
        assert_eq!(m.project_point(DVec3::new(1.0, 0.5, 0.0), &c), Some(0));
    }

    #[test]
    fn reachability_and_seed_errors() {
        let m = quads();
        let c = cfg();
        let seed = DVec3::new(0.5, 0.5, 0.0);
        assert!(m.nav_reachable(seed, DVec3::new(1.5, 0.5, 0.0), &c).unwrap());
        assert!(!m.nav_reachable(seed, DVec3::new(5.0, 0.5, 0.0), &c).unwrap());
        assert!(matches!(
            m.nav_reachable(DVec3::new(9.0, 9.0, 0.0), seed, &c),
            Err(Error::SeedOffMesh { .. })
        ));
    }

    #[test]
    fn sloped_polygon_height() {
        let v = vec![DVec3::new(0.0, 0.0, 0.0), DVec3::new(2.0, 0.0, 1.0), DVec3::new(0.0, 2.0, 0.0)];
        let m = NavMesh::new(v, vec![vec![0, 1, 2]]).unwrap();
        assert!((m.polygon_height(0, 1.0, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(m.project_point(DVec3::new(1.0, 0.5, 0.5), &cfg()), Some(0));
    }
}
