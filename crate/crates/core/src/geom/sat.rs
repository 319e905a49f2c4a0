//! Separating-axis overlap test between a triangle and a closed AABB.

use glam::DVec3;

/// True when the triangle touches or penetrates the closed box
/// `[center - half, center + half]`. Touching counts as overlap.
pub fn triangle_box_overlap(center: DVec3, half: DVec3, tri: &[DVec3; 3]) -> bool {
    let v0 = tri[0] - center;
    let v1 = tri[1] - center;
    let v2 = tri[2] - center;
    let e0 = v1 - v0;
    let e1 = v2 - v1;
    let e2 = v0 - v2;

    // Box face normals.
    for axis in 0..3 {
        let lo = v0[axis].min(v1[axis]).min(v2[axis]);
        let hi = v0[axis].max(v1[axis]).max(v2[axis]);
        if lo > half[axis] || hi < -half[axis] {
            return false;
        }
    }

    // Cross products of box axes and triangle edges.
    for edge in [e0, e1, e2] {
        for unit in [DVec3::X, DVec3::Y, DVec3::Z] {
            let axis = unit.cross(edge);
            if separated(axis, half, v0, v1, v2) {
                return false;
            }
        }
    }

    // Triangle plane.
    let normal = e0.cross(e1);
    !separated(normal, half, v0, v1, v2)
}

fn separated(axis: DVec3, half: DVec3, v0: DVec3, v1: DVec3, v2: DVec3) -> bool {
    let p0 = axis.dot(v0);
    let p1 = axis.dot(v1);
    let p2 = axis.dot(v2);
    let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
    let lo = p0.min(p1).min(p2);
    let hi = p0.max(p1).max(p2);
    lo > r || hi < -r
}
