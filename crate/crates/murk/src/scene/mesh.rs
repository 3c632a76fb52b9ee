//! Closed triangle meshes with a BVH and a watertight ray-triangle
//! intersector.
//!
//! The intersector is the shear/edge-function formulation: the ray is
//! transformed so it travels along +z, triangle vertices are sheared into
//! that frame, and 2D signed edge functions decide coverage. Points exactly
//! on a shared edge or vertex then satisfy the coverage test for every
//! adjacent triangle, so rays crossing the surface always find at least one
//! hit — duplicates are possible on edges, leaks are not. Only the nearest
//! hit is consumed by callers, which makes duplicates harmless.

use crate::math::{vec3, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct MeshHit {
    pub t: f64,
    /// Geometric outward normal of the hit triangle (unit length).
    pub normal: Vec3,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    /// Triangle vertex indices, counter-clockwise seen from outside.
    pub indices: Vec<[u32; 3]>,
    nodes: Vec<BvhNode>,
    /// Triangle order after BVH construction.
    tri_order: Vec<u32>,
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vec3,
    hi: Vec3,
    /// Leaf nodes have `count > 0` triangles starting at `first` in
    /// `tri_order`. Inner nodes have `count == 0`, their left child directly
    /// after them and their right child at `right`.
    first: u32,
    count: u32,
    right: u32,
}

const LEAF_SIZE: usize = 4;

impl TriMesh {
    pub fn build(positions: Vec<Vec3>, indices: Vec<[u32; 3]>) -> Self {
        let mut mesh = TriMesh {
            positions,
            indices,
            nodes: Vec::new(),
            tri_order: Vec::new(),
        };
        mesh.tri_order = (0..mesh.indices.len() as u32).collect();
        if !mesh.indices.is_empty() {
            let mut order = std::mem::take(&mut mesh.tri_order);
            let centroids: Vec<Vec3> = mesh
                .indices
                .iter()
                .map(|tri| {
                    (mesh.positions[tri[0] as usize]
                        + mesh.positions[tri[1] as usize]
                        + mesh.positions[tri[2] as usize])
                        / 3.0
                })
                .collect();
            let n = order.len();
            mesh.build_node(&mut order, &centroids, 0, n);
            mesh.tri_order = order;
        }
        mesh
    }

    fn tri_bounds(&self, tri: u32) -> (Vec3, Vec3) {
        let idx = self.indices[tri as usize];
        let a = self.positions[idx[0] as usize];
        let b = self.positions[idx[1] as usize];
        let c = self.positions[idx[2] as usize];
        let lo = vec3(
            a.x.min(b.x).min(c.x),
            a.y.min(b.y).min(c.y),
            a.z.min(b.z).min(c.z),
        );
        let hi = vec3(
            a.x.max(b.x).max(c.x),
            a.y.max(b.y).max(c.y),
            a.z.max(b.z).max(c.z),
        );
        (lo, hi)
    }

    fn build_node(&mut self, order: &mut [u32], centroids: &[Vec3], first: usize, count: usize) -> u32 {
        let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &t in &order[first..first + count] {
            let (tl, th) = self.tri_bounds(t);
            lo = vec3(lo.x.min(tl.x), lo.y.min(tl.y), lo.z.min(tl.z));
            hi = vec3(hi.x.max(th.x), hi.y.max(th.y), hi.z.max(th.z));
        }
        let node_index = self.nodes.len() as u32;
        self.nodes.push(BvhNode {
            lo,
            hi,
            first: first as u32,
            count: count as u32,
            right: 0,
        });
        if count > LEAF_SIZE {
            // median split on the widest centroid axis
            let ext = hi - lo;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let slice = &mut order[first..first + count];
            slice.sort_unstable_by(|&a, &b| {
                let ca = component(centroids[a as usize], axis);
                let cb = component(centroids[b as usize], axis);
                ca.partial_cmp(&cb).unwrap()
            });
            let half = count / 2;
            let left = self.build_node(order, centroids, first, half);
            assert_eq!(left, node_index + 1);
            let right = self.build_node(order, centroids, first + half, count - half);
            self.nodes[node_index as usize].count = 0;
            self.nodes[node_index as usize].right = right;
        }
        node_index
    }

    /// Nearest intersection with `t` in `(t_min, t_max)`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<MeshHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let pre = RayPrecomp::new(origin, dir);
        let inv = vec3(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<MeshHit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node_index = stack[sp];
            let node = &self.nodes[node_index as usize];
            if !slab_hit(node.lo, node.hi, origin, inv, t_min, limit) {
                continue;
            }
            if node.count > 0 {
                for k in 0..node.count {
                    let tri = self.tri_order[(node.first + k) as usize];
                    let idx = self.indices[tri as usize];
                    let a = self.positions[idx[0] as usize];
                    let b = self.positions[idx[1] as usize];
                    let c = self.positions[idx[2] as usize];
                    if let Some(t) = pre.intersect_triangle(a, b, c, t_min, limit) {
                        let n = (b - a).cross(c - a).normalized_or(vec3(0.0, 0.0, 1.0));
                        best = Some(MeshHit { t, normal: n });
                        limit = t;
                    }
                }
            } else {
                // left child sits at node_index + 1, right child at
                // node.right; push right first so the left is visited first
                stack[sp] = node.right;
                sp += 1;
                stack[sp] = node_index + 1;
                sp += 1;
            }
        }
        best
    }

    /// Ray parity: number of crossings along the full line `t > t_min`.
    /// Odd count from a point means the point is inside the closed surface.
    pub fn count_crossings(&self, origin: Vec3, dir: Vec3) -> usize {
        let mut count = 0;
        let pre = RayPrecomp::new(origin, dir);
        for idx in &self.indices {
            let a = self.positions[idx[0] as usize];
            let b = self.positions[idx[1] as usize];
            let c = self.positions[idx[2] as usize];
            if pre.intersect_triangle(a, b, c, 1e-12, f64::INFINITY).is_some() {
                count += 1;
            }
        }
        count
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in &self.positions {
            lo = vec3(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = vec3(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }
}

fn component(v: Vec3, axis: usize) -> f64 {
    match axis {
        0 => v.x,
        1 => v.y,
        _ => v.z,
    }
}

fn slab_hit(lo: Vec3, hi: Vec3, o: Vec3, inv: Vec3, t_min: f64, t_max: f64) -> bool {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for axis in 0..3 {
        let (l, h, oo, ii) = match axis {
            0 => (lo.x, hi.x, o.x, inv.x),
            1 => (lo.y, hi.y, o.y, inv.y),
            _ => (lo.z, hi.z, o.z, inv.z),
        };
        let mut near = (l - oo) * ii;
        let mut far = (h - oo) * ii;
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        // conservative widening keeps the slab test from culling borderline
        // leaf hits that the watertight triangle test would accept
        far *= 1.0 + 1e-12;
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Shear-frame precomputation for the watertight triangle test.
struct RayPrecomp {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl RayPrecomp {
    fn new(origin: Vec3, dir: Vec3) -> Self {
        let ad = dir.abs();
        let kz = if ad.x >= ad.y && ad.x >= ad.z {
            0
        } else if ad.y >= ad.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kz + 2) % 3;
        if component(dir, kz) < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        let dz = component(dir, kz);
        RayPrecomp {
            origin,
            kx,
            ky,
            kz,
            sx: component(dir, kx) / dz,
            sy: component(dir, ky) / dz,
            sz: 1.0 / dz,
        }
    }

    fn intersect_triangle(&self, a: Vec3, b: Vec3, c: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let av = a - self.origin;
        let bv = b - self.origin;
        let cv = c - self.origin;
        let ax = component(av, self.kx) - self.sx * component(av, self.kz);
        let ay = component(av, self.ky) - self.sy * component(av, self.kz);
        let bx = component(bv, self.kx) - self.sx * component(bv, self.kz);
        let by = component(bv, self.ky) - self.sy * component(bv, self.kz);
        let cx = component(cv, self.kx) - self.sx * component(cv, self.kz);
        let cy = component(cv, self.ky) - self.sy * component(cv, self.kz);
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        // edge-on hits (some of u, v, w exactly zero) are accepted by both
        // triangles sharing the edge: no leaks, possible duplicates
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * component(av, self.kz);
        let bz = self.sz * component(bv, self.kz);
        let cz = self.sz * component(cv, self.kz);
        let t = (u * az + v * bz + w * cz) / det;
        if t > t_min && t < t_max {
            Some(t)
        } else {
            None
        }
    }
}

/// Icosphere: subdivided icosahedron with vertices projected to radius `r`.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| vec3(x, y, z).normalized() * radius)
    .collect();
    let mut indices: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(indices.len() * 4);
        for tri in &indices {
            let mids = [
                edge_midpoint(tri[0], tri[1], &mut positions, &mut midpoint, radius),
                edge_midpoint(tri[1], tri[2], &mut positions, &mut midpoint, radius),
                edge_midpoint(tri[2], tri[0], &mut positions, &mut midpoint, radius),
            ];
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        indices = next;
    }
    TriMesh::build(positions, indices)
}

fn edge_midpoint(
    a: u32,
    b: u32,
    positions: &mut Vec<Vec3>,
    cache: &mut std::collections::HashMap<(u32, u32), u32>,
    radius: f64,
) -> u32 {
    let key = (a.min(b), a.max(b));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let m = ((positions[a as usize] + positions[b as usize]) / 2.0).normalized() * radius;
    positions.push(m);
    let idx = (positions.len() - 1) as u32;
    cache.insert(key, idx);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use rand::Rng;

    #[test]
    fn icosphere_counts() {
        let m = icosphere(1.0, 0);
        assert_eq!(m.positions.len(), 12);
        assert_eq!(m.indices.len(), 20);
        let m = icosphere(1.0, 2);
        assert_eq!(m.indices.len(), 20 * 16);
        // Euler characteristic of a closed genus-0 surface: V - E + F = 2
        let v = m.positions.len() as i64;
        let f = m.indices.len() as i64;
        let e = 3 * f / 2;
        assert_eq!(v - e + f, 2);
    }

    #[test]
    fn icosphere_vertices_on_sphere_and_windings_outward() {
        let m = icosphere(0.07, 2);
        for p in &m.positions {
            assert!((p.length() - 0.07).abs() < 1e-12);
        }
        for tri in &m.indices {
            let a = m.positions[tri[0] as usize];
            let b = m.positions[tri[1] as usize];
            let c = m.positions[tri[2] as usize];
            let n = (b - a).cross(c - a);
            let centroid = (a + b + c) / 3.0;
            assert!(n.dot(centroid) > 0.0, "inward-facing triangle");
        }
    }

    #[test]
    fn axis_ray_hits_icosphere() {
        let m = icosphere(1.0, 3);
        let hit = m
            .intersect(vec3(0.0, 0.0, -3.0), vec3(0.0, 0.0, 1.0), 1e-9, f64::INFINITY)
            .expect("must hit");
        // a subdivided icosahedron is slightly inside the sphere between
        // vertices
        assert!(hit.t > 1.9 && hit.t < 2.1, "t = {}", hit.t);
        assert!(hit.normal.z < -0.9);
    }

    #[test]
    fn bvh_agrees_with_brute_force() {
        let m = icosphere(0.5, 2);
        let mut rng = derived_rng(7, &[401]);
        for _ in 0..2000 {
            let o = vec3(
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
            );
            let d = crate::math::vec3(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
            .normalized_or(vec3(0.0, 0.0, 1.0));
            let bvh_hit = m.intersect(o, d, 1e-12, f64::INFINITY);
            // brute force reference
            let pre = RayPrecomp::new(o, d);
            let mut best: Option<f64> = None;
            for idx in &m.indices {
                let a = m.positions[idx[0] as usize];
                let b = m.positions[idx[1] as usize];
                let c = m.positions[idx[2] as usize];
                if let Some(t) = pre.intersect_triangle(a, b, c, 1e-12, best.unwrap_or(f64::INFINITY)) {
                    best = Some(t);
                }
            }
            match (bvh_hit, best) {
                (None, None) => {}
                (Some(h), Some(t)) => assert!((h.t - t).abs() < 1e-9),
                (a, b) => panic!("bvh {a:?} vs brute {b:?}"),
            }
        }
    }

    #[test]
    fn watertight_no_leaked_rays_from_inside() {
        // every ray from a point inside a closed surface must cross it an
        // odd number of times; zero crossings would be a leak
        let m = icosphere(1.0, 3);
        let mut rng = derived_rng(7, &[402]);
        let n = 1_000_000;
        for _ in 0..n {
            let d = vec3(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
            .normalized_or(vec3(0.0, 0.0, 1.0));
            // interior points biased toward the surface to stress edges
            let o = d * (rng.gen::<f64>() * 0.9);
            assert!(
                m.intersect(o, d, 1e-12, f64::INFINITY).is_some(),
                "leaked ray from {o:?} along {d:?}"
            );
        }
    }

    #[test]
    fn edge_and_vertex_targeted_rays_do_not_leak() {
        let m = icosphere(1.0, 2);
        let mut rng = derived_rng(7, &[403]);
        // aim rays from inside directly at shared vertices and edge
        // midpoints: the classic leak cases
        for tri in m.indices.iter().take(200) {
            let a = m.positions[tri[0] as usize];
            let b = m.positions[tri[1] as usize];
            for target in [a, (a + b) / 2.0, (a + b) * 0.5 + (b - a) * 1e-14] {
                let o = vec3(
                    rng.gen::<f64>() * 0.2 - 0.1,
                    rng.gen::<f64>() * 0.2 - 0.1,
                    rng.gen::<f64>() * 0.2 - 0.1,
                );
                let d = (target - o).normalized();
                assert!(m.intersect(o, d, 1e-12, f64::INFINITY).is_some());
            }
        }
    }
}
