//! Re-triangulation of one split triangle.
//!
//! Works in the triangle's own barycentric chart, where corner 0, 1, 2 sit
//! at (0,0), (1,0), (0,1). Orientation and crossing predicates are affine
//! invariant, so the combinatorics match the 3D triangle and the output
//! keeps the parent's winding. Points are inserted one at a time (edge or
//! face splits), then each chord is recovered by edge flips.

use std::collections::VecDeque;

const EPS: f64 = 1e-13;

pub(crate) struct LocalInput {
    pub corners: [u32; 3],
    /// Points on side k (corner k → corner k+1) as `(t, id)`.
    pub sides: [Vec<(f64, u32)>; 3],
    /// Interior points as `((b1, b2), id)`.
    pub interior: Vec<((f64, f64), u32)>,
    pub chords: Vec<(u32, u32)>,
}

pub(crate) struct LocalOutput {
    pub triangles: Vec<[u32; 3]>,
    /// Mesh edges realizing the chords.
    pub seams: Vec<(u32, u32)>,
}

struct Local {
    pts: Vec<(f64, f64)>,
    ids: Vec<u32>,
    /// Side of the parent each point lies on, if any (corners lie on two).
    on_side: Vec<[bool; 3]>,
    tris: Vec<[usize; 3]>,
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn crosses(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    ((o1 > EPS && o2 < -EPS) || (o1 < -EPS && o2 > EPS)) && ((o3 > EPS && o4 < -EPS) || (o3 < -EPS && o4 > EPS))
}

impl Local {
    fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.tris.iter().any(|t| (0..3).any(|k| (t[k] == a && t[(k + 1) % 3] == b) || (t[k] == b && t[(k + 1) % 3] == a)))
    }

    fn add_point(&mut self, p: (f64, f64), id: u32, on_side: [bool; 3]) -> usize {
        self.pts.push(p);
        self.ids.push(id);
        self.on_side.push(on_side);
        self.pts.len() - 1
    }

    /// Split the triangle(s) whose edge strictly contains `p`, or the
    /// triangle containing it. Returns false if `p` could not be located.
    fn insert(&mut self, n: usize) -> bool {
        let p = self.pts[n];
        // on an existing edge?
        for ti in 0..self.tris.len() {
            let t = self.tris[ti];
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let (a, b) = (self.pts[i], self.pts[j]);
                let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
                if orient(a, b, p).abs() > EPS * len2.sqrt().max(1.0) {
                    continue;
                }
                let s = ((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / len2;
                if s <= EPS || s >= 1.0 - EPS {
                    continue;
                }
                let o = t[(k + 2) % 3];
                self.tris[ti] = [i, n, o];
                self.tris.push([n, j, o]);
                if let Some(tj) = self.tris.iter().position(|u| (0..3).any(|m| u[m] == j && u[(m + 1) % 3] == i)) {
                    let u = self.tris[tj];
                    let m = (0..3).find(|&m| u[m] == j).expect("edge found");
                    let q = u[(m + 2) % 3];
                    self.tris[tj] = [j, n, q];
                    self.tris.push([n, i, q]);
                }
                return true;
            }
        }
        for ti in 0..self.tris.len() {
            let [a, b, c] = self.tris[ti];
            if orient(self.pts[a], self.pts[b], p) > 0.0 && orient(self.pts[b], self.pts[c], p) > 0.0 && orient(self.pts[c], self.pts[a], p) > 0.0 {
                self.tris[ti] = [a, b, n];
                self.tris.push([b, c, n]);
                self.tris.push([c, a, n]);
                return true;
            }
        }
        false
    }

    /// Sloan-style constraint recovery by flipping crossing edges.
    fn recover(&mut self, a: usize, b: usize) -> Result<(), String> {
        if self.has_edge(a, b) {
            return Ok(());
        }
        let (pa, pb) = (self.pts[a], self.pts[b]);
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        for t in &self.tris {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                if i < j && ![a, b].contains(&i) && ![a, b].contains(&j) && crosses(self.pts[i], self.pts[j], pa, pb) {
                    queue.push_back((i, j));
                }
            }
        }
        let mut guard = 0;
        while let Some((i, j)) = queue.pop_front() {
            guard += 1;
            if guard > 10_000 {
                return Err("chord recovery did not converge".into());
            }
            let t1 = self.tris.iter().position(|t| (0..3).any(|k| t[k] == i && t[(k + 1) % 3] == j));
            let t2 = self.tris.iter().position(|t| (0..3).any(|k| t[k] == j && t[(k + 1) % 3] == i));
            let (Some(t1), Some(t2)) = (t1, t2) else {
                return Err("chord crosses the triangle border".into());
            };
            let third = |t: [usize; 3]| t.into_iter().find(|&x| x != i && x != j).expect("third vertex");
            let (k, l) = (third(self.tris[t1]), third(self.tris[t2]));
            if !crosses(self.pts[k], self.pts[l], self.pts[i], self.pts[j]) {
                queue.push_back((i, j));
                continue;
            }
            // quad i → l → j → k is convex; swap the diagonal to k–l
            self.tris[t1] = [i, l, k];
            self.tris[t2] = [l, j, k];
            if ![a, b].contains(&k) && ![a, b].contains(&l) && crosses(self.pts[k], self.pts[l], pa, pb) {
                queue.push_back((k.min(l), k.max(l)));
            }
        }
        if self.has_edge(a, b) {
            Ok(())
        } else {
            Err("chord passes through another point".into())
        }
    }
}

fn corner(k: usize) -> (f64, f64) {
    [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)][k]
}

pub(crate) fn retriangulate(input: &LocalInput) -> Result<LocalOutput, String> {
    let mut l = Local { pts: Vec::new(), ids: Vec::new(), on_side: Vec::new(), tris: vec![[0, 1, 2]] };
    for k in 0..3 {
        let mut s = [false; 3];
        s[k] = true;
        s[(k + 2) % 3] = true;
        l.add_point(corner(k), input.corners[k], s);
    }
    for k in 0..3 {
        let (a, b) = (corner(k), corner((k + 1) % 3));
        let mut side = input.sides[k].clone();
        side.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (t, id) in side {
            let mut s = [false; 3];
            s[k] = true;
            let n = l.add_point((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)), id, s);
            if !l.insert(n) {
                return Err(format!("side point {id} could not be placed"));
            }
        }
    }
    for &((b1, b2), id) in &input.interior {
        let n = l.add_point((b1, b2), id, [false; 3]);
        if !l.insert(n) {
            return Err(format!("interior point {id} could not be placed"));
        }
    }
    let mut seams = Vec::new();
    for &(ga, gb) in &input.chords {
        let (Some(a), Some(b)) = (l.index_of(ga), l.index_of(gb)) else {
            return Err(format!("chord endpoint {ga}/{gb} missing"));
        };
        if a == b {
            continue;
        }
        if let Some(k) = (0..3).find(|&k| l.on_side[a][k] && l.on_side[b][k]) {
            // chord along a side: realized by the side pieces between its ends
            let pos = |i: usize| {
                let (p, c) = (l.pts[i], corner(k));
                (p.0 - c.0).abs() + (p.1 - c.1).abs()
            };
            let (lo, hi) = (pos(a).min(pos(b)), pos(a).max(pos(b)));
            let mut on: Vec<usize> = (0..l.pts.len()).filter(|&i| l.on_side[i][k] && pos(i) >= lo - EPS && pos(i) <= hi + EPS).collect();
            on.sort_by(|x, y| pos(*x).total_cmp(&pos(*y)));
            seams.extend(on.windows(2).map(|w| (l.ids[w[0]], l.ids[w[1]])));
            continue;
        }
        l.recover(a, b)?;
        seams.push((ga, gb));
    }
    Ok(LocalOutput { triangles: l.tris.iter().map(|t| t.map(|i| l.ids[i])).collect(), seams })
}
