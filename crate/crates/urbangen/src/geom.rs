//! Planar geometry on projected (Mercator) coordinates.
//!
//! Polygons are rings with even-odd interior semantics, so holes and
//! multi-part geometries need no special casing. Union areas are computed
//! exactly with a slab sweep: between consecutive event abscissae (vertices
//! and pairwise edge crossings) the covered-interval structure is constant,
//! so the union length varies linearly and the midpoint value integrates the
//! slab exactly.

/// Axis-aligned rectangle in projected meters; `y0 < y1`, `y0` is south.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MercBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl MercBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x0 && p.0 <= self.x1 && p.1 >= self.y0 && p.1 <= self.y1
    }
}

/// A polygon ring; implicitly closed (last vertex connects to first).
pub type Ring = Vec<(f64, f64)>;

/// One feature's polygonal geometry: a set of rings with even-odd semantics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolySet {
    pub rings: Vec<Ring>,
}

impl PolySet {
    pub fn is_empty(&self) -> bool {
        self.rings.iter().all(|r| r.len() < 3)
    }

    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.rings.iter().flat_map(|ring| {
            (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
        })
    }

    /// Even-odd area of the ring set (holes subtract).
    pub fn area(&self) -> f64 {
        union_area(std::slice::from_ref(self))
    }
}

/// Signed shoelace area of a single ring (positive when counter-clockwise).
pub fn ring_area_signed(ring: &Ring) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..ring.len() {
        let (x0, y0) = ring[i];
        let (x1, y1) = ring[(i + 1) % ring.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Sutherland-Hodgman clip of a ring against an axis-aligned box.
///
/// Points exactly on the boundary count as inside, which makes clipping an
/// already-clipped ring return it verbatim.
pub fn clip_ring(ring: &Ring, b: &MercBox) -> Option<Ring> {
    #[derive(Clone, Copy)]
    enum Side {
        West,
        East,
        South,
        North,
    }
    let inside = |p: (f64, f64), s: Side| -> bool {
        match s {
            Side::West => p.0 >= b.x0,
            Side::East => p.0 <= b.x1,
            Side::South => p.1 >= b.y0,
            Side::North => p.1 <= b.y1,
        }
    };
    let intersect = |p: (f64, f64), q: (f64, f64), s: Side| -> (f64, f64) {
        match s {
            Side::West | Side::East => {
                let x = if matches!(s, Side::West) { b.x0 } else { b.x1 };
                let t = (x - p.0) / (q.0 - p.0);
                (x, p.1 + t * (q.1 - p.1))
            }
            Side::South | Side::North => {
                let y = if matches!(s, Side::South) { b.y0 } else { b.y1 };
                let t = (y - p.1) / (q.1 - p.1);
                (p.0 + t * (q.0 - p.0), y)
            }
        }
    };

    let mut pts = ring.clone();
    for side in [Side::West, Side::East, Side::South, Side::North] {
        if pts.is_empty() {
            return None;
        }
        let mut out = Vec::with_capacity(pts.len() + 4);
        let mut prev = *pts.last().unwrap();
        let mut prev_in = inside(prev, side);
        for &p in &pts {
            let p_in = inside(p, side);
            if p_in != prev_in {
                out.push(intersect(prev, p, side));
            }
            if p_in {
                out.push(p);
            }
            prev = p;
            prev_in = p_in;
        }
        pts = out;
    }
    if pts.len() >= 3 {
        Some(pts)
    } else {
        None
    }
}

/// Liang-Barsky clip of an open polyline; returns the pieces inside the box.
pub fn clip_polyline(pts: &[(f64, f64)], b: &MercBox) -> Vec<Vec<(f64, f64)>> {
    let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current: Vec<(f64, f64)> = Vec::new();
    let close_enough = |a: (f64, f64), c: (f64, f64)| -> bool {
        (a.0 - c.0).abs() < 1e-9 && (a.1 - c.1).abs() < 1e-9
    };
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if let Some((a, c)) = clip_segment(p, q, b) {
            match current.last() {
                Some(&last) if close_enough(last, a) => current.push(c),
                Some(_) => {
                    pieces.push(std::mem::take(&mut current));
                    current.push(a);
                    current.push(c);
                }
                None => {
                    current.push(a);
                    current.push(c);
                }
            }
        } else if !current.is_empty() {
            pieces.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces.retain(|p| p.len() >= 2);
    pieces
}

fn clip_segment(
    p: (f64, f64),
    q: (f64, f64),
    b: &MercBox,
) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-dx, p.0 - b.x0),
        (dx, b.x1 - p.0),
        (-dy, p.1 - b.y0),
        (dy, b.y1 - p.1),
    ];
    for (den, num) in checks {
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
            continue;
        }
        let t = num / den;
        if den < 0.0 {
            if t > t1 {
                return None;
            }
            if t > t0 {
                t0 = t;
            }
        } else {
            if t < t0 {
                return None;
            }
            if t < t1 {
                t1 = t;
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| (p.0 + t * dx, p.1 + t * dy);
    Some((at(t0), at(t1)))
}

/// Exact area of the union of a set of features (each with even-odd ring
/// semantics, overlap between features counted once).
pub fn union_area(features: &[PolySet]) -> f64 {
    let mut edges: Vec<((f64, f64), (f64, f64), usize)> = Vec::new();
    for (fi, f) in features.iter().enumerate() {
        for ring in &f.rings {
            if ring.len() < 3 {
                continue;
            }
            for i in 0..ring.len() {
                let a = ring[i];
                let b = ring[(i + 1) % ring.len()];
                edges.push((a, b, fi));
            }
        }
    }
    if edges.is_empty() {
        return 0.0;
    }

    // Event abscissae: all vertices plus pairwise edge crossings.
    let mut events: Vec<f64> = Vec::with_capacity(edges.len() * 2);
    for &(a, b, _) in &edges {
        events.push(a.0);
        events.push(b.0);
    }
    for i in 0..edges.len() {
        for j in (i + 1)..edges.len() {
            if let Some(x) = crossing_x(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                events.push(x);
            }
        }
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let n_features = features.len();
    let mut total = 0.0;
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); n_features];
    for w in events.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        let width = xb - xa;
        if width <= 1e-12 {
            continue;
        }
        let xm = (xa + xb) / 2.0;
        for c in &mut crossings {
            c.clear();
        }
        for &(a, b, fi) in &edges {
            if (a.0 <= xm) != (b.0 <= xm) {
                let t = (xm - a.0) / (b.0 - a.0);
                crossings[fi].push(a.1 + t * (b.1 - a.1));
            }
        }
        // Per-feature even-odd intervals, then union across features.
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for c in &mut crossings {
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in c.chunks_exact(2) {
                intervals.push((pair[0], pair[1]));
            }
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut covered = 0.0;
        let mut open_end = f64::NEG_INFINITY;
        for (lo, hi) in intervals {
            if lo > open_end {
                covered += hi - lo;
                open_end = hi;
            } else if hi > open_end {
                covered += hi - open_end;
                open_end = hi;
            }
        }
        total += width * covered;
    }
    total
}

/// Abscissa of a proper interior crossing of two segments, if any.
fn crossing_x(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> Option<f64> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (c.0 - a.0, c.1 - a.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0 {
        Some(a.0 + t * r.0)
    } else {
        None
    }
}

/// Boolean occupancy mask of a feature set over `bbox` at `res x res`,
/// row-major with row 0 at the north edge. Even-odd fill sampled at pixel
/// centers.
pub fn rasterize_mask(features: &[PolySet], bbox: &MercBox, res: usize) -> Vec<bool> {
    let mut mask = vec![false; res * res];
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..res {
        // Row centers walk from north to south.
        let y = bbox.y1 - (row as f64 + 0.5) / res as f64 * bbox.height();
        for f in features {
            xs.clear();
            for (a, b) in f.edges() {
                if (a.1 <= y) != (b.1 <= y) {
                    let t = (y - a.1) / (b.1 - a.1);
                    xs.push(a.0 + t * (b.0 - a.0));
                }
            }
            xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
            for pair in xs.chunks_exact(2) {
                let c0 = ((pair[0] - bbox.x0) / bbox.width() * res as f64 - 0.5).ceil() as i64;
                let c1 = ((pair[1] - bbox.x0) / bbox.width() * res as f64 - 0.5).floor() as i64;
                let c0 = c0.clamp(0, res as i64 - 1) as usize;
                let c1 = c1.clamp(-1, res as i64 - 1);
                if c1 < c0 as i64 {
                    continue;
                }
                for c in c0..=(c1 as usize) {
                    mask[row * res + c] = true;
                }
            }
        }
    }
    mask
}

/// Connected-component summary of a boolean mask (4-connectivity).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskComponents {
    pub total: usize,
    pub largest: usize,
    /// Centroid of the largest component, normalized to [0, 1] with x to the
    /// east and y from the top (north) edge downward.
    pub largest_centroid: (f64, f64),
}

pub fn mask_components(mask: &[bool], res: usize) -> Option<MaskComponents> {
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return None;
    }
    let mut visited = vec![false; mask.len()];
    let mut best = 0usize;
    let mut best_centroid = (0.0, 0.0);
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        let mut size = 0usize;
        let mut sum_x = 0.0f64;
        let mut sum_y = 0.0f64;
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            size += 1;
            let (row, col) = (idx / res, idx % res);
            sum_x += col as f64 + 0.5;
            sum_y += row as f64 + 0.5;
            let mut push = |r: usize, c: usize| {
                let j = r * res + c;
                if mask[j] && !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if col > 0 {
                push(row, col - 1);
            }
            if col + 1 < res {
                push(row, col + 1);
            }
            if row > 0 {
                push(row - 1, col);
            }
            if row + 1 < res {
                push(row + 1, col);
            }
        }
        if size > best {
            best = size;
            best_centroid = (
                sum_x / size as f64 / res as f64,
                sum_y / size as f64 / res as f64,
            );
        }
    }
    Some(MaskComponents {
        total,
        largest: best,
        largest_centroid: best_centroid,
    })
}
