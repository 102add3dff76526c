//! Flow-based edge recovery: edges from an occlusion-free frame are carried
//! forward by optical flow, and the landings inside the current silhouette
//! become the occluded-edge map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{sample_flow, FlowField};
use crate::raster::{rasterize_points, BinaryMask, EdgeMap, Mask, Point2, PointSet};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Dilation,
    Spline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePolicy {
    PreviousFrame,
    #[default]
    LastOcclusionFree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowEdgeParams {
    pub interpolation: Interpolation,
    pub dilation_radius: usize,
    pub spline_min_chain: usize,
    pub interior_margin: usize,
    pub source_policy: SourcePolicy,
}

impl Default for FlowEdgeParams {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Dilation,
            dilation_radius: 1,
            spline_min_chain: 4,
            interior_margin: 1,
            source_policy: SourcePolicy::LastOcclusionFree,
        }
    }
}

impl FlowEdgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.spline_min_chain < 4 {
            return Err(Error::param(format!(
                "spline_min_chain must be >= 4, got {}",
                self.spline_min_chain
            )));
        }
        Ok(())
    }
}

/// Consecutive chain points further apart than this start a new spline piece.
pub const SPLINE_GAP: f64 = 3.0;

/// One point per set pixel, chained by 8-connected component.
///
/// Components are numbered in row-major order of their topmost-leftmost
/// pixel; within a component the points follow a greedy nearest-neighbour
/// walk from that pixel (ties broken row-major).
pub fn edge_points<T: Real>(d: &EdgeMap) -> PointSet<T> {
    let (w, h) = d.dims();
    let mut label = vec![u32::MAX; w * h];
    let mut components: Vec<Vec<(usize, usize)>> = Vec::new();
    for (sx, sy) in d.iter_set() {
        if label[sy * w + sx] != u32::MAX {
            continue;
        }
        let id = components.len() as u32;
        let mut members = Vec::new();
        let mut stack = vec![(sx, sy)];
        label[sy * w + sx] = id;
        while let Some((x, y)) = stack.pop() {
            members.push((x, y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if d.get_signed(nx, ny) {
                        let i = ny as usize * w + nx as usize;
                        if label[i] == u32::MAX {
                            label[i] = id;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
        }
        components.push(members);
    }

    let mut visited = vec![false; w * h];
    let mut points = Vec::with_capacity(d.count());
    let mut ids = Vec::with_capacity(d.count());
    for (id, members) in components.iter().enumerate() {
        let start = *members.iter().min_by_key(|(x, y)| (*y, *x)).expect("non-empty component");
        let mut cur = start;
        let mut remaining = members.len();
        loop {
            visited[cur.1 * w + cur.0] = true;
            points.push(Point2::new(T::from_usize_lossy(cur.0), T::from_usize_lossy(cur.1)));
            ids.push(id as u32);
            remaining -= 1;
            if remaining == 0 {
                break;
            }
            let unvisited = |x: usize, y: usize| label[y * w + x] == id as u32 && !visited[y * w + x];
            cur = nearest_ring(cur, w, h, &unvisited).unwrap_or_else(|| {
                *members
                    .iter()
                    .filter(|(x, y)| unvisited(*x, *y))
                    .min_by_key(|(x, y)| (dist2(cur, (*x, *y)), *y, *x))
                    .expect("component has unvisited members")
            });
        }
    }
    PointSet::with_chains(points, ids).expect("one label per point")
}

fn dist2(a: (usize, usize), b: (usize, usize)) -> usize {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    dx * dx + dy * dy
}

// Nearest qualifying pixel among Chebyshev rings up to radius 4. A hit at ring
// r can be beaten only by rings up to r*sqrt(2), so those are scanned too.
fn nearest_ring(
    c: (usize, usize),
    w: usize,
    h: usize,
    ok: &impl Fn(usize, usize) -> bool,
) -> Option<(usize, usize)> {
    const MAX_RING: usize = 4;
    let mut best: Option<(usize, usize, usize, usize)> = None; // (d2, y, x, ring)
    let mut limit = MAX_RING;
    let mut r = 1;
    while r <= limit {
        let (cx, cy) = (c.0 as isize, c.1 as isize);
        let ri = r as isize;
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if dx.abs() != ri && dy.abs() != ri {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                if ok(x, y) {
                    let d2 = (dx * dx + dy * dy) as usize;
                    if best.is_none_or(|(bd, by, bx, _)| (d2, y, x) < (bd, by, bx)) {
                        best = Some((d2, y, x, r));
                    }
                }
            }
        }
        if let Some((_, _, _, r0)) = best {
            limit = limit.min(((r0 as f64) * std::f64::consts::SQRT_2).floor() as usize);
        }
        r += 1;
    }
    // A hit found only at the outer rings may still be beaten by a farther
    // ring beyond MAX_RING; defer to the exhaustive search in that case.
    let (_, y, x, r0) = best?;
    if ((r0 as f64) * std::f64::consts::SQRT_2).floor() as usize > MAX_RING {
        return None;
    }
    Some((x, y))
}

/// Moves every point by the flow sampled at its position.
pub fn propagate_points<T: Real>(p: &PointSet<T>, v: &FlowField<T>) -> PointSet<T> {
    let moved = p
        .points()
        .iter()
        .map(|pt| {
            let [dx, dy] = sample_flow(v, *pt);
            Point2::new(pt.x + dx, pt.y + dy)
        })
        .collect();
    p.with_points(moved)
}

/// Keeps the points whose nearest pixel lies in `fg` eroded by `margin`.
pub fn interior_filter<T: Real>(
    p_star: &PointSet<T>,
    d_i: &EdgeMap,
    fg: &BinaryMask,
    margin: usize,
) -> Result<PointSet<T>> {
    d_i.ensure_same_dims(fg.dims(), "interior filter")?;
    let interior = fg.erode(margin);
    let (w, h) = fg.dims();
    Ok(p_star.retain_by(|p| p.pixel(w, h).is_some_and(|(x, y)| interior.get(x, y))))
}

pub fn interpolate_dilation<T: Real>(p: &PointSet<T>, radius: usize, w: usize, h: usize) -> EdgeMap {
    rasterize_points(p, w, h).map.dilate(radius)
}

/// Rasterizes an interpolating cubic B-spline through each chain.
///
/// Chains are first split wherever consecutive points are more than
/// [`SPLINE_GAP`] apart. Pieces with fewer than `min_chain` points are drawn as
/// their rasterized points.
pub fn interpolate_spline<T: Real>(p: &PointSet<T>, w: usize, h: usize, min_chain: usize) -> EdgeMap {
    let mut out = Mask::new(w, h);
    let gap2 = T::lit(SPLINE_GAP * SPLINE_GAP);
    let mut plot = |q: Point2<T>| {
        if let Some((x, y)) = q.pixel(w, h) {
            out.set(x, y, true);
        }
    };
    for chain in p.chains() {
        let mut start = 0;
        for i in 1..=chain.len() {
            let split = i == chain.len() || {
                let (a, b) = (chain[i - 1], chain[i]);
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                dx * dx + dy * dy > gap2
            };
            if !split {
                continue;
            }
            let piece = &chain[start..i];
            if piece.len() >= min_chain.max(2) {
                for q in bspline::sample_interpolating(piece, T::lit(0.5)) {
                    plot(q);
                }
            } else {
                for q in piece {
                    plot(*q);
                }
            }
            start = i;
        }
    }
    out
}

/// Counts from one run of [`flow_edge_detect_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdgeTrace {
    pub map: EdgeMap,
    pub source_points: usize,
    pub retained_points: usize,
    /// Points removed by the interior filter (including those leaving the frame).
    pub dropped_points: usize,
}

pub fn flow_edge_detect<T: Real>(
    source_edges: &EdgeMap,
    v_chain: &FlowField<T>,
    d_i: &EdgeMap,
    fg_i: &BinaryMask,
    params: &FlowEdgeParams,
) -> Result<EdgeMap> {
    flow_edge_detect_traced(source_edges, v_chain, d_i, fg_i, params).map(|t| t.map)
}

/// As [`flow_edge_detect`], also reporting point counts. The map is clipped to
/// `fg_i` so that interpolation never paints background pixels.
pub fn flow_edge_detect_traced<T: Real>(
    source_edges: &EdgeMap,
    v_chain: &FlowField<T>,
    d_i: &EdgeMap,
    fg_i: &BinaryMask,
    params: &FlowEdgeParams,
) -> Result<FlowEdgeTrace> {
    params.validate()?;
    let dims = fg_i.dims();
    source_edges.ensure_same_dims(dims, "flow edge source")?;
    d_i.ensure_same_dims(dims, "flow edge depth edges")?;
    v_chain.ensure_same_dims(dims, "flow edge flow")?;

    let pts = edge_points::<T>(source_edges);
    let moved = propagate_points(&pts, v_chain);
    let kept = interior_filter(&moved, d_i, fg_i, params.interior_margin)?;
    let (w, h) = dims;
    let raw = match params.interpolation {
        Interpolation::Dilation => interpolate_dilation(&kept, params.dilation_radius, w, h),
        Interpolation::Spline => interpolate_spline(&kept, w, h, params.spline_min_chain),
    };
    Ok(FlowEdgeTrace {
        map: raw.intersection(fg_i)?,
        source_points: pts.len(),
        retained_points: kept.len(),
        dropped_points: pts.len() - kept.len(),
    })
}

pub mod bspline {
    //! Interpolating uniform cubic B-splines.

    use crate::raster::Point2;
    use crate::scalar::Real;

    /// Control points of the uniform cubic B-spline that passes through
    /// `pts[k]` at knot `k`, with natural (zero second derivative) ends.
    ///
    /// Returns `n + 2` controls: the two phantom end controls included.
    pub fn interpolating_controls<T: Real>(pts: &[Point2<T>]) -> Vec<Point2<T>> {
        let n = pts.len();
        assert!(n >= 2, "need at least two points");
        let mut c = vec![Point2::default(); n];
        c[0] = pts[0];
        c[n - 1] = pts[n - 1];
        let m = n - 2;
        if m > 0 {
            // c[k-1] + 4 c[k] + c[k+1] = 6 p[k] for k in 1..n-1 (Thomas algorithm)
            let six = T::lit(6.0);
            let four = T::lit(4.0);
            let mut cp = vec![T::zero(); m];
            let mut rx = vec![T::zero(); m];
            let mut ry = vec![T::zero(); m];
            for i in 0..m {
                let k = i + 1;
                let mut bx = six * pts[k].x;
                let mut by = six * pts[k].y;
                if i == 0 {
                    bx -= c[0].x;
                    by -= c[0].y;
                }
                if i == m - 1 {
                    bx -= c[n - 1].x;
                    by -= c[n - 1].y;
                }
                let denom = if i == 0 { four } else { four - cp[i - 1] };
                cp[i] = T::one() / denom;
                if i == 0 {
                    rx[i] = bx / denom;
                    ry[i] = by / denom;
                } else {
                    rx[i] = (bx - rx[i - 1]) / denom;
                    ry[i] = (by - ry[i - 1]) / denom;
                }
            }
            for i in (0..m).rev() {
                let (mut x, mut y) = (rx[i], ry[i]);
                if i + 1 < m {
                    x -= cp[i] * c[i + 2].x;
                    y -= cp[i] * c[i + 2].y;
                }
                c[i + 1] = Point2::new(x, y);
            }
        }
        let two = T::lit(2.0);
        let head = Point2::new(two * c[0].x - c[1].x, two * c[0].y - c[1].y);
        let tail = Point2::new(two * c[n - 1].x - c[n - 2].x, two * c[n - 1].y - c[n - 2].y);
        let mut all = Vec::with_capacity(n + 2);
        all.push(head);
        all.extend(c);
        all.push(tail);
        all
    }

    /// Point on segment `(c0, c1, c2, c3)` at `t` in `[0, 1]`.
    pub fn eval_segment<T: Real>(c: [Point2<T>; 4], t: T) -> Point2<T> {
        let one = T::one();
        let six = T::lit(6.0);
        let s = one - t;
        let b0 = s * s * s / six;
        let b1 = (T::lit(3.0) * t * t * t - T::lit(6.0) * t * t + T::lit(4.0)) / six;
        let b2 = (T::lit(-3.0) * t * t * t + T::lit(3.0) * t * t + T::lit(3.0) * t + one) / six;
        let b3 = t * t * t / six;
        Point2::new(
            b0 * c[0].x + b1 * c[1].x + b2 * c[2].x + b3 * c[3].x,
            b0 * c[0].y + b1 * c[1].y + b2 * c[2].y + b3 * c[3].y,
        )
    }

    /// Samples the interpolating spline so that consecutive samples are at
    /// most `max_step` apart.
    ///
    /// The speed of a uniform cubic segment is a convex combination of its
    /// control differences, so `max |c[j+1] - c[j]| / steps` bounds the
    /// spacing.
    pub fn sample_interpolating<T: Real>(pts: &[Point2<T>], max_step: T) -> Vec<Point2<T>> {
        let c = interpolating_controls(pts);
        let mut out = vec![pts[0]];
        for k in 0..pts.len() - 1 {
            let seg = [c[k], c[k + 1], c[k + 2], c[k + 3]];
            let span = (0..3)
                .map(|j| (seg[j + 1].x - seg[j].x).hypot(seg[j + 1].y - seg[j].y))
                .fold(T::zero(), T::max);
            let steps = (span / max_step).ceil().to_usize().unwrap_or(1).max(1);
            for s in 1..=steps {
                out.push(eval_segment(seg, T::from_usize_lossy(s) / T::from_usize_lossy(steps)));
            }
        }
        out
    }
}
