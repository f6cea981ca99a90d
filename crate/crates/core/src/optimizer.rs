//! Obstacle-constrained gait optimisation on a lattice DAG.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{FrameTag, RobotSpec, ShapePoint};
use crate::error::{OalError, Result};
use crate::fields::{
    enclosed_integral, height_function, line_integral, potential_fit, PotentialFit, CONSERVATIVE_LIMIT,
};
use crate::gait::{elliptical_gait, GaitSpec};
use crate::grid::{Lattice, ScalarGrid, VectorGrid};
use crate::rft::{connection_grid, connection_grid_in_frame, lateral_row_field, ContactCondition, Side};

/// Where along an arc the forward field is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ArcWeighting {
    #[default]
    Tail,
    /// Mean of the tail and head values.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Directed graph on lattice vertices with CSR adjacency.
#[derive(Debug, Clone)]
pub struct LatticeDigraph {
    pub lattice: Lattice,
    pub arcs: Vec<Arc>,
    offsets: Vec<usize>,
}

impl LatticeDigraph {
    /// Arbitrary arcs; used for testing and for graphs not built from a potential.
    pub fn from_arcs(lattice: Lattice, mut arcs: Vec<Arc>) -> Self {
        arcs.sort_by_key(|a| (a.from, a.to));
        let mut offsets = vec![0; lattice.len() + 1];
        for a in &arcs {
            offsets[a.from + 1] += 1;
        }
        for k in 0..lattice.len() {
            offsets[k + 1] += offsets[k];
        }
        Self { lattice, arcs, offsets }
    }

    pub fn num_vertices(&self) -> usize {
        self.lattice.len()
    }

    pub fn out_arcs(&self, v: usize) -> &[Arc] {
        &self.arcs[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn arc(&self, from: usize, to: usize) -> Option<&Arc> {
        self.out_arcs(from).iter().find(|a| a.to == to)
    }
}

/// Orient every lattice edge toward strictly larger `P`; the weight is the
/// forward field's line element along the step.
pub fn build_dag(v1: &VectorGrid, p: &ScalarGrid, weighting: ArcWeighting) -> Result<LatticeDigraph> {
    v1.same_lattice(p)?;
    let lat = v1.lattice;
    let h = lat.h();
    let n = lat.n;
    let mut arcs = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let u = lat.index(i, j);
            let steps: [(isize, isize, usize); 4] = [(1, 0, 0), (-1, 0, 0), (0, 1, 1), (0, -1, 1)];
            for (di, dj, axis) in steps {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a < 0 || b < 0 || a > n as isize || b > n as isize {
                    continue;
                }
                let v = lat.index(a as usize, b as usize);
                if !(p.values[v] > p.values[u]) {
                    continue;
                }
                if !(v1.valid[u] && v1.valid[v]) {
                    continue;
                }
                let dir = (di + dj) as f64;
                let comp = match weighting {
                    ArcWeighting::Tail => v1.values[u][axis],
                    ArcWeighting::Midpoint => 0.5 * (v1.values[u][axis] + v1.values[v][axis]),
                };
                arcs.push(Arc {
                    from: u,
                    to: v,
                    weight: comp * h * dir,
                });
            }
        }
    }
    Ok(LatticeDigraph::from_arcs(lat, arcs))
}

/// Kahn's algorithm with a min-heap so the order is deterministic.
pub fn topological_order(g: &LatticeDigraph) -> Result<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let nv = g.num_vertices();
    let mut indeg = vec![0usize; nv];
    for a in &g.arcs {
        indeg[a.to] += 1;
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..nv).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(nv);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for a in g.out_arcs(u) {
            indeg[a.to] -= 1;
            if indeg[a.to] == 0 {
                heap.push(Reverse(a.to));
            }
        }
    }
    if order.len() != nv {
        return Err(OalError::CycleDetected);
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPathResult {
    /// `None` for the empty path.
    pub start: Option<usize>,
    /// Vertex indices, start first; empty for the empty path.
    pub path: Vec<usize>,
    pub weight: f64,
    pub arc_weights: Vec<f64>,
}

impl OptimalPathResult {
    pub fn empty() -> Self {
        Self {
            start: None,
            path: vec![],
            weight: 0.0,
            arc_weights: vec![],
        }
    }

    pub fn num_arcs(&self) -> usize {
        self.arc_weights.len()
    }

    pub fn points(&self, lattice: &Lattice) -> Vec<ShapePoint> {
        self.path.iter().map(|&v| lattice.point_at(v)).collect()
    }
}

/// `true` if `(w, l)` beats `(bw, bl)`: larger weight, then fewer arcs.
fn better(w: f64, l: usize, bw: f64, bl: usize) -> bool {
    w > bw || (w == bw && l < bl)
}

/// Best path from one start, via DP in topological order. The start itself
/// (zero arcs) is always a candidate.
fn best_from(g: &LatticeDigraph, order: &[usize], rank: &[usize], s: usize) -> OptimalPathResult {
    let nv = g.num_vertices();
    let mut dist = vec![f64::NEG_INFINITY; nv];
    let mut len = vec![usize::MAX; nv];
    let mut pred = vec![usize::MAX; nv];
    dist[s] = 0.0;
    len[s] = 0;
    let (mut bw, mut bl, mut bv) = (0.0, 0usize, s);
    for &u in &order[rank[s]..] {
        if dist[u] == f64::NEG_INFINITY {
            continue;
        }
        if better(dist[u], len[u], bw, bl) {
            bw = dist[u];
            bl = len[u];
            bv = u;
        }
        for a in g.out_arcs(u) {
            let cand = dist[u] + a.weight;
            if better(cand, len[u] + 1, dist[a.to], len[a.to]) {
                dist[a.to] = cand;
                len[a.to] = len[u] + 1;
                pred[a.to] = u;
            }
        }
    }
    let mut path = vec![bv];
    while *path.last().expect("nonempty") != s {
        path.push(pred[*path.last().expect("nonempty")]);
    }
    path.reverse();
    let arc_weights = path
        .windows(2)
        .map(|e| g.arc(e[0], e[1]).expect("arc on path").weight)
        .collect();
    OptimalPathResult {
        start: Some(s),
        path,
        weight: bw,
        arc_weights,
    }
}

/// Best path from every start vertex, indexed by start.
pub fn best_paths_per_start(g: &LatticeDigraph) -> Result<Vec<OptimalPathResult>> {
    let order = topological_order(g)?;
    let mut rank = vec![0; order.len()];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    Ok((0..g.num_vertices())
        .into_par_iter()
        .map(|s| best_from(g, &order, &rank, s))
        .collect())
}

/// Overall best over per-start results; ties go to fewer arcs, then the smaller start.
pub fn select_best(per_start: &[OptimalPathResult]) -> OptimalPathResult {
    let mut best = OptimalPathResult::empty();
    for r in per_start {
        if r.num_arcs() == 0 || r.weight <= 0.0 {
            continue;
        }
        let take = match best.start {
            None => true,
            Some(bs) => {
                better(r.weight, r.num_arcs(), best.weight, best.num_arcs())
                    || (r.weight == best.weight && r.num_arcs() == best.num_arcs() && r.start.expect("start") < bs)
            }
        };
        if take {
            best = r.clone();
        }
    }
    best
}

/// Maximum-weight simple directed path over all starts; the empty path (weight 0)
/// wins when no path has positive weight.
pub fn longest_path_all_starts(g: &LatticeDigraph) -> Result<OptimalPathResult> {
    Ok(select_best(&best_paths_per_start(g)?))
}

/// Which frame the forward field is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum V1Frame {
    /// Forward row of the constrained connection in the contact-link frame.
    ContactLink,
    /// Same motion re-expressed as central-axis frame velocity.
    #[default]
    CentralAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OalOptions {
    pub lattice: Lattice,
    pub v1_frame: V1Frame,
    pub weighting: ArcWeighting,
    /// `None` skips the conservativeness check.
    pub conservative_limit: Option<f64>,
}

impl OalOptions {
    pub fn for_spec(spec: &RobotSpec, n: usize) -> Result<Self> {
        Ok(Self {
            lattice: Lattice::new(n, spec.joint_limit)?,
            v1_frame: V1Frame::default(),
            weighting: ArcWeighting::default(),
            conservative_limit: Some(CONSERVATIVE_LIMIT),
        })
    }
}

/// Everything computed for one contact link.
#[derive(Debug, Clone)]
pub struct SingleObstacleOutcome {
    pub link: usize,
    pub side: Side,
    pub v1: VectorGrid,
    pub v2: VectorGrid,
    pub fit: PotentialFit,
    pub per_start: Vec<OptimalPathResult>,
    pub best: OptimalPathResult,
}

/// Forward row of the single-contact connection on a lattice.
pub fn forward_field(i0: usize, side: Side, spec: &RobotSpec, opts: &OalOptions) -> Result<VectorGrid> {
    let cond = ContactCondition::SingleObstacle { link: i0, side };
    let frame = match opts.v1_frame {
        V1Frame::ContactLink => FrameTag::Link(i0),
        V1Frame::CentralAxis => FrameTag::CentralAxis,
    };
    Ok(connection_grid_in_frame(cond, opts.lattice, spec, frame)?.row(0))
}

/// Lateral field, potential, forward field, DAG and longest path for one contact link.
pub fn optimize_single_obstacle(
    i0: usize,
    side: Side,
    spec: &RobotSpec,
    opts: &OalOptions,
) -> Result<SingleObstacleOutcome> {
    let v2 = lateral_row_field(i0, side, opts.lattice, spec)?;
    let fit = potential_fit(&v2)?;
    if let Some(limit) = opts.conservative_limit {
        fit.check(limit)?;
    }
    let v1 = forward_field(i0, side, spec, opts)?;
    let g = build_dag(&v1, &fit.potential, opts.weighting)?;
    let per_start = best_paths_per_start(&g)?;
    let best = select_best(&per_start);
    Ok(SingleObstacleOutcome {
        link: i0,
        side,
        v1,
        v2,
        fit,
        per_start,
        best,
    })
}

/// Whether every step of a path moves along the lateral field.
pub fn audit_path(path: &[ShapePoint], v2: &VectorGrid) -> bool {
    path.windows(2).all(|s| {
        let mid = ShapePoint::new(0.5 * (s[0].w1 + s[1].w1), 0.5 * (s[0].w2 + s[1].w2));
        match v2.interpolate(mid) {
            Some(v) => v.dot(&(s[1].to_vector() - s[0].to_vector())) > 0.0,
            None => false,
        }
    })
}

#[derive(Debug, Clone)]
pub struct EffectiveGait {
    pub result: OptimalPathResult,
    pub audit_pass: bool,
}

#[derive(Debug, Clone)]
pub struct EffectiveSet {
    pub link: usize,
    pub side: Side,
    pub threshold: f64,
    pub gaits: Vec<EffectiveGait>,
    pub rho: f64,
}

impl EffectiveSet {
    pub fn len(&self) -> usize {
        self.gaits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaits.is_empty()
    }

    /// Union of path vertices (with repetition, no deduplication).
    pub fn points(&self, lattice: &Lattice) -> Vec<ShapePoint> {
        self.gaits.iter().flat_map(|g| g.result.points(lattice)).collect()
    }
}

/// Per-start best paths whose weight reaches `threshold` and is positive.
pub fn effective_from_outcome(out: &SingleObstacleOutcome, threshold: f64) -> EffectiveSet {
    let lat = out.v1.lattice;
    let gaits = out
        .per_start
        .iter()
        .filter(|r| r.num_arcs() > 0 && r.weight > 0.0 && r.weight >= threshold)
        .map(|r| EffectiveGait {
            audit_pass: audit_path(&r.points(&lat), &out.v2),
            result: r.clone(),
        })
        .collect();
    EffectiveSet {
        link: out.link,
        side: out.side,
        threshold,
        gaits,
        rho: out.fit.rho,
    }
}

pub fn effective_gait_set(
    i0: usize,
    side: Side,
    spec: &RobotSpec,
    opts: &OalOptions,
    threshold: f64,
) -> Result<EffectiveSet> {
    Ok(effective_from_outcome(
        &optimize_single_obstacle(i0, side, spec, opts)?,
        threshold,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    pub center: (f64, f64),
    /// `(long, short)` semi-axes.
    pub semi_axes: (f64, f64),
    /// Long-axis angle in `[0, pi)`.
    pub orientation: f64,
    pub flatness: f64,
    pub rms_residual: f64,
}

/// Distance from `(y0, y1)` (first quadrant) to the axis-aligned ellipse with
/// semi-axes `e0 >= e1`, by bisection on the Lagrange parameter.
fn distance_to_ellipse(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1) * (e0 / e1);
            let n0 = r0 * z0;
            let mut s0 = z1 - 1.0;
            let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
            let mut s = 0.0;
            for _ in 0..2000 {
                s = 0.5 * (s0 + s1);
                if s == s0 || s == s1 {
                    break;
                }
                let a = n0 / (s + r0);
                let b = z1 / (s + 1.0);
                let gs = a * a + b * b - 1.0;
                if gs > 0.0 {
                    s0 = s;
                } else if gs < 0.0 {
                    s1 = s;
                } else {
                    break;
                }
            }
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Direct least-squares ellipse fit (ellipse-specific constraint `4ac - b^2 = 1`)
/// on normalised coordinates.
pub fn fit_ellipse(points: &[ShapePoint]) -> Result<EllipseFit> {
    // canonical order makes the fit independent of how points are listed
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.w1.total_cmp(&b.w1).then(a.w2.total_cmp(&b.w2)));
    let points = &sorted[..];
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 6 {
        return Err(OalError::DegenerateFit(format!(
            "need at least 6 distinct points, got {}",
            distinct.len()
        )));
    }
    let m = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p.to_vector()) / m;
    let mut cov = Matrix2::zeros();
    for p in points {
        let d = p.to_vector() - mean;
        cov += d * d.transpose();
    }
    cov /= m;
    let ev = cov.symmetric_eigen().eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if hi <= 0.0 || lo <= 1e-8 * hi {
        return Err(OalError::DegenerateFit("points are collinear".into()));
    }
    let scale = (cov.trace()).sqrt();

    let mut d1 = DMatrix::zeros(points.len(), 3);
    let mut d2 = DMatrix::zeros(points.len(), 3);
    for (k, p) in points.iter().enumerate() {
        let x = (p.w1 - mean.x) / scale;
        let y = (p.w2 - mean.y) / scale;
        d1[(k, 0)] = x * x;
        d1[(k, 1)] = x * y;
        d1[(k, 2)] = y * y;
        d2[(k, 0)] = x;
        d2[(k, 1)] = y;
        d2[(k, 2)] = 1.0;
    }
    let s1 = d1.transpose() * &d1;
    let s2 = d1.transpose() * &d2;
    let s3 = d2.transpose() * &d2;
    let s3_inv = s3
        .clone()
        .try_inverse()
        .ok_or_else(|| OalError::DegenerateFit("singular linear scatter".into()))?;
    let t = -(&s3_inv * s2.transpose());
    let mm = &s1 + &s2 * &t;
    // premultiply by the inverse constraint matrix
    let red = Matrix3::new(
        mm[(2, 0)] / 2.0,
        mm[(2, 1)] / 2.0,
        mm[(2, 2)] / 2.0,
        -mm[(1, 0)],
        -mm[(1, 1)],
        -mm[(1, 2)],
        mm[(0, 0)] / 2.0,
        mm[(0, 1)] / 2.0,
        mm[(0, 2)] / 2.0,
    );
    let mut chosen: Option<Vector3<f64>> = None;
    let mut best_cond = 0.0;
    for lam in red.complex_eigenvalues().iter() {
        if lam.im.abs() > 1e-9 * (1.0 + lam.re.abs()) {
            continue;
        }
        let shifted = red - Matrix3::identity() * lam.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let (kmin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
        let v = Vector3::new(vt[(kmin, 0)], vt[(kmin, 1)], vt[(kmin, 2)]);
        let c = 4.0 * v.x * v.z - v.y * v.y;
        if c > best_cond {
            best_cond = c;
            chosen = Some(v);
        }
    }
    let a1 = chosen.ok_or_else(|| OalError::DegenerateFit("no elliptic solution".into()))?;
    let a2 = &t * nalgebra::DVector::from_column_slice(a1.as_slice());
    let (a, b, c, d, e, f) = (a1.x, a1.y, a1.z, a2[0], a2[1], a2[2]);

    let q = Matrix2::new(a, b / 2.0, b / 2.0, c);
    let center_n = (2.0 * q)
        .try_inverse()
        .ok_or_else(|| OalError::DegenerateFit("singular conic".into()))?
        * Vector2::new(-d, -e);
    let k = -(f + 0.5 * (d * center_n.x + e * center_n.y));
    let eig = (q / k).symmetric_eigen();
    let (il, is) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    if eig.eigenvalues[il] <= 0.0 || eig.eigenvalues[is] <= 0.0 {
        return Err(OalError::DegenerateFit("fitted conic is not an ellipse".into()));
    }
    let long = scale / eig.eigenvalues[il].sqrt();
    let short = scale / eig.eigenvalues[is].sqrt();
    let dir = eig.eigenvectors.column(il);
    let orientation = dir.y.atan2(dir.x).rem_euclid(PI);
    let orientation = if orientation >= PI { 0.0 } else { orientation };
    let center = mean + center_n * scale;

    let (sn, cs) = orientation.sin_cos();
    let sq: f64 = points
        .iter()
        .map(|p| {
            let r = p.to_vector() - center;
            let u = cs * r.x + sn * r.y;
            let v = -sn * r.x + cs * r.y;
            let d = distance_to_ellipse(long, short, u.abs(), v.abs());
            d * d
        })
        .sum();
    Ok(EllipseFit {
        center: (center.x, center.y),
        semi_axes: (long, short),
        orientation,
        flatness: short / long,
        rms_residual: (sq / m).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseEvaluation {
    pub phi: f64,
    pub theta: f64,
    pub wm: f64,
    /// `+1` for clockwise traversal (positive temporal frequency), `-1` otherwise.
    pub direction: f64,
    pub surface_integral: f64,
    pub line_integral: f64,
}

#[derive(Debug, Clone)]
pub struct DenseGaitResult {
    pub best: DenseEvaluation,
    pub evaluations: Vec<DenseEvaluation>,
}

/// Candidate gaits scored by the forward height function of the all-sides
/// constrained connection, integrated over the enclosed region.
pub fn dense_obstacle_gait(
    spec: &RobotSpec,
    lattice: Lattice,
    phis: &[f64],
    thetas: &[f64],
    wm: f64,
    samples: usize,
) -> Result<DenseGaitResult> {
    if phis.is_empty() || thetas.is_empty() {
        return Err(OalError::InvalidConfig("empty gait family".into()));
    }
    let height = height_function(ContactCondition::MultiObstacle, spec, lattice)?;
    let forward = connection_grid(ContactCondition::MultiObstacle, lattice, spec)?.row(0);
    let jobs: Vec<(f64, f64, f64)> = phis
        .iter()
        .flat_map(|&phi| {
            thetas
                .iter()
                .flat_map(move |&theta| [1.0, -1.0].map(|d| (phi, theta, d)))
        })
        .collect();
    let evaluations = jobs
        .par_iter()
        .map(|&(phi, theta, direction)| {
            let g = GaitSpec::new(phi, theta, wm)
                .with_samples(samples)
                .with_omega(direction * 2.0 * PI);
            g.validate(Some(lattice.theta_m))?;
            let path = elliptical_gait(&g);
            let surface = enclosed_integral(&path.points, &height.da[0], 8)?;
            let line = line_integral(&path.points, &forward)?;
            Ok(DenseEvaluation {
                phi,
                theta,
                wm,
                direction,
                surface_integral: surface,
                line_integral: line,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = *evaluations
        .iter()
        .reduce(|a, b| if b.surface_integral > a.surface_integral { b } else { a })
        .expect("nonempty");
    Ok(DenseGaitResult { best, evaluations })
}

/// Maximum score per `phi` over orientations and directions.
pub fn best_per_phi(result: &DenseGaitResult) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for e in &result.evaluations {
        match out.iter_mut().find(|(p, _)| *p == e.phi) {
            Some(slot) => slot.1 = slot.1.max(e.surface_integral),
            None => out.push((e.phi, e.surface_integral)),
        }
    }
    out
}
