//! Exterior derivative, Lie bracket, height functions and potentials over a lattice.

use nalgebra::{DVector, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{FrameTag, RobotSpec, ShapePoint};
use crate::error::{OalError, Result};
use crate::grid::{ConnectionGrid, FieldGrid, Lattice, ScalarGrid, VectorGrid};
use crate::rft::{connection_grid, ContactCondition};
use crate::se2::bracket;

/// Residual fraction above which a lateral field is treated as non-conservative.
pub const CONSERVATIVE_LIMIT: f64 = 0.2;

/// Second-order derivative along one lattice axis at position `k` of `n+1`.
fn diff(f: impl Fn(usize) -> Option<f64>, k: usize, n: usize, h: f64) -> Option<f64> {
    if k == 0 {
        Some((-3.0 * f(0)? + 4.0 * f(1)? - f(2)?) / (2.0 * h))
    } else if k == n {
        Some((3.0 * f(n)? - 4.0 * f(n - 1)? + f(n - 2)?) / (2.0 * h))
    } else {
        Some((f(k + 1)? - f(k - 1)?) / (2.0 * h))
    }
}

/// `d(col2)/dw1 - d(col1)/dw2`, the integrand of the surface form of a loop integral.
pub fn curl_grid(row: &VectorGrid) -> Result<ScalarGrid> {
    let lat = row.lattice;
    if lat.n < 2 {
        return Err(OalError::GridMismatch("curl needs at least 3 points per axis".into()));
    }
    let h = lat.h();
    let n = lat.n;
    let at = |i: usize, j: usize, c: usize| -> Option<f64> { row.is_valid(i, j).then(|| row.get(i, j)[c]) };
    let mut values = vec![0.0; lat.len()];
    let mut valid = vec![false; lat.len()];
    for i in 0..=n {
        for j in 0..=n {
            let d2 = diff(|k| at(k, j, 1), i, n, h);
            let d1 = diff(|k| at(i, k, 0), j, n, h);
            if let (Some(a), Some(b)) = (d2, d1) {
                let k = lat.index(i, j);
                values[k] = a - b;
                valid[k] = true;
            }
        }
    }
    FieldGrid::from_values(lat, values, valid)
}

/// Pointwise se(2) bracket of the two connection columns.
pub fn lie_bracket_grid(conn: &ConnectionGrid) -> FieldGrid<Vector3<f64>> {
    conn.grid.map(|m| {
        let a1 = m.column(0).into_owned();
        let a2 = m.column(1).into_owned();
        bracket(&a1, &a2)
    })
}

/// Height functions of the three body-velocity components.
#[derive(Debug, Clone)]
pub struct HeightGrid {
    pub condition: ContactCondition,
    pub frame: FrameTag,
    /// `curl_term[k] + bracket_term[k]` for each row `k`.
    pub da: [ScalarGrid; 3],
    pub curl_term: [ScalarGrid; 3],
    pub bracket_term: [ScalarGrid; 3],
}

impl HeightGrid {
    pub fn lattice(&self) -> Lattice {
        self.da[0].lattice
    }
}

pub fn height_from_connection(conn: &ConnectionGrid) -> Result<HeightGrid> {
    let br = lie_bracket_grid(conn);
    let mut curl = Vec::with_capacity(3);
    let mut brk = Vec::with_capacity(3);
    let mut da = Vec::with_capacity(3);
    for k in 0..3 {
        let c = curl_grid(&conn.row(k))?;
        let b = br.map(|v| v[k]);
        let mut d = c.clone();
        for idx in 0..d.values.len() {
            d.values[idx] = c.values[idx] + b.values[idx];
            d.valid[idx] = c.valid[idx] && b.valid[idx];
        }
        curl.push(c);
        brk.push(b);
        da.push(d);
    }
    let arr = |v: Vec<ScalarGrid>| -> [ScalarGrid; 3] { v.try_into().expect("three rows") };
    Ok(HeightGrid {
        condition: conn.condition,
        frame: conn.frame,
        da: arr(da),
        curl_term: arr(curl),
        bracket_term: arr(brk),
    })
}

/// Connection grid for `condition` followed by curl and bracket per row.
pub fn height_function(condition: ContactCondition, spec: &RobotSpec, lattice: Lattice) -> Result<HeightGrid> {
    height_from_connection(&connection_grid(condition, lattice, spec)?)
}

/// Which connection rows enter the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScanRows {
    /// Forward row only.
    #[default]
    Forward,
    All,
}

/// `sqrt(sum dA^2 h^2)` over valid vertices of the chosen rows.
pub fn frobenius_norm(h: &HeightGrid, rows: ScanRows) -> f64 {
    let ks: &[usize] = match rows {
        ScanRows::Forward => &[0],
        ScanRows::All => &[0, 1, 2],
    };
    let step = h.lattice().h();
    let mut acc = 0.0;
    for &k in ks {
        let g = &h.curl_term[k];
        for (v, ok) in g.values.iter().zip(&g.valid) {
            if *ok {
                acc += v * v;
            }
        }
    }
    (acc * step * step).sqrt()
}

/// Frobenius norm of the free-body `dA` for each wave number, sorted by wave number.
pub fn frobenius_scan(
    fs_values: &[f64],
    spec: &RobotSpec,
    lattice: Lattice,
    rows: ScanRows,
) -> Result<Vec<(f64, f64)>> {
    if fs_values.is_empty() {
        return Err(OalError::InvalidConfig("empty wave-number list".into()));
    }
    let mut out = fs_values
        .par_iter()
        .map(|&fs| {
            let s = spec.with_wave_number(fs);
            s.validate()?;
            let h = height_function(ContactCondition::Free, &s, lattice)?;
            Ok((fs, frobenius_norm(&h, rows)))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Integer-stepped wave-number range; avoids accumulating float drift.
pub fn wave_number_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) || !from.is_finite() || !to.is_finite() {
        return Err(OalError::InvalidConfig(format!(
            "bad range from={from} to={to} step={step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|k| {
            let v = from + k as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

/// Least-squares potential of a 2-vector field.
#[derive(Debug, Clone)]
pub struct PotentialFit {
    pub potential: ScalarGrid,
    /// `||grad P - V||/||V||` over lattice edges.
    pub rho: f64,
    pub iterations: usize,
}

impl PotentialFit {
    pub fn check(&self, limit: f64) -> Result<()> {
        if self.rho > limit || !self.rho.is_finite() {
            return Err(OalError::NonConservativeField { rho: self.rho, limit });
        }
        Ok(())
    }
}

/// Lattice edges `(tail, head, axis)` with `head` one step up along `axis`.
fn lattice_edges(lat: &Lattice) -> Vec<(usize, usize, usize)> {
    let n = lat.n;
    let mut e = Vec::with_capacity(2 * n * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            if i < n {
                e.push((lat.index(i, j), lat.index(i + 1, j), 0));
            }
            if j < n {
                e.push((lat.index(i, j), lat.index(i, j + 1), 1));
            }
        }
    }
    e
}

/// Fit `P` with `P(center) = 0` minimising the squared mismatch between edge
/// differences of `P` and the trapezoidal edge integrals of the field.
pub fn potential_fit(field: &VectorGrid) -> Result<PotentialFit> {
    if !field.all_valid() {
        return Err(OalError::GridMismatch(format!(
            "potential fit needs a fully valid field ({} invalid points)",
            field.invalid_count()
        )));
    }
    let lat = field.lattice;
    let h = lat.h();
    let edges = lattice_edges(&lat);
    let target: Vec<f64> = edges
        .iter()
        .map(|&(a, b, ax)| 0.5 * h * (field.values[a][ax] + field.values[b][ax]))
        .collect();
    let nv = lat.len();
    let gauge = lat.center_index();

    // graph Laplacian and divergence of the edge data
    let mut rhs = DVector::zeros(nv);
    for (&(a, b, _), &t) in edges.iter().zip(&target) {
        rhs[b] += t;
        rhs[a] -= t;
    }
    rhs[gauge] = 0.0;
    let apply = |x: &DVector<f64>| -> DVector<f64> {
        let mut y = DVector::zeros(nv);
        for &(a, b, _) in &edges {
            let d = x[b] - x[a];
            y[b] += d;
            y[a] -= d;
        }
        y[gauge] = x[gauge];
        y
    };

    // conjugate gradients; the gauge row makes the operator SPD
    let mut x = DVector::zeros(nv);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let scale = rhs.norm().max(1e-300);
    let mut iterations = 0;
    for _ in 0..(10 * nv) {
        if rs.sqrt() <= 1e-13 * scale {
            break;
        }
        let ap = apply(&p);
        let alpha = rs / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rs_new = r.dot(&r);
        p = &r + (rs_new / rs) * &p;
        rs = rs_new;
        iterations += 1;
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for (&(a, b, _), &t) in edges.iter().zip(&target) {
        let d = x[b] - x[a] - t;
        num += d * d;
        den += t * t;
    }
    let rho = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(PotentialFit {
        potential: FieldGrid::from_values(lat, x.iter().cloned().collect(), vec![true; nv])?,
        rho,
        iterations,
    })
}

/// Trapezoidal line integral of a field along a polyline (bilinear interpolation).
pub fn line_integral(path: &[ShapePoint], field: &VectorGrid) -> Result<f64> {
    let mut prev: Option<(ShapePoint, Vector2<f64>)> = None;
    let mut total = 0.0;
    for &p in path {
        let v = field
            .interpolate(p)
            .ok_or(OalError::PathOutsideDomain { w1: p.w1, w2: p.w2 })?;
        if let Some((q, u)) = prev {
            let d = p.to_vector() - q.to_vector();
            total += 0.5 * (u + v).dot(&d);
        }
        prev = Some((p, v));
    }
    Ok(total)
}

/// Winding number of a closed polyline around `q` (last point joins the first).
pub fn winding_number(path: &[ShapePoint], q: Vector2<f64>) -> i32 {
    let mut wn = 0;
    let m = path.len();
    for k in 0..m {
        let a = path[k].to_vector();
        let b = path[(k + 1) % m].to_vector();
        let side = (b.x - a.x) * (q.y - a.y) - (q.x - a.x) * (b.y - a.y);
        if a.y <= q.y {
            if b.y > q.y && side > 0.0 {
                wn += 1;
            }
        } else if b.y <= q.y && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Integral of a scalar field over the region enclosed by a closed path,
/// weighted by winding number. Each lattice cell is sampled on a
/// `supersample x supersample` grid of sub-cell centers.
pub fn enclosed_integral(path: &[ShapePoint], field: &ScalarGrid, supersample: usize) -> Result<f64> {
    if path.len() < 3 {
        return Ok(0.0);
    }
    let lat = field.lattice;
    for p in path {
        if !lat.contains(*p) {
            return Err(OalError::PathOutsideDomain { w1: p.w1, w2: p.w2 });
        }
    }
    let s = supersample.max(1);
    let h = lat.h();
    let sub = h / s as f64;
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in path {
        lo = lo.inf(&p.to_vector());
        hi = hi.sup(&p.to_vector());
    }
    let first = |x: f64| (((x + lat.theta_m) / sub).floor().max(0.0)) as usize;
    let last = |x: f64| ((((x + lat.theta_m) / sub).ceil()) as usize).min(lat.n * s);
    let (i0, i1, j0, j1) = (first(lo.x), last(hi.x), first(lo.y), last(hi.y));
    let rows: Vec<f64> = (i0..i1)
        .into_par_iter()
        .map(|i| {
            let x = -lat.theta_m + (i as f64 + 0.5) * sub;
            let mut acc = 0.0;
            for j in j0..j1 {
                let y = -lat.theta_m + (j as f64 + 0.5) * sub;
                let wn = winding_number(path, Vector2::new(x, y));
                if wn != 0 {
                    let v = field.interpolate(ShapePoint::new(x, y)).unwrap_or(0.0);
                    acc += wn as f64 * v;
                }
            }
            acc
        })
        .collect();
    Ok(rows.iter().sum::<f64>() * sub * sub)
}

/// Vertex-curl cell sum over the cells enclosed by a closed lattice loop.
///
/// Each cell contributes the mean of its four corner values times `h^2`, weighted
/// by the loop's winding number around the cell center.
pub fn lattice_cell_sum(loop_path: &[ShapePoint], field: &ScalarGrid) -> f64 {
    let lat = field.lattice;
    let h = lat.h();
    let mut acc = 0.0;
    for i in 0..lat.n {
        for j in 0..lat.n {
            let c = Vector2::new(lat.coord(i) + 0.5 * h, lat.coord(j) + 0.5 * h);
            let wn = winding_number(loop_path, c);
            if wn != 0 {
                let mean =
                    0.25 * (field.get(i, j) + field.get(i + 1, j) + field.get(i, j + 1) + field.get(i + 1, j + 1));
                acc += wn as f64 * mean * h * h;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3x2;
    use proptest::prelude::*;

    fn lat(n: usize) -> Lattice {
        Lattice::new(n, 1.0).unwrap()
    }

    #[test]
    fn curl_of_simple_fields() {
        let l = lat(20);
        let c = curl_grid(&VectorGrid::from_fn(l, |_| Vector2::new(0.3, -1.0))).unwrap();
        assert!(c.max_abs() < 1e-14);
        let c = curl_grid(&VectorGrid::from_fn(l, |w| Vector2::new(-w.w2, w.w1))).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.0).abs() < 1e-10));
        // gradient of w1^2 w2
        let c = curl_grid(&VectorGrid::from_fn(l, |w| {
            Vector2::new(2.0 * w.w1 * w.w2, w.w1 * w.w1)
        }))
        .unwrap();
        assert!(c.max_abs() < 4.0 * l.h() * l.h());
    }

    #[test]
    fn curl_converges_second_order() {
        let err = |n: usize| {
            let l = lat(n);
            let f = |w: ShapePoint| Vector2::new((w.w2 * 2.0).sin(), (w.w1 * 1.5).cos() * w.w2);
            let exact = |w: ShapePoint| -1.5 * (w.w1 * 1.5).sin() * w.w2 - 2.0 * (w.w2 * 2.0).cos();
            let c = curl_grid(&VectorGrid::from_fn(l, f)).unwrap();
            (0..l.len())
                .map(|k| (c.values[k] - exact(l.point_at(k))).abs())
                .fold(0.0_f64, f64::max)
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    fn grid_of(m: Matrix3x2<f64>) -> ConnectionGrid {
        ConnectionGrid {
            grid: FieldGrid::from_fn(lat(4), |_| m),
            condition: ContactCondition::Free,
            frame: FrameTag::CentralAxis,
            failures: vec![],
        }
    }

    #[test]
    fn bracket_examples() {
        let same = grid_of(Matrix3x2::new(0.2, 0.2, -0.5, -0.5, 0.9, 0.9));
        assert!(lie_bracket_grid(&same).values.iter().all(|v| *v == Vector3::zeros()));
        let gen = grid_of(Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0));
        assert!(lie_bracket_grid(&gen)
            .values
            .iter()
            .all(|v| *v == Vector3::new(0.0, -1.0, 0.0)));
    }

    #[test]
    fn height_is_sum_of_terms() {
        let spec = RobotSpec::default();
        let h = height_function(ContactCondition::Free, &spec, Lattice::new(10, 1.0).unwrap()).unwrap();
        for k in 0..3 {
            for idx in 0..h.da[k].values.len() {
                assert_eq!(
                    h.da[k].values[idx],
                    h.curl_term[k].values[idx] + h.bracket_term[k].values[idx]
                );
            }
            if k == 2 {
                assert!(h.bracket_term[k].values.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn potential_of_exact_gradient() {
        let l = lat(16);
        let g = VectorGrid::from_fn(l, |w| Vector2::new(2.0 * w.w1, 2.0 * w.w2));
        let fit = potential_fit(&g).unwrap();
        assert!(fit.rho < 1e-10);
        for k in 0..l.len() {
            let w = l.point_at(k);
            assert_abs_diff_eq!(fit.potential.values[k], w.w1 * w.w1 + w.w2 * w.w2, epsilon = 1e-9);
        }
        fit.check(CONSERVATIVE_LIMIT).unwrap();
    }

    #[test]
    fn potential_of_rotation_field_fails() {
        let g = VectorGrid::from_fn(lat(16), |w| Vector2::new(-w.w2, w.w1));
        let fit = potential_fit(&g).unwrap();
        assert!(fit.rho > 0.9, "rho {}", fit.rho);
        assert!(matches!(
            fit.check(CONSERVATIVE_LIMIT),
            Err(OalError::NonConservativeField { .. })
        ));
    }

    #[test]
    fn potential_residual_converges_second_order() {
        let res = |n: usize| {
            let l = lat(n);
            let g = VectorGrid::from_fn(l, |w| Vector2::new(w.w1.cos() * w.w2.exp(), w.w1.sin() * w.w2.exp()));
            let fit = potential_fit(&g).unwrap();
            (0..l.len())
                .map(|k| {
                    let w = l.point_at(k);
                    (fit.potential.values[k] - w.w1.sin() * w.w2.exp()).abs()
                })
                .fold(0.0_f64, f64::max)
        };
        let ratio = res(10) / res(20);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    fn square(c: (f64, f64), a: f64, steps: usize) -> Vec<ShapePoint> {
        let mut p = Vec::new();
        let corners = [
            (c.0 - a / 2.0, c.1 - a / 2.0),
            (c.0 + a / 2.0, c.1 - a / 2.0),
            (c.0 + a / 2.0, c.1 + a / 2.0),
            (c.0 - a / 2.0, c.1 + a / 2.0),
        ];
        for k in 0..4 {
            let (x0, y0) = corners[k];
            let (x1, y1) = corners[(k + 1) % 4];
            for s in 0..steps {
                let t = s as f64 / steps as f64;
                p.push(ShapePoint::new(x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
            }
        }
        p.push(p[0]);
        p
    }

    #[test]
    fn line_integral_examples() {
        let l = lat(20);
        let f = VectorGrid::from_fn(l, |w| Vector2::new(-w.w2, w.w1 + w.w1 * w.w1));
        assert_eq!(line_integral(&[ShapePoint::new(0.1, 0.2)], &f).unwrap(), 0.0);
        let a = 0.4;
        let sq = square((0.2, -0.1), a, 8);
        let v = line_integral(&sq, &f).unwrap();
        // curl = 2 + 2 w1, centered at w1 = 0.2
        assert_abs_diff_eq!(v, 2.4 * a * a, epsilon = 1e-3 * a * a);
        let rev: Vec<_> = sq.iter().rev().cloned().collect();
        assert_abs_diff_eq!(line_integral(&rev, &f).unwrap(), -v, epsilon = 1e-14);
        assert!(matches!(
            line_integral(&[ShapePoint::new(1.5, 0.0)], &f),
            Err(OalError::PathOutsideDomain { .. })
        ));
    }

    #[test]
    fn enclosed_integral_of_constant() {
        let l = lat(20);
        let one = ScalarGrid::from_fn(l, |_| 1.0);
        let n = 400;
        let circle: Vec<_> = (0..=n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                ShapePoint::new(0.5 * t.cos(), 0.5 * t.sin())
            })
            .collect();
        let area = enclosed_integral(&circle, &one, 8).unwrap();
        assert_abs_diff_eq!(area, std::f64::consts::PI * 0.25, epsilon = 2e-3);
        let cw: Vec<_> = circle.iter().rev().cloned().collect();
        assert_abs_diff_eq!(enclosed_integral(&cw, &one, 8).unwrap(), -area, epsilon = 1e-12);
        assert_eq!(enclosed_integral(&[ShapePoint::default(); 2], &one, 4).unwrap(), 0.0);
    }

    #[test]
    fn wave_number_range_is_exact() {
        let r = wave_number_range(0.25, 1.5, 0.05).unwrap();
        assert_eq!(r.len(), 26);
        assert_eq!(r[5], 0.5);
        assert_eq!(*r.last().unwrap(), 1.5);
    }

    proptest! {
        #[test]
        fn bracket_antisymmetric(a in proptest::array::uniform6(-2.0..2.0f64)) {
            let m = Matrix3x2::from_row_slice(&a);
            let sw = Matrix3x2::from_columns(&[m.column(1).into_owned(), m.column(0).into_owned()]);
            let b1 = lie_bracket_grid(&grid_of(m)).values[0];
            let b2 = lie_bracket_grid(&grid_of(sw)).values[0];
            prop_assert!((b1 + b2).amax() < 1e-14);
            prop_assert_eq!(b1.z, 0.0);
        }

        #[test]
        fn lattice_loops_satisfy_stokes(i0 in 1usize..10, j0 in 1usize..10, wi in 1usize..8, wj in 1usize..8) {
            let l = lat(20);
            let f = VectorGrid::from_fn(l, |w| Vector2::new((w.w2 * 1.3).sin() * w.w1, w.w1 * w.w1 - 0.5 * w.w2));
            let c = curl_grid(&f).unwrap();
            let (i1, j1) = (i0 + wi, j0 + wj);
            let mut p = Vec::new();
            for i in i0..i1 { p.push(l.point(i, j0)); }
            for j in j0..j1 { p.push(l.point(i1, j)); }
            for i in (i0 + 1..=i1).rev() { p.push(l.point(i, j1)); }
            for j in (j0 + 1..=j1).rev() { p.push(l.point(i0, j)); }
            p.push(p[0]);
            let li = line_integral(&p, &f).unwrap();
            let cs = lattice_cell_sum(&p, &c);
            prop_assert!((li - cs).abs() <= 0.01 * li.abs() + 1e-2 * l.h() * l.h() * (wi * wj) as f64);
        }
    }
}
