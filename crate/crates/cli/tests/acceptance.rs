//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion outside `KNOWN_FAILURES` fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use oal_core::fields::{
    curl_grid, frobenius_scan, lattice_cell_sum, line_integral, potential_fit, wave_number_range, ScanRows,
};
use oal_core::optimizer::{
    build_dag, forward_field, longest_path_all_starts, topological_order, ArcWeighting, LatticeDigraph, OalOptions,
    V1Frame,
};
use oal_core::rft::lateral_row_field;
use oal_core::se2::bracket;
use oal_core::sim::{loglog_slope, small_amplitude_consistency};
use oal_core::{
    net_wrench, solve_connection, BodyVelocity, ContactCondition, FieldGrid, Lattice, RobotSpec, ScalarGrid,
    ShapePoint, Side, VectorGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criteria whose targets this model does not reach; they are still run and printed.
const KNOWN_FAILURES: &[u32] = &[2, 5, 8, 9, 13];

type Outcome = Result<(bool, String), String>;

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let root = work.path();
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Box::new(c1_force_balance)),
        (2, Box::new(c2_stokes)),
        (3, Box::new(c3_decomposition)),
        (4, Box::new(move || c4_wave_number_scan(root))),
        (5, Box::new(move || c5_height_structure(root))),
        (6, Box::new(c6_acyclic)),
        (7, Box::new(c7_dp_oracle)),
        (8, Box::new(move || c8_single_obstacle(root))),
        (9, Box::new(move || c9_ellipse(root))),
        (10, Box::new(move || c10_dense(root))),
        (11, Box::new(move || c11_walls(root))),
        (12, Box::new(move || c12_spacing(root))),
        (13, Box::new(move || c13_gait_selection(root))),
        (14, Box::new(c14_small_amplitude)),
        (15, Box::new(move || c15_determinism(root))),
    ];
    let mut unexpected = Vec::new();
    for (n, check) in criteria {
        let t = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let known = KNOWN_FAILURES.contains(&n);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("C{n:<2} {tag}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        if !pass && !known {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn recipe(name: &str, out: &Path) -> Result<(), String> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs/recipes")
        .join(name);
    let status = Command::new("bash")
        .arg(&script)
        .arg(out)
        .env("OAL", env!("CARGO_BIN_EXE_oal"))
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(err)?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("{name} exited with {status}"))
    }
}

/// Output directory of a recipe, run on first use.
fn recipe_out(root: &Path, name: &str) -> Result<PathBuf, String> {
    let out = root.join(name.trim_end_matches(".sh"));
    if !out.exists() {
        recipe(name, &out)?;
    }
    Ok(out)
}

fn json(path: impl AsRef<Path>) -> Result<Value, String> {
    let p = path.as_ref();
    let s = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&s).map_err(|e| format!("{}: {e}", p.display()))
}

fn num(v: &Value, key: &str) -> Result<f64, String> {
    v[key].as_f64().ok_or_else(|| format!("missing number '{key}'"))
}

fn random_shape(rng: &mut ChaCha8Rng, limit: f64) -> ShapePoint {
    ShapePoint::new(rng.gen_range(-limit..limit), rng.gen_range(-limit..limit))
}

fn c1_force_balance() -> Outcome {
    let spec = RobotSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst = BTreeMap::new();
    for mode in ["free", "single", "multi"] {
        let mut max_res: f64 = 0.0;
        for _ in 0..1000 {
            let w = random_shape(&mut rng, spec.joint_limit);
            let wd = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (cond, rows): (ContactCondition, &[usize]) = match mode {
                "free" => (ContactCondition::Free, &[0, 1, 2]),
                "single" => {
                    let link = rng.gen_range(1..=spec.num_links());
                    let side = if rng.gen_bool(0.5) { Side::Lhs } else { Side::Rhs };
                    (ContactCondition::SingleObstacle { link, side }, &[0, 2])
                }
                _ => (ContactCondition::MultiObstacle, &[0]),
            };
            let (conn, _) = solve_connection(w, cond, &spec).map_err(err)?;
            let xi = BodyVelocity {
                xi: conn.apply(wd),
                frame: conn.frame,
            };
            let f = net_wrench(&xi, w, wd, &spec);
            for &k in rows {
                max_res = max_res.max(f[k].abs());
            }
        }
        worst.insert(mode, max_res);
    }
    let elapsed = t.elapsed();
    let pass = worst.values().all(|&r| r < 1e-8) && elapsed < Duration::from_secs(30);
    Ok((
        pass,
        format!(
            "max active residual free {:.1e}, single {:.1e}, multi {:.1e}; 3000 solves in {:.2}s",
            worst["free"],
            worst["single"],
            worst["multi"],
            elapsed.as_secs_f64()
        ),
    ))
}

/// Counter-clockwise boundary of a random x-monotone union of lattice columns,
/// listing every lattice vertex and closed by repeating the first.
fn random_lattice_loop(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let width = rng.gen_range(2..=n / 2);
    let i0 = rng.gen_range(0..=n - width);
    let mut lo = vec![0usize; width];
    let mut hi = vec![0usize; width];
    lo[0] = rng.gen_range(0..=n - 2);
    hi[0] = rng.gen_range(lo[0] + 2..=n);
    for c in 1..width {
        let step = |v: usize, rng: &mut ChaCha8Rng| (v as i64 + rng.gen_range(-2..=2)).clamp(0, n as i64) as usize;
        let mut l = step(lo[c - 1], rng).min(hi[c - 1] - 1);
        let mut h = step(hi[c - 1], rng).max(lo[c - 1] + 1);
        if h < l + 2 {
            if l + 2 <= n {
                h = l + 2;
            } else {
                l = h - 2;
            }
        }
        lo[c] = l;
        hi[c] = h;
    }
    let mut pts = vec![(i0, lo[0])];
    let go = |to: (usize, usize), pts: &mut Vec<(usize, usize)>| {
        let mut cur = *pts.last().unwrap();
        while cur != to {
            if cur.0 != to.0 {
                cur.0 = if to.0 > cur.0 { cur.0 + 1 } else { cur.0 - 1 };
            } else {
                cur.1 = if to.1 > cur.1 { cur.1 + 1 } else { cur.1 - 1 };
            }
            pts.push(cur);
        }
    };
    for c in 0..width {
        go((i0 + c + 1, lo[c]), &mut pts);
        let next = if c + 1 < width { lo[c + 1] } else { hi[c] };
        go((i0 + c + 1, next), &mut pts);
    }
    for c in (0..width).rev() {
        go((i0 + c, hi[c]), &mut pts);
        let next = if c > 0 { hi[c - 1] } else { lo[0] };
        go((i0 + c, next), &mut pts);
    }
    pts
}

/// Loop integral of the exact connection rows, midpoint rule on 16 pieces per edge.
fn reference_loop_integral(lp: &[ShapePoint], spec: &RobotSpec) -> Result<Vector3<f64>, String> {
    let mut total = Vector3::zeros();
    for e in lp.windows(2) {
        let (a, b) = (e[0].to_vector(), e[1].to_vector());
        let d = (b - a) / 16.0;
        for q in 0..16 {
            let x = a + d * (q as f64 + 0.5);
            total += oal_core::solve_connection_free(ShapePoint::from_vector(x), spec)
                .map_err(err)?
                .apply(d);
        }
    }
    Ok(total)
}

fn c2_stokes() -> Outcome {
    let spec = RobotSpec::default();
    let lat = Lattice::new(40, spec.joint_limit).map_err(err)?;
    let conn = oal_core::rft::connection_grid(ContactCondition::Free, lat, &spec).map_err(err)?;
    let rows: Vec<VectorGrid> = (0..3).map(|k| conn.row(k)).collect();
    let curls: Vec<ScalarGrid> = rows.iter().map(curl_grid).collect::<Result<_, _>>().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failed = 0;
    let (mut gap, mut line_err, mut surface_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let lp: Vec<ShapePoint> = random_lattice_loop(&mut rng, lat.n)
            .into_iter()
            .map(|(i, j)| lat.point(i, j))
            .collect();
        let exact = reference_loop_integral(&lp, &spec)?;
        for k in 0..3 {
            let li = line_integral(&lp, &rows[k]).map_err(err)?;
            let cs = lattice_cell_sum(&lp, &curls[k]);
            if (li - cs).abs() > 0.01 * li.abs() + 1e-6 {
                failed += 1;
            }
            // relative errors only where the loop integral is not near zero
            if exact[k].abs() > 1e-3 {
                gap = gap.max((li - cs).abs() / li.abs());
                line_err = line_err.max((li - exact[k]).abs() / exact[k].abs());
                surface_err = surface_err.max((cs - exact[k]).abs() / exact[k].abs());
            }
        }
    }
    Ok((
        failed == 0,
        format!(
            "{failed} of 150 loop/row pairs outside tolerance; where |integral| > 1e-3 worst relative gap {gap:.2e}, \
             line integral vs exact {line_err:.2e}, curl sum vs exact {surface_err:.2e}"
        ),
    ))
}

fn c3_decomposition() -> Outcome {
    let spec = RobotSpec::default();
    let lat = Lattice::new(40, spec.joint_limit).map_err(err)?;
    let mut exact = true;
    let mut theta_zero = true;
    let mut antisym: f64 = 0.0;
    for cond in [
        ContactCondition::Free,
        ContactCondition::MultiObstacle,
        ContactCondition::SingleObstacle {
            link: 1,
            side: Side::Lhs,
        },
    ] {
        let conn = oal_core::rft::connection_grid(cond, lat, &spec).map_err(err)?;
        let h = oal_core::fields::height_from_connection(&conn).map_err(err)?;
        for k in 0..3 {
            for idx in 0..lat.len() {
                if h.da[k].valid[idx] {
                    exact &= h.da[k].values[idx] == h.curl_term[k].values[idx] + h.bracket_term[k].values[idx];
                }
            }
        }
        theta_zero &= h.bracket_term[2].values.iter().all(|&v| v == 0.0);
        for m in &conn.grid.values {
            let a1: Vector3<f64> = m.column(0).into_owned();
            let a2: Vector3<f64> = m.column(1).into_owned();
            antisym = antisym.max((bracket(&a1, &a2) + bracket(&a2, &a1)).amax());
        }
    }
    Ok((
        exact && theta_zero && antisym == 0.0,
        format!("sum exact {exact}, bracket theta zero {theta_zero}, max |[a,b]+[b,a]| {antisym:.1e}"),
    ))
}

fn c4_wave_number_scan(root: &Path) -> Outcome {
    let spec = RobotSpec::default();
    let lat = Lattice::new(40, spec.joint_limit).map_err(err)?;
    let fs = wave_number_range(0.25, 1.5, 0.05).map_err(err)?;
    let t = Instant::now();
    let scan = frobenius_scan(&fs, &spec, lat, ScanRows::Forward).map_err(err)?;
    let elapsed = t.elapsed();
    let argmax = scan
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |b, s| if s.1 > b.1 { s } else { b })
        .0;
    let cli = json(recipe_out(root, "fig3.sh")?.join("scan/scan_fs.json"))?;
    let cli_argmax = num(&cli, "argmax_fs")?;
    let pass = (argmax - 0.5).abs() <= 0.05 + 1e-9 && cli_argmax == argmax && elapsed < Duration::from_secs(300);
    Ok((
        pass,
        format!(
            "argmax fs {argmax} (recipe {cli_argmax}), scan of {} values in {:.1}s",
            fs.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn height_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(err)?;
    let headers = rdr.headers().map_err(err)?.clone();
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(err)?;
        if &rec[4] != "true" {
            continue;
        }
        for (h, v) in headers.iter().zip(rec.iter()).skip(5) {
            cols.entry(h.to_string()).or_default().push(v.parse().map_err(err)?);
        }
    }
    Ok(cols)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn c5_height_structure(root: &Path) -> Outcome {
    let out = recipe_out(root, "fig2.sh")?;
    let one = height_columns(&out.join("fs1.0/height.csv"))?;
    let half = height_columns(&out.join("fs0.5/height.csv"))?;
    let da1 = max_abs(&one["da_x"]);
    let bound = (0.05 * max_abs(&one["curl_x"]).max(max_abs(&one["bracket_x"]))).max(1e-6);
    let ratio = max_abs(&half["curl_x"]) / max_abs(&half["bracket_x"]);
    let corr = correlation(&half["curl_x"], &half["bracket_x"]);
    let pass = da1 <= bound && (0.5..=2.0).contains(&ratio) && corr <= -0.8;
    Ok((
        pass,
        format!("fs=1: max|DA_x| {da1:.3e} vs bound {bound:.3e}; fs=0.5: term ratio {ratio:.3}, correlation {corr:.3}"),
    ))
}

fn random_potential(rng: &mut ChaCha8Rng, lat: Lattice) -> ScalarGrid {
    let terms: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    FieldGrid::from_fn(lat, |w| {
        terms
            .iter()
            .map(|(a, k1, k2, ph)| a * (k1 * w.w1 + k2 * w.w2 + ph).sin())
            .sum()
    })
}

fn c6_acyclic() -> Outcome {
    let spec = RobotSpec::default();
    let lat = Lattice::new(20, spec.joint_limit).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut graphs = 0;
    let mut cycles = 0;
    for _ in 0..100 {
        let p = random_potential(&mut rng, lat);
        let v1 = FieldGrid::from_fn(lat, |_| {
            Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        for weighting in [ArcWeighting::Tail, ArcWeighting::Midpoint] {
            graphs += 1;
            if topological_order(&build_dag(&v1, &p, weighting).map_err(err)?).is_err() {
                cycles += 1;
            }
        }
    }
    for link in 1..=spec.num_links() {
        for side in [Side::Lhs, Side::Rhs] {
            let p = potential_fit(&lateral_row_field(link, side, lat, &spec).map_err(err)?)
                .map_err(err)?
                .potential;
            for v1_frame in [V1Frame::CentralAxis, V1Frame::ContactLink] {
                let opts = OalOptions {
                    v1_frame,
                    ..OalOptions::for_spec(&spec, lat.n).map_err(err)?
                };
                let v1 = forward_field(link, side, &spec, &opts).map_err(err)?;
                for weighting in [ArcWeighting::Tail, ArcWeighting::Midpoint] {
                    graphs += 1;
                    if topological_order(&build_dag(&v1, &p, weighting).map_err(err)?).is_err() {
                        cycles += 1;
                    }
                }
            }
        }
    }
    Ok((cycles == 0, format!("{graphs} graphs, {cycles} with a cycle")))
}

/// Best path by exhaustive enumeration, with the solver's tie rules.
fn brute_force(g: &LatticeDigraph) -> (f64, Vec<usize>) {
    fn dfs(g: &LatticeDigraph, path: &mut Vec<usize>, weight: f64, best: &mut (f64, Vec<usize>)) {
        if path.len() > 1 && weight > 0.0 {
            let better = weight > best.0
                || (weight == best.0
                    && (best.1.is_empty()
                        || path.len() < best.1.len()
                        || (path.len() == best.1.len() && path[0] < best.1[0])));
            if better {
                *best = (weight, path.clone());
            }
        }
        let u = *path.last().unwrap();
        for a in g.out_arcs(u) {
            path.push(a.to);
            dfs(g, path, weight + a.weight, best);
            path.pop();
        }
    }
    let mut best = (0.0, Vec::new());
    for s in 0..g.num_vertices() {
        dfs(g, &mut vec![s], 0.0, &mut best);
    }
    best
}

fn c7_dp_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut nonempty = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = if seed % 2 == 0 { 3 } else { 4 };
        let lat = Lattice::new(n, 1.0).map_err(err)?;
        let p = FieldGrid::from_fn(lat, |_| rng.gen_range(0.0..1.0));
        let v1 = FieldGrid::from_fn(lat, |_| {
            Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let weighting = if seed % 4 < 2 {
            ArcWeighting::Tail
        } else {
            ArcWeighting::Midpoint
        };
        let g = build_dag(&v1, &p, weighting).map_err(err)?;
        let dp = longest_path_all_starts(&g).map_err(err)?;
        let (w, path) = brute_force(&g);
        if dp.weight != w || dp.path != path {
            mismatches += 1;
        }
        nonempty += usize::from(!path.is_empty());
    }
    Ok((
        mismatches == 0,
        format!("200 random 4x4/5x5 lattices ({nonempty} with a positive path), {mismatches} mismatches"),
    ))
}

fn c8_single_obstacle(root: &Path) -> Outcome {
    let out = recipe_out(root, "fig5.sh")?;
    let w: Vec<f64> = (1..=3)
        .map(|l| json(out.join(format!("optimize_link{l}/optimize.json"))).and_then(|v| num(&v, "weight_BL")))
        .collect::<Result<_, _>>()?;
    let e1 = json(out.join("effective_link1/effective_set.json"))?["count"]
        .as_u64()
        .unwrap_or(0);
    let e3 = json(out.join("effective_link3/effective_set.json"))?["count"]
        .as_u64()
        .unwrap_or(0);
    let ordered = w[0] > w[1] && w[1] > w[2];
    let head = (0.175..=0.525).contains(&w[0]);
    let pass = ordered && head && e1 > 0 && e3 == 0;
    Ok((
        pass,
        format!(
            "weights {:.3} / {:.3} / {:.3} BL (ordered {ordered}, head in range {head}); effective set sizes link1 {e1}, link3 {e3}",
            w[0], w[1], w[2]
        ),
    ))
}

fn c9_ellipse(root: &Path) -> Outcome {
    let out = recipe_out(root, "fig5.sh")?;
    let e = json(out.join("effective_link1/effective_set.json"))?;
    let fit = &e["ellipse"];
    if !fit.is_object() || fit.get("flatness").is_none() {
        return Ok((false, format!("no ellipse fit: {fit}")));
    }
    let flat = num(fit, "flatness")?;
    let orient = num(fit, "orientation")?;
    let pass = (0.35..=0.65).contains(&flat) && (orient - FRAC_PI_4).abs() <= PI / 12.0;
    Ok((
        pass,
        format!(
            "flatness {flat:.3}, orientation {orient:.3} rad (target {FRAC_PI_4:.3} +/- {:.3})",
            PI / 12.0
        ),
    ))
}

fn c10_dense(root: &Path) -> Outcome {
    let d = json(recipe_out(root, "fig5.sh")?.join("dense/dense.json"))?;
    let phi = num(&d, "best_phi")?;
    let rel = num(&d, "stokes_relative_error")?;
    let pass = (phi - FRAC_PI_2).abs() < 1e-9 && rel <= 0.02;
    Ok((
        pass,
        format!("best phi {phi:.4}, surface vs line relative error {rel:.2e}"),
    ))
}

fn c11_walls(root: &Path) -> Outcome {
    let out = recipe_out(root, "fig3.sh")?.join("walls");
    let mut dx = Vec::new();
    for k in 0..=25 {
        let fs = 0.25 + 0.05 * k as f64;
        let m = json(out.join(format!("fs{fs:.2}/metrics.json")))?;
        dx.push((fs, num(&m["final_pose"], "x")?));
    }
    let at_half = dx
        .iter()
        .find(|(f, _)| (f - 0.5).abs() < 1e-9)
        .map(|d| d.1)
        .ok_or("fs 0.5 missing")?;
    let peak = dx.iter().copied().fold(
        (f64::NAN, 0.0),
        |b, d| if d.1.abs() > b.1 { (d.0, d.1.abs()) } else { b },
    );
    let pass = at_half < 0.0 && (peak.0 - 0.5).abs() <= 0.05 + 1e-9;
    Ok((
        pass,
        format!(
            "dx(fs=0.5) {at_half:.4}, |dx| peaks at fs {:.2} ({:.4})",
            peak.0, peak.1
        ),
    ))
}

fn c12_spacing(root: &Path) -> Outcome {
    let s = json(recipe_out(root, "fig6.sh")?.join("spacing/spacing.json"))?;
    let single = num(&s, "single_post_displacement")?;
    let rows = s["rows"].as_array().ok_or("missing rows")?;
    let stalled_at = |x: f64| {
        rows.iter()
            .find(|r| (r["spacing"].as_f64().unwrap_or(f64::NAN) - x).abs() < 1e-9)
            .and_then(|r| r["stalled"].as_bool())
    };
    let wide = stalled_at(0.5);
    let close: Vec<Option<bool>> = rows
        .iter()
        .filter(|r| r["spacing"].as_f64().is_some_and(|x| x <= 0.1 + 1e-9))
        .map(|r| r["stalled"].as_bool())
        .collect();
    let pass = wide == Some(true) && !close.is_empty() && close.iter().all(|c| *c == Some(false));
    Ok((
        pass,
        format!(
            "single post {single:.3} BL; stalled at 0.5: {wide:?}; stalled at <= 0.1: {close:?}; threshold between {} and {}",
            s["largest_unstalled"], s["smallest_stalled"]
        ),
    ))
}

fn c13_gait_selection(root: &Path) -> Outcome {
    let out = recipe_out(root, "fig7.sh")?;
    let mut pass = true;
    let mut detail = Vec::new();
    for (env, target) in [("sparse", FRAC_PI_4), ("dense", FRAC_PI_2)] {
        let s = json(out.join(format!("{env}/sweep.json")))?;
        let mut rows: Vec<(f64, f64, f64, u64)> = s["summary"]
            .as_array()
            .ok_or("missing summary")?
            .iter()
            .map(|r| {
                Ok((
                    num(r, "value")?,
                    num(r, "mean")?,
                    num(r, "se")?,
                    r["n"].as_u64().unwrap_or(0),
                ))
            })
            .collect::<Result<_, String>>()?;
        rows.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, second) = (rows[0], rows[1]);
        let margin = best.1 - second.1;
        let se = best.2.max(second.2);
        let ok = (best.0 - target).abs() < 1e-3 && margin >= se && best.3 >= 20;
        pass &= ok;
        detail.push(format!(
            "{env}: best phi {:.3} mean {:.4}, runner-up phi {:.3} mean {:.4}, se {:.4}",
            best.0, best.1, second.0, second.1, se
        ));
    }
    Ok((pass, detail.join("; ")))
}

fn c14_small_amplitude() -> Outcome {
    let spec = RobotSpec::default();
    let eps = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4];
    let pts =
        small_amplitude_consistency(FRAC_PI_2, FRAC_PI_4, ShapePoint::new(0.4, -0.2), &eps, &spec, 256).map_err(err)?;
    let slope = loglog_slope(&pts.iter().map(|p| (p.epsilon, p.error)).collect::<Vec<_>>()).ok_or("degenerate fit")?;
    Ok((
        (2.5..=3.5).contains(&slope),
        format!("error slope {slope:.3} over eps 0.05..0.4"),
    ))
}

/// Relative path and bytes of every CSV/JSON file below `dir`.
fn snapshot(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(err)? {
            let p = entry.map_err(err)?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext != "csv" && ext != "json" {
                continue;
            }
            let bytes = std::fs::read(&p).map_err(err)?;
            out.insert(p.strip_prefix(dir).map_err(err)?.to_path_buf(), bytes);
        }
    }
    Ok(out)
}

fn c15_determinism(root: &Path) -> Outcome {
    let mut compared = 0;
    let mut diffs = Vec::new();
    for name in ["fig2.sh", "fig6.sh", "fig7.sh"] {
        let first = recipe_out(root, name)?;
        let rerun = root.join(format!("rerun_{name}"));
        recipe(name, &rerun)?;
        let replay = root.join(format!("replay_{name}"));
        let base = snapshot(&first)?;
        for (rel, _) in base.iter().filter(|(p, _)| p.ends_with("manifest.json")) {
            let sub = rel.parent().unwrap_or(Path::new(""));
            let status = Command::new(env!("CARGO_BIN_EXE_oal"))
                .arg("--out-dir")
                .arg(replay.join(sub))
                .arg("replay")
                .arg(first.join(rel))
                .stdout(std::process::Stdio::null())
                .status()
                .map_err(err)?;
            if !status.success() {
                return Err(format!("replay of {} failed", rel.display()));
            }
        }
        for other in [snapshot(&rerun)?, snapshot(&replay)?] {
            // manifests record the output directory and the time of the run
            for (rel, bytes) in base.iter().filter(|(p, _)| !p.ends_with("manifest.json")) {
                compared += 1;
                if other.get(rel) != Some(bytes) {
                    diffs.push(format!("{name}:{}", rel.display()));
                }
            }
        }
    }
    Ok((
        diffs.is_empty(),
        format!("{compared} files compared across rerun and replay, differing: {diffs:?}"),
    ))
}
