use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::Vector2;
use oal_core::fields::line_integral;
use oal_core::gait::elliptical_gait;
use oal_core::optimizer::{
    build_dag, dense_obstacle_gait, effective_from_outcome, fit_ellipse, longest_path_all_starts,
    optimize_single_obstacle, Arc, LatticeDigraph, OalOptions,
};
use oal_core::{FieldGrid, GaitSpec, Lattice, RobotSpec, ShapePoint, Side};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn head_outcome(n: usize) -> oal_core::optimizer::SingleObstacleOutcome {
    let spec = RobotSpec::default();
    let opts = OalOptions {
        conservative_limit: None,
        ..OalOptions::for_spec(&spec, n).unwrap()
    };
    optimize_single_obstacle(1, Side::Lhs, &spec, &opts).unwrap()
}

#[test]
fn emitted_paths_are_simple_and_reintegrate_to_their_weight() {
    let out = head_outcome(20);
    let lat = out.v1.lattice;
    let h = lat.h();
    for r in out.per_start.iter().filter(|r| r.num_arcs() > 0) {
        let distinct: HashSet<usize> = r.path.iter().copied().collect();
        assert_eq!(distinct.len(), r.path.len());
        let mut total = 0.0;
        for step in r.path.windows(2) {
            let (a, b) = (lat.ij(step[0]), lat.ij(step[1]));
            assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
            assert!(out.fit.potential.get(b.0, b.1) > out.fit.potential.get(a.0, a.1));
            // tail weighting: forward field at the tail times the signed step
            let d = Vector2::new(b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64) * h;
            total += out.v1.get(a.0, a.1).dot(&d);
        }
        assert!((total - r.weight).abs() < 1e-10);
    }
    assert!(out.best.weight > 0.0);
}

#[test]
fn zero_threshold_keeps_every_positive_start() {
    let out = head_outcome(16);
    let all = effective_from_outcome(&out, 0.0);
    let positive = out
        .per_start
        .iter()
        .filter(|r| r.num_arcs() > 0 && r.weight > 0.0)
        .count();
    assert_eq!(all.len(), positive);
    let strict = effective_from_outcome(&out, 0.1);
    assert!(strict.len() <= all.len());
    assert!(strict.gaits.iter().all(|g| g.result.weight >= 0.1 && g.audit_pass));
}

#[test]
fn ellipse_fit_ignores_point_order() {
    let g = GaitSpec::new(0.6, 0.9, 0.8).with_samples(60);
    let mut pts = elliptical_gait(&g).points;
    let a = fit_ellipse(&pts).unwrap();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let b = fit_ellipse(&pts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dense_family_prefers_the_traveling_wave() {
    let spec = RobotSpec::default();
    let lat = Lattice::new(20, spec.joint_limit).unwrap();
    let phis: Vec<f64> = (0..=4).map(|k| k as f64 * FRAC_PI_2 / 4.0).collect();
    let thetas: Vec<f64> = (0..6).map(|k| k as f64 * PI / 6.0).collect();
    let wm = spec.joint_limit / 2f64.sqrt();
    let r = dense_obstacle_gait(&spec, lat, &phis, &thetas, wm, 256).unwrap();
    assert_eq!(r.best.phi, FRAC_PI_2);
    let rel = (r.best.surface_integral - r.best.line_integral).abs() / r.best.line_integral.abs();
    assert!(rel < 0.02, "{rel}");

    let flat = dense_obstacle_gait(&spec, lat, &phis, &thetas, 0.0, 64).unwrap();
    assert!(flat.evaluations.iter().all(|e| e.surface_integral == 0.0));
}

#[test]
fn dense_line_integral_matches_forward_row() {
    let spec = RobotSpec::default();
    let lat = Lattice::new(20, spec.joint_limit).unwrap();
    let r = dense_obstacle_gait(&spec, lat, &[FRAC_PI_2], &[0.0], 0.5, 512).unwrap();
    let fwd = oal_core::rft::connection_grid(oal_core::ContactCondition::MultiObstacle, lat, &spec)
        .unwrap()
        .row(0);
    let path: Vec<ShapePoint> = elliptical_gait(&GaitSpec::new(FRAC_PI_2, 0.0, 0.5).with_samples(512)).points;
    let li = line_integral(&path, &fwd).unwrap();
    assert!((li.abs() - r.best.line_integral.abs()).abs() < 1e-9);
}

/// Smooth potential as produced by a fit, so most of the lattice is reachable.
fn smooth_dag(n: usize, seed: u64) -> LatticeDigraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = Lattice::new(n, 1.0).unwrap();
    let (a, b) = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5));
    let p = FieldGrid::from_fn(lat, |w| a * w.w1 + b * w.w2 + 0.2 * (2.0 * w.w1).sin() * w.w2.cos());
    let v1 = FieldGrid::from_fn(lat, |_| {
        Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    build_dag(&v1, &p, Default::default()).unwrap()
}

#[test]
fn longest_path_scales_as_fourth_power() {
    let time = |n: usize| {
        let g = smooth_dag(n, 9);
        (0..5)
            .map(|_| {
                let t = Instant::now();
                longest_path_all_starts(&g).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = time(40) / time(20);
    assert!((8.0..=32.0).contains(&ratio), "time ratio {ratio}");
}

#[test]
fn handmade_chain() {
    let lat = Lattice::new(3, 1.0).unwrap();
    let arcs = vec![
        Arc {
            from: 0,
            to: 1,
            weight: 1.0,
        },
        Arc {
            from: 1,
            to: 2,
            weight: -0.5,
        },
        Arc {
            from: 2,
            to: 3,
            weight: 2.0,
        },
    ];
    let r = longest_path_all_starts(&LatticeDigraph::from_arcs(lat, arcs)).unwrap();
    assert_eq!(r.path, vec![0, 1, 2, 3]);
    assert_eq!(r.weight, 2.5);
}

#[test]
fn ellipse_fit_recovers_gait_parameters() {
    for (phi, theta) in [(0.5, 0.2), (FRAC_PI_2 / 2.0, FRAC_PI_2 / 2.0), (1.0, 2.5)] {
        let fit = fit_ellipse(&elliptical_gait(&GaitSpec::new(phi, theta, 0.7).with_samples(90)).points).unwrap();
        assert!((fit.flatness - (phi / 2.0).tan()).abs() < 1e-6);
        assert!((fit.orientation - theta).abs() < 1e-6);
        assert!((fit.semi_axes.0 - 0.7 * 2f64.sqrt() * (phi / 2.0).cos()).abs() < 1e-6);
    }
}
