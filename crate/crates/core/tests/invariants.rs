//! Cross-module properties that must hold for arbitrary inputs: lookup
//! geometry, generator/free-space consistency, objective symmetries, and
//! step quality of the trust-region subproblem solver.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ckmplace::baselines::{exhaustive_search, hovering_placement, los_gain, SearchGrid};
use ckmplace::ckm::{db_to_linear, generate_synthetic_ckm, BuildingScene, GridCkm, LookupMode, SynthParams};
use ckmplace::net::{rates_from_gains, NetworkScene};
use ckmplace::surrogate::{build_model, required_points, InterpolationSet};
use ckmplace::trs::{cauchy_point, solve, TrsProblem};
use ckmplace::{Placement, Point2, Point3, Rect};

fn empty_scene(area: Rect, ref_gain_db: f64) -> BuildingScene {
    BuildingScene {
        area,
        buildings: Vec::new(),
        params: SynthParams {
            ref_gain_db,
            blockage_db: 20.0,
            penetration_db_per_m: 0.5,
        },
    }
}

/// Map whose nodes span `area` exactly, with the given per-node gains.
fn map_over(area: &Rect, nx: usize, ny: usize, gains_db: Vec<f64>) -> GridCkm {
    let sx = area.width() / (nx - 1) as f64;
    let sy = area.height() / (ny - 1) as f64;
    // GridCkm wants one spacing; keep the grid square by construction.
    assert!((sx - sy).abs() < 1e-9, "test areas must be square here");
    GridCkm::new(Point2::new(area.xmin, area.ymin), sx, nx, ny, gains_db).unwrap()
}

fn scene_with_maps(
    area: Rect,
    gbs: Vec<Point2>,
    maps: Vec<GridCkm>,
    power_w: Vec<f64>,
    noise_w: Vec<f64>,
    weights: Vec<f64>,
) -> NetworkScene {
    NetworkScene::new(
        gbs,
        10.0,
        60.0,
        maps,
        power_w,
        noise_w,
        weights,
        area,
        LookupMode::Nearest,
    )
    .unwrap()
}

fn gains_strategy(count: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-110.0..-20.0f64, count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Nearest lookup returns the node value unchanged anywhere strictly
    /// inside that node's cell.
    #[test]
    fn nearest_lookup_is_piecewise_constant(
        spacing in 1.0..10.0f64,
        nx in 3usize..8,
        ny in 3usize..8,
        seed_gain in -100.0..-10.0f64,
        ix_frac in 0.0..1.0f64,
        iy_frac in 0.0..1.0f64,
        dx in -0.49..0.49f64,
        dy in -0.49..0.49f64,
    ) {
        let gains: Vec<f64> = (0..nx * ny)
            .map(|i| seed_gain + (i % 7) as f64 * 0.25)
            .collect();
        let map = GridCkm::new(Point2::new(-37.0, 12.0), spacing, nx, ny, gains).unwrap();
        let ix = ((ix_frac * nx as f64) as usize).min(nx - 1);
        let iy = ((iy_frac * ny as f64) as usize).min(ny - 1);
        let node = map.node(ix, iy);
        let q = Point2::new(node.x + dx * spacing, node.y + dy * spacing);
        let at_node = map.lookup_gain(Point2::new(node.x, node.y)).unwrap();
        let nearby = map.lookup_gain(q).unwrap();
        prop_assert_eq!(nearby.to_bits(), at_node.to_bits());
        prop_assert_eq!(at_node, db_to_linear(map.gain_db_at(ix, iy)));
    }

    /// With no buildings, every generated node gain equals the free-space
    /// formula evaluated at that node.
    #[test]
    fn empty_scene_nodes_match_free_space(
        ref_gain_db in -40.0..-20.0f64,
        gx in -80.0..80.0f64,
        gy in -80.0..80.0f64,
        gbs_height in 5.0..30.0f64,
        altitude in 40.0..100.0f64,
        spacing in 15.0..50.0f64,
    ) {
        let area = Rect::new(-100.0, 100.0, -100.0, 100.0);
        let scene = empty_scene(area, ref_gain_db);
        let gbs = Point3::new(gx, gy, gbs_height);
        let map = generate_synthetic_ckm(&scene, gbs, altitude, spacing, false).unwrap();
        let ref_lin = db_to_linear(ref_gain_db);
        for iy in 0..map.ny() {
            for ix in 0..map.nx() {
                let node = map.node(ix, iy);
                let lin = los_gain(node, Point2::new(gx, gy), altitude, gbs_height, ref_lin).unwrap();
                let expected_db = 10.0 * lin.log10();
                prop_assert!((map.gain_db_at(ix, iy) - expected_db).abs() <= 1e-9);
            }
        }
    }

    /// Free-space maps lose gain monotonically with 3D distance.
    #[test]
    fn empty_scene_gain_decreases_with_distance(
        gx in -40.0..40.0f64,
        gy in -40.0..40.0f64,
        altitude in 45.0..90.0f64,
    ) {
        let area = Rect::new(-60.0, 60.0, -60.0, 60.0);
        let scene = empty_scene(area, -30.0);
        let map = generate_synthetic_ckm(&scene, Point3::new(gx, gy, 12.0), altitude, 20.0, false).unwrap();
        let mut nodes: Vec<(f64, f64)> = Vec::new();
        for iy in 0..map.ny() {
            for ix in 0..map.nx() {
                let node = map.node(ix, iy);
                let d2 = (node.x - gx).powi(2) + (node.y - gy).powi(2) + (altitude - 12.0).powi(2);
                nodes.push((d2, map.gain_db_at(ix, iy)));
            }
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in nodes.windows(2) {
            prop_assert!(pair[1].1 <= pair[0].1 + 1e-12);
        }
    }

    /// Relabeling the (UAV, station) pairs consistently leaves the weighted
    /// sum rate unchanged.
    #[test]
    fn objective_is_invariant_under_relabeling(
        gains in gains_strategy(3 * 16),
        p1 in 0.1..4.0f64,
        p2 in 0.1..4.0f64,
        p3 in 0.1..4.0f64,
        qs in proptest::collection::vec(-48.0..48.0f64, 6),
        rot in 0usize..3,
    ) {
        let area = Rect::new(-50.0, 50.0, -50.0, 50.0);
        let gbs = vec![
            Point2::new(-30.0, -10.0),
            Point2::new(25.0, 5.0),
            Point2::new(0.0, 35.0),
        ];
        let maps: Vec<GridCkm> = (0..3)
            .map(|k| map_over(&area, 4, 4, gains[k * 16..(k + 1) * 16].to_vec()))
            .collect();
        let power = vec![p1, p2, p3];
        let noise = vec![1e-13, 2e-13, 5e-13];
        let weights = vec![1.0, 0.5, 2.0];
        let placement = Placement::new(vec![
            Point2::new(qs[0], qs[1]),
            Point2::new(qs[2], qs[3]),
            Point2::new(qs[4], qs[5]),
        ]);

        let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
        let pick = |v: &[f64]| -> Vec<f64> { perm.iter().map(|&i| v[i]).collect() };
        let scene = scene_with_maps(area, gbs.clone(), maps.clone(), power.clone(), noise.clone(), weights.clone());
        let relabeled = scene_with_maps(
            area,
            perm.iter().map(|&i| gbs[i]).collect(),
            perm.iter().map(|&i| maps[i].clone()).collect(),
            pick(&power),
            pick(&noise),
            pick(&weights),
        );
        let shuffled = Placement::new(perm.iter().map(|&i| placement.position(i)).collect());

        let f = scene.weighted_sum_rate(&placement).unwrap();
        let g = relabeled.weighted_sum_rate(&shuffled).unwrap();
        prop_assert!((f - g).abs() <= 1e-12 * f.abs().max(1.0));
    }

    /// Scaling every transmit power and every noise power by one positive
    /// constant changes no SINR, hence no rate.
    #[test]
    fn objective_is_invariant_under_common_power_scaling(
        gains in gains_strategy(2 * 16),
        scale in prop_oneof![1e-6..1e-2f64, 0.5..2.0f64, 1e2..1e6f64],
        qx in -45.0..45.0f64,
        qy in -45.0..45.0f64,
    ) {
        let area = Rect::new(-50.0, 50.0, -50.0, 50.0);
        let gbs = vec![Point2::new(-20.0, 0.0), Point2::new(20.0, 0.0)];
        let maps: Vec<GridCkm> = (0..2)
            .map(|k| map_over(&area, 4, 4, gains[k * 16..(k + 1) * 16].to_vec()))
            .collect();
        let placement = Placement::new(vec![Point2::new(qx, qy), Point2::new(-qy, qx)]);
        let base = scene_with_maps(area, gbs.clone(), maps.clone(), vec![1.0, 2.0], vec![1e-13, 1e-13], vec![1.0, 1.0]);
        let scaled = scene_with_maps(
            area,
            gbs,
            maps,
            vec![scale, 2.0 * scale],
            vec![1e-13 * scale, 1e-13 * scale],
            vec![1.0, 1.0],
        );
        let f = base.weighted_sum_rate(&placement).unwrap();
        let g = scaled.weighted_sum_rate(&placement).unwrap();
        prop_assert!((f - g).abs() <= 1e-9 * f.abs().max(1.0));
    }

    /// Raising an interference gain never raises the victim's rate.
    #[test]
    fn stronger_interferer_never_raises_rate(
        h11 in 1e-12..1e-6f64,
        h12 in 1e-12..1e-6f64,
        h21 in 1e-12..1e-6f64,
        h22 in 1e-12..1e-6f64,
        boost in 1.0..100.0f64,
    ) {
        let power = [1.0, 1.0];
        let noise = [1e-13, 1e-13];
        let table = [[h11, h12], [h21, h22]];
        let rates = rates_from_gains(&power, &noise, |k, j| Ok(table[k][j])).unwrap();
        let boosted = [[h11, h12 * boost], [h21, h22]];
        let rates_boosted = rates_from_gains(&power, &noise, |k, j| Ok(boosted[k][j])).unwrap();
        prop_assert!(rates_boosted[0] <= rates[0] + 1e-15);
        // Station 2's link is untouched.
        prop_assert_eq!(rates_boosted[1].to_bits(), rates[1].to_bits());
    }

    /// Fitted Hessians are exactly symmetric and reproduce the sampled
    /// values they were built from.
    #[test]
    fn fitted_hessian_is_symmetric(
        n in prop_oneof![Just(2usize), Just(4usize)],
        raw in proptest::collection::vec(-1.0..1.0f64, 14 * 4 + 14),
    ) {
        let m1 = required_points(n);
        let centre = DVector::zeros(n);
        let points: Vec<DVector<f64>> = (0..m1)
            .map(|l| DVector::from_fn(n, |i, _| 10.0 * raw[l * n + i]))
            .collect();
        let values: Vec<f64> = (0..m1).map(|l| raw[14 * 4 + l]).collect();
        let set = match InterpolationSet::new(points, values) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let model = match build_model(&centre, 0.0, &set) {
            Ok(m) => m,
            Err(_) => return Ok(()), // degenerate draw; property is vacuous
        };
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(model.hessian[(i, j)].to_bits(), model.hessian[(j, i)].to_bits());
            }
        }
        for l in 0..set.len() {
            let s = set.point(l) - &centre;
            let err = (model.eval_step(&s) - set.value(l)).abs();
            prop_assert!(err <= 1e-7 * set.value(l).abs().max(1.0));
        }
    }

    /// Any returned trust-region step is feasible and at least as good as
    /// the Cauchy point and the zero step.
    #[test]
    fn trs_step_is_feasible_and_dominates_cauchy(
        n in prop_oneof![Just(2usize), Just(4usize)],
        raw in proptest::collection::vec(-1.0..1.0f64, 4 + 16),
        delta in 0.5..80.0f64,
        cx in -90.0..90.0f64,
        cy in -90.0..90.0f64,
        seed in 0u64..1000,
    ) {
        let gradient = DVector::from_fn(n, |i, _| 3.0 * raw[i]);
        let mut hessian = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = raw[4 + i * 4 + j];
                hessian[(i, j)] = v;
                hessian[(j, i)] = v;
            }
        }
        let model = ckmplace::surrogate::QuadraticModel { value: 0.0, gradient, hessian };
        let area = Rect::new(-100.0, 100.0, -100.0, 100.0);
        let mut centre = DVector::zeros(n);
        for k in 0..n / 2 {
            centre[2 * k] = cx;
            centre[2 * k + 1] = cy;
        }
        let problem = TrsProblem { model: &model, centre: centre.clone(), delta, area };
        let step = solve(&problem, seed);

        prop_assert!(step.norm() <= delta + 1e-9);
        for k in 0..n / 2 {
            prop_assert!(centre[2 * k] + step[2 * k] >= area.xmin - 1e-9);
            prop_assert!(centre[2 * k] + step[2 * k] <= area.xmax + 1e-9);
            prop_assert!(centre[2 * k + 1] + step[2 * k + 1] >= area.ymin - 1e-9);
            prop_assert!(centre[2 * k + 1] + step[2 * k + 1] <= area.ymax + 1e-9);
        }
        let gain = model.eval_step(&step);
        let cauchy = model.eval_step(&cauchy_point(&problem));
        prop_assert!(gain >= cauchy - 1e-9 * cauchy.abs().max(1.0));
        prop_assert!(gain >= -1e-12);
    }

    /// The lattice argmax is at least as good as any spot-checked lattice
    /// placement.
    #[test]
    fn exhaustive_search_dominates_lattice_spot_checks(
        gains in gains_strategy(2 * 25),
        picks in proptest::collection::vec(0usize..625, 20),
    ) {
        let area = Rect::new(0.0, 40.0, 0.0, 40.0);
        let gbs = vec![Point2::new(10.0, 10.0), Point2::new(30.0, 30.0)];
        let maps: Vec<GridCkm> = (0..2)
            .map(|k| map_over(&area, 5, 5, gains[k * 25..(k + 1) * 25].to_vec()))
            .collect();
        let scene = scene_with_maps(area, gbs, maps, vec![1.0, 1.0], vec![1e-13, 1e-13], vec![1.0, 1.0]);
        let grid = SearchGrid::new(&area, 10.0).unwrap();
        let (_, best) = exhaustive_search(&scene, &grid, 1_000_000).unwrap();
        let c = grid.point_count();
        for &p in &picks {
            let placement = Placement::new(vec![grid.point(p / c % c), grid.point(p % c)]);
            let v = scene.weighted_sum_rate(&placement).unwrap();
            prop_assert!(v <= best + 1e-12);
        }
    }
}

#[test]
fn hovering_is_idempotent_and_rejects_outside_stations() {
    let area = Rect::new(0.0, 100.0, 0.0, 100.0);
    let gains = vec![-60.0; 25];
    let maps = || {
        vec![
            GridCkm::new(Point2::new(-30.0, -30.0), 40.0, 5, 5, gains.clone()).unwrap(),
            GridCkm::new(Point2::new(-30.0, -30.0), 40.0, 5, 5, gains.clone()).unwrap(),
        ]
    };
    let inside = scene_with_maps(
        area,
        vec![Point2::new(40.0, 50.0), Point2::new(60.0, 60.0)],
        maps(),
        vec![1.0, 1.0],
        vec![1e-13, 1e-13],
        vec![1.0, 1.0],
    );
    let first = hovering_placement(&inside).unwrap();
    let second = hovering_placement(&inside).unwrap();
    assert_eq!(first.positions(), second.positions());
    assert_eq!(first.position(0), Point2::new(40.0, 50.0));

    let outside = scene_with_maps(
        area,
        vec![Point2::new(-20.0, 50.0), Point2::new(60.0, 60.0)],
        maps(),
        vec![1.0, 1.0],
        vec![1e-13, 1e-13],
        vec![1.0, 1.0],
    );
    assert!(hovering_placement(&outside).is_err());
}
