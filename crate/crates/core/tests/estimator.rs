use std::sync::Arc;

use afem_core::estimator::{estimate_on, lipschitz_gap, oscillation_sq};
use afem_core::mesh::BasisSupports;
use afem_core::oracles::{manufactured_sin2, random_conforming_spline, random_spline};
use afem_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_partition(seed: u64, rounds: usize) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = uniform_partition(1);
    for _ in 0..rounds {
        let marked: Vec<Cell> = p.cells().iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        p = p.refine(&marked).unwrap();
    }
    p
}

fn space(p: &Partition, r: usize) -> Arc<HierarchicalSpace> {
    Arc::new(build_space(p, r, true).unwrap())
}

fn indicators(values: &[f64]) -> Indicators {
    let cells = values
        .iter()
        .enumerate()
        .map(|(k, &v)| CellIndicator {
            cell: Cell::new(6, k as u32, 0),
            eta_sq: v,
            interior_sq: v,
            jump1_sq: 0.0,
            jump2_sq: 0.0,
            osc_sq: 0.0,
        })
        .collect();
    Indicators {
        cells,
        total_sq: values.iter().sum(),
    }
}

#[test]
fn dorfler_worked_examples() {
    let m = dorfler_mark(&indicators(&[9.0, 4.0, 1.0, 1.0, 1.0]), 0.5).unwrap();
    assert_eq!(m.cells, vec![Cell::new(6, 0, 0)]);
    assert!((m.achieved_fraction - 9.0 / 16.0).abs() < 1e-15);

    let m = dorfler_mark(&indicators(&[4.0, 4.0, 4.0, 4.0]), 0.5).unwrap();
    assert_eq!(m.cells, vec![Cell::new(6, 0, 0), Cell::new(6, 1, 0)]);

    let m = dorfler_mark(&indicators(&[0.0, 2.0, 0.0, 1.0]), 1.0).unwrap();
    assert_eq!(m.cells, vec![Cell::new(6, 1, 0), Cell::new(6, 3, 0)]);

    // Rounding-level differences do not override the key order.
    let m = dorfler_mark(&indicators(&[4.0, 4.0 * (1.0 + 1e-15), 4.0, 4.0]), 0.5).unwrap();
    assert_eq!(m.cells, vec![Cell::new(6, 0, 0), Cell::new(6, 1, 0)]);

    let m = dorfler_mark(&indicators(&[0.0, 0.0]), 0.5).unwrap();
    assert!(m.cells.is_empty());

    for bad in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(matches!(
            dorfler_mark(&indicators(&[1.0]), bad),
            Err(AfemError::InvalidConfig(msg)) if msg.contains("theta")
        ));
    }
}

#[test]
fn dorfler_sets_are_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3)).collect();
        let ind = indicators(&v);
        let theta = rng.gen_range(0.05..0.95);
        let m = dorfler_mark(&ind, theta).unwrap();
        let sum = ind.sum_over(&m.cells);
        assert!(sum >= theta * ind.total_sq);
        // Greedy by size: any smaller set has less mass than the marked set
        // without its last element, which must fall short.
        let short = ind.sum_over(&m.cells[..m.cells.len() - 1]);
        assert!(short < theta * ind.total_sq);
    }
}

#[test]
fn zero_function_and_zero_data_give_zero() {
    let s = space(&random_partition(1, 2), 2);
    let ind = estimate_all(&SplineFunction::zero(s), &|_| 0.0, 4);
    assert_eq!(ind.total_sq, 0.0);
    assert!(ind.cells.iter().all(|c| c.eta_sq == 0.0 && c.osc_sq == 0.0));
}

#[test]
fn interior_residual_uses_the_tensor_bilaplacian() {
    let m = manufactured_sin2();
    for r in 2..=4 {
        let s = space(&random_partition(r as u64, 2), r);
        let v = random_spline(&s, 3);
        let ind = estimate_all(&v, m.f.as_ref(), r + 2);
        for ci in ind.cells.iter().step_by(5) {
            let c = ci.cell;
            let want = c.side().powi(4)
                * gauss_cell(&c, r + 2).integrate(|x| {
                    let b = v.eval_on(&c, x, [4, 0]).unwrap()
                        + 2.0 * v.eval_on(&c, x, [2, 2]).unwrap()
                        + v.eval_on(&c, x, [0, 4]).unwrap();
                    ((m.f)(x) - b).powi(2)
                });
            assert!((ci.interior_sq - want).abs() <= 1e-12 * want.max(1.0), "r={r}");
        }
    }
}

#[test]
fn jumps_vanish_for_smooth_single_level_splines() {
    let s = space(&uniform_partition(2), 4);
    let v = random_spline(&s, 4);
    let ind = estimate_all(&v, &|_| 0.0, 6);
    for c in &ind.cells {
        assert!(c.jump1_sq <= 1e-20 && c.jump2_sq <= 1e-20, "{c:?}");
    }
    // A quadratic spline has genuine jumps of ΔV.
    let s = space(&uniform_partition(2), 2);
    let ind = estimate_all(&random_spline(&s, 4), &|_| 0.0, 4);
    assert!(ind.cells.iter().any(|c| c.jump2_sq > 1e-6));
}

#[test]
fn per_cell_records_sum_to_the_edge_total() {
    let s = space(&random_partition(5, 3), 3);
    let v = random_spline(&s, 6);
    let p = s.partition();
    let ind = estimate_all(&v, &|_| 0.0, 5);
    let per_cell: f64 = ind.cells.iter().map(|c| c.jump1_sq + c.jump2_sq).sum();
    let mut by_edge = 0.0;
    for e in &p.edges().interior {
        let (a, b) = (e.owners[0], e.owners[1]);
        let n = e.normal;
        by_edge += gauss_edge(e, 5).integrate(|x| {
            let ga = v.grad_laplacian(&a, x);
            let gb = v.grad_laplacian(&b, x);
            let j1 = n[0] * (ga[0] - gb[0]) + n[1] * (ga[1] - gb[1]);
            let j2 = v.laplacian(&a, x) - v.laplacian(&b, x);
            e.length.powi(3) * j1 * j1 + e.length * j2 * j2
        });
    }
    assert!((per_cell - by_edge).abs() <= 1e-10 * by_edge);
    let total: f64 = ind.cells.iter().map(|c| c.eta_sq).sum();
    assert!((total - ind.total_sq).abs() <= 1e-12 * total);
}

#[test]
fn oscillation_vanishes_on_reproduced_data() {
    let cell = Cell::new(2, 1, 2);
    for r in 2..=4 {
        assert!(oscillation_sq(&|_| 3.5, &cell, r, r + 2) <= 1e-26);
    }
    let lin = |x: Point| 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
    for r in 3..=4 {
        assert!(oscillation_sq(&lin, &cell, r, r + 2) <= 1e-26);
    }
    assert!(oscillation_sq(&lin, &cell, 2, 4) > 1e-8);
}

#[test]
fn estimator_scales_quadratically() {
    let m = manufactured_sin2();
    let s = space(&random_partition(2, 2), 2);
    let v = random_conforming_spline(&s, 1);
    let a = estimate_all(&v, m.f.as_ref(), 4);
    let f10 = |x: Point| 10.0 * (m.f)(x);
    let v10 = SplineFunction::new(s.clone(), v.coefficients().iter().map(|c| 10.0 * c).collect()).unwrap();
    let b = estimate_all(&v10, &f10, 4);
    assert!((b.total_sq - 100.0 * a.total_sq).abs() <= 1e-10 * b.total_sq);
}

#[test]
fn estimator_reduction_on_refinement() {
    let m = manufactured_sin2();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for instance in 0..20u64 {
        let r = 2 + (instance as usize) % 3;
        let p = random_partition(instance, 2);
        let s = space(&p, r);
        let v = random_spline(&s, instance);
        let n = r + 2;
        let ind = estimate_all(&v, m.f.as_ref(), n);
        let theta = rng.gen_range(0.2..0.9);
        let marked = dorfler_mark(&ind, theta).unwrap();
        let fine = p.refine(&marked.cells).unwrap();
        let after = estimate_on(&v, m.f.as_ref(), &fine, n).total_sq;
        let bound = ind.total_sq - 0.5 * ind.sum_over(&marked.cells);
        assert!(after <= bound + 1e-10, "instance {instance}: {after} > {bound}");
    }
}

/// Largest `gap / |V − W|_{H²(ω_τ)}` over `pairs` random pairs on `p`.
fn lipschitz_constant(p: &Partition, pairs: usize, seed: u64) -> f64 {
    let m = manufactured_sin2();
    let s = space(p, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let v = random_spline(&s, seed * 1000 + 2 * k as u64);
        let w = random_spline(&s, seed * 1000 + 2 * k as u64 + 1);
        let cell = p.cells()[rng.gen_range(0..p.len())];
        let (gap, semi) = lipschitz_gap(&v, &w, m.f.as_ref(), &cell, 4);
        assert!(semi > 0.0);
        worst = worst.max(gap / semi);
    }
    worst
}

#[test]
fn lipschitz_constant_is_stable_under_refinement() {
    let c3 = lipschitz_constant(&uniform_partition(3), 200, 1);
    let c4 = lipschitz_constant(&uniform_partition(4), 200, 2);
    assert!(c3.is_finite() && c4.is_finite());
    assert!((c4 / c3 - 1.0).abs() <= 0.3, "levels 3 and 4: {c3} vs {c4}");
}

#[test]
fn lipschitz_gap_is_local() {
    let m = manufactured_sin2();
    let p = uniform_partition(4);
    let s = space(&p, 2);
    let v = random_spline(&s, 3);
    let cell = Cell::new(4, 1, 1);
    let (gap, semi) = lipschitz_gap(&v, &v, m.f.as_ref(), &cell, 4);
    assert_eq!((gap, semi), (0.0, 0.0));

    let mut near = vec![cell];
    near.extend(p.cell_edges(&cell).iter().flat_map(|e| e.owners.clone()));
    let far = s
        .conforming_indices()
        .iter()
        .copied()
        .find(|&k| s.support_of(k).iter().all(|c| !near.contains(c)))
        .expect("a clamped function away from the cell");
    let mut c = v.coefficients().to_vec();
    c[far] += 1.0;
    let w = SplineFunction::new(s.clone(), c).unwrap();
    let (gap, _) = lipschitz_gap(&v, &w, m.f.as_ref(), &cell, 4);
    assert!(gap <= 1e-12);
}
