//! Randomized invariants of the construction and the flow.

use num_complex::Complex64;
use proptest::prelude::*;

use finband::dirichlet::{givens, upper_half_plane_grid};
use finband::export;
use finband::flow::{propagate_through, Integrator};
use finband::kdv::trace_formulas;
use finband::operator::verify_quadruple;
use finband::{
    build_quadruple, default_seed, extract_dirichlet, mixed_seed, BandStructure, ExecMode, FlowConfig, FlowState,
    MatrixPencil, OperatorData, WeylEvaluator,
};

fn two_gaps() -> BandStructure {
    BandStructure::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap()
}

/// A point strictly inside `(lo, hi)` from a unit fraction.
fn inside(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * (0.05 + 0.9 * t)
}

fn placements() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2).prop_map(|t| {
        let bs = two_gaps();
        t.iter()
            .enumerate()
            .map(|(j, row)| {
                let g = bs.gap(j + 1);
                row.iter().map(|&s| inside(g.lo, g.hi, s)).collect()
            })
            .collect()
    })
}

fn build(f: &MatrixPencil, bs: &BandStructure) -> OperatorData {
    let ds = extract_dirichlet(f, bs, &[]).unwrap();
    build_quadruple(f, &ds, bs).unwrap()
}

fn short_flow(od: &OperatorData) -> finband::Trajectory {
    let s0 = FlowState::from_operator_data(od, 0.0).unwrap();
    let grid: Vec<f64> = (0..=10).map(|k| -0.1 + 0.02 * k as f64).collect();
    let cfg = FlowConfig {
        h: 1e-3,
        integrator: Integrator::Fixed,
        drift_bound: 1e-6,
    };
    propagate_through(&s0, &grid, &od.bs, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadruple_identities_and_positivity(first in placements(), second in placements(), angle in 0.1f64..1.4, phase in -1.0f64..1.0) {
        let bs = two_gaps();
        let f = mixed_seed(&bs, &first, &second, &givens(2, angle, phase)).unwrap();
        let od = build(&f, &bs);
        prop_assert_eq!(od.ds.multiplicity_per_gap(bs.n()), vec![2, 2]);
        let grid = upper_half_plane_grid(&bs);
        prop_assert!(verify_quadruple(&od, &grid).max_rel() <= 1e-10);
        let scale = od.scale();
        let (p, m) = WeylEvaluator::new(od).herglotz_margins(&grid, ExecMode::Sequential).unwrap();
        prop_assert!(p.min(m) >= -1e-10 * scale);
    }

    #[test]
    fn flow_keeps_identities_traces_and_zones(first in placements(), second in placements(), angle in 0.1f64..1.4) {
        let bs = two_gaps();
        let f = mixed_seed(&bs, &first, &second, &givens(2, angle, 0.2)).unwrap();
        let od = build(&f, &bs);
        let scale = od.scale();
        let traj = short_flow(&od);
        prop_assert!(traj.max_drift() <= 1e-8 * scale);
        let es = bs.edge_series(bs.n() + 3);
        for s in &traj.states {
            let tr = trace_formulas(s, &bs, &es).unwrap();
            prop_assert!(tr.max_residual() <= 1e-8 * scale);
            prop_assert!(tr.zone_violation <= 1e-8);
            let q = s.potential();
            prop_assert!(finband::linalg::hermitian_defect(&q) <= 1e-10 * scale);
        }
    }

    #[test]
    fn trajectory_dump_is_exact(first in placements()) {
        let bs = two_gaps();
        let od = build(&default_seed(&bs, 2, &first).unwrap(), &bs);
        let traj = short_flow(&od);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(export::TRAJECTORY_FILE);
        export::write_trajectory(&path, &traj).unwrap();
        prop_assert_eq!(export::read_trajectory(&path).unwrap(), traj);
    }

    #[test]
    fn diagonal_seeds_stay_diagonal(first in placements()) {
        let bs = two_gaps();
        let od = build(&default_seed(&bs, 2, &first).unwrap(), &bs);
        for s in &short_flow(&od).states {
            let q = s.potential();
            prop_assert_eq!(q[(0, 1)], Complex64::new(0.0, 0.0));
            prop_assert_eq!(q[(1, 0)], Complex64::new(0.0, 0.0));
        }
    }
}
