mod common;

use std::sync::Arc;

use adaptive_hierarchy::fem::solve_fom;
use adaptive_hierarchy::kernel::DataSource;
use adaptive_hierarchy::pod::{pod, Truncation};
use adaptive_hierarchy::{
    AdaptiveState, HierarchyConfig, KernelConfig, ModelKind, ParameterPoint, ReducedModel, TimeGrid,
};
use nalgebra::DMatrix;

use common::*;

/// POD basis of a few FOM trajectories spread over the desk box.
fn rich_basis(state: &AdaptiveState) -> ReducedModel {
    let ops = state.ops();
    let mut cols = Vec::new();
    for mu in state
        .param_box()
        .corners()
        .iter()
        .chain([ParameterPoint::new(5.0, 3.0)].iter())
    {
        let traj = solve_fom(ops, mu, state.grid(), &ops.zero_state())
            .unwrap()
            .0;
        cols.push(traj.into_snapshots());
    }
    let m: usize = cols.iter().map(|c| c.ncols()).sum();
    let mut all = DMatrix::zeros(ops.n_dofs(), m);
    let mut off = 0;
    for c in &cols {
        all.columns_mut(off, c.ncols()).copy_from(c);
        off += c.ncols();
    }
    let basis = pod(&all, &ops.ip, Truncation::Energy(1e-8));
    ReducedModel::project(ops, basis.modes, &ops.zero_state()).unwrap()
}

#[test]
fn first_query_is_fom_and_repeating_it_is_rb() {
    let mut s = desk_state(sub_box(), HierarchyConfig::default());
    let mu = ParameterPoint::new(2.5, 4.0);
    let (answer, rec) = s.query(&mu).unwrap();
    assert_eq!(rec.model_used, ModelKind::Fom);
    assert!(rec.rb_dim_after > 0);
    assert_eq!(rec.train_size_after, 1);
    assert_eq!(answer, fom_output(s.ops(), &mu, s.grid()));

    let (_, bound) = s.evaluate_rb(&mu).unwrap();
    assert!(bound.delta_rb <= s.config().rom_tol);

    let (_, rec) = s.query(&mu).unwrap();
    assert_eq!(rec.model_used, ModelKind::Rb);
    assert!(rec.delta_rb.unwrap() <= s.config().rom_tol);
    // RB data never replaces the FOM entry
    assert_eq!(s.training_set().len(), 1);
    assert_eq!(s.training_set().count(DataSource::Fom), 1);
}

#[test]
fn size_threshold_switches_to_ml_at_fifty() {
    let mut s = desk_state(sub_box(), HierarchyConfig::default());
    let points = random_points(&sub_box(), 80, 31);
    let mut it = points.iter();
    let (mut dim, mut size) = (0, 0);
    while s.training_set().len() < 49 {
        let (_, rec) = s.query(it.next().unwrap()).unwrap();
        assert_ne!(rec.model_used, ModelKind::Ml);
        assert!(rec.rb_dim_after >= dim && rec.train_size_after >= size);
        (dim, size) = (rec.rb_dim_after, rec.train_size_after);
    }
    assert!(!s.trust(&points[0]).unwrap());
    s.query(it.next().unwrap()).unwrap();
    assert_eq!(s.training_set().len(), 50);
    assert!(s.ml_fitted());
    assert!(s.trust(&points[0]).unwrap());

    let before = s.counters();
    let mu = it.next().unwrap();
    let (answer, rec) = s.query(mu).unwrap();
    let after = s.counters();
    assert_eq!(rec.model_used, ModelKind::Ml);
    assert_eq!(answer, s.predict_ml(mu));
    assert_eq!(after.fom_solves, before.fom_solves);
    assert_eq!(after.rb_solves, before.rb_solves);
    assert_eq!(after.ml_predictions, before.ml_predictions + 1);
    assert_eq!(rec.train_size_after, 50);
}

#[test]
fn empty_model_certificate_is_bound_plus_rb_norm() {
    let mut s = desk_state(sub_box(), HierarchyConfig::default());
    let rom = rich_basis(&s);
    s.set_reduced_model(rom);
    for mu in random_points(&sub_box(), 5, 4) {
        let cert = s.certify(&mu).unwrap();
        let (sol, bound) = s.evaluate_rb(&mu).unwrap();
        assert_eq!(cert.delta_rb, bound.delta_rb);
        assert!((cert.value - (bound.delta_rb + sol.qoi.norm())).abs() <= 1e-14 * cert.value);
    }
}

#[test]
fn always_validate_trusts_an_rb_center_and_certificates_hold() {
    let config = HierarchyConfig {
        trust_mode: "always_validate".into(),
        ..HierarchyConfig::default()
    };
    let mut s = desk_state(sub_box(), config);
    let rom = rich_basis(&s);
    s.set_reduced_model(rom);
    let eps = s.config().rom_tol;
    for mu in random_points(&sub_box(), 10, 8) {
        let (_, rec) = s.query(&mu).unwrap();
        assert_eq!(rec.model_used, ModelKind::Rb);
    }
    assert!(s.ml_fitted());
    assert_eq!(s.counters().fom_solves, 0);

    // centers carry RB data from the current basis
    let center = s.kernel_model().centers[0];
    let cert = s.certify(&center).unwrap();
    assert!((cert.value - cert.delta_rb).abs() <= 1e-8, "{cert:?}");
    assert!(s.trust(&center).unwrap());
    let (_, rec) = s.query(&center).unwrap();
    assert_eq!(rec.model_used, ModelKind::Ml);

    // returned answers stay within max(ε, certificate) of the FOM
    for mu in random_points(&sub_box(), 10, 9) {
        let cert = s.certify(&mu).unwrap().value;
        let (answer, rec) = s.query(&mu).unwrap();
        let truth = fom_output(s.ops(), &mu, s.grid());
        let err = truth.distance(&answer);
        assert!(err <= eps.max(cert) + 1e-10, "{:?}: {err}", rec.model_used);
        assert!(truth.distance(&s.predict_ml(&mu)) <= s.certify(&mu).unwrap().value + 1e-10);
    }
}

#[test]
fn never_mode_never_answers_with_ml() {
    let config = HierarchyConfig {
        trust_mode: "never".into(),
        ..HierarchyConfig::default()
    };
    let mut s = desk_state(sub_box(), config);
    for mu in random_points(&sub_box(), 60, 12) {
        let (_, rec) = s.query(&mu).unwrap();
        assert_ne!(rec.model_used, ModelKind::Ml);
    }
    assert!(s.ml_fitted());
}

#[test]
fn stagnation_still_returns_the_fom_output() {
    // full-space basis: nothing left to add, but a tolerance below roundoff
    let ops = Arc::new(ops(16));
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let config = HierarchyConfig {
        rom_tol: 1e-300,
        ..HierarchyConfig::default()
    };
    let mut s = AdaptiveState::new(
        ops.clone(),
        grid,
        sub_box(),
        config,
        KernelConfig::default(),
    )
    .unwrap();
    let eye = pod(&DMatrix::identity(16, 16), &ops.ip, Truncation::Energy(0.0)).modes;
    assert_eq!(eye.ncols(), 16);
    s.set_reduced_model(ReducedModel::project(&ops, eye, &ops.zero_state()).unwrap());
    let mu = ParameterPoint::new(3.0, 3.0);
    let (answer, rec) = s.query(&mu).unwrap();
    assert_eq!(rec.model_used, ModelKind::Fom);
    assert_eq!(answer, fom_output(&ops, &mu, &grid));
    assert_eq!(s.counters().stagnations, 1);
    assert_eq!(rec.rb_dim_after, 16);
}

#[test]
fn failed_queries_change_nothing() {
    let mut s = desk_state(sub_box(), HierarchyConfig::default());
    s.query(&ParameterPoint::new(1.0, 2.0)).unwrap();
    let (dim, size, counters) = (
        s.reduced_model().dim(),
        s.training_set().len(),
        s.counters(),
    );
    assert!(s.query(&ParameterPoint::new(1.0, 50.0)).is_err());
    assert_eq!(s.reduced_model().dim(), dim);
    assert_eq!(s.training_set().len(), size);
    assert_eq!(s.counters(), counters);
    let (_, rec) = s.query(&ParameterPoint::new(1.0, 2.0)).unwrap();
    assert_eq!(rec.index, 1);
}
