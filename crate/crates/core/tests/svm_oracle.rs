//! SMO solutions checked against the reference dual solvers in `common`.

mod common;

use common::{barrier_dual, dual_objective, enumerate_dual, kernel_matrix, random_instance, OracleModel};
use tapaug::svm::{train, Gamma, KernelKind, SvmConfig, C_GRID};

#[test]
fn barrier_agrees_with_enumeration_on_tiny_instances() {
    for seed in 0..40 {
        let inst = random_instance(seed, 3 + (seed as usize % 5));
        let c = C_GRID[seed as usize % 3];
        let k = kernel_matrix(&inst.x, Some(0.5));
        let brute = enumerate_dual(&k, &inst.y, c).expect("a KKT point exists");
        let barrier = barrier_dual(&k, &inst.y, c);
        let (a, b) = (
            dual_objective(&k, &inst.y, &brute),
            dual_objective(&k, &inst.y, &barrier),
        );
        assert!((a - b).abs() < 1e-7, "seed {seed}: enumeration {a} vs barrier {b}");
    }
}

#[test]
fn twelve_point_rbf_matches_reference_optimum() {
    let inst = random_instance(12, 12);
    let cfg = SvmConfig::new(KernelKind::Rbf, 1.0).with_gamma(Gamma::Value(0.5));
    let model = train(&inst.x, &inst.labels, &cfg).unwrap();
    let k = kernel_matrix(&inst.x, Some(0.5));
    let reference = dual_objective(&k, &inst.y, &barrier_dual(&k, &inst.y, 1.0));
    assert!(
        (model.dual_objective - reference).abs() < 1e-4,
        "smo {} vs reference {reference}",
        model.dual_objective
    );
}

#[test]
fn smo_matches_reference_on_random_instances() {
    for seed in 100..160u64 {
        let n = 4 + (seed as usize % 9);
        let inst = random_instance(seed, n);
        let c = C_GRID[seed as usize % 3];
        let (kind, gamma) = if seed % 2 == 0 {
            (KernelKind::Linear, None)
        } else {
            (KernelKind::Rbf, Some(0.5))
        };
        let mut cfg = SvmConfig::new(kind, c);
        if let Some(g) = gamma {
            cfg = cfg.with_gamma(Gamma::Value(g));
        }
        let model = train(&inst.x, &inst.labels, &cfg).unwrap();
        let k = kernel_matrix(&inst.x, gamma);
        let alpha = barrier_dual(&k, &inst.y, c);
        let reference = dual_objective(&k, &inst.y, &alpha);
        assert!(
            (model.dual_objective - reference).abs() < 1e-4,
            "seed {seed}: smo {} vs reference {reference}",
            model.dual_objective
        );
        let oracle = OracleModel::new(&inst.x, &inst.y, &alpha, c, gamma);
        for i in 0..=10 {
            for j in 0..=10 {
                let p = [-2.5 + 0.5 * i as f64, -2.5 + 0.5 * j as f64];
                assert_eq!(
                    model.decision(&p) > 0.0,
                    oracle.decision(&p) > 0.0,
                    "seed {seed} at {p:?}"
                );
            }
        }
    }
}
