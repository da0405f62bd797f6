use proptest::prelude::*;

use dyadlab::haar::{analyze, synthesize};
use dyadlab::operators::{
    chung_decomposition, martingale_transform, maximal_dyadic, product_decomposition, square_function, SignSymbol,
};
use dyadlab::sparse::{carleson_constant, construct_certificates, sparse_operator, verify_sparse};
use dyadlab::weights::{a_infty_fujii_wilson, ap_characteristic, bellman_b, IntervalScan};
use dyadlab::{Mesh, SparseFamily, StepFunction, Weight};

fn signal(depth: u32) -> impl Strategy<Value = StepFunction<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1usize << depth)
        .prop_map(move |v| StepFunction::new(Mesh::unit(depth), v).unwrap())
}

fn pair(depth: u32) -> impl Strategy<Value = (StepFunction<f64>, StepFunction<f64>)> {
    (signal(depth), signal(depth))
}

fn weight(depth: u32) -> impl Strategy<Value = Weight<f64>> {
    prop::collection::vec(-4.0f64..4.0, 1usize << depth)
        .prop_map(move |v| Weight::from_values(Mesh::unit(depth), v.into_iter().map(f64::exp).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn haar_roundtrip_on_any_interval(depth in 0u32..10, left in -5.0f64..5.0, len in 0.01f64..100.0, seed in any::<u64>()) {
        let mesh = Mesh::new(left, left + len, depth).unwrap();
        let vals: Vec<f64> = (0..mesh.cells()).map(|k| ((k as u64 ^ seed) % 1000) as f64 / 7.0 - 70.0).collect();
        let f = StepFunction::new(mesh, vals).unwrap();
        let s = analyze(&f);
        prop_assert!(synthesize(&s).sub(&f).unwrap().sup_norm() <= 1e-12 * f.sup_norm().max(1.0));
        let e = f.lp_norm(2.0, None).unwrap().powi(2);
        prop_assert!((s.energy() - e).abs() <= 1e-10 * e.max(1e-300));
    }

    #[test]
    fn single_precision_roundtrip(v in prop::collection::vec(-1.0f32..1.0, 256)) {
        let f = StepFunction::new(Mesh::unit(8), v).unwrap();
        prop_assert!(synthesize(&analyze(&f)).sub(&f).unwrap().sup_norm() <= 1e-5);
    }

    #[test]
    fn martingale_transform_is_an_involution_on_mean_zero(f in signal(7), seed in any::<u64>()) {
        let sigma = SignSymbol::random(Mesh::unit(7), seed);
        let twice = martingale_transform(&martingale_transform(&f, &sigma).unwrap(), &sigma).unwrap();
        let centered = f.map(|v| v - f.mean());
        prop_assert!(twice.sub(&centered).unwrap().sup_norm() <= 1e-10);
        let s = square_function(&f).lp_norm(2.0, None).unwrap();
        prop_assert!((s - centered.lp_norm(2.0, None).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn maximal_dominates_and_is_sublinear((f, g) in pair(6)) {
        let m = maximal_dyadic(&f, None).unwrap();
        prop_assert!(m.values().iter().zip(f.values()).all(|(a, b)| *a >= b.abs() - 1e-12));
        let mfg = maximal_dyadic(&f.add(&g).unwrap(), None).unwrap();
        let sum = m.add(&maximal_dyadic(&g, None).unwrap()).unwrap();
        prop_assert!(mfg.values().iter().zip(sum.values()).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn product_and_commutator_decompositions((b, f) in pair(6)) {
        let t = product_decomposition(&b, &f).unwrap();
        let sum = t.pi_b_f.add(&t.pi_b_adj_f).unwrap().add(&t.pi_f_b).unwrap().map(|v| v + t.correction);
        prop_assert!(sum.sub(&b.mul(&f).unwrap()).unwrap().sup_norm() <= 1e-9 * (1.0 + b.sup_norm() * f.sup_norm()));
        prop_assert!(chung_decomposition(&b, &f).unwrap().residual() <= 1e-9 * (1.0 + b.sup_norm() * f.sup_norm()));
    }

    #[test]
    fn characteristics_are_scale_invariant_and_at_least_one(w in weight(6), c in 0.01f64..100.0) {
        let a2 = ap_characteristic(&w, 2.0, &IntervalScan::MeshTree).unwrap().value;
        let scaled = Weight::from_values(*w.mesh(), w.values().iter().map(|v| v * c).collect()).unwrap();
        let a2c = ap_characteristic(&scaled, 2.0, &IntervalScan::MeshTree).unwrap().value;
        prop_assert!(a2 >= 1.0 - 1e-12);
        prop_assert!((a2 - a2c).abs() <= 1e-9 * a2);
        let ainf = a_infty_fujii_wilson(&w).value;
        prop_assert!(ainf >= 1.0 - 1e-12 && ainf <= (w.mesh().depth() + 1) as f64 + 1e-9);
    }

    #[test]
    fn certificates_exist_at_the_carleson_constant(bits in prop::collection::vec(any::<bool>(), 127)) {
        // intervals of level ≤ 6 on a depth-9 mesh have at least 8 cells
        let mesh = Mesh::unit(9);
        let ivs: Vec<_> = mesh.intervals(6).zip(&bits).filter(|(_, b)| **b).map(|(i, _)| i).collect();
        prop_assume!(!ivs.is_empty());
        let s = SparseFamily::new(mesh, ivs).unwrap();
        let lambda = carleson_constant(&s);
        prop_assert!(lambda >= 1.0);
        let c = construct_certificates(&s, lambda).unwrap();
        let v = verify_sparse(&c);
        prop_assert!(v.ok, "{:?}", v.violations);
    }

    #[test]
    fn sparse_operator_is_positive_and_linear((f, g) in pair(6), bits in prop::collection::vec(any::<bool>(), 127)) {
        let mesh = Mesh::unit(6);
        let s = SparseFamily::new(mesh, mesh.intervals(6).zip(&bits).filter(|(_, b)| **b).map(|(i, _)| i).collect()).unwrap();
        let af = sparse_operator(&s, &f.abs()).unwrap();
        prop_assert!(af.values().iter().all(|v| *v >= 0.0));
        let lhs = sparse_operator(&s, &f.add(&g).unwrap()).unwrap();
        let rhs = sparse_operator(&s, &f).unwrap().add(&sparse_operator(&s, &g).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() <= 1e-9);
    }

    #[test]
    fn bellman_range(v in 0.01f64..100.0, lift in 1.0f64..50.0, l in 0.0f64..=1.0) {
        let u = lift / v;
        let b = bellman_b(u, v, l).unwrap();
        prop_assert!(b >= -1e-12 && b <= u + 1e-12);
    }
}
