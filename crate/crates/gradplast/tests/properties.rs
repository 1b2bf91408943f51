//! Property tests for the algebraic invariants: inner-product bilinearity,
//! projection behavior of the masks, operator linearity, Fenchel-Young.

mod common;

use common::{box_ctx, periodic_ctx};
use gradplast::energies::{density_r, density_rstar, grad_r, EnergyConfig};
use gradplast::operators::sym;
use gradplast::{inner_product, Mat3, MatrixField, ScalarField};
use proptest::prelude::*;

fn field_strategy(n_nodes: usize, comps: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n_nodes * comps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inner_product_symmetric_bilinear(
        a in field_strategy(64, 1),
        b in field_strategy(64, 1),
        c in field_strategy(64, 1),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let ctx = periodic_ctx(4);
        let g = ctx.grid();
        let fa = ScalarField::from_data(g, a).unwrap();
        let fb = ScalarField::from_data(g, b).unwrap();
        let fc = ScalarField::from_data(g, c).unwrap();
        let ab = inner_product(&fa, &fb).unwrap();
        let ba = inner_product(&fb, &fa).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-14 * (1.0 + ab.abs()));
        // bilinearity
        let combo = fa.scaled(alpha).add(&fb.scaled(beta));
        let lhs = inner_product(&combo, &fc).unwrap();
        let rhs = alpha * inner_product(&fa, &fc).unwrap() + beta * inner_product(&fb, &fc).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        // positive definiteness
        if fa.norm_l2() > 0.0 {
            prop_assert!(inner_product(&fa, &fa).unwrap() > 0.0);
        }
    }

    #[test]
    fn tangential_mask_is_projection(data in field_strategy(64, 9)) {
        let ctx = box_ctx(4);
        let g = ctx.grid();
        let p = MatrixField::from_data(g, data).unwrap();
        let once = p.apply_tangential_mask();
        prop_assert_eq!(once.apply_tangential_mask(), once.clone());
        prop_assert!(once.norm_l2() <= p.norm_l2() + 1e-15);
        // orthogonal projection: <p - Pp, Pp> = 0
        let residual = p.sub(&once);
        let cross = inner_product(&residual, &once).unwrap();
        prop_assert!(cross.abs() <= 1e-12 * (1.0 + p.norm_l2().powi(2)));
    }

    #[test]
    fn sym_is_idempotent_contraction(data in field_strategy(64, 9)) {
        let ctx = periodic_ctx(4);
        let p = MatrixField::from_data(ctx.grid(), data).unwrap();
        let s = sym(&p);
        prop_assert_eq!(sym(&s), s.clone());
        prop_assert!(s.norm_l2() <= p.norm_l2() + 1e-15);
    }

    #[test]
    fn operators_linear_on_random_fields(
        a in field_strategy(216, 9),
        b in field_strategy(216, 9),
        alpha in -2.0..2.0f64,
    ) {
        let ctx = periodic_ctx(6);
        let g = ctx.grid();
        let fa = MatrixField::from_data(g, a).unwrap();
        let fb = MatrixField::from_data(g, b).unwrap();
        let combo = fa.scaled(alpha).add(&fb);
        for op in [
            |c: &gradplast::OperatorContext<f64>, f: &MatrixField<f64>| c.curl_mat(f).unwrap(),
            |c: &gradplast::OperatorContext<f64>, f: &MatrixField<f64>| c.curlcurl_mat(f).unwrap(),
        ] {
            let lhs = op(&ctx, &combo);
            let rhs = op(&ctx, &fa).scaled(alpha).add(&op(&ctx, &fb));
            let scale = 1.0 + lhs.max_abs();
            prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn fenchel_young_holds_for_both_dissipation_laws(
        q_entries in prop::collection::vec(-3.0..3.0f64, 9),
        s_entries in prop::collection::vec(-3.0..3.0f64, 9),
        visc in 0.5..2.0f64,
        quartic in 0.0..1.0f64,
    ) {
        let cfg = EnergyConfig::<f64> { visc, r_quartic: quartic, ..Default::default() };
        let q = Mat3(q_entries.try_into().unwrap());
        let s = Mat3(s_entries.try_into().unwrap());
        let gap = density_r(&cfg, &q) + density_rstar(&cfg, &s) - q.dot(&s);
        prop_assert!(gap >= -1e-11, "gap {}", gap);
        // equality on the flow rule
        let s_star = grad_r(&cfg, &q);
        let eq_gap = density_r(&cfg, &q) + density_rstar(&cfg, &s_star) - q.dot(&s_star);
        prop_assert!(eq_gap.abs() <= 1e-10 * (1.0 + q.dot(&q)), "equality gap {}", eq_gap);
    }
}
