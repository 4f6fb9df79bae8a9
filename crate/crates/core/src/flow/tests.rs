use super::*;
use crate::toy;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

fn normal_vec(rng: &mut Xoshiro256StarStar, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// One layer of each type at dimension `d`.
fn zoo(d: usize, ctx: usize, seed: u64) -> Vec<FlowLayer> {
    let mut r = rng(seed);
    vec![
        toy::random_actnorm(d, &mut r),
        toy::random_dense(d, d, &mut r),
        toy::random_coupling(d, false, ctx, &mut r),
        toy::random_coupling(d, true, ctx, &mut r),
        toy::random_autoregressive(d, ctx, &mut r),
        FlowLayer::SigmoidSquash { dim: d },
    ]
}

#[test]
fn identity_actnorm_is_identity() {
    let l = FlowLayer::ActNorm(ActNorm::identity(3));
    assert_eq!(l.forward(&[1.0, -2.0, 0.5], &[]).unwrap(), vec![1.0, -2.0, 0.5]);
}

#[test]
fn actnorm_jacobian_is_diagonal_scale() {
    let l = FlowLayer::ActNorm(ActNorm::new(vec![2.0, 3.0], vec![0.0, 0.0]).unwrap());
    let j = l.jacobian(&[0.1, 0.2], &[]).unwrap();
    assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
}

#[test]
fn dense_layer_example() {
    let l = DenseLinear::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0])).unwrap();
    assert_eq!(l.block, 2);
    let l = FlowLayer::DenseLinear(l);
    assert_eq!(l.forward(&[1.0, 1.0], &[]).unwrap(), vec![2.0, 2.0]);
    assert_eq!(l.inverse(&[2.0, 2.0], &[]).unwrap(), vec![1.0, 1.0]);
    assert!((l.log_abs_det(&[0.0, 0.0], &[]).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!(matches!(l.coord_map(0, &[0.0, 0.0], &[]), Err(Error::UnsupportedLayer(_))));
}

#[test]
fn dense_layer_rejects_singular_and_finds_blocks() {
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert!(matches!(DenseLinear::new(singular), Err(Error::NonInvertible { .. })));
    let l = toy::random_dense(12, 3, &mut rng(4));
    let FlowLayer::DenseLinear(l) = l else { unreachable!() };
    assert_eq!(l.block, 3);
    assert_eq!(l.blocks().count(), 4);
    let prod = &l.weight * &l.inverse;
    assert!((prod - DMatrix::identity(12, 12)).abs().max() < 1e-12);
}

#[test]
fn dimension_is_checked() {
    let m = toy::realnvp(4, 2, 2, 1);
    assert!(matches!(m.forward(&[0.0; 3], &[]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(m.jacobian(&[0.0; 5], &[]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn layers_invert_and_logdets_match_jacobians() {
    for (d, ctx) in [(1, 0), (5, 0), (16, 0), (6, 3)] {
        let mut r = rng(d as u64 * 31 + ctx as u64);
        for layer in zoo(d, ctx, d as u64) {
            for _ in 0..100 {
                let x = normal_vec(&mut r, d);
                let c = normal_vec(&mut r, layer.context_dim());
                let (z, ld) = layer.forward_logdet(&x, &c).unwrap();
                let back = layer.inverse(&z, &c).unwrap();
                for (a, b) in x.iter().zip(&back) {
                    assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{}: {a} vs {b}", layer.name());
                }
                let jac = layer.jacobian(&x, &c).unwrap();
                let dense_ld = jac.clone().lu().determinant().abs().ln();
                assert!((ld - dense_ld).abs() <= 1e-8, "{}: {ld} vs {dense_ld}", layer.name());
                for i in 0..d {
                    let (zi, dzi) = layer.coord_forward(i, &x, &c).map_or((z[i], jac[(i, i)]), |v| v);
                    assert!((zi - z[i]).abs() <= 1e-12 * z[i].abs().max(1.0));
                    assert!((dzi - jac[(i, i)]).abs() <= 1e-12 * dzi.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn coupling_jacobian_matches_finite_differences() {
    let mut r = rng(8);
    for reverse in [false, true] {
        let l = toy::random_coupling(6, reverse, 0, &mut r);
        let x = normal_vec(&mut r, 6);
        let jac = l.jacobian(&x, &[]).unwrap();
        let h = 1e-5;
        for c in 0..6 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (l.forward(&xp, &[]).unwrap(), l.forward(&xm, &[]).unwrap());
            for row in 0..6 {
                assert!(((fp[row] - fm[row]) / (2.0 * h) - jac[(row, c)]).abs() <= 1e-5);
            }
        }
        let FlowLayer::AffineCoupling(c) = &l else { unreachable!() };
        for i in c.passive() {
            for j in 0..6 {
                assert_eq!(jac[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn sigmoid_coordinate_at_zero() {
    let l = FlowLayer::SigmoidSquash { dim: 1 };
    assert_eq!(l.coord_forward(0, &[0.0], &[]).unwrap(), (0.5, 0.25));
}

#[test]
fn coordinate_maps_invert_and_differentiate() {
    let mut r = rng(12);
    for layer in zoo(6, 2, 5) {
        if matches!(layer, FlowLayer::DenseLinear(_)) {
            continue;
        }
        for _ in 0..50 {
            let x = normal_vec(&mut r, 6);
            let c = normal_vec(&mut r, layer.context_dim());
            let maps = layer.coord_maps(&x, &c).unwrap();
            for i in 0..6 {
                let m = layer.coord_map(i, &x, &c).unwrap();
                assert_eq!(m, maps[i]);
                let (z, dz) = m.forward(x[i]);
                assert!((m.inverse(z) - x[i]).abs() <= 1e-10 * x[i].abs().max(1.0));
                let inv = m.inverted();
                assert!((inv.forward(z).0 - x[i]).abs() <= 1e-10 * x[i].abs().max(1.0));
                let h = 1e-6;
                let fd = (m.forward(x[i] + h).0 - m.forward(x[i] - h).0) / (2.0 * h);
                assert!((fd - dz).abs() <= 1e-6 * dz.abs().max(1.0), "{}: {fd} vs {dz}", layer.name());
            }
        }
    }
}

#[test]
fn model_jacobian_is_chain_product() {
    let m = toy::realnvp(6, 2, 3, 3);
    let x = [0.1, -0.3, 0.5, 0.7, -1.1, 0.2];
    let j1 = m.layers[0].jacobian(&x, &[]).unwrap();
    let z1 = m.layers[0].forward(&x, &[]).unwrap();
    let j2 = m.layers[1].jacobian(&z1, &[]).unwrap();
    let two = FlowModel::new(6, m.layers[..2].to_vec()).unwrap();
    assert!((two.jacobian(&x, &[]).unwrap() - j2 * j1).abs().max() < 1e-14);
    let (_, ld) = m.forward_logdet(&x, &[]).unwrap();
    let dense = m.jacobian(&x, &[]).unwrap().determinant().abs().ln();
    assert!((ld - dense).abs() < 1e-8);
}

#[test]
fn standard_normal_codelength_at_origin() {
    let bits = FlowModel::identity(2).neg_log2_density(&[0.0, 0.0], &[]).unwrap();
    assert!((bits - (2.0 * std::f64::consts::PI).log2()).abs() < 1e-12);
    assert!((bits - 2.6515).abs() < 1e-4);
}

#[test]
fn appending_layer_and_inverse_leaves_density() {
    let mut m = toy::realnvp(4, 2, 2, 9);
    let x = [0.3, 0.1, -0.4, 1.2];
    let before = m.log_density(&x, &[]).unwrap();
    let FlowLayer::DenseLinear(w) = m.layers.last().unwrap().clone() else { unreachable!() };
    m.layers.push(FlowLayer::DenseLinear(DenseLinear::new(w.inverse.clone()).unwrap()));
    m.layers.push(FlowLayer::DenseLinear(w));
    assert!((m.log_density(&x, &[]).unwrap() - before).abs() < 1e-12);
}

#[test]
fn density_integrates_to_one() {
    let m = toy::realnvp(2, 4, 2, 21);
    let (lim, n) = (12.0, 1200);
    let h = 2.0 * lim / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = [-lim + (i as f64 + 0.5) * h, -lim + (j as f64 + 0.5) * h];
            total += m.log_density(&x, &[]).unwrap().exp() * h * h;
        }
    }
    assert!((total - 1.0).abs() < 0.01, "{total}");
}

#[test]
fn context_changes_conditional_layers() {
    let layer = toy::random_coupling(4, false, 2, &mut rng(3));
    let x = [0.5, 0.5, 0.5, 0.5];
    let a = layer.forward(&x, &[0.0, 0.0]).unwrap();
    let b = layer.forward(&x, &[1.0, 0.0]).unwrap();
    assert_eq!(a[..2], b[..2]);
    assert_ne!(a[2..], b[2..]);
    let m = FlowModel::new(4, vec![layer]).unwrap();
    assert_eq!(m.context_dim, 2);
    assert!(matches!(m.forward(&x, &[]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn inverse_steps_invert_the_model() {
    let m = toy::conditional_dequantizer(4, 2, 6).unwrap();
    let ctx = [0.1, 0.2, 0.3, 0.4];
    let eps = [0.3, -1.0, 2.0, 0.0];
    let u = m.forward(&eps, &ctx).unwrap();
    assert!(u.iter().all(|&v| v > 0.0 && v < 1.0));
    let mut back = u.clone();
    let mut ld = 0.0;
    for s in m.inverse_steps() {
        let (next, l) = s.forward_logdet(&back, &ctx).unwrap();
        back = next;
        ld += l;
    }
    for (a, b) in eps.iter().zip(&back) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!((ld + m.forward_logdet(&eps, &ctx).unwrap().1).abs() < 1e-10);
    let s = m.inverse_steps()[0];
    let j = s.jacobian(&u, &ctx).unwrap();
    let maps = s.coord_maps(&u, &ctx).unwrap();
    for i in 0..4 {
        assert!((maps[i].forward(u[i]).1 - j[(i, i)]).abs() < 1e-9 * j[(i, i)].abs());
    }
}

mod weights_files {
    use super::*;
    use crate::flow::weights::{from_bytes, load_weights, model_hash, save_weights, to_bytes};

    fn full_model() -> FlowModel {
        let mut layers = zoo(6, 0, 77);
        layers.push(toy::random_dense(6, 2, &mut rng(1)));
        FlowModel::new(6, layers).unwrap()
    }

    #[test]
    fn save_load_is_bit_exact() {
        let m = full_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lbbw");
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), to_bytes(&m));
        assert_eq!(model_hash(&[&back]), model_hash(&[&m]));
        let c = toy::conditional_dequantizer(3, 2, 1).unwrap();
        assert_eq!(from_bytes(&to_bytes(&c)).unwrap(), c);
        assert_ne!(model_hash(&[&m]), model_hash(&[&m, &c]));
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = to_bytes(&full_model());
        for cut in [3, 4, 10, 13, bytes.len() / 2, bytes.len() - 1] {
            let err = from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CorruptTensor(_) | Error::BadMagic { .. }), "{cut}: {err:?}");
        }
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 8]), Err(Error::CorruptTensor(_))));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(from_bytes(&b), Err(Error::BadMagic { .. })));
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(matches!(from_bytes(&b), Err(Error::VersionMismatch(2))));
        let mut b = bytes;
        b.push(0);
        assert!(matches!(from_bytes(&b), Err(Error::CorruptTensor(_))));
        assert!(save_weights(&FlowModel::identity(2), "/nonexistent/x").is_err());
    }

    proptest! {
        #[test]
        fn random_models_round_trip(seed in any::<u64>(), d in 1usize..8, depth in 0usize..5) {
            let m = toy::random_model(d, depth.max(1), seed);
            prop_assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
        }
    }
}

proptest! {
    #[test]
    fn random_models_are_bijective(seed in any::<u64>(), depth in 1usize..6) {
        let m = toy::random_model(16, depth, seed);
        let mut r = rng(seed ^ 1);
        let x = normal_vec(&mut r, 16);
        let back = m.inverse(&m.forward(&x, &[]).unwrap(), &[]).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }
}
