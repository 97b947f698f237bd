mod common;

use common::*;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use zeno_core::operator_algebra::{kernel_basis, principal_angles, DEFAULT_KERNEL_TOL};
use zeno_core::zeno_elimination::{expand_k, find_zeno_subspace_default, hat_operators};
use zeno_core::{zeno_eliminate, CMatrix, ConditionTolerances, HilbertSpace, Operator, ScaledSlhFamily, SubspaceIsometry, ZenoSplit};

/// `P X Q` for coordinate projectors onto the first `z` or last `n − z` basis vectors.
fn mask(m: CMatrix, z: usize, rows_zeno: Option<bool>, cols_zeno: Option<bool>) -> CMatrix {
    let keep = |i: usize, want: Option<bool>| want.is_none_or(|zeno| (i < z) == zeno);
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if keep(i, rows_zeno) && keep(j, cols_zeno) { m[(i, j)] } else { c(0.0, 0.0) })
}

/// Zenofiable by construction on `span{e_0..e_{z−1}}`: `L⁽¹⁾` maps fast to
/// Zeno, `H⁽²⁾` lives on the fast block, `L⁽⁰⁾` has no fast–Zeno block,
/// `H⁽¹⁾` no Zeno block, and `S = u ⊗ I` for a unitary `u`.
fn zenofiable_model(rng: &mut ChaCha8Rng, z: usize, f: usize, channels: usize) -> (ScaledSlhFamily, ZenoSplit) {
    let n = z + f;
    let space = HilbertSpace::flat(n).unwrap();
    let u = random_unitary(rng, channels);
    let mut s = Vec::new();
    for i in 0..channels {
        for j in 0..channels {
            s.push(op(&space, CMatrix::identity(n, n) * u[(i, j)]));
        }
    }
    let l1 = (0..channels).map(|_| op(&space, mask(random_matrix(rng, n, n), z, Some(true), Some(false)))).collect();
    let l0 = (0..channels)
        .map(|_| {
            let m = random_matrix(rng, n, n) * c(0.5, 0.0);
            op(&space, &m - mask(m.clone(), z, Some(false), Some(true)))
        })
        .collect();
    let h2 = op(&space, mask(random_hermitian(rng, n), z, Some(false), Some(false)));
    let h1_full = random_hermitian(rng, n);
    let h1 = op(&space, &h1_full - mask(h1_full.clone(), z, Some(true), Some(true)));
    let h0 = op(&space, random_hermitian(rng, n));
    let family = ScaledSlhFamily::new(s, l1, l0, h2, h1, h0).unwrap();
    let idx: Vec<usize> = (0..z).collect();
    let split = ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &idx).unwrap());
    (family, split)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn limit_scattering_is_unitary(seed in any::<u64>(), z in 1usize..4, f in 1usize..4, channels in 1usize..4) {
        let mut rng = rng(seed);
        let (family, split) = zenofiable_model(&mut rng, z, f, channels);
        let r = zeno_eliminate(&family, &split, &ConditionTolerances::default()).unwrap();
        let t = &r.zeno_triple;
        for i in 0..channels {
            for k in 0..channels {
                let mut acc = CMatrix::zeros(z, z);
                for j in 0..channels {
                    acc += t.scattering(j, i).matrix().adjoint() * t.scattering(j, k).matrix();
                }
                let expected = if i == k { CMatrix::identity(z, z) } else { CMatrix::zeros(z, z) };
                prop_assert!(max_diff(&acc, &expected) < 1e-9);
            }
        }
        prop_assert!(t.hamiltonian().hermiticity_residual() < 1e-10);
    }

    #[test]
    fn hat_hamiltonian_is_hermitian(seed in any::<u64>(), n in 2usize..6, channels in 1usize..3) {
        // Arbitrary families: Ĥ is Hermitian whenever A_ff is invertible.
        let mut rng = rng(seed);
        let space = HilbertSpace::flat(n).unwrap();
        let ops = |rng: &mut ChaCha8Rng| (0..channels).map(|_| op(&space, random_matrix(rng, n, n))).collect::<Vec<_>>();
        let l1 = ops(&mut rng);
        let l0 = ops(&mut rng);
        let family = ScaledSlhFamily::with_identity_scattering(
            l1,
            l0,
            op(&space, random_hermitian(&mut rng, n)),
            op(&space, random_hermitian(&mut rng, n)),
            op(&space, random_hermitian(&mut rng, n)),
        )
        .unwrap();
        let split = ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &[0]).unwrap());
        if let Ok(hats) = hat_operators(&family, &split) {
            prop_assert!(hats.hamiltonian.hermiticity_residual() < 1e-10);
        }
    }

    #[test]
    fn expansion_reconstructs_k(seed in any::<u64>(), z in 1usize..3, f in 1usize..4, channels in 1usize..3) {
        let mut rng = rng(seed);
        let (family, _) = zenofiable_model(&mut rng, z, f, channels);
        let e = expand_k(&family);
        for k in [0.5, 1.0, 7.0] {
            let direct = family.instantiate(k).unwrap().k_operator();
            let scale = 1.0 + max_abs(direct.matrix());
            prop_assert!(max_diff(e.at(k).matrix(), direct.matrix()) < 1e-9 * scale);
        }
    }

    #[test]
    fn kernel_is_scale_covariant(seed in any::<u64>(), z in 1usize..4, f in 1usize..4, scale in 0.1f64..10.0, negate in any::<bool>()) {
        let mut rng = rng(seed);
        let (family, _) = zenofiable_model(&mut rng, z, f, 2);
        let cs = if negate { -scale } else { scale };
        let scaled = ScaledSlhFamily::new(
            family.scattering_entries().to_vec(),
            family.l1().iter().map(|l| l * cs).collect(),
            family.l0().to_vec(),
            family.h2() * cs,
            family.h1().clone(),
            family.h0().clone(),
        )
        .unwrap();
        let v1 = kernel_basis(&expand_k(&family).a, DEFAULT_KERNEL_TOL);
        let v2 = kernel_basis(&expand_k(&scaled).a, DEFAULT_KERNEL_TOL);
        prop_assert_eq!(v1.dim(), z);
        prop_assert_eq!(v2.dim(), z);
        let angle = principal_angles(&v1, &v2).unwrap().into_iter().fold(0.0, f64::max);
        prop_assert!(angle < 1e-8);
    }
}

#[test]
fn schur_complement_without_damping() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let (z, f) = (2, 3);
        let n = z + f;
        let space = HilbertSpace::flat(n).unwrap();
        let zero = Operator::zeros(&space);
        let h2 = mask(random_hermitian(&mut rng, n), z, Some(false), Some(false));
        let h1_full = random_hermitian(&mut rng, n);
        let h1 = &h1_full - mask(h1_full.clone(), z, Some(true), Some(true));
        let h0 = random_hermitian(&mut rng, n);
        let family = ScaledSlhFamily::with_identity_scattering(
            vec![zero.clone()],
            vec![zero.clone()],
            op(&space, h2.clone()),
            op(&space, h1.clone()),
            op(&space, h0.clone()),
        )
        .unwrap();
        let split = ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &[0, 1]).unwrap());
        let hats = hat_operators(&family, &split).unwrap();
        let h2_ff = h2.view((z, z), (f, f)).into_owned().try_inverse().unwrap();
        let expected = h0.view((0, 0), (z, z)) - h1.view((0, z), (z, f)) * h2_ff * h1.view((z, 0), (f, z));
        assert!(max_diff(hats.hamiltonian.matrix(), &expected) < 1e-10);
    }
}

#[test]
fn auto_subspace_finds_constructed_zeno_space() {
    let mut rng = rng(12);
    let (family, split) = zenofiable_model(&mut rng, 2, 3, 2);
    let found = find_zeno_subspace_default(&family).unwrap();
    let angle = principal_angles(found.zeno(), split.zeno()).unwrap().into_iter().fold(0.0, f64::max);
    assert!(angle < 1e-8);
    // The limit is basis independent once lifted.
    let tol = ConditionTolerances::default();
    let a = zeno_eliminate(&family, &split, &tol).unwrap();
    let b = zeno_eliminate(&family, &found, &tol).unwrap();
    for (x, y) in a.zeno_triple.coupling().iter().zip(b.zeno_triple.coupling()) {
        assert!(max_diff(&a.lift(x.matrix()), &b.lift(y.matrix())) < 1e-10);
    }
    assert!(max_diff(&a.lift(a.zeno_triple.hamiltonian().matrix()), &b.lift(b.zeno_triple.hamiltonian().matrix())) < 1e-10);
}
