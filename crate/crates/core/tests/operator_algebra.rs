mod common;

use common::*;
use proptest::prelude::*;
use zeno_core::operator_algebra::{block_split, kernel_basis, DEFAULT_KERNEL_TOL};
use zeno_core::{CMatrix, HilbertSpace, Operator, SubspaceIsometry, ZenoSplit};

fn isometry_defect(v: &SubspaceIsometry) -> f64 {
    let c = v.columns();
    max_abs(&(c.adjoint() * c - CMatrix::identity(c.ncols(), c.ncols())))
}

fn random_split(seed: u64, n: usize, r: usize) -> ZenoSplit {
    let mut rng = rng(seed);
    let space = HilbertSpace::flat(n).unwrap();
    let u = random_unitary(&mut rng, n);
    ZenoSplit::from_zeno(SubspaceIsometry::new(space, u.columns(0, r).into_owned()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructed_isometries_are_isometric(seed in any::<u64>(), n in 2usize..9, r in 1usize..8) {
        let r = r.min(n - 1);
        let split = random_split(seed, n, r);
        prop_assert!(isometry_defect(split.zeno()) < 1e-12);
        prop_assert!(isometry_defect(split.fast()) < 1e-12);
        prop_assert_eq!(split.zeno().dim() + split.fast().dim(), n);
        let cross = split.zeno().columns().adjoint() * split.fast().columns();
        prop_assert!(max_abs(&cross) < 1e-12);

        let space = HilbertSpace::flat(n).unwrap();
        let picked: Vec<usize> = (0..n).filter(|i| (seed >> i) & 1 == 1).collect();
        if !picked.is_empty() {
            let v = SubspaceIsometry::from_basis_indices(&space, &picked).unwrap();
            prop_assert!(isometry_defect(&v) < 1e-12);
            prop_assert!(isometry_defect(&v.complement()) < 1e-12);
        }
    }

    #[test]
    fn blocks_reassemble(seed in any::<u64>(), n in 2usize..8, r in 1usize..7) {
        let r = r.min(n - 1);
        let split = random_split(seed, n, r);
        let mut rng = rng(seed ^ 0x5eed);
        let x = op(split.space(), random_matrix(&mut rng, n, n));
        let blocks = block_split(&x, &split).unwrap();
        prop_assert!(max_diff(&blocks.reassemble(&split), x.matrix()) < 1e-12);
    }

    #[test]
    fn kernel_basis_is_annihilated(seed in any::<u64>(), n in 2usize..9, rank in 0usize..8) {
        let rank = rank.min(n - 1);
        let mut rng = rng(seed);
        let a = random_matrix(&mut rng, n, rank) * random_matrix(&mut rng, rank, n);
        let a = op(&HilbertSpace::flat(n).unwrap(), a);
        let v = kernel_basis(&a, DEFAULT_KERNEL_TOL);
        prop_assert_eq!(v.dim(), n - rank);
        let sigma_max = a.matrix().singular_values().iter().cloned().fold(0.0, f64::max);
        let leak = (a.matrix() * v.columns()).singular_values().iter().cloned().fold(0.0, f64::max);
        prop_assert!(leak <= 10.0 * DEFAULT_KERNEL_TOL * sigma_max, "leak {} vs σ_max {}", leak, sigma_max);
    }

    #[test]
    fn tensor_is_associative(seed in any::<u64>(), d in proptest::collection::vec(1usize..4, 3)) {
        use rand::Rng;
        let mut rng = rng(seed);
        // Gaussian-integer entries keep every product exact, so equality is exact.
        let ops: Vec<Operator> = d
            .iter()
            .map(|&k| {
                let m = CMatrix::from_fn(k, k, |_, _| c(rng.random_range(-8..=8) as f64, rng.random_range(-8..=8) as f64));
                op(&HilbertSpace::flat(k).unwrap(), m)
            })
            .collect();
        let left = ops[0].tensor(&ops[1]).tensor(&ops[2]);
        let right = ops[0].tensor(&ops[1].tensor(&ops[2]));
        prop_assert_eq!(left.matrix(), right.matrix());
        prop_assert_eq!(left.space(), right.space());

        // General entries agree to rounding.
        let ops: Vec<Operator> = d
            .iter()
            .map(|&k| op(&HilbertSpace::flat(k).unwrap(), random_matrix(&mut rng, k, k)))
            .collect();
        let left = ops[0].tensor(&ops[1]).tensor(&ops[2]);
        let right = ops[0].tensor(&ops[1].tensor(&ops[2]));
        prop_assert!(max_diff(left.matrix(), right.matrix()) < 1e-13 * (1.0 + max_abs(left.matrix())));
    }
}

#[test]
fn embed_matches_explicit_tensor() {
    let space = HilbertSpace::new(vec![2, 3, 2]).unwrap();
    let a = zeno_core::operator_algebra::fock_annihilator(3).unwrap();
    let embedded = Operator::embed(&a, 1, &space).unwrap();
    let id2 = Operator::identity(&HilbertSpace::flat(2).unwrap());
    let explicit = id2.tensor(&a).tensor(&id2);
    assert_eq!(embedded.matrix(), explicit.matrix());
    assert_eq!(space.basis_index(&[1, 2, 0]).unwrap(), 6 + 2 * 2);
}
