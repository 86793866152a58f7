//! Dense kernels against nalgebra's symmetric eigensolver.

use almult_core::linalg::{pinv, psd_project, sym_eigen, trace_psd_part_sq, SymMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let mut a = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-3.0..3.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

fn to_na(a: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.order(), a.order(), a.as_slice())
}

fn clip_oracle(a: &SymMatrix) -> DMatrix<f64> {
    let e = to_na(a).symmetric_eigen();
    let d = e.eigenvalues.map(|l| l.max(0.0));
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn psd_projection_matches_eigen_clip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let n = 2 + k % 5;
        let a = random_sym(&mut rng, n);
        let p = psd_project(&a).unwrap();
        assert!(max_abs_diff(&to_na(&p), &clip_oracle(&a)) <= 1e-10, "order {n}");
    }
}

#[test]
fn pseudoinverse_penrose_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let n = 2 + k % 5;
        let mut a = random_sym(&mut rng, n);
        if k % 2 == 0 {
            // Rank-deficient: drop the smallest eigenvalue.
            let e = sym_eigen(&a).unwrap();
            a = e.reconstruct_with(|l| if l == e.eigenvalues[n - 1] { 0.0 } else { l });
        }
        let (am, pm) = (to_na(&a), to_na(&pinv(&a, None).unwrap()));
        assert!(max_abs_diff(&(&am * &pm * &am), &am) <= 1e-8);
        assert!(max_abs_diff(&(&pm * &am * &pm), &pm) <= 1e-8);
        let ap = &am * &pm;
        assert!(max_abs_diff(&ap, &ap.transpose()) <= 1e-8);
        let pa = &pm * &am;
        assert!(max_abs_diff(&pa, &pa.transpose()) <= 1e-8);
    }
}

#[test]
fn trace_of_squared_psd_part() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..100 {
        let n = 2 + k % 5;
        let a = random_sym(&mut rng, n);
        let oracle: f64 = to_na(&a).symmetric_eigenvalues().iter().map(|l| l.max(0.0).powi(2)).sum();
        assert!((trace_psd_part_sq(&a).unwrap() - oracle).abs() <= 1e-10);
    }
}

#[test]
fn eigenvalues_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..50 {
        let n = 1 + k % 6;
        let a = random_sym(&mut rng, n);
        let mut ours = sym_eigen(&a).unwrap().eigenvalues;
        let mut theirs: Vec<f64> = to_na(&a).symmetric_eigenvalues().iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() <= 1e-10);
        }
    }
}
