//! Small dense symmetric linear algebra for the illumination fit: Cholesky
//! solves, an active-set solver for sign-constrained normal equations, and
//! cyclic-Jacobi eigenvalues for conditioning reports. Sizes here are tens
//! of unknowns, so simplicity beats asymptotics.

/// Solve `a x = b` for symmetric positive-definite `a` (row-major, `n * n`)
/// by Cholesky factorization. Returns `None` when `a` is not numerically
/// positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    // lower-triangular factor, row-major
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Solve `a x = b` for SPD `a` with `x[i] >= 0` wherever `nonneg[i]` is set,
/// by an active-set method: pinned coordinates are removed from the system,
/// the reduced problem is solved exactly, and coordinates enter or leave the
/// pinned set until the KKT conditions hold. Unconstrained coordinates are
/// never pinned. Falls back to zeros if the matrix is not positive definite.
pub fn solve_spd_constrained(a: &[f64], b: &[f64], nonneg: &[bool]) -> Vec<f64> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    assert_eq!(nonneg.len(), n);
    let mut pinned = vec![false; n];
    for _ in 0..(2 * n + 8) {
        let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
        let mut x = vec![0.0; n];
        if !free.is_empty() {
            let m = free.len();
            let mut ra = vec![0.0; m * m];
            let mut rb = vec![0.0; m];
            for (p, &i) in free.iter().enumerate() {
                rb[p] = b[i];
                for (q, &j) in free.iter().enumerate() {
                    ra[p * m + q] = a[i * n + j];
                }
            }
            let Some(rx) = cholesky_solve(&ra, &rb) else {
                return vec![0.0; n];
            };
            for (p, &i) in free.iter().enumerate() {
                x[i] = rx[p];
            }
        }
        // pin the most negative constrained coordinate, if any
        let mut worst: Option<usize> = None;
        for &i in &free {
            if nonneg[i] && x[i] < -1e-12 {
                if worst.map_or(true, |w| x[i] < x[w]) {
                    worst = Some(i);
                }
            }
        }
        if let Some(i) = worst {
            pinned[i] = true;
            continue;
        }
        // release a pinned coordinate whose gradient pushes inward
        let mut release: Option<(usize, f64)> = None;
        for i in 0..n {
            if pinned[i] {
                let mut g = -b[i];
                for j in 0..n {
                    g += a[i * n + j] * x[j];
                }
                if g < -1e-12 && release.map_or(true, |(_, rg)| g < rg) {
                    release = Some((i, g));
                }
            }
        }
        match release {
            Some((i, _)) => pinned[i] = false,
            None => {
                for i in 0..n {
                    if x[i] < 0.0 && nonneg[i] {
                        x[i] = 0.0;
                    }
                }
                return x;
            }
        }
    }
    vec![0.0; n]
}

/// Eigenvalues of a symmetric matrix (row-major, `n * n`) by the cyclic
/// Jacobi method, returned in ascending order.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        let scale: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_known_system() {
        // a = [[4,1],[1,3]], b = [1,2] -> x = [1/11, 7/11]
        let x = cholesky_solve(&[4.0, 1.0, 1.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        // an indefinite matrix is rejected
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn unconstrained_solve_matches_hand_solution() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd_constrained(&a, &[1.0, 2.0], &[false, false]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn constraint_activates_when_free_solution_is_negative() {
        // free solution of [[2,0],[0,2]] x = [-3, 4] is (-1.5, 2)
        let a = [2.0, 0.0, 0.0, 2.0];
        let x = solve_spd_constrained(&a, &[-3.0, 4.0], &[true, true]);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constrained_solution_satisfies_kkt_on_a_coupled_system() {
        // minimize 0.5 x'Ax - b'x subject to x >= 0 with coupling that
        // forces one active constraint
        let a = [5.0, 4.0, 4.0, 5.0];
        let b = [1.0, -1.0];
        let x = solve_spd_constrained(&a, &b, &[true, true]);
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 0.2).abs() < 1e-12);
        // gradient component of the active coordinate must be >= 0
        let g1 = a[2] * x[0] + a[3] * x[1] - b[1];
        assert!(g1 >= 0.0);
    }

    #[test]
    fn pinned_coordinates_are_released_when_profitable() {
        // identity system with positive targets: nothing should stay pinned
        let n = 4;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let b = [0.5, 1.5, 2.5, 3.5];
        let x = solve_spd_constrained(&a, &b, &[true; 4]);
        for i in 0..n {
            assert!((x[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_constraints_leave_free_coordinates_signed() {
        let a = [2.0, 0.0, 0.0, 2.0];
        let x = solve_spd_constrained(&a, &[-3.0, -4.0], &[false, true]);
        assert!((x[0] + 1.5).abs() < 1e-14, "free coordinate may go negative");
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn eigenvalues_of_known_matrices() {
        let eig = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);

        // [[1,0,2],[0,3,0],[2,0,1]] has characteristic roots {-1, 3, 3}
        let eig = symmetric_eigenvalues(&[1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 2.0, 0.0, 1.0], 3);
        assert!((eig[0] + 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
        assert!((eig[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_sums_match_trace() {
        // symmetric positive definite 4x4 built from outer products
        let vs = [
            [1.0, 0.5, -0.25, 2.0],
            [0.0, 1.5, 1.0, -0.5],
            [2.0, -1.0, 0.5, 0.25],
            [0.5, 0.5, 2.0, 1.0],
        ];
        let n = 4;
        let mut a = vec![0.0; n * n];
        for v in &vs {
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] += v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            a[i * n + i] += 0.1;
        }
        let eig = symmetric_eigenvalues(&a, n);
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let sum: f64 = eig.iter().sum();
        assert!((trace - sum).abs() < 1e-9 * trace.abs());
        assert!(eig.iter().all(|&l| l > 0.0));
        // cholesky agrees with the spectrum's positive-definiteness
        assert!(cholesky_solve(&a, &[1.0; 4]).is_some());
    }
}
