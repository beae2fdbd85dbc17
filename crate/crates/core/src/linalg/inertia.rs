//! Inertia of a dense symmetric matrix via Bunch-Kaufman `L D L^T` with
//! symmetric pivoting (Sylvester's law of inertia).

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Pivots below `tol * max|A|` count as zero.
pub fn inertia(n: usize, matrix: &[f64], tol: f64) -> Inertia {
    assert_eq!(matrix.len(), n * n);
    // Lower triangle of a row-major copy; the upper half is never read.
    let mut a = matrix.to_vec();
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_tol = tol * scale.max(f64::MIN_POSITIVE);
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let idx = |i: usize, j: usize| if i >= j { i * n + j } else { j * n + i };
    let mut out = Inertia::default();
    let count = |d: f64, out: &mut Inertia| {
        if d.abs() <= zero_tol {
            out.zero += 1;
        } else if d < 0.0 {
            out.negative += 1;
        } else {
            out.positive += 1;
        }
    };

    let sym_swap = |a: &mut Vec<f64>, k: usize, p: usize, q: usize| {
        if p == q {
            return;
        }
        let (p, q) = (p.min(q), p.max(q));
        for j in k..n {
            if j == p || j == q {
                continue;
            }
            a.swap(idx(p, j), idx(q, j));
        }
        a.swap(p * n + p, q * n + q);
    };

    let mut k = 0;
    while k < n {
        let absakk = a[k * n + k].abs();
        let (mut imax, mut colmax) = (k, 0.0f64);
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > colmax {
                colmax = v;
                imax = i;
            }
        }
        if absakk.max(colmax) <= zero_tol {
            out.zero += 1;
            k += 1;
            continue;
        }
        let two_by_two;
        if absakk >= alpha * colmax {
            two_by_two = false;
        } else {
            let mut rowmax = 0.0f64;
            for j in k..n {
                if j != imax {
                    rowmax = rowmax.max(a[idx(imax, j)].abs());
                }
            }
            if absakk * rowmax >= alpha * colmax * colmax {
                two_by_two = false;
            } else if a[imax * n + imax].abs() >= alpha * rowmax {
                sym_swap(&mut a, k, k, imax);
                two_by_two = false;
            } else {
                sym_swap(&mut a, k, k + 1, imax);
                two_by_two = true;
            }
        }
        if !two_by_two {
            let d = a[k * n + k];
            count(d, &mut out);
            for i in k + 1..n {
                let lik = a[i * n + k] / d;
                if lik == 0.0 {
                    continue;
                }
                for j in k + 1..=i {
                    a[i * n + j] -= lik * a[j * n + k];
                }
            }
            k += 1;
        } else {
            let d11 = a[k * n + k];
            let d21 = a[(k + 1) * n + k];
            let d22 = a[(k + 1) * n + k + 1];
            let det = d11 * d22 - d21 * d21;
            let tr = d11 + d22;
            let half = 0.5 * tr;
            let disc = (0.25 * (d11 - d22).powi(2) + d21 * d21).sqrt();
            count(half + disc, &mut out);
            count(half - disc, &mut out);
            for i in k + 2..n {
                let (ai1, ai2) = (a[i * n + k], a[i * n + k + 1]);
                // [l1 l2] = [ai1 ai2] D^{-1}
                let l1 = (ai1 * d22 - ai2 * d21) / det;
                let l2 = (ai2 * d11 - ai1 * d21) / det;
                for j in k + 2..=i {
                    a[i * n + j] -= l1 * a[j * n + k] + l2 * a[j * n + k + 1];
                }
            }
            k += 2;
        }
    }
    out
}
