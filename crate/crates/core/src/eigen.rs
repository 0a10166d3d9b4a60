//! Spectra of 3×3 real matrices via the characteristic cubic.
//!
//! Roots come from the trigonometric/Cardano formulas in the form that avoids
//! cancellation, followed by a Newton polish on the cubic. Every matrix in
//! this crate is 3×3, so a general QR iteration is never needed.

use num_complex::Complex64;

pub type Matrix3 = [[f64; 3]; 3];

/// Real parts within this band of zero are classified as marginal.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Eigenvalues with `|Im|` above this are treated as members of a complex pair.
pub const PAIR_IM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn classify(max_real: f64, tol: f64) -> Self {
        if max_real < -tol {
            Stability::Stable
        } else if max_real > tol {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

/// Three eigenvalues sorted by descending real part (ties: descending
/// imaginary part) plus the stability they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigentriple {
    pub values: [Complex64; 3],
    pub stability: Stability,
}

impl Eigentriple {
    pub fn new(mut values: [Complex64; 3]) -> Self {
        values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let stability = Stability::classify(values[0].re, MARGINAL_TOL);
        Self { values, stability }
    }

    pub fn from_real(values: [f64; 3]) -> Self {
        Self::new(values.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn max_real(&self) -> f64 {
        self.values[0].re
    }

    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    /// Member with positive imaginary part of the complex-conjugate pair, if any.
    pub fn complex_pair(&self) -> Option<Complex64> {
        self.values
            .iter()
            .copied()
            .filter(|z| z.im > PAIR_IM_TOL)
            .max_by(|a, b| a.re.total_cmp(&b.re))
    }

    /// Eigenvalues with negligible imaginary part.
    pub fn real_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter(|z| z.im.abs() <= PAIR_IM_TOL).map(|z| z.re)
    }

    /// Eigenvalue closest to the origin.
    pub fn nearest_to_zero(&self) -> Complex64 {
        *self
            .values
            .iter()
            .min_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("three eigenvalues")
    }
}

pub fn det3(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot vanishes.
pub fn solve_linear<const N: usize>(m: &[[f64; N]; N], b: [f64; N]) -> Option<[f64; N]> {
    let mut a = *m;
    let mut x = b;
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("non-empty range");
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..N {
            let f = a[r][col] / a[col][col];
            for c in col..N {
                a[r][c] -= f * a[col][c];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..N).rev() {
        let tail: f64 = (r + 1..N).map(|c| a[r][c] * x[c]).sum();
        x[r] = (x[r] - tail) / a[r][r];
    }
    Some(x)
}

pub fn solve3(m: &Matrix3, b: [f64; 3]) -> Option<[f64; 3]> {
    solve_linear(m, b)
}

/// Frobenius norm.
pub fn frobenius(m: &Matrix3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coefficients `[a, b, c]` of `det(λI - m) = λ³ + aλ² + bλ + c`.
pub fn characteristic_coefficients(m: &Matrix3) -> [f64; 3] {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0])
        + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
        + (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
    [-trace, minors, -det3(m)]
}

pub fn eigensolve_3x3(m: &Matrix3) -> Eigentriple {
    let [a, b, c] = characteristic_coefficients(m);
    Eigentriple::new(cubic_roots(a, b, c))
}

/// Roots of `λ³ + aλ² + bλ + c`.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let shift = a / 3.0;

    if r * r < q * q * q {
        let sq = q.sqrt();
        let theta = (r / (sq * sq * sq)).clamp(-1.0, 1.0).acos();
        let two_pi = 2.0 * std::f64::consts::PI;
        return [theta, theta + two_pi, theta - two_pi].map(|angle| {
            let x = -2.0 * sq * (angle / 3.0).cos() - shift;
            Complex64::new(polish_real(x, a, b, c), 0.0)
        });
    }

    let big_a = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
    let big_b = if big_a != 0.0 { q / big_a } else { 0.0 };
    let x1 = polish_real(big_a + big_b - shift, a, b, c);

    // Deflate: λ³ + aλ² + bλ + c = (λ - x1)(λ² + eλ + f).
    let e = a + x1;
    let f = if x1.abs() > 1.0 && c != 0.0 { -c / x1 } else { b + e * x1 };
    let disc = e * e - 4.0 * f;
    let (z2, z3) = if disc >= 0.0 {
        let s = -0.5 * (e + e.signum() * disc.sqrt());
        let other = if s != 0.0 { f / s } else { 0.0 };
        (
            Complex64::new(polish_real(s, a, b, c), 0.0),
            Complex64::new(polish_real(other, a, b, c), 0.0),
        )
    } else {
        let z = polish_complex(Complex64::new(-0.5 * e, 0.5 * (-disc).sqrt()), a, b, c);
        // Keep the pair exactly conjugate.
        let z = Complex64::new(z.re, z.im.abs());
        (z, z.conj())
    };
    [Complex64::new(x1, 0.0), z2, z3]
}

fn polish_real(mut x: f64, a: f64, b: f64, c: f64) -> f64 {
    for _ in 0..3 {
        let p = ((x + a) * x + b) * x + c;
        let dp = (3.0 * x + 2.0 * a) * x + b;
        if dp == 0.0 || p == 0.0 {
            break;
        }
        let candidate = x - p / dp;
        let pc = ((candidate + a) * candidate + b) * candidate + c;
        if pc.abs() < p.abs() {
            x = candidate;
        } else {
            break;
        }
    }
    x
}

fn polish_complex(mut z: Complex64, a: f64, b: f64, c: f64) -> Complex64 {
    let eval = |z: Complex64| ((z + a) * z + b) * z + c;
    for _ in 0..3 {
        let p = eval(z);
        let dp = (3.0 * z + 2.0 * a) * z + b;
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        if eval(candidate).norm() < p.norm() {
            z = candidate;
        } else {
            break;
        }
    }
    z
}

type CVec3 = [Complex64; 3];

fn cross(x: &CVec3, y: &CVec3) -> CVec3 {
    [
        x[1] * y[2] - x[2] * y[1],
        x[2] * y[0] - x[0] * y[2],
        x[0] * y[1] - x[1] * y[0],
    ]
}

fn cnorm(x: &CVec3) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A (right) null vector of `m - λI`, normalised to unit length.
pub fn eigenvector(m: &Matrix3, lambda: Complex64) -> CVec3 {
    let rows: [CVec3; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let diag = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            Complex64::new(m[i][j], 0.0) - diag
        })
    });
    let mut best = [Complex64::new(0.0, 0.0); 3];
    let mut best_norm = 0.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let candidate = cross(&rows[i], &rows[j]);
        let n = cnorm(&candidate);
        if n > best_norm {
            best = candidate;
            best_norm = n;
        }
    }
    let scale = rows.iter().map(cnorm).fold(0.0, f64::max);
    if best_norm <= 1e-12 * scale * scale {
        // Rank ≤ 1: any vector orthogonal to the dominant row works.
        let row = rows
            .iter()
            .max_by(|x, y| cnorm(x).total_cmp(&cnorm(y)))
            .copied()
            .unwrap();
        best_norm = 0.0;
        for k in 0..3 {
            let mut unit = [Complex64::new(0.0, 0.0); 3];
            unit[k] = Complex64::new(1.0, 0.0);
            let candidate = cross(&row, &unit);
            let n = cnorm(&candidate);
            if n > best_norm {
                best = candidate;
                best_norm = n;
            }
        }
        if best_norm == 0.0 {
            return [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ];
        }
    }
    best.map(|z| z / best_norm)
}

/// `‖(m - λI)x‖` for each eigenpair, with `x` the unit null vector.
pub fn eigen_residuals(m: &Matrix3, eig: &Eigentriple) -> [f64; 3] {
    eig.values.map(|lambda| {
        let x = eigenvector(m, lambda);
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = (0..3).map(|j| Complex64::new(m[i][j], 0.0) * x[j]).sum::<Complex64>()
                - lambda * x[i];
        }
        cnorm(&out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solve_round_trip() {
        let m = [[0.0, 2.0, 1.0], [1.0, -1.0, 0.5], [3.0, 0.0, -2.0]];
        let x = solve3(&m, [1.0, 2.0, 3.0]).unwrap();
        for r in 0..3 {
            let lhs: f64 = (0..3).map(|c| m[r][c] * x[c]).sum();
            assert!((lhs - [1.0, 2.0, 3.0][r]).abs() < 1e-14);
        }
        assert!(solve3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]], [1.0; 3]).is_none());
    }

    fn assert_close(z: Complex64, re: f64, im: f64, tol: f64) {
        assert!(
            (z.re - re).abs() < tol && (z.im - im).abs() < tol,
            "{z} vs {re}+{im}i"
        );
    }

    #[test]
    fn identity_has_triple_unit_eigenvalue() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let eig = eigensolve_3x3(&m);
        for z in eig.values {
            assert_close(z, 1.0, 0.0, 1e-12);
        }
        assert_eq!(eig.stability, Stability::Unstable);
        assert!(eigen_residuals(&m, &eig).iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn companion_matrix_of_known_factorisation() {
        // λ³ - 6λ² + 11λ - 6 = (λ-1)(λ-2)(λ-3)
        let m = [[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let eig = eigensolve_3x3(&m);
        for (z, expected) in eig.values.iter().zip([3.0, 2.0, 1.0]) {
            assert_close(*z, expected, 0.0, 1e-12);
        }
    }

    #[test]
    fn rotation_block_gives_conjugate_pair() {
        let m = [[-0.5, -2.0, 0.0], [2.0, -0.5, 0.0], [0.0, 0.0, -3.0]];
        let eig = eigensolve_3x3(&m);
        assert_close(eig.values[0], -0.5, 2.0, 1e-12);
        assert_close(eig.values[1], -0.5, -2.0, 1e-12);
        assert_close(eig.values[2], -3.0, 0.0, 1e-12);
        assert_eq!(eig.complex_pair().unwrap().im, 2.0);
        assert!(eig.is_stable());
        let norm = frobenius(&m);
        assert!(eigen_residuals(&m, &eig).iter().all(|r| *r < 1e-9 * norm));
    }

    #[test]
    fn marginal_band() {
        let eig = Eigentriple::from_real([-1.0, 5e-9, -2.0]);
        assert_eq!(eig.stability, Stability::Marginal);
        assert_eq!(eig.max_real(), 5e-9);
        assert_eq!(Stability::classify(-2e-8, MARGINAL_TOL), Stability::Stable);
    }

    #[test]
    fn double_root_is_resolved() {
        // (λ+1)²(λ-2)
        let roots = cubic_roots(0.0, -3.0, -2.0);
        let mut re: Vec<f64> = roots.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-7 && (re[1] + 1.0).abs() < 1e-7);
        assert!((re[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn characteristic_coefficients_match_trace_and_det() {
        let m = [[1.0, 2.0, 3.0], [0.5, -1.0, 4.0], [2.0, 0.0, -3.0]];
        let [a, _, c] = characteristic_coefficients(&m);
        assert_eq!(a, 3.0);
        assert_eq!(c, -det3(&m));
        let eig = eigensolve_3x3(&m);
        let product = eig.values.iter().copied().product::<Complex64>();
        assert!((product.re - det3(&m)).abs() < 1e-10 && product.im.abs() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn residuals_are_small(entries in proptest::array::uniform9(-50.0f64..50.0)) {
                let m: Matrix3 = [
                    [entries[0], entries[1], entries[2]],
                    [entries[3], entries[4], entries[5]],
                    [entries[6], entries[7], entries[8]],
                ];
                let eig = eigensolve_3x3(&m);
                let norm = frobenius(&m);
                // Nearly defective matrices lose accuracy in the eigenvalue
                // itself; the check is meaningful only for separated spectra.
                let v = eig.values;
                let sep = [(v[0] - v[1]).norm(), (v[0] - v[2]).norm(), (v[1] - v[2]).norm()]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                prop_assume!(sep > 1e-3 * norm);
                for r in eigen_residuals(&m, &eig) {
                    prop_assert!(r < 1e-9 * norm, "residual {} norm {}", r, norm);
                }
            }
        }
    }
}
