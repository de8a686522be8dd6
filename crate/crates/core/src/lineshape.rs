//! Line profiles, the Faddeeva function and Gauss–Hermite quadrature.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// FWHM → standard deviation of a Gaussian.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Gaussian,
    Lorentzian,
}

impl Profile {
    /// Unit-area profile with full width at half maximum `fwhm`, evaluated at offset `x`.
    pub fn eval(self, x: f64, fwhm: f64) -> f64 {
        match self {
            Profile::Gaussian => {
                let sigma = fwhm_to_sigma(fwhm);
                (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Profile::Lorentzian => {
                let hw = 0.5 * fwhm;
                hw / (PI * (x * x + hw * hw))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Gaussian => "gaussian",
            Profile::Lorentzian => "lorentzian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Profile::Gaussian),
            "lorentzian" => Some(Profile::Lorentzian),
            _ => None,
        }
    }
}

// Weideman's rational expansion; 40 terms give ~1e-14 relative accuracy
// over the upper half plane.
const WEIDEMAN_TERMS: usize = 40;

struct Weideman {
    scale: f64,
    coeffs: Vec<f64>,
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = WEIDEMAN_TERMS;
        let m = 2 * n;
        let len = 2 * m;
        let scale = (n as f64 / 2f64.sqrt()).sqrt();
        // samples at k = -m+1 ..= m-1, preceded by a zero, then fftshift-ed
        let mut f = vec![0.0; len];
        for (i, k) in (-(m as i64) + 1..m as i64).enumerate() {
            let t = scale * (k as f64 * PI / (2.0 * m as f64)).tan();
            f[i + 1] = (-t * t).exp() * (scale * scale + t * t);
        }
        let shifted: Vec<f64> = (0..len).map(|i| f[(i + m) % len]).collect();
        let coeffs = (1..=n)
            .map(|j| {
                let re: f64 = shifted
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * (2.0 * PI * (i * j) as f64 / len as f64).cos())
                    .sum();
                re / len as f64
            })
            .collect();
        Weideman { scale, coeffs }
    })
}

/// Faddeeva function `w(z) = exp(−z²) erfc(−iz)`.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return (-z * z).exp() * 2.0 - faddeeva(-z);
    }
    let table = weideman();
    let l = Complex64::new(table.scale, 0.0);
    let iz = Complex64::new(-z.im, z.re);
    let denom = l - iz;
    let zz = (l + iz) / denom;
    let p = table.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zz + c);
    p * 2.0 / (denom * denom) + (1.0 / PI.sqrt()) / denom
}

/// `∫ G(x) / (ζ − x) dx` for a zero-mean Gaussian density `G` of standard
/// deviation `sigma` and `Im ζ ≠ 0`.
pub fn gaussian_cauchy_transform(zeta: Complex64, sigma: f64) -> Complex64 {
    let s = 2f64.sqrt() * sigma;
    if zeta.im >= 0.0 {
        Complex64::new(0.0, -PI.sqrt() / s) * faddeeva(zeta / s)
    } else {
        gaussian_cauchy_transform(zeta.conj(), sigma).conj()
    }
}

/// Gauss–Hermite nodes and weights for `∫ exp(−t²) f(t) dt`, via the
/// eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise against rounding
    for k in 0..n / 2 {
        let (a, b) = (pairs[k], pairs[n - 1 - k]);
        let x = 0.5 * (b.0 - a.0);
        let w = 0.5 * (a.1 + b.1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}
