//! Dense complex linear algebra helpers shared by the propagators.
//!
//! Everything here works on `ndarray` matrices of `Complex64`; heavy products
//! go through BLAS and decompositions through LAPACK.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, Eigh, Inverse, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// `(A + A†)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMatrix::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
        block.zip_mut_with(b, |o, &y| *o = x * y);
    }
    out
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diag().sum()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

/// Largest elementwise modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum.
pub fn one_norm(a: &CMatrix) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    a.indexed_iter()
        .map(|((i, j), z)| (z - a[[j, i]].conj()).norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Array1<f64>> {
    let h = hermitian_part(a);
    let (vals, _) = h.eigh(UPLO::Lower)?;
    Ok(vals)
}

/// Eigen-decomposition of the Hermitian part of `a`: (ascending values, column eigenvectors).
pub fn hermitian_eigh(a: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let h = hermitian_part(a);
    Ok(h.eigh(UPLO::Lower)?)
}

/// Trace distance ½‖a − b‖₁ between two Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let diff = a - b;
    Ok(0.5 * hermitian_eigenvalues(&diff)?.iter().map(|x| x.abs()).sum::<f64>())
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let gram = dagger(a).dot(a);
    let vals = hermitian_eigenvalues(&gram)?;
    Ok(vals.iter().cloned().fold(0.0, f64::max).sqrt())
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    Ok(a.inv()?)
}

/// Eigenvalues and right eigenvectors (as columns) of a general square matrix.
pub fn eig(a: &CMatrix) -> Result<(Array1<C64>, CMatrix)> {
    Ok(a.eig()?)
}

// Padé approximant degrees with their backward-error thresholds for the
// scaling-and-squaring exponential (unit roundoff 2^-53).
const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068e0),
    (13, 5.371_920_351_148_152e0),
];

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn scaled_sum(terms: &[(f64, &CMatrix)], n: usize) -> CMatrix {
    let mut out = CMatrix::zeros((n, n));
    for &(c, m) in terms {
        out.scaled_add(C64::new(c, 0.0), m);
    }
    out
}

fn add_diag(m: &mut CMatrix, c: f64) {
    for d in m.diag_mut() {
        *d += c;
    }
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant whose degree is picked from the 1-norm.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("expm of a {}x{} matrix", n, a.ncols())));
    }
    if n == 0 {
        return Ok(CMatrix::zeros((0, 0)));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::NonFinite("expm argument".into()));
    }
    if norm == 0.0 {
        return Ok(identity(n));
    }

    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            return pade_low(a, m);
        }
    }

    let theta13 = THETA[4].1;
    let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
    let scaled = a.mapv(|z| z / 2f64.powi(s));
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

fn solve_pade(u: CMatrix, v: CMatrix) -> Result<CMatrix> {
    let num = &v + &u;
    let den = &v - &u;
    Ok(inverse(&den)?.dot(&num))
}

fn pade_low(a: &CMatrix, m: usize) -> Result<CMatrix> {
    let n = a.nrows();
    let b: &[f64] = match m {
        3 => &PADE3,
        5 => &PADE5,
        7 => &PADE7,
        _ => &PADE9,
    };
    let a2 = a.dot(a);
    let mut powers = vec![identity(n), a2.clone()];
    for _ in 2..=m / 2 {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut odd = CMatrix::zeros((n, n));
    let mut even = CMatrix::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        even.scaled_add(C64::new(b[2 * k], 0.0), p);
        odd.scaled_add(C64::new(b[2 * k + 1], 0.0), p);
    }
    let u = a.dot(&odd);
    solve_pade(u, even)
}

fn pade13(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let b = &PADE13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let inner_u = scaled_sum(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let mut u = a6.dot(&inner_u);
    u.scaled_add(C64::new(b[7], 0.0), &a6);
    u.scaled_add(C64::new(b[5], 0.0), &a4);
    u.scaled_add(C64::new(b[3], 0.0), &a2);
    add_diag(&mut u, b[1]);
    let u = a.dot(&u);

    let inner_v = scaled_sum(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let mut v = a6.dot(&inner_v);
    v.scaled_add(C64::new(b[6], 0.0), &a6);
    v.scaled_add(C64::new(b[4], 0.0), &a4);
    v.scaled_add(C64::new(b[2], 0.0), &a2);
    add_diag(&mut v, b[0]);

    solve_pade(u, v)
}

/// `a^power` by repeated squaring.
pub fn matrix_power(a: &CMatrix, mut power: u64) -> CMatrix {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while power > 0 {
        if power & 1 == 1 {
            result = base.dot(&result);
        }
        power >>= 1;
        if power > 0 {
            base = base.dot(&base);
        }
    }
    result
}

/// Applies `a^power` to `v` without forming the power explicitly when it is small.
pub fn apply_power(a: &CMatrix, mut power: u64, v: &CVector) -> CVector {
    let mut out = v.clone();
    if power <= 8 {
        for _ in 0..power {
            out = a.dot(&out);
        }
        return out;
    }
    let mut base = a.clone();
    while power > 0 {
        if power & 1 == 1 {
            out = base.dot(&out);
        }
        power >>= 1;
        if power > 0 {
            base = base.dot(&base);
        }
    }
    out
}
