use num_traits::Float;

/// Floating-point element type of a network. Implemented for `f32`
/// (training and inference) and `f64` (gradient checking).
pub trait Scalar:
    Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static
{
    /// `c <- alpha * a * b + beta * c` for row/column-strided matrices,
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite conversion")
    }
}

fn check_bounds(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(
        a >= m * k && b >= k * n && c >= m * n,
        "gemm operand too small"
    );
}

impl Scalar for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        (rsa, csa): (isize, isize),
        b: &[f32],
        (rsb, csb): (isize, isize),
        beta: f32,
        c: &mut [f32],
    ) {
        check_bounds(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: operand extents were checked against the strides used by
        // the callers (dense row-major or its transpose).
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        (rsa, csa): (isize, isize),
        b: &[f64],
        (rsb, csb): (isize, isize),
        beta: f64,
        c: &mut [f64],
    ) {
        check_bounds(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: see the f32 implementation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

/// Strides of a dense row-major `rows x cols` matrix.
pub(crate) fn row_major(cols: usize) -> (isize, isize) {
    (cols as isize, 1)
}

/// Strides that read a dense row-major `rows x cols` matrix as its transpose.
pub(crate) fn transposed(cols: usize) -> (isize, isize) {
    (1, cols as isize)
}
