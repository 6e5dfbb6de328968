use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Scalar types the tape can run on. `f32` for training, `f64` for
/// gradient checks.
pub trait Element: Float + Default + Debug + Display + Send + Sync + Sum + 'static {
    /// Width in bytes; doubles as the dtype tag in serialized parameter files.
    const DTYPE: u8;

    /// `c = a·b + beta·c` for an `m×k` by `k×n` product with explicit row and
    /// column strides (in elements).
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
        c_strides: (isize, isize),
    );

    fn from_f64(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("element converts to f64")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_element {
    ($t:ty, $tag:expr, $kernel:path) => {
        impl Element for $t {
            const DTYPE: u8 = $tag;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (rsa, csa): (isize, isize),
                b: &[Self],
                (rsb, csb): (isize, isize),
                beta: Self,
                c: &mut [Self],
                (rsc, csc): (isize, isize),
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above and the
                // output does not alias the inputs (distinct borrows).
                unsafe {
                    $kernel(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc);
                }
            }
        }
    };
}

impl_element!(f32, 4, matrixmultiply::sgemm);
impl_element!(f64, 8, matrixmultiply::dgemm);
