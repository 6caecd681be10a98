//! Flat row-major matrix helpers used by the encoders.

/// y = W x, W is rows×cols row-major.
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        y[r] = acc;
    }
    y
}

/// y += W^T x, W is rows×cols row-major, x has len rows, y has len cols.
pub(crate) fn matvec_transpose_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(y.len(), cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let xr = x[r];
        for (yc, wc) in y.iter_mut().zip(row) {
            *yc += wc * xr;
        }
    }
}

/// W += a ⊗ b (outer product), W is a.len()×b.len() row-major.
pub(crate) fn outer_acc(w: &mut [f64], a: &[f64], b: &[f64]) {
    debug_assert_eq!(w.len(), a.len() * b.len());
    for (r, &ar) in a.iter().enumerate() {
        let row = &mut w[r * b.len()..(r + 1) * b.len()];
        for (wc, &bc) in row.iter_mut().zip(b) {
            *wc += ar * bc;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_small() {
        // [[1,2],[3,4],[5,6]] * [1,-1] = [-1,-1,-1]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(matvec(&w, 3, 2, &[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn matvec_transpose_matches_manual() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 3x2
        let mut y = vec![0.0; 2];
        matvec_transpose_acc(&w, 3, 2, &[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![9.0, 12.0]);
    }

    #[test]
    fn outer_product_accumulates() {
        let mut w = vec![0.0; 4];
        outer_acc(&mut w, &[1.0, 2.0], &[3.0, 4.0]);
        outer_acc(&mut w, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(w, vec![6.0, 8.0, 12.0, 16.0]);
    }
}
