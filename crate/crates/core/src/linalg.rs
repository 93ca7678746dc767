use nalgebra::{DMatrix, DVector};

/// Thin QR with the sign of each column fixed so that diag(R) >= 0.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Largest |QᵀQ - I| entry.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Cosines of the principal angles between the column spans of two
/// orthonormal bases, in descending order.
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let m = a.transpose() * b;
    let svd = m.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Top `rank` right singular vectors of `rows` (observations in rows),
/// returned as columns of a `dim x rank` matrix.
pub fn top_right_singular_vectors(rows: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    // Eigenvectors of the Gram matrix coincide with the right singular vectors.
    let gram = rows.transpose() * rows;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let dim = rows.ncols();
    let mut v = DMatrix::zeros(dim, rank);
    for (c, &idx) in order.iter().take(rank).enumerate() {
        v.set_column(c, &eig.eigenvectors.column(idx));
    }
    v
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Horizontal concatenation of column blocks that share a row count.
pub fn hstack(blocks: &[&DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn project_energy(basis: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (basis.transpose() * x).norm_squared()
}
