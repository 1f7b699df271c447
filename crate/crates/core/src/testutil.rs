use nalgebra::DMatrix;

/// Orthonormal Sylvester-Hadamard matrix; `n` must be a power of two.
pub(crate) fn hadamard(n: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two());
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let m = h.nrows();
        let mut next = DMatrix::zeros(2 * m, 2 * m);
        next.view_mut((0, 0), (m, m)).copy_from(&h);
        next.view_mut((0, m), (m, m)).copy_from(&h);
        next.view_mut((m, 0), (m, m)).copy_from(&h);
        next.view_mut((m, m), (m, m)).copy_from(&(-&h));
        h = next;
    }
    h / (n as f64).sqrt()
}
