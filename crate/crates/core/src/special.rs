//! Bessel functions of the first kind, as needed by the Chebyshev propagator.

/// `J_k(x)` for `k = 0..=kmax`, computed by Miller's backward recurrence
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // Start well above both kmax and the turning point k ≈ x.
    let start = kmax.max(ax.ceil() as usize) + 20 + (10.0 * ax.sqrt()) as usize;
    let start = start + start % 2;

    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev; // now J_{k-1}
        let km1 = k - 1;
        if km1 <= kmax {
            out[km1] = cur;
        }
        if km1 % 2 == 0 && km1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur; // J_0
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// Bessel coefficients `J_0..J_K(x)` truncated where the tail is below `tol`.
pub fn bessel_j_truncated(x: f64, tol: f64) -> Vec<f64> {
    let ax = x.abs();
    let kmax = (ax + 15.0 * ax.cbrt() + 25.0).ceil() as usize;
    let mut seq = bessel_j_sequence(x, kmax);
    let mut last = seq.len() - 1;
    while last > 0 && (last as f64) > ax && seq[last].abs() < tol {
        last -= 1;
    }
    seq.truncate(last + 1);
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from the power series Σ (-1)^m (x/2)^{2m+k} / (m!(m+k)!),
    // evaluated here with enough terms for |x| ≤ 10.
    fn series(x: f64, k: usize) -> f64 {
        let mut term = (0.5 * x).powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
        let mut sum = term;
        for m in 1..80 {
            term *= -(0.25 * x * x) / (m as f64 * (m + k) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn matches_power_series() {
        for &x in &[1e-6, 0.3, 1.0, 2.5, 7.0, -3.2] {
            let seq = bessel_j_sequence(x, 12);
            for (k, v) in seq.iter().enumerate() {
                let r = series(x, k);
                assert!((v - r).abs() < 1e-13, "x={x} k={k}: {v} vs {r}");
            }
        }
    }

    #[test]
    fn zero_argument() {
        let seq = bessel_j_sequence(0.0, 4);
        assert_eq!(seq, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn truncation_keeps_significant_terms() {
        let seq = bessel_j_truncated(30.0, 1e-17);
        assert!(seq.len() > 31);
        assert!(seq.last().unwrap().abs() < 1e-15);
        // Neumann identity J_0² + 2 Σ J_k² = 1
        let s: f64 = seq[0] * seq[0] + 2.0 * seq[1..].iter().map(|v| v * v).sum::<f64>();
        assert!((s - 1.0).abs() < 1e-13);
    }
}
