//! Shortest round-trip decimal formatting for text outputs.

/// Formats `x` with the shortest decimal string that parses back to the
/// same `f64`. Very small and very large magnitudes use exponent notation.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
