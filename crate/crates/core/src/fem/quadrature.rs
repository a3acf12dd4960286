//! Quadrature rules on triangles and segments.

/// Barycentric points and weights (summing to 1) of the 6-point rule exact
/// for degree 4.
pub const TRI_DEG4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const WA: f64 = 0.223_381_589_678_011;
    const B: f64 = 0.091_576_213_509_771;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// Gauss–Legendre points on `[0, 1]` and weights (summing to 1), exact for
/// degree 5.
pub const SEG_GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Maps barycentric coordinates to a point of the triangle `p`.
pub fn bary_to_point(p: &[[f64; 2]; 3], l: &[f64; 3]) -> [f64; 2] {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// Signed area of the triangle `p`.
pub fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(i: u32, j: u32) -> f64 {
        // ∫ over the reference triangle of x^i y^j = i! j! / (i + j + 2)!
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(i) * f(j) / f(i + j + 2)
    }

    #[test]
    fn triangle_rule_degree_4() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for i in 0..=4 {
            for j in 0..=(4 - i) {
                let q: f64 = TRI_DEG4
                    .iter()
                    .map(|(l, w)| {
                        let x = bary_to_point(&p, l);
                        w * 0.5 * x[0].powi(i as i32) * x[1].powi(j as i32)
                    })
                    .sum();
                assert!((q - monomial_integral(i, j)).abs() < 1e-14, "x^{i} y^{j}");
            }
        }
    }

    #[test]
    fn segment_rule_degree_5() {
        for k in 0..=5 {
            let q: f64 = SEG_GAUSS3.iter().map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
