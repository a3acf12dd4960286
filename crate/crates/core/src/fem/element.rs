use nalgebra::{DMatrix, DVector};

use super::quadrature::signed_area;
use crate::error::{Error, Result};

/// Components of a symmetric tensor in element storage: `(xx, xy, yy)`.
type Sym = [f64; 3];

fn traction(t: &Sym, n: [f64; 2]) -> [f64; 2] {
    [t[0] * n[0] + t[1] * n[1], t[1] * n[0] + t[2] * n[1]]
}

fn rot90(d: [f64; 2]) -> [f64; 2] {
    [-d[1], d[0]]
}

fn unit(d: [f64; 2]) -> [f64; 2] {
    let l = d[0].hypot(d[1]);
    [d[0] / l, d[1] / l]
}

/// Row of the constraint matrix for an unknown index.
fn idx(sub: usize, node: usize, comp: usize) -> usize {
    9 * sub + 3 * node + comp
}

/// Johnson–Mercier shape functions on one triangle.
///
/// The triangle is split at its barycenter `c` into subtriangles
/// `k = (v_k, v_{k+1}, c)`; on each a shape is a linear symmetric tensor,
/// stored by its values at the three subtriangle nodes. Local DOF
/// `4k + 2·comp + moment` is the mean (`moment = 0`) or the normalized first
/// moment `3∫(2ξ−1)(τn)_comp` (`moment = 1`) of the traction on edge
/// `(v_k, v_{k+1})`, with `ξ` and `n` taken from the global edge orientation.
/// DOFs `12..15` are the cell means of `τxx, τxy, τyy`.
#[derive(Debug, Clone)]
pub struct JmElement {
    coords: [[f64; 2]; 3],
    orient: [bool; 3],
    /// `coeffs[s][i]`: nodal unknown `i` of shape `s`.
    coeffs: Vec<[f64; 27]>,
}

impl JmElement {
    /// Builds the 15 shapes of the triangle `coords` (counterclockwise).
    /// `orient[k]` tells whether local edge `k` runs along its global
    /// orientation.
    pub fn new(coords: [[f64; 2]; 3], orient: [bool; 3]) -> Result<Self> {
        let area = signed_area(&coords);
        if !(area.is_finite() && area > 0.0) {
            return Err(Error::InvalidInput(format!(
                "degenerate or clockwise triangle (signed area {area:e})"
            )));
        }
        let mut el = Self {
            coords,
            orient,
            coeffs: Vec::new(),
        };
        let mut m = DMatrix::<f64>::zeros(27, 27);
        el.continuity_rows(&mut m);
        for (r, row) in el.functional_rows().iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(12 + r, c)] = *v;
            }
        }
        let lu = m.lu();
        let mut coeffs = Vec::with_capacity(15);
        for s in 0..15 {
            let mut rhs = DVector::<f64>::zeros(27);
            rhs[12 + s] = 1.0;
            let x = lu.solve(&rhs).ok_or_else(|| {
                Error::InvalidInput("singular Johnson–Mercier constraint system".into())
            })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "non-finite Johnson–Mercier shape coefficients".into(),
                ));
            }
            let mut c = [0.0; 27];
            c.copy_from_slice(x.as_slice());
            coeffs.push(c);
        }
        el.coeffs = coeffs;
        Ok(el)
    }

    pub fn coords(&self) -> &[[f64; 2]; 3] {
        &self.coords
    }

    pub fn barycenter(&self) -> [f64; 2] {
        let p = &self.coords;
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.coords)
    }

    /// Nodes `(v_k, v_{k+1}, c)` of subtriangle `k`.
    pub fn sub_nodes(&self, k: usize) -> [[f64; 2]; 3] {
        [self.coords[k], self.coords[(k + 1) % 3], self.barycenter()]
    }

    /// Nodal coefficients of shape `s`.
    pub fn shape(&self, s: usize) -> &[f64; 27] {
        &self.coeffs[s]
    }

    /// Normal-traction continuity across the internal edges `(v_j, c)`,
    /// imposed at both endpoints.
    fn continuity_rows(&self, m: &mut DMatrix<f64>) {
        let c = self.barycenter();
        let mut row = 0;
        for j in 0..3 {
            let v = self.coords[j];
            let n = unit(rot90([c[0] - v[0], c[1] - v[1]]));
            let prev = (j + 2) % 3;
            // (sub j, node) and (sub j-1, node) meeting at v_j, then at c.
            for (node_a, node_b) in [(0, 1), (2, 2)] {
                for comp in 0..2 {
                    // traction component `comp` = Σ_c coefficient · value_c
                    let w: [f64; 3] = if comp == 0 { [n[0], n[1], 0.0] } else { [0.0, n[0], n[1]] };
                    for (tc, wv) in w.iter().enumerate() {
                        if *wv != 0.0 {
                            m[(row, idx(j, node_a, tc))] += wv;
                            m[(row, idx(prev, node_b, tc))] -= wv;
                        }
                    }
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, 12);
    }

    /// Start point, end point and unit normal of local edge `k` under the
    /// global orientation.
    pub fn edge_frame(&self, k: usize) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (a, b) = (self.coords[k], self.coords[(k + 1) % 3]);
        let (s, e) = if self.orient[k] { (a, b) } else { (b, a) };
        (s, e, unit(rot90([e[0] - s[0], e[1] - s[1]])))
    }

    /// The 15 DOF functionals as rows over the 27 nodal unknowns.
    fn functional_rows(&self) -> Vec<[f64; 27]> {
        let mut rows = vec![[0.0; 27]; 15];
        for k in 0..3 {
            let (_, _, n) = self.edge_frame(k);
            // local edge k is nodes 0 → 1 of subtriangle k
            let (start, end) = if self.orient[k] { (0, 1) } else { (1, 0) };
            for comp in 0..2 {
                let w: [f64; 3] = if comp == 0 { [n[0], n[1], 0.0] } else { [0.0, n[0], n[1]] };
                for (tc, wv) in w.iter().enumerate() {
                    rows[4 * k + 2 * comp][idx(k, start, tc)] += 0.5 * wv;
                    rows[4 * k + 2 * comp][idx(k, end, tc)] += 0.5 * wv;
                    rows[4 * k + 2 * comp + 1][idx(k, start, tc)] -= 0.5 * wv;
                    rows[4 * k + 2 * comp + 1][idx(k, end, tc)] += 0.5 * wv;
                }
            }
        }
        for c in 0..3 {
            for sub in 0..3 {
                for node in 0..3 {
                    rows[12 + c][idx(sub, node, c)] = 1.0 / 9.0;
                }
            }
        }
        rows
    }

    /// Applies the 15 DOF functionals to a nodal field.
    pub fn apply_functionals(&self, field: &[f64; 27]) -> [f64; 15] {
        let rows = self.functional_rows();
        let mut out = [0.0; 15];
        for (o, r) in out.iter_mut().zip(&rows) {
            *o = r.iter().zip(field).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Largest jump of `τn` across the internal edges of a nodal field.
    pub fn continuity_defect(&self, field: &[f64; 27]) -> f64 {
        let mut m = DMatrix::<f64>::zeros(12, 27);
        self.continuity_rows_into(&mut m);
        let f = DVector::from_column_slice(field);
        (m * f).amax()
    }

    fn continuity_rows_into(&self, m: &mut DMatrix<f64>) {
        let mut full = DMatrix::<f64>::zeros(27, 27);
        self.continuity_rows(&mut full);
        m.copy_from(&full.rows(0, 12));
    }

    /// Value of shape `s` on subtriangle `sub` at barycentric coordinates
    /// `l` with respect to its nodes `(v_sub, v_sub+1, c)`.
    pub fn eval(&self, s: usize, sub: usize, l: [f64; 3]) -> Sym {
        eval_field(&self.coeffs[s], sub, l)
    }

    /// Constant divergence of shape `s` on each subtriangle.
    pub fn divergence(&self, s: usize) -> [[f64; 2]; 3] {
        let mut out = [[0.0; 2]; 3];
        for (sub, o) in out.iter_mut().enumerate() {
            let g = bary_gradients(&self.sub_nodes(sub));
            let mut d = [0.0; 3 * 2]; // ∂x, ∂y of (xx, xy, yy)
            for node in 0..3 {
                for comp in 0..3 {
                    let v = self.coeffs[s][idx(sub, node, comp)];
                    d[2 * comp] += v * g[node][0];
                    d[2 * comp + 1] += v * g[node][1];
                }
            }
            // div τ = (∂x τxx + ∂y τxy, ∂x τxy + ∂y τyy)
            *o = [d[0] + d[3], d[2] + d[5]];
        }
        out
    }

    /// Gram matrices `(G_a, G_b, G_c)` so that the compliance mass of a
    /// homogeneous material is `𝒜₁₁ G_a + 𝒜₁₂ G_b + 𝒜₃₃ G_c`.
    pub fn compliance_parts(&self) -> [[[f64; 15]; 15]; 3] {
        let mut g = [[[0.0; 15]; 15]; 3];
        let w = self.area() / 9.0;
        // edge-midpoint rule per subtriangle, exact for quadratics
        const MID: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for sub in 0..3 {
            for l in MID {
                let vals: Vec<Sym> = (0..15).map(|s| self.eval(s, sub, l)).collect();
                for i in 0..15 {
                    for j in 0..15 {
                        let (p, q) = (vals[i], vals[j]);
                        g[0][i][j] += w * (p[0] * q[0] + p[2] * q[2]);
                        g[1][i][j] += w * (p[0] * q[2] + p[2] * q[0]);
                        g[2][i][j] += w * 2.0 * p[1] * q[1];
                    }
                }
            }
        }
        g
    }

    /// `B_T[(m, r), s] = ∫_T (div τ_s)_r λ_m` for the P1 displacement basis
    /// `λ_m e_r`, row index `2m + r`.
    pub fn divergence_matrix(&self) -> [[f64; 15]; 6] {
        let mut b = [[0.0; 15]; 6];
        let sub_area = self.area() / 3.0;
        for s in 0..15 {
            let div = self.divergence(s);
            for (sub, d) in div.iter().enumerate() {
                // barycentric coordinates of the subtriangle centroid
                let mut lam = [1.0 / 9.0; 3];
                lam[sub] += 1.0 / 3.0;
                lam[(sub + 1) % 3] += 1.0 / 3.0;
                for m in 0..3 {
                    for r in 0..2 {
                        b[2 * m + r][s] += d[r] * sub_area * lam[m];
                    }
                }
            }
        }
        b
    }

    /// Nodal field of the constant tensor `t`.
    pub fn constant_field(t: Sym) -> [f64; 27] {
        let mut f = [0.0; 27];
        for sub in 0..3 {
            for node in 0..3 {
                for comp in 0..3 {
                    f[idx(sub, node, comp)] = t[comp];
                }
            }
        }
        f
    }

    /// Expands local DOF values into a nodal field.
    pub fn combine(&self, dofs: &[f64; 15]) -> [f64; 27] {
        let mut f = [0.0; 27];
        for (s, d) in dofs.iter().enumerate() {
            if *d != 0.0 {
                for (fi, c) in f.iter_mut().zip(&self.coeffs[s]) {
                    *fi += d * c;
                }
            }
        }
        f
    }
}

/// Value of a nodal field on subtriangle `sub` at barycentric `l`.
pub(crate) fn eval_field(field: &[f64; 27], sub: usize, l: [f64; 3]) -> Sym {
    let mut out = [0.0; 3];
    for (node, ln) in l.iter().enumerate() {
        for (comp, o) in out.iter_mut().enumerate() {
            *o += ln * field[idx(sub, node, comp)];
        }
    }
    out
}

/// Gradients of the barycentric coordinates of triangle `p`.
fn bary_gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_a = 2.0 * signed_area(p);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a];
    }
    g
}

/// Local DOF values of the constant stress `t = (xx, xy, yy)` on an element:
/// edge means are the traction components, moments vanish, cell means are
/// the components themselves.
pub fn constant_stress_dofs(el: &JmElement, t: Sym) -> [f64; 15] {
    let mut d = [0.0; 15];
    for k in 0..3 {
        let (_, _, n) = el.edge_frame(k);
        let tr = traction(&t, n);
        d[4 * k] = tr[0];
        d[4 * k + 2] = tr[1];
    }
    d[12..15].copy_from_slice(&t);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RIGHT: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn duality_defect(el: &JmElement) -> f64 {
        let mut err = 0.0_f64;
        for s in 0..15 {
            let d = el.apply_functionals(el.shape(s));
            for (i, v) in d.iter().enumerate() {
                err = err.max((v - if i == s { 1.0 } else { 0.0 }).abs());
            }
        }
        err
    }

    #[test]
    fn unit_right_triangle_duality() {
        for orient in [[true, true, false], [false, true, true], [true, false, true]] {
            let el = JmElement::new(RIGHT, orient).unwrap();
            assert!(duality_defect(&el) <= 1e-10);
            for s in 0..15 {
                assert!(el.continuity_defect(el.shape(s)) <= 1e-10);
            }
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let el = JmElement::new([[0.1, 0.2], [1.3, 0.4], [0.5, 1.7]], [true, false, true]).unwrap();
        let t = [1.0, 0.0, 0.0];
        let f = el.combine(&constant_stress_dofs(&el, t));
        for sub in 0..3 {
            for l in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [0.0, 0.0, 1.0]] {
                let v = eval_field(&f, sub, l);
                for c in 0..3 {
                    assert!((v[c] - t[c]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn moment_shape_has_zero_cell_means() {
        // Independent check: integrate shape 1 with a 3-point interior rule
        // on each subtriangle and divide by the area.
        let el = JmElement::new(RIGHT, [true, true, false]).unwrap();
        let rule = [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        let mut mean = [0.0; 3];
        for sub in 0..3 {
            for l in rule {
                let v = el.eval(1, sub, l);
                for c in 0..3 {
                    mean[c] += v[c] / 9.0;
                }
            }
        }
        for m in mean {
            assert!(m.abs() <= 1e-12, "{mean:?}");
        }
    }

    #[test]
    fn divergence_matrix_matches_boundary_flux() {
        // Σ_m B[(m, r), s] = ∫_T (div τ_s)_r = ∫_∂T (τ_s n)_r
        let el = JmElement::new([[0.0, 0.0], [0.5, 0.1], [0.2, 0.4]], [true, true, false]).unwrap();
        let b = el.divergence_matrix();
        for s in 0..15 {
            let mut flux = [0.0; 2];
            for k in 0..3 {
                let (st, en, _) = el.edge_frame(k);
                let len = (en[0] - st[0]).hypot(en[1] - st[1]);
                // the global normal points inward when the edge runs counterclockwise
                let sign = if el.orient[k] { -1.0 } else { 1.0 };
                let d = el.apply_functionals(el.shape(s));
                for r in 0..2 {
                    flux[r] += sign * len * d[4 * k + 2 * r];
                }
            }
            for r in 0..2 {
                let total: f64 = (0..3).map(|m| b[2 * m + r][s]).sum();
                assert!((total - flux[r]).abs() <= 1e-12, "shape {s}");
            }
        }
    }

    #[test]
    fn rejects_degenerate() {
        assert!(JmElement::new([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [true; 3]).is_err());
    }

    proptest! {
        #[test]
        fn duality_on_random_triangles(
            x in prop::array::uniform6(-1.0f64..1.0),
            o in prop::array::uniform3(any::<bool>()),
        ) {
            let mut p = [[x[0], x[1]], [x[2], x[3]], [x[4], x[5]]];
            let a = signed_area(&p);
            let scale = p.iter().flat_map(|q| q.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assume!(a.abs() > 0.05 * scale * scale);
            if a < 0.0 {
                p.swap(1, 2);
            }
            let el = JmElement::new(p, o).unwrap();
            prop_assert!(duality_defect(&el) <= 1e-10);
            for s in 0..15 {
                prop_assert!(el.continuity_defect(el.shape(s)) <= 1e-10);
            }
        }
    }
}
