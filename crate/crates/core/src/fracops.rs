//! Discrete Gagliardo sums, the bracket functional, the fractional
//! p-Laplacian and its bilinear form.
//!
//! All double integrals run over `U×U` with midpoint quadrature and the
//! diagonal `i = j` excluded. A [`FracKernel`] holds the dense table of
//! pairwise weights `|x_i − x_j|^{−(N+sp)}` for one `(grid, p, s)` so that
//! repeated evaluations during time stepping never recompute distances.

use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{GridDomain, GridError, GridField};

/// Column block used by the tiled kernels.
const TILE: usize = 64;

/// Rows per parallel task; small grids stay on one thread.
#[cfg(feature = "parallel")]
const PAR_MIN_ROWS: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum OpError {
    #[error("exponent p must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("fractional order s must lie in (0, 1), got {0}")]
    BadOrder(f64),
    #[error("field does not live on the kernel's grid")]
    DomainMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `|d|^{p−2} d`, with the value 0 at `d = 0` for every `p > 1`.
#[inline]
pub fn signed_power(d: f64, p: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if p == 2.0 {
        d
    } else {
        d.abs().powf(p - 2.0) * d
    }
}

#[inline]
fn abs_power(d: f64, p: f64) -> f64 {
    if p == 2.0 {
        d * d
    } else {
        d.abs().powf(p)
    }
}

/// Precomputed pairwise weights for one `(grid, p, s)`.
#[derive(Debug, Clone)]
pub struct FracKernel {
    grid: Arc<GridDomain>,
    p: f64,
    s: f64,
    m: usize,
    // row-major M×M, zero diagonal
    weights: Vec<f64>,
}

impl FracKernel {
    pub fn new(grid: Arc<GridDomain>, p: f64, s: f64) -> Result<Self, OpError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(OpError::BadExponent(p));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(OpError::BadOrder(s));
        }
        let m = grid.len();
        let alpha = grid.dim() as f64 + s * p;
        let mut weights = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let w = grid.distance(i, j).powf(-alpha);
                weights[i * m + j] = w;
                weights[j * m + i] = w;
            }
        }
        Ok(FracKernel {
            grid,
            p,
            s,
            m,
            weights,
        })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    fn check(&self, f: &GridField) -> Result<(), OpError> {
        if Arc::ptr_eq(f.domain(), &self.grid) || **f.domain() == *self.grid {
            Ok(())
        } else {
            Err(OpError::DomainMismatch)
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.m..(i + 1) * self.m]
    }

    /// `Σ_{i≠j} |u_i − u_j|^p w_ij · h^{2N}` on raw nodal values.
    pub fn gagliardo_values(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let mut total = 0.0;
        for i in 0..self.m {
            let ui = u[i];
            let row = self.row(i);
            let mut acc = 0.0;
            for j in (i + 1)..self.m {
                acc += abs_power(ui - u[j], p) * row[j];
            }
            total += acc;
        }
        let h2n = self.grid.cell_measure().powi(2);
        2.0 * total * h2n
    }

    pub fn gagliardo_sum(&self, u: &GridField) -> Result<f64, OpError> {
        self.check(u)?;
        Ok(self.gagliardo_values(u.values()))
    }

    pub fn bracket(&self, u: &GridField) -> Result<f64, OpError> {
        Ok(self.gagliardo_sum(u)? / self.p)
    }

    /// Ordered double sum `Σ_{i≠j} |u_i−u_j|^{p−2}(u_i−u_j)(w_i−w_j) w_ij · h^{2N}`.
    pub fn bilinear_values(&self, u: &[f64], w: &[f64]) -> f64 {
        let p = self.p;
        let mut total = 0.0;
        for i in 0..self.m {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.m {
                if j != i {
                    acc += signed_power(u[i] - u[j], p) * (w[i] - w[j]) * row[j];
                }
            }
            total += acc;
        }
        total * self.grid.cell_measure().powi(2)
    }

    pub fn bilinear_form(&self, u: &GridField, w: &GridField) -> Result<f64, OpError> {
        self.check(u)?;
        self.check(w)?;
        Ok(self.bilinear_values(u.values(), w.values()))
    }

    /// Writes `(Lu)_i = 2 h^N Σ_{j≠i} |u_i−u_j|^{p−2}(u_i−u_j) w_ij` into `out`.
    ///
    /// Rows are independent, so they are split across threads when the
    /// `parallel` feature is on and the grid is large enough; each row walks
    /// its weight row in column tiles.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.m);
        assert_eq!(out.len(), self.m);
        let scale = 2.0 * self.grid.cell_measure();
        let row_op = |i: usize, slot: &mut f64| {
            *slot = scale * self.row_sum(i, u);
        };
        #[cfg(feature = "parallel")]
        {
            if self.m >= PAR_MIN_ROWS {
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, slot)| row_op(i, slot));
                return;
            }
        }
        out.iter_mut()
            .enumerate()
            .for_each(|(i, slot)| row_op(i, slot));
    }

    #[inline]
    fn row_sum(&self, i: usize, u: &[f64]) -> f64 {
        let p = self.p;
        let ui = u[i];
        let row = self.row(i);
        let mut acc = 0.0;
        for start in (0..self.m).step_by(TILE) {
            let end = (start + TILE).min(self.m);
            let mut part = 0.0;
            for j in start..end {
                part += signed_power(ui - u[j], p) * row[j];
            }
            acc += part;
        }
        acc
    }

    /// Single-threaded variant that evaluates each unordered pair once and
    /// scatters `±` contributions, walking the upper triangle in square tiles.
    pub fn apply_symmetric_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.m);
        assert_eq!(out.len(), self.m);
        out.iter_mut().for_each(|x| *x = 0.0);
        let p = self.p;
        let m = self.m;
        for bi in (0..m).step_by(TILE) {
            let ei = (bi + TILE).min(m);
            for bj in (bi..m).step_by(TILE) {
                let ej = (bj + TILE).min(m);
                for i in bi..ei {
                    let row = self.row(i);
                    let ui = u[i];
                    let mut acc = 0.0;
                    for j in bj.max(i + 1)..ej {
                        let t = signed_power(ui - u[j], p) * row[j];
                        acc += t;
                        out[j] -= t;
                    }
                    out[i] += acc;
                }
            }
        }
        let scale = 2.0 * self.grid.cell_measure();
        out.iter_mut().for_each(|x| *x *= scale);
    }

    pub fn apply(&self, u: &GridField) -> Result<GridField, OpError> {
        self.check(u)?;
        let mut out = vec![0.0; self.m];
        self.apply_into(u.values(), &mut out);
        Ok(GridField::new(Arc::clone(u.domain()), out)?)
    }
}

/// Reference implementation: direct double loop, distances recomputed.
pub fn apply_naive(u: &GridField, p: f64, s: f64) -> Vec<f64> {
    let grid = u.domain();
    let alpha = grid.dim() as f64 + s * p;
    let vals = u.values();
    let m = vals.len();
    let hn = grid.cell_measure();
    (0..m)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..m {
                if j != i {
                    acc += signed_power(vals[i] - vals[j], p) / grid.distance(i, j).powf(alpha);
                }
            }
            2.0 * hn * acc
        })
        .collect()
}

pub fn gagliardo_sum(u: &GridField, p: f64, s: f64) -> Result<f64, OpError> {
    FracKernel::new(Arc::clone(u.domain()), p, s)?.gagliardo_sum(u)
}

pub fn bracket(u: &GridField, p: f64, s: f64) -> Result<f64, OpError> {
    Ok(gagliardo_sum(u, p, s)? / p)
}

pub fn bilinear_form(u: &GridField, w: &GridField, p: f64, s: f64) -> Result<f64, OpError> {
    if !u.same_domain(w) {
        return Err(OpError::DomainMismatch);
    }
    FracKernel::new(Arc::clone(u.domain()), p, s)?.bilinear_form(u, w)
}

pub fn apply_operator(u: &GridField, p: f64, s: f64) -> Result<GridField, OpError> {
    FracKernel::new(Arc::clone(u.domain()), p, s)?.apply(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, inner, random_smooth_field, sample_field, Preset};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_node() -> Arc<GridDomain> {
        Arc::new(build_grid(&[1.0], &[2]).unwrap())
    }

    fn field(g: &Arc<GridDomain>, v: Vec<f64>) -> GridField {
        GridField::new(Arc::clone(g), v).unwrap()
    }

    #[test]
    fn two_node_hand_values() {
        let g = two_node();
        let u = field(&g, vec![1.0, 0.0]);
        let w = field(&g, vec![0.0, 1.0]);
        assert!((gagliardo_sum(&u, 2.0, 0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!((bracket(&u, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-14);
        assert!((bilinear_form(&u, &w, 2.0, 0.5).unwrap() + 2.0).abs() < 1e-14);
        let lu = apply_operator(&u, 2.0, 0.5).unwrap();
        assert!((lu.values()[0] - 4.0).abs() < 1e-14);
        assert!((lu.values()[1] + 4.0).abs() < 1e-14);
        assert!((inner(&lu, &u).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = Arc::new(build_grid(&[1.0], &[8]).unwrap());
        let z = GridField::zeros(Arc::clone(&g));
        let c = sample_field(&g, Preset::Constant, 2.5);
        let s = sample_field(&g, Preset::Sine, 1.0);
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(gagliardo_sum(&z, p, 0.5).unwrap(), 0.0);
            assert_eq!(gagliardo_sum(&c, p, 0.5).unwrap(), 0.0);
            assert_eq!(bracket(&z, p, 0.5).unwrap(), 0.0);
            assert!(apply_operator(&z, p, 0.5).unwrap().is_zero());
            assert_eq!(bilinear_form(&s, &c, p, 0.5).unwrap(), 0.0);
            let g1 = gagliardo_sum(&s, p, 0.5).unwrap();
            let b1 = bilinear_form(&s, &s, p, 0.5).unwrap();
            assert!((g1 - b1).abs() <= 1e-13 * g1);
        }
    }

    #[test]
    fn errors() {
        let g = two_node();
        let u = field(&g, vec![1.0, 0.0]);
        assert_eq!(gagliardo_sum(&u, 1.0, 0.5), Err(OpError::BadExponent(1.0)));
        assert_eq!(gagliardo_sum(&u, 2.0, 1.0), Err(OpError::BadOrder(1.0)));
        let other = Arc::new(build_grid(&[1.0], &[3]).unwrap());
        let w = GridField::zeros(other);
        assert_eq!(
            bilinear_form(&u, &w, 2.0, 0.5),
            Err(OpError::DomainMismatch)
        );
    }

    #[test]
    fn linear_at_p_two() {
        let g = Arc::new(build_grid(&[1.0], &[20]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_smooth_field(&g, 5, &mut rng);
        let w = random_smooth_field(&g, 5, &mut rng);
        let k = FracKernel::new(Arc::clone(&g), 2.0, 0.3).unwrap();
        let combo: Vec<f64> = u
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| 2.0 * a - 3.0 * b)
            .collect();
        let lc = k.apply(&field(&g, combo)).unwrap();
        let lu = k.apply(&u).unwrap();
        let lw = k.apply(&w).unwrap();
        for i in 0..g.len() {
            let expect = 2.0 * lu.values()[i] - 3.0 * lw.values()[i];
            assert!((lc.values()[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * scale.max(1e-300))
    }

    #[test]
    fn variants_agree_with_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (extents, counts) in [
            (vec![1.0], vec![64]),
            (vec![2.0], vec![300]),
            (vec![1.0, 1.0], vec![16, 16]),
        ] {
            let g = Arc::new(build_grid(&extents, &counts).unwrap());
            let u = random_smooth_field(&g, 6, &mut rng);
            for p in [1.5, 2.0, 3.0, 3.5] {
                let k = FracKernel::new(Arc::clone(&g), p, 0.5).unwrap();
                let naive = apply_naive(&u, p, 0.5);
                let mut tiled = vec![0.0; g.len()];
                let mut sym = vec![0.0; g.len()];
                k.apply_into(u.values(), &mut tiled);
                k.apply_symmetric_into(u.values(), &mut sym);
                assert!(rel_close(&tiled, &naive, 1e-12));
                assert!(rel_close(&sym, &naive, 1e-12));
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let g = Arc::new(build_grid(&[1.0, 1.0], &[6, 6]).unwrap());
        let shifted = Arc::new(g.translated(&[3.7, -1.2]));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_smooth_field(&g, 3, &mut rng);
        let us = field(&shifted, u.values().to_vec());
        let a = gagliardo_sum(&u, 3.0, 0.4).unwrap();
        let b = gagliardo_sum(&us, 3.0, 0.4).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn duality_is_exact(seed in any::<u64>(), p in prop::sample::select(vec![2.0, 3.0, 3.5, 1.7]), s in 0.1f64..0.9) {
            let g = Arc::new(build_grid(&[1.0], &[24]).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_smooth_field(&g, 6, &mut rng);
            let w = random_smooth_field(&g, 6, &mut rng);
            let k = FracKernel::new(Arc::clone(&g), p, s).unwrap();
            let lhs = inner(&k.apply(&u).unwrap(), &w).unwrap();
            let rhs = k.bilinear_form(&u, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn bracket_scales_homogeneously(values in proptest::collection::vec(-2.0f64..2.0, 10), eps in 0.01f64..20.0, p in 1.2f64..4.0) {
            let g = Arc::new(build_grid(&[1.0], &[10]).unwrap());
            let u = field(&g, values);
            let k = FracKernel::new(Arc::clone(&g), p, 0.5).unwrap();
            let a = k.gagliardo_sum(&u.scaled(eps)).unwrap();
            let b = eps.powf(p) * k.gagliardo_sum(&u).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * b.max(1e-300) * 8.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Arc::new(build_grid(&[1.0], &[16]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [2.0, 3.0, 3.5] {
            let u = random_smooth_field(&g, 5, &mut rng);
            let k = FracKernel::new(Arc::clone(&g), p, 0.5).unwrap();
            let lu = k.apply(&u).unwrap();
            let hn = g.cell_measure();
            let mut vals = u.values().to_vec();
            for i in 0..g.len() {
                let delta = 1e-6 * (1.0 + vals[i].abs());
                let orig = vals[i];
                vals[i] = orig + delta;
                let up = k.gagliardo_values(&vals) / p;
                vals[i] = orig - delta;
                let dn = k.gagliardo_values(&vals) / p;
                vals[i] = orig;
                let fd = (up - dn) / (2.0 * delta);
                let exact = hn * lu.values()[i];
                assert!(
                    (fd - exact).abs() <= 1e-5 * exact.abs().max(1e-8),
                    "p={p} i={i} fd={fd} exact={exact}"
                );
            }
        }
    }
}
