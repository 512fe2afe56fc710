//! Dense reference eigensolver for linear operators.
//!
//! The matrix is assembled here from the coefficient fields, independently
//! of [`crate::discretize`], using the same difference formulas. Robin
//! boundary unknowns are eliminated through the one-sided relation
//! `u₀ = (4u₁ − u₂)/(3 + 2Lγ)`; Dirichlet unknowns are zero. The unknowns
//! are therefore the interior nodes in both cases.
//!
//! The principal eigenpair comes from power iteration on `(M − sI)⁻¹`. For
//! a Z-matrix the Collatz–Wielandt quotients `min/max (Mv)ᵢ/vᵢ` bracket the
//! principal eigenvalue for every positive `v`, and the shift is moved up to
//! just below the lower quotient. Otherwise the Gershgorin shift is kept.

use nalgebra::{DMatrix, DVector};

use crate::discretize::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, Grid};
use crate::operators::{BoundaryLaw, LinearTerm, OperatorSpec};

/// Dense operator matrix on the interior nodes.
#[derive(Debug, Clone)]
pub struct LinearSystemMatrix {
    pub matrix: DMatrix<f64>,
    /// Grid index of each unknown.
    pub unknowns: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ReferenceEigen {
    pub lambda: f64,
    /// Sup-normalized, on all grid nodes (boundary values reconstructed).
    pub eigenvector: GridFunction,
    pub iterations: usize,
}

const MAX_ITER: usize = 100_000;

fn linear_term(op: &OperatorSpec) -> Result<&LinearTerm> {
    match op {
        OperatorSpec::Linear(t) => Ok(t),
        _ => Err(Error::Unsupported("the reference eigensolver handles linear operators only".into())),
    }
}

/// One stencil row: `(node, coefficient)` pairs on the full grid.
fn stencil_row(grid: &Grid, t: &LinearTerm, i: usize, centered: bool) -> Result<Vec<(usize, f64)>> {
    let pt = grid.point(i);
    let diff = |k: usize| -> Result<f64> { Ok(t.diffusion[k.min(t.diffusion.len() - 1)].eval(pt)?) };
    let drift = |k: usize| -> Result<f64> { Ok(if k < t.drift.len() { t.drift[k].eval(pt)? } else { 0.0 }) };
    let mut row = vec![(i, t.zeroth.eval(pt)?)];
    let h = grid.spacing();
    if let DomainGeometry::RadialBall { dim, .. } = grid.domain() {
        let (hr, d, n1) = (h[0], diff(0)?, (*dim - 1) as f64);
        if i == 0 {
            let w = d * *dim as f64 * 2.0 / (hr * hr);
            row.push((1, -w));
            row.push((0, w));
            return Ok(row);
        }
        let r = grid.node(i)[0];
        let b = drift(0)?;
        row.push((i + 1, -d / (hr * hr)));
        row.push((i - 1, -d / (hr * hr)));
        row.push((i, 2.0 * d / (hr * hr)));
        if n1 > 0.0 {
            let slack = if centered { b.abs() / (2.0 * hr) } else { 0.0 };
            if d / (hr * hr) >= d * n1 / (2.0 * hr * r) + slack {
                row.push((i + 1, -d * n1 / (2.0 * hr * r)));
                row.push((i - 1, d * n1 / (2.0 * hr * r)));
            } else {
                row.push((i + 1, -d * n1 / (hr * r)));
                row.push((i, d * n1 / (hr * r)));
            }
        }
        push_drift(&mut row, i, i + 1, i - 1, b, hr, centered);
        return Ok(row);
    }
    let (ix, iy) = grid.multi_index(i);
    for k in 0..grid.axes() {
        let (plus, minus) = match (grid.axes(), k) {
            (1, _) => (i + 1, i - 1),
            (_, 0) => (grid.index2(ix + 1, iy), grid.index2(ix - 1, iy)),
            _ => (grid.index2(ix, iy + 1), grid.index2(ix, iy - 1)),
        };
        let d = diff(k)? / (h[k] * h[k]);
        row.push((plus, -d));
        row.push((minus, -d));
        row.push((i, 2.0 * d));
        push_drift(&mut row, i, plus, minus, drift(k)?, h[k], centered);
    }
    Ok(row)
}

fn push_drift(row: &mut Vec<(usize, f64)>, i: usize, plus: usize, minus: usize, b: f64, h: f64, centered: bool) {
    if b == 0.0 {
        return;
    }
    if centered {
        row.push((plus, b / (2.0 * h)));
        row.push((minus, -b / (2.0 * h)));
    } else if b > 0.0 {
        row.push((i, b / h));
        row.push((minus, -b / h));
    } else {
        row.push((plus, b / h));
        row.push((i, -b / h));
    }
}

/// Centered drift differences are used iff `|b_k| h_k ≤ a_k` at every
/// interior node with nonzero drift.
fn drift_is_centered(grid: &Grid, t: &LinearTerm) -> Result<bool> {
    let radial = matches!(grid.domain(), DomainGeometry::RadialBall { .. });
    for i in grid.interior_nodes() {
        if radial && i == 0 {
            continue;
        }
        let pt = grid.point(i);
        for (k, b) in t.drift.iter().enumerate().take(grid.axes()) {
            let b = b.eval(pt)?.abs();
            let a = t.diffusion[k.min(t.diffusion.len() - 1)].eval(pt)?;
            if b > 0.0 && b * grid.spacing()[k] > a {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// For a Robin boundary node: `(u₁, u₂, w₁, w₂)` with `u_b = w₁u₁ + w₂u₂`.
fn elimination(grid: &Grid, b: usize, gamma: f64) -> (usize, usize, f64, f64) {
    let (nv, _) = grid.boundary_data(b);
    let step = |c: f64| if c > 1e-12 { -1isize } else if c < -1e-12 { 1 } else { 0 };
    let (sx, sy) = (step(nv[0]), step(nv[1]));
    let h = grid.spacing();
    let (offset, len) = if grid.axes() == 1 {
        (sx, h[0])
    } else {
        let n = grid.n() as isize;
        (sx * n + sy, (((sx * sx) as f64) * h[0] * h[0] + ((sy * sy) as f64) * h[1] * h[1]).sqrt())
    };
    let at = |m: isize| (b as isize + m * offset) as usize;
    let den = 3.0 + 2.0 * len * gamma;
    (at(1), at(2), 4.0 / den, -1.0 / den)
}

/// Assembles the operator matrix on the interior nodes.
pub fn assemble(grid: &Grid, operator: &OperatorSpec, boundary: &BoundaryLaw) -> Result<LinearSystemMatrix> {
    let t = linear_term(operator)?;
    if grid.n() < 4 {
        return Err(Error::config("the reference eigensolver needs at least 4 nodes per axis"));
    }
    let unknowns: Vec<usize> = grid.interior_nodes().collect();
    let mut slot = vec![usize::MAX; grid.len()];
    for (k, &i) in unknowns.iter().enumerate() {
        slot[i] = k;
    }
    let centered = drift_is_centered(grid, t)?;
    let m = unknowns.len();
    let mut matrix = DMatrix::zeros(m, m);
    for (row, &i) in unknowns.iter().enumerate() {
        for (j, c) in stencil_row(grid, t, i, centered)? {
            if slot[j] != usize::MAX {
                matrix[(row, slot[j])] += c;
                continue;
            }
            if let BoundaryLaw::Robin { gamma } = boundary {
                let (j1, j2, w1, w2) = elimination(grid, j, gamma.eval(grid.point(j))?);
                matrix[(row, slot[j1])] += c * w1;
                matrix[(row, slot[j2])] += c * w2;
            }
        }
    }
    Ok(LinearSystemMatrix { matrix, unknowns })
}

fn is_z_matrix(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] <= 0.0))
}

fn collatz_wielandt(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<(f64, f64)> {
    if v.iter().any(|x| *x <= 0.0) {
        return None;
    }
    let mv = m * v;
    let ratios = mv.iter().zip(v.iter()).map(|(a, b)| a / b);
    Some(ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r))))
}

/// Principal eigenpair of a linear problem on its grid.
pub fn linear_reference_eigen(grid: &Grid, operator: &OperatorSpec, boundary: &BoundaryLaw) -> Result<ReferenceEigen> {
    let sys = assemble(grid, operator, boundary)?;
    let m = &sys.matrix;
    let dim = m.nrows();
    let gersh = (0..dim)
        .map(|i| m[(i, i)] - (0..dim).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let max_row = (0..dim).map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut shift = gersh - 1.0;
    let z = is_z_matrix(m);
    let tol = 1e-13 * max_row.max(1.0);
    let ident = DMatrix::<f64>::identity(dim, dim);
    let mut lu = (m - &ident * shift).lu();
    let mut v = DVector::from_element(dim, 1.0);
    let mut prev = v.clone();
    let mut lambda = f64::NAN;
    for it in 1..=MAX_ITER {
        let w = lu.solve(&v).ok_or(Error::Singular(0))?;
        let norm = w.amax();
        v = w / norm;
        if z {
            if let Some((lo, hi)) = collatz_wielandt(m, &v) {
                lambda = 0.5 * (lo + hi);
                if hi - lo <= tol {
                    return Ok(finish(grid, boundary, &sys, lambda, &v, it));
                }
                // Keep the shift strictly below λ₁ so the resolvent stays positive.
                let target = lo - (hi - lo).max(1e-9 * lo.abs().max(1.0));
                if target > shift + 1e-3 * (lambda - shift) {
                    shift = target;
                    lu = (m - &ident * shift).lu();
                }
                continue;
            }
        }
        let mv = m * &v;
        let rq = v.dot(&mv) / v.dot(&v);
        if (&v - &prev).amax() <= 1e-13 {
            return Ok(finish(grid, boundary, &sys, rq, &v, it));
        }
        if it % 1000 == 0 {
            check_complex_pair(m, &v, &lu)?;
        }
        prev = v.clone();
        lambda = rq;
    }
    Err(Error::NonConvergence { what: "reference power iteration", iterations: MAX_ITER, residual: lambda })
}

/// Rayleigh–Ritz on `span{v, Rv}`; reports a complex dominant pair.
fn check_complex_pair(m: &DMatrix<f64>, v: &DVector<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Result<()> {
    let w = lu.solve(v).ok_or(Error::Singular(0))?;
    let q1 = v.normalize();
    let mut q2 = &w - &q1 * q1.dot(&w);
    if q2.norm() < 1e-12 * w.norm() {
        return Ok(());
    }
    q2.normalize_mut();
    let (mq1, mq2) = (m * &q1, m * &q2);
    let (a, b, c, d) = (q1.dot(&mq1), q1.dot(&mq2), q2.dot(&mq1), q2.dot(&mq2));
    let tr = a + d;
    let disc = tr * tr / 4.0 - (a * d - b * c);
    if disc < 0.0 {
        return Err(Error::Unsupported(format!(
            "complex dominant pair {} ± {}i",
            tr / 2.0,
            (-disc).sqrt()
        )));
    }
    Ok(())
}

fn finish(grid: &Grid, boundary: &BoundaryLaw, sys: &LinearSystemMatrix, lambda: f64, v: &DVector<f64>, iterations: usize) -> ReferenceEigen {
    let mut full = vec![0.0; grid.len()];
    for (k, &i) in sys.unknowns.iter().enumerate() {
        full[i] = v[k];
    }
    if let BoundaryLaw::Robin { gamma } = boundary {
        for b in grid.boundary_nodes() {
            let g = gamma.eval(grid.point(b)).unwrap_or(0.0);
            let (j1, j2, w1, w2) = elimination(grid, b, g);
            full[b] = w1 * full[j1] + w2 * full[j2];
        }
    }
    let norm = full.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    ReferenceEigen { lambda, eigenvector: GridFunction::new(full.iter().map(|x| x / norm).collect()), iterations }
}
