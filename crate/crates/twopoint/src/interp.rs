//! Tensor-product Lagrange interpolation on chart grids.
//!
//! Values use four-node windows per axis, derivatives six-node windows; the
//! wider stencil keeps second derivatives accurate enough for the pointwise
//! operator audits downstream. Periodic axes wrap their windows, bounded
//! axes shift them inward near the ends. Queries that land on a node (all
//! axes within NODE_SNAP_TOL of an integer offset) return the stored value
//! bit for bit.

use nalgebra::DMatrix;

use crate::domain::Grid;

/// Window width for plain value queries.
pub const VALUE_WINDOW: usize = 4;
/// Window width for gradient and Hessian queries.
pub const DERIV_WINDOW: usize = 6;
/// Node-unit distance under which a query counts as sitting on a node.
pub const NODE_SNAP_TOL: f64 = 1e-13;

/// Per-axis window: storage columns with value, first and second derivative
/// weights. Derivative weights are already scaled to chart units.
struct AxisWindow {
    cols: Vec<usize>,
    w: Vec<f64>,
    dw: Vec<f64>,
    ddw: Vec<f64>,
}

/// Lagrange basis weights and their first two derivatives at `s` for nodes
/// at `offsets` (node units).
fn lagrange_weights(s: f64, offsets: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = offsets.len();
    let mut w = vec![0.0; m];
    let mut dw = vec![0.0; m];
    let mut ddw = vec![0.0; m];
    for j in 0..m {
        let mut denom = 1.0;
        for k in 0..m {
            if k != j {
                denom *= offsets[j] - offsets[k];
            }
        }
        let mut val = 1.0;
        for k in 0..m {
            if k != j {
                val *= s - offsets[k];
            }
        }
        w[j] = val / denom;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for l in 0..m {
            if l == j {
                continue;
            }
            let mut prod = 1.0;
            for k in 0..m {
                if k != j && k != l {
                    prod *= s - offsets[k];
                }
            }
            d1 += prod;
            for p in 0..m {
                if p == j || p == l {
                    continue;
                }
                let mut prod2 = 1.0;
                for k in 0..m {
                    if k != j && k != l && k != p {
                        prod2 *= s - offsets[k];
                    }
                }
                d2 += prod2;
            }
        }
        dw[j] = d1 / denom;
        ddw[j] = d2 / denom;
    }
    (w, dw, ddw)
}

fn axis_window(grid: &Grid, axis: usize, q: f64, m_want: usize) -> AxisWindow {
    let n = grid.sizes()[axis];
    let cells = grid.cells()[axis];
    let h = grid.spacing()[axis];
    let m = m_want.min(n);
    let (cols, offsets, s) = if grid.periodic()[axis] {
        let s = grid.local(axis, q).rem_euclid(cells as f64);
        let base = (s.floor() as isize).min(cells as isize - 1);
        let start = base - (m as isize / 2 - 1);
        let mut cols = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(m);
        for k in 0..m as isize {
            let o = start + k;
            cols.push(o.rem_euclid(n as isize) as usize);
            offsets.push(o as f64);
        }
        (cols, offsets, s)
    } else {
        let s = grid.local(axis, q).clamp(0.0, cells as f64);
        let start =
            ((s.floor() as isize) - (m as isize / 2 - 1)).clamp(0, (n - m) as isize) as usize;
        let cols: Vec<usize> = (start..start + m).collect();
        let offsets: Vec<f64> = cols.iter().map(|&c| c as f64).collect();
        (cols, offsets, s)
    };
    let (w, mut dw, mut ddw) = lagrange_weights(s, &offsets);
    for v in dw.iter_mut() {
        *v /= h;
    }
    for v in ddw.iter_mut() {
        *v /= h * h;
    }
    AxisWindow { cols, w, dw, ddw }
}

/// If q sits on a grid node, its storage multi-index.
fn snap_index(grid: &Grid, q: &[f64]) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let s = if grid.periodic()[axis] {
            grid.local(axis, q[axis]).rem_euclid(grid.cells()[axis] as f64)
        } else {
            grid.local(axis, q[axis])
        };
        let r = s.round();
        if (s - r).abs() >= NODE_SNAP_TOL {
            return None;
        }
        let i = r as isize;
        let n = grid.sizes()[axis] as isize;
        let i = if grid.periodic()[axis] { i.rem_euclid(n) } else { i.clamp(0, n - 1) };
        idx.push(i as usize);
    }
    Some(idx)
}

/// Weight selector for one axis inside a tensor contraction.
#[derive(Clone, Copy, PartialEq)]
enum Part {
    Value,
    First,
    Second,
}

fn contract(grid: &Grid, values: &[f64], windows: &[AxisWindow], parts: &[Part]) -> f64 {
    let dim = grid.dim();
    let mut idx = vec![0usize; dim];
    let mut sum = 0.0;
    loop {
        let mut weight = 1.0;
        let mut col = vec![0usize; dim];
        for d in 0..dim {
            let k = idx[d];
            weight *= match parts[d] {
                Part::Value => windows[d].w[k],
                Part::First => windows[d].dw[k],
                Part::Second => windows[d].ddw[k],
            };
            col[d] = windows[d].cols[k];
        }
        sum += weight * values[grid.lin(&col)];
        let mut d = dim;
        loop {
            if d == 0 {
                return sum;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < windows[d].cols.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Interpolated value at chart coordinates, four-node windows.
pub fn value(grid: &Grid, values: &[f64], q: &[f64]) -> f64 {
    assert_eq!(values.len(), grid.n_nodes());
    assert_eq!(q.len(), grid.dim());
    if let Some(idx) = snap_index(grid, q) {
        return values[grid.lin(&idx)];
    }
    let windows: Vec<AxisWindow> =
        (0..grid.dim()).map(|a| axis_window(grid, a, q[a], VALUE_WINDOW)).collect();
    let parts = vec![Part::Value; grid.dim()];
    contract(grid, values, &windows, &parts)
}

/// Value, chart-coordinate gradient and chart-coordinate second partials at
/// chart coordinates, six-node windows throughout.
pub fn value_grad_hess(
    grid: &Grid,
    values: &[f64],
    q: &[f64],
) -> (f64, Vec<f64>, DMatrix<f64>) {
    assert_eq!(values.len(), grid.n_nodes());
    let dim = grid.dim();
    let windows: Vec<AxisWindow> =
        (0..dim).map(|a| axis_window(grid, a, q[a], DERIV_WINDOW)).collect();
    let mut parts = vec![Part::Value; dim];
    let v = contract(grid, values, &windows, &parts);
    let mut grad = vec![0.0; dim];
    for i in 0..dim {
        parts[i] = Part::First;
        grad[i] = contract(grid, values, &windows, &parts);
        parts[i] = Part::Value;
    }
    let mut hess = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            if i == j {
                parts[i] = Part::Second;
            } else {
                parts[i] = Part::First;
                parts[j] = Part::First;
            }
            let hij = contract(grid, values, &windows, &parts);
            hess[(i, j)] = hij;
            hess[(j, i)] = hij;
            parts[i] = Part::Value;
            parts[j] = Part::Value;
        }
    }
    (v, grad, hess)
}

/// Interpolated value with the six-node windows, for callers that feed the
/// result into difference quotients and need the extra accuracy.
pub fn value_wide(grid: &Grid, values: &[f64], q: &[f64]) -> f64 {
    assert_eq!(values.len(), grid.n_nodes());
    if let Some(idx) = snap_index(grid, q) {
        return values[grid.lin(&idx)];
    }
    let windows: Vec<AxisWindow> =
        (0..grid.dim()).map(|a| axis_window(grid, a, q[a], DERIV_WINDOW)).collect();
    let parts = vec![Part::Value; grid.dim()];
    contract(grid, values, &windows, &parts)
}

/// Chart-coordinate gradient only.
pub fn gradient(grid: &Grid, values: &[f64], q: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let windows: Vec<AxisWindow> =
        (0..dim).map(|a| axis_window(grid, a, q[a], DERIV_WINDOW)).collect();
    let mut parts = vec![Part::Value; dim];
    let mut grad = vec![0.0; dim];
    for i in 0..dim {
        parts[i] = Part::First;
        grad[i] = contract(grid, values, &windows, &parts);
        parts[i] = Part::Value;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainBlock, DomainSpec};

    fn interval_grid(cells: usize) -> (DomainSpec, Grid) {
        let d = DomainSpec::new(vec![DomainBlock::Interval { half_length: 1.0 }]).unwrap();
        let g = Grid::new(&d, &[cells]).unwrap();
        (d, g)
    }

    fn fill(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..grid.n_nodes()).map(|lin| f(&grid.chart_of(&grid.unlin(lin)))).collect()
    }

    #[test]
    fn cubic_polynomials_reproduced_exactly() {
        let (_, g) = interval_grid(8);
        let vals = fill(&g, |q| 2.0 + q[0] - 0.5 * q[0].powi(2) + 3.0 * q[0].powi(3));
        for &x in &[-0.93f64, -0.4, 0.111, 0.62, 0.99] {
            let want = 2.0 + x - 0.5 * x * x + 3.0 * x.powi(3);
            assert!((value(&g, &vals, &[x]) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn quintic_windows_differentiate_quintics_exactly() {
        let (_, g) = interval_grid(10);
        let vals = fill(&g, |q| q[0].powi(5));
        for &x in &[-0.7, 0.15, 0.88] {
            let (v, grad, hess) = value_grad_hess(&g, &vals, &[x]);
            assert!((v - x.powi(5)).abs() < 1e-12);
            assert!((grad[0] - 5.0 * x.powi(4)).abs() < 1e-11);
            assert!((hess[(0, 0)] - 20.0 * x.powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn node_queries_return_stored_values_bit_for_bit() {
        let (_, g) = interval_grid(7);
        let vals: Vec<f64> = (0..g.n_nodes()).map(|i| (i as f64).sin() * 1e-3 + 0.5).collect();
        for i in 0..g.sizes()[0] {
            let q = g.chart_of(&[i]);
            assert_eq!(value(&g, &vals, &q), vals[i]);
        }
    }

    #[test]
    fn periodic_axis_wraps_smoothly() {
        let d = DomainSpec::new(vec![DomainBlock::Disk { radius: 1.0 }]).unwrap();
        let g = Grid::new(&d, &[6, 24]).unwrap();
        let vals = fill(&g, |q| q[1].sin() * q[0]);
        let r = 0.5;
        let eps = 1e-9;
        let just_below = value(&g, &vals, &[r, std::f64::consts::TAU - eps]);
        let just_above = value(&g, &vals, &[r, eps]);
        assert!((just_below - just_above).abs() < 1e-6);
        let h_th = g.spacing()[1];
        let exact = |th: f64| th.sin() * r;
        for &th in &[0.5 * h_th, std::f64::consts::TAU - 0.5 * h_th] {
            assert!((value(&g, &vals, &[r, th]) - exact(th)).abs() < 1e-4);
        }
    }

    #[test]
    fn mixed_partials_on_a_rectangle() {
        let d =
            DomainSpec::new(vec![DomainBlock::Rectangle { half_x: 1.0, half_y: 0.8 }]).unwrap();
        let g = Grid::new(&d, &[10, 8]).unwrap();
        let vals = fill(&g, |q| q[0].powi(2) * q[1]);
        let q = [0.3, -0.25];
        let (v, grad, hess) = value_grad_hess(&g, &vals, &q);
        assert!((v - q[0] * q[0] * q[1]).abs() < 1e-12);
        assert!((grad[0] - 2.0 * q[0] * q[1]).abs() < 1e-11);
        assert!((grad[1] - q[0] * q[0]).abs() < 1e-11);
        assert!((hess[(0, 0)] - 2.0 * q[1]).abs() < 1e-10);
        assert!((hess[(0, 1)] - 2.0 * q[0]).abs() < 1e-10);
        assert!((hess[(1, 1)]).abs() < 1e-10);
        assert_eq!(hess[(0, 1)], hess[(1, 0)]);
    }

    #[test]
    fn smooth_function_fourth_order_value_convergence() {
        let mut errs = Vec::new();
        for cells in [16usize, 32] {
            let (_, g) = interval_grid(cells);
            let vals = fill(&g, |q| (2.0 * q[0]).cos());
            let mut worst = 0.0f64;
            for k in 0..200 {
                let x = -1.0 + 2.0 * (k as f64 + 0.5) / 200.0;
                worst = worst.max((value(&g, &vals, &[x]) - (2.0 * x).cos()).abs());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "observed order {order}");
    }
}
