//! Exact DC solve of a crossbar with interconnect parasitics.
//!
//! Every cell sits between a node on its wordline and a node on its bitline.
//! Adjacent nodes along a line are joined by `r_wire`; wordline `i` is driven
//! by `V_i` through `r_source` at column 0, and every bitline is sensed at
//! virtual ground through `r_sink` below the last row. Zero resistances merge
//! nodes, infinite ones remove the branch. The remaining nodal system is
//! symmetric positive definite and is factored once with a profile
//! (envelope) Cholesky so many input vectors can be solved cheaply.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Unknown(usize),
    Source(usize),
    Ground,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Lower-triangular envelope storage: row `i` holds columns `first[i]..=i`.
struct Envelope<S> {
    first: Vec<usize>,
    rows: Vec<Vec<S>>,
}

impl<S: Real> Envelope<S> {
    fn add(&mut self, i: usize, j: usize, v: S) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let f = self.first[i];
        self.rows[i][j - f] += v;
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let mut s = self.rows[i][j - fi];
                for k in fi.max(fj)..j {
                    s -= self.rows[i][k - fi] * self.rows[j][k - fj];
                }
                if j < i {
                    self.rows[i][j - fi] = s / self.rows[j][j - fj];
                } else {
                    if !(s > S::zero()) || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "crossbar network is singular at node {i} (pivot {:?}); \
                             part of the grid has no conductive path to a driver or sink",
                            s
                        )));
                    }
                    self.rows[i][i - fi] = s.sqrt();
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [S]) {
        let n = b.len();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = b[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * b[k];
            }
            b[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            b[i] /= self.rows[i][i - fi];
            let xi = b[i];
            for k in fi..i {
                b[k] -= self.rows[i][k - fi] * xi;
            }
        }
    }
}

/// A factored crossbar network for one conductance matrix.
pub struct CrossbarNetwork<S> {
    rows: usize,
    cols: usize,
    /// Row-major cell conductances.
    g: Vec<S>,
    /// Class of each cell's wordline and bitline node.
    cell_nodes: Vec<(Class, Class)>,
    /// `(unknown, source row, conductance)` couplings feeding the RHS.
    source_links: Vec<(usize, usize, S)>,
    unknowns: usize,
    chol: Envelope<S>,
}

fn conductance<S: Real>(r: f64) -> Option<S> {
    // None = short circuit, Some(0) = open.
    if r == 0.0 {
        None
    } else {
        Some(S::from_f64_lossy(1.0 / r))
    }
}

impl<S: Real> CrossbarNetwork<S> {
    /// `g` is row-major `rows x cols` in siemens; resistances in ohms.
    pub fn new(
        g: &[S],
        rows: usize,
        cols: usize,
        r_wire: f64,
        r_source: f64,
        r_sink: f64,
    ) -> Result<Self> {
        if g.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Contract(format!(
                "conductance matrix has {} entries, expected {rows}x{cols}",
                g.len()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !(**v >= S::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid conductance {bad:?}")));
        }
        let cells = rows * cols;
        let row_node = |i: usize, j: usize| i * cols + j;
        let col_node = |i: usize, j: usize| cells + i * cols + j;
        let source = |i: usize| 2 * cells + i;
        let ground = 2 * cells + rows;
        let total = ground + 1;

        let mut edges: Vec<(usize, usize, S)> = Vec::new();
        let mut uf = UnionFind::new(total);
        let mut link = |a: usize, b: usize, g: Option<S>, uf: &mut UnionFind| match g {
            None => uf.union(a, b),
            Some(v) if v > S::zero() => edges.push((a, b, v)),
            Some(_) => {}
        };
        let gw = conductance::<S>(r_wire);
        for i in 0..rows {
            link(source(i), row_node(i, 0), conductance(r_source), &mut uf);
            for j in 0..cols {
                if j + 1 < cols {
                    link(row_node(i, j), row_node(i, j + 1), gw, &mut uf);
                }
                if i + 1 < rows {
                    link(col_node(i, j), col_node(i + 1, j), gw, &mut uf);
                }
                link(row_node(i, j), col_node(i, j), Some(g[i * cols + j]), &mut uf);
            }
        }
        for j in 0..cols {
            link(col_node(rows - 1, j), ground, conductance(r_sink), &mut uf);
        }

        // Fixed-potential classes.
        let mut fixed: Vec<Option<Class>> = vec![None; total];
        for i in 0..rows {
            let r = uf.find(source(i));
            if let Some(prev) = fixed[r] {
                return Err(Error::Numerical(format!(
                    "short circuit joins wordline driver {i} with {prev:?}"
                )));
            }
            fixed[r] = Some(Class::Source(i));
        }
        let rg = uf.find(ground);
        if let Some(prev) = fixed[rg] {
            return Err(Error::Numerical(format!("short circuit joins ground with {prev:?}")));
        }
        fixed[rg] = Some(Class::Ground);

        // Two candidate orderings of the free classes; keep the smaller envelope.
        let key_row_major = |n: usize| -> usize {
            if n < cells {
                2 * n
            } else if n < 2 * cells {
                2 * (n - cells) + 1
            } else {
                usize::MAX
            }
        };
        let key_col_major = |n: usize| -> usize {
            if n < 2 * cells {
                let (cell, kind) = if n < cells { (n, 0) } else { (n - cells, 1) };
                let (i, j) = (cell / cols, cell % cols);
                2 * (j * rows + i) + kind
            } else {
                usize::MAX
            }
        };
        let roots: Vec<usize> = (0..total).map(|n| uf.find(n)).collect();
        let order_for = |key: &dyn Fn(usize) -> usize| -> Vec<Option<usize>> {
            let mut class_key = vec![usize::MAX; total];
            for n in 0..2 * cells {
                let r = roots[n];
                if fixed[r].is_none() {
                    class_key[r] = class_key[r].min(key(n));
                }
            }
            let mut free: Vec<usize> = (0..total).filter(|&r| class_key[r] != usize::MAX).collect();
            free.sort_by_key(|&r| class_key[r]);
            let mut index = vec![None; total];
            for (k, r) in free.into_iter().enumerate() {
                index[r] = Some(k);
            }
            index
        };
        let envelope_size = |index: &[Option<usize>]| -> (usize, Vec<usize>) {
            let n = index.iter().flatten().count();
            let mut first: Vec<usize> = (0..n).collect();
            for &(a, b, _) in &edges {
                if let (Some(x), Some(y)) = (index[roots[a]], index[roots[b]]) {
                    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
                    first[hi] = first[hi].min(lo);
                }
            }
            ((0..n).map(|i| i - first[i] + 1).sum(), first)
        };
        let a = order_for(&key_row_major);
        let b = order_for(&key_col_major);
        let (size_a, first_a) = envelope_size(&a);
        let (size_b, first_b) = envelope_size(&b);
        let (index, first) = if size_b < size_a { (b, first_b) } else { (a, first_a) };
        let unknowns = first.len();

        let class_of = |n: usize| -> Class {
            let r = roots[n];
            fixed[r].unwrap_or_else(|| Class::Unknown(index[r].expect("free class indexed")))
        };
        let mut chol = Envelope {
            rows: first.iter().enumerate().map(|(i, f)| vec![S::zero(); i - f + 1]).collect(),
            first,
        };
        let mut source_links = Vec::new();
        for &(a, b, g) in &edges {
            match (class_of(a), class_of(b)) {
                (Class::Unknown(x), Class::Unknown(y)) if x != y => {
                    chol.add(x, x, g);
                    chol.add(y, y, g);
                    chol.add(x, y, -g);
                }
                (Class::Unknown(x), other) | (other, Class::Unknown(x)) => {
                    if let Class::Unknown(y) = other {
                        debug_assert_eq!(x, y);
                        continue;
                    }
                    chol.add(x, x, g);
                    if let Class::Source(i) = other {
                        source_links.push((x, i, g));
                    }
                }
                _ => {}
            }
        }
        chol.factor()?;
        let cell_nodes = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| (class_of(row_node(i, j)), class_of(col_node(i, j))))
            .collect();
        Ok(CrossbarNetwork {
            rows,
            cols,
            g: g.to_vec(),
            cell_nodes,
            source_links,
            unknowns,
            chol,
        })
    }

    /// Number of free node potentials in the reduced system.
    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    /// Current (amperes) flowing into each column's sense amplifier for
    /// wordline voltages `v`.
    pub fn column_currents(&self, v: &[S]) -> Result<Vec<S>> {
        if v.len() != self.rows {
            return Err(Error::Contract(format!(
                "{} voltages for a {}-row crossbar",
                v.len(),
                self.rows
            )));
        }
        let mut x = vec![S::zero(); self.unknowns];
        for &(u, i, g) in &self.source_links {
            x[u] += g * v[i];
        }
        self.chol.solve(&mut x);
        let potential = |c: Class| match c {
            Class::Unknown(k) => x[k],
            Class::Source(i) => v[i],
            Class::Ground => S::zero(),
        };
        let mut out = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (r, c) = self.cell_nodes[i * self.cols + j];
                out[j] += self.g[i * self.cols + j] * (potential(r) - potential(c));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(g: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
        (0..cols)
            .map(|j| (0..rows).map(|i| g[i * cols + j] * v[i]).sum())
            .collect()
    }

    #[test]
    fn lossless_network_is_ideal() {
        let g = [1e-5, 2e-5, 3e-5, 4e-5, 5e-5, 6e-5];
        let v = [0.1, 0.2, 0.05];
        let net = CrossbarNetwork::new(&g, 3, 2, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(net.unknowns(), 0);
        let i = net.column_currents(&v).unwrap();
        let want = ideal(&g, 3, 2, &v);
        for (a, b) in i.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn single_cell_is_a_series_divider() {
        let (rs, rw, rk, g) = (30.0, 2.0, 70.0, 1e-4);
        let net = CrossbarNetwork::new(&[g], 1, 1, rw, rs, rk).unwrap();
        let i = net.column_currents(&[0.2]).unwrap()[0];
        let want = 0.2 / (rs + 1.0 / g + rk);
        assert!((i - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn wire_resistance_lowers_column_current() {
        let rows = 6;
        let g: Vec<f64> = (0..rows).map(|i| 2e-5 + 1e-5 * i as f64).collect();
        let v: Vec<f64> = (0..rows).map(|i| 0.1 + 0.02 * i as f64).collect();
        let net = CrossbarNetwork::new(&g, rows, 1, 2.0, 0.0, 0.0).unwrap();
        assert!(net.column_currents(&v).unwrap()[0] < ideal(&g, rows, 1, &v)[0]);
    }

    #[test]
    fn open_network_is_singular() {
        let g = [0.0; 4];
        assert!(matches!(
            CrossbarNetwork::<f64>::new(&g, 2, 2, 0.0, 0.0, 0.0).map(|_| ()),
            Ok(())
        ));
        let err = CrossbarNetwork::<f64>::new(&g, 2, 2, 1.0, 1.0, f64::INFINITY).err().unwrap();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn f32_network_tracks_f64() {
        let g = [1e-5f64, 3e-5, 2e-5, 8e-5];
        let g32: Vec<f32> = g.iter().map(|v| *v as f32).collect();
        let a = CrossbarNetwork::new(&g, 2, 2, 2.0, 5.0, 5.0).unwrap().column_currents(&[0.2, 0.1]).unwrap();
        let b = CrossbarNetwork::new(&g32, 2, 2, 2.0, 5.0, 5.0).unwrap().column_currents(&[0.2, 0.1]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(((*y as f64) - x).abs() <= 1e-5 * x.abs());
        }
    }
}
