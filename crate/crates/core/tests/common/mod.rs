//! Oracles shared by the integration suites.

use nalgebra::{DMatrix, DVector};

use spikebench::snn::{LayerSpec, QuantizedWeights, SnnModel, WeightStore};
use spikebench::Shape;

/// Full modified-nodal-analysis solve: every wordline and bitline node is an
/// unknown, and column current is read through the sink resistor.
pub fn dense_column_currents(
    g: &[f64],
    rows: usize,
    cols: usize,
    v: &[f64],
    r_wire: f64,
    r_source: f64,
    r_sink: f64,
) -> Vec<f64> {
    let n = 2 * rows * cols;
    let wl = |i: usize, j: usize| i * cols + j;
    let bl = |i: usize, j: usize| rows * cols + i * cols + j;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let stamp = |p: usize, q: usize, y: f64, a: &mut DMatrix<f64>| {
        a[(p, p)] += y;
        a[(q, q)] += y;
        a[(p, q)] -= y;
        a[(q, p)] -= y;
    };
    for i in 0..rows {
        for j in 0..cols {
            stamp(wl(i, j), bl(i, j), g[i * cols + j], &mut a);
            if j + 1 < cols {
                stamp(wl(i, j), wl(i, j + 1), 1.0 / r_wire, &mut a);
            }
            if i + 1 < rows {
                stamp(bl(i, j), bl(i + 1, j), 1.0 / r_wire, &mut a);
            }
        }
        a[(wl(i, 0), wl(i, 0))] += 1.0 / r_source;
        b[wl(i, 0)] += v[i] / r_source;
    }
    for j in 0..cols {
        a[(bl(rows - 1, j), bl(rows - 1, j))] += 1.0 / r_sink;
    }
    let x = a.lu().solve(&b).expect("nonsingular network");
    (0..cols).map(|j| x[bl(rows - 1, j)] / r_sink).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// One fully connected layer with unit scale, so outputs are integer sums.
pub fn fc_model(q: Vec<i8>, inputs: usize, outputs: usize) -> SnnModel {
    let mut weights = WeightStore::new();
    weights.insert("w".into(), QuantizedWeights::new(outputs, inputs, 8, 1.0, q).unwrap());
    SnnModel {
        layers: vec![LayerSpec::fully_connected(Shape::new(vec![inputs]), outputs).with_weights("w", 8)],
        input_shape: Shape::new(vec![inputs]),
        timesteps: 1,
        num_classes: outputs,
        weights,
    }
}
