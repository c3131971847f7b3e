use spikebench::analog::{simulate_analog, AnalogCostModel, AnalogOptions, CrossbarConfig};
use spikebench::digital::{simulate_digital, DigitalEnergyTable, DigitalOptions, SystolicConfig};
use spikebench::io::{generate_synthetic_workload, SyntheticProfile};
use spikebench::mitigations::{
    bn_adapt_with, dt_snn_infer, share_lif, DtSnnPolicy, NoiseCalibrationSpec, ShareSpec,
};
use spikebench::snn::{infer, ExactMvm, MvmContext, MvmProvider, SnnModel};
use spikebench::{Result, Tensor};

/// Exact arithmetic with a constant added to one layer's weighted input.
struct Offset {
    layer: usize,
    value: f64,
}

impl MvmProvider<f64> for Offset {
    fn weighted_input(&mut self, ctx: &MvmContext<'_>, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut out = ExactMvm.weighted_input(ctx, input)?;
        if ctx.layer_index == self.layer {
            out.data_mut().iter_mut().for_each(|v| *v += self.value);
        }
        Ok(out)
    }
}

/// Per-channel population mean and variance of layer 0's weighted input.
/// Direct encoding makes it the same at every timestep.
fn layer0_moments(model: &SnnModel, samples: &[Tensor<f64>]) -> (Vec<f64>, Vec<f64>) {
    let layer = &model.layers[0];
    let ctx = MvmContext {
        layer_index: 0,
        layer,
        weights: model.layer_weights(0).unwrap(),
        timestep: 0,
    };
    let c = layer.output_shape.channels();
    let spatial = layer.output_shape.spatial();
    let mut values = vec![Vec::new(); c];
    for x in samples {
        let y = ExactMvm.weighted_input(&ctx, x).unwrap();
        for (ch, chunk) in y.data().chunks(spatial).enumerate() {
            values[ch].extend_from_slice(chunk);
        }
    }
    let mean: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let var = values
        .iter()
        .zip(&mean)
        .map(|(v, m)| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
        .collect();
    (mean, var)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn clean_calibration_recovers_clean_statistics() {
    for profile in SyntheticProfile::ALL {
        let w = generate_synthetic_workload(2, profile).unwrap();
        let n = w.dataset.len();
        let spec = NoiseCalibrationSpec { sample_count: n, momentum: 1.0, batch_size: n };
        let out = bn_adapt_with(&w.model, &w.dataset.samples, &spec, |_| ExactMvm).unwrap();
        let (mean, var) = layer0_moments(&w.model, &w.dataset.samples);
        let bn = out.model.layers[0].bn.as_ref().unwrap();
        for ch in 0..mean.len() {
            assert!(close(bn.running_mean[ch], mean[ch], 1e-9), "{profile} mean {ch}");
            assert!(close(bn.running_var[ch], var[ch], 1e-9), "{profile} var {ch}");
        }
    }
}

#[test]
fn additive_offset_shifts_only_the_mean() {
    let w = generate_synthetic_workload(5, SyntheticProfile::TinyMlp).unwrap();
    let n = w.dataset.len();
    let spec = NoiseCalibrationSpec { sample_count: n, momentum: 1.0, batch_size: n };
    let clean = bn_adapt_with(&w.model, &w.dataset.samples, &spec, |_| ExactMvm).unwrap();
    let shifted =
        bn_adapt_with(&w.model, &w.dataset.samples, &spec, |_| Offset { layer: 0, value: 0.25 }).unwrap();
    let (a, b) = (clean.model.layers[0].bn.as_ref().unwrap(), shifted.model.layers[0].bn.as_ref().unwrap());
    for ch in 0..a.channels() {
        assert!(close(b.running_mean[ch] - a.running_mean[ch], 0.25, 1e-9));
        assert!(close(b.running_var[ch], a.running_var[ch], 1e-9));
    }
}

#[test]
fn adaptation_freezes_weights_and_affine_parameters() {
    let w = generate_synthetic_workload(6, SyntheticProfile::TinyCnn).unwrap();
    let spec = NoiseCalibrationSpec::new(24, 0.5).unwrap();
    let out = bn_adapt_with(&w.model, &w.dataset.samples, &spec, |_| Offset { layer: 0, value: -0.1 }).unwrap();
    assert_eq!(out.adapted_layers, 1);
    assert_eq!(out.batches, 2);
    for (name, q) in &w.model.weights {
        assert_eq!(q.checksum(), out.model.weights[name].checksum());
        assert_eq!(q, &out.model.weights[name]);
    }
    for (a, b) in w.model.layers.iter().zip(&out.model.layers) {
        if let (Some(x), Some(y)) = (&a.bn, &b.bn) {
            assert_eq!(x.gamma, y.gamma);
            assert_eq!(x.beta, y.beta);
            assert_ne!(x.running_mean, y.running_mean);
        }
    }
}

#[test]
fn models_without_batchnorm_are_returned_unchanged() {
    let mut w = generate_synthetic_workload(1, SyntheticProfile::TinyMlp).unwrap();
    w.model.layers.iter_mut().for_each(|l| l.bn = None);
    let spec = NoiseCalibrationSpec::new(8, 0.5).unwrap();
    let out = bn_adapt_with(&w.model, &w.dataset.samples, &spec, |_| ExactMvm).unwrap();
    assert_eq!(out.model, w.model);
    assert!(out.warning.is_some());
}

#[test]
fn zero_threshold_reproduces_static_reports() {
    let w = generate_synthetic_workload(3, SyntheticProfile::TinyCnn).unwrap();
    let policy = DtSnnPolicy::new(0.0, w.model.timesteps).unwrap();
    for x in w.dataset.samples.iter().take(6) {
        assert_eq!(
            dt_snn_infer(&w.model, x, &policy, &mut ExactMvm).unwrap(),
            infer(&w.model, x, &mut ExactMvm).unwrap()
        );
    }
    let (sc, table) = (SystolicConfig::default(), DigitalEnergyTable::default());
    let stat = simulate_digital(&w.model, &w.dataset, &sc, &table, &DigitalOptions::default()).unwrap();
    let dyn0 = simulate_digital(
        &w.model,
        &w.dataset,
        &sc,
        &table,
        &DigitalOptions { dt_snn: Some(policy), workers: None },
    )
    .unwrap();
    assert_eq!(stat.total_energy_pj.to_bits(), dyn0.total_energy_pj.to_bits());
    assert_eq!(stat.latency_cycles, dyn0.latency_cycles);
    assert_eq!(stat.predictions, dyn0.predictions);
    assert_eq!(stat.rows, dyn0.rows);

    let (xc, cost) = (CrossbarConfig::default(), AnalogCostModel::default());
    let opts = AnalogOptions { nonideal: true, seed: 3, ..Default::default() };
    let stat = simulate_analog(&w.model, &w.dataset, &xc, &cost, &opts).unwrap();
    let dyn0 = simulate_analog(&w.model, &w.dataset, &xc, &cost, &AnalogOptions { dt_snn: Some(policy), ..opts })
        .unwrap();
    assert_eq!(stat.total_energy_pj.to_bits(), dyn0.total_energy_pj.to_bits());
    assert_eq!(stat.latency_ns.to_bits(), dyn0.latency_ns.to_bits());
    assert_eq!(stat.predictions, dyn0.predictions);
}

#[test]
fn exit_decision_only_sees_the_past() {
    // Truncating the run after the exit step must not change the outcome.
    let w = generate_synthetic_workload(8, SyntheticProfile::TinyMlp).unwrap();
    let policy = DtSnnPolicy::new(0.9, w.model.timesteps).unwrap();
    for x in &w.dataset.samples {
        let full = dt_snn_infer(&w.model, x, &policy, &mut ExactMvm).unwrap();
        let cut = DtSnnPolicy::new(0.9, full.timesteps_used).unwrap();
        let short = dt_snn_infer(&w.model.with_timesteps(full.timesteps_used), x, &cut, &mut ExactMvm).unwrap();
        assert_eq!(full, short);
    }
}

#[test]
fn sharing_by_one_is_identity() {
    for profile in SyntheticProfile::ALL {
        let w = generate_synthetic_workload(4, profile).unwrap();
        let shared = share_lif(&w.model, ShareSpec::channel(1)).unwrap();
        for x in w.dataset.samples.iter().take(8) {
            assert_eq!(infer(&shared, x, &mut ExactMvm).unwrap(), infer(&w.model, x, &mut ExactMvm).unwrap());
        }
        let (sc, table) = (SystolicConfig::default(), DigitalEnergyTable::default());
        let a = simulate_digital(&w.model, &w.dataset, &sc, &table, &DigitalOptions::default()).unwrap();
        let b = simulate_digital(&shared, &w.dataset, &sc, &table, &DigitalOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn sharing_divides_lif_units() {
    let w = generate_synthetic_workload(4, SyntheticProfile::TinyCnn).unwrap();
    let shared = share_lif(&w.model, ShareSpec::channel(4)).unwrap();
    // 8 conv channels share 2 membranes per position.
    assert_eq!(w.model.layers[0].membrane_count(), 8 * 64);
    assert_eq!(shared.layers[0].membrane_count(), 2 * 64);
    assert!(share_lif(&w.model, ShareSpec::channel(3)).is_err());
}
