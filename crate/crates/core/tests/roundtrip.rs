use std::fs;

use spikebench::analog::{simulate_analog, AnalogCostModel, AnalogOptions, CrossbarConfig};
use spikebench::digital::{simulate_digital, DigitalEnergyTable, DigitalOptions, SystolicConfig};
use spikebench::io::{
    generate_synthetic_workload, generate_synthetic_workload_with, load_dataset, load_hardware_config,
    load_model, report_to_csv, report_to_json, save_dataset, save_model, write_report, Backend,
    ReportFormat, SampleDtype, SyntheticOptions, SyntheticProfile,
};
use spikebench::snn::{infer, ExactMvm};

#[test]
fn saved_workload_infers_identically() {
    let dir = tempfile::tempdir().unwrap();
    for profile in SyntheticProfile::ALL {
        let w = generate_synthetic_workload(9, profile).unwrap();
        let (m, d) = (dir.path().join(format!("{profile}.json")), dir.path().join(format!("{profile}.snnb")));
        save_model(&w.model, &m).unwrap();
        save_dataset(&w.dataset, &d, SampleDtype::F64).unwrap();
        let model = load_model(&m).unwrap();
        let data = load_dataset(&d).unwrap();
        assert_eq!(model, w.model);
        assert_eq!(data, w.dataset);
        for x in &data.samples {
            let a = infer(&model, x, &mut ExactMvm).unwrap();
            let b = infer(&w.model, x, &mut ExactMvm).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn generator_is_a_pure_function_of_seed() {
    let a = generate_synthetic_workload(1, SyntheticProfile::TinyMlp).unwrap();
    let b = generate_synthetic_workload(1, SyntheticProfile::TinyMlp).unwrap();
    assert_eq!(
        a.dataset.to_bytes(SampleDtype::F64).unwrap(),
        b.dataset.to_bytes(SampleDtype::F64).unwrap()
    );
    assert_eq!(a.model, b.model);
    let c = generate_synthetic_workload(2, SyntheticProfile::TinyMlp).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn seed_one_tiny_mlp_example() {
    let w = generate_synthetic_workload(1, SyntheticProfile::TinyMlp).unwrap();
    assert_eq!(w.model.input_shape.dims(), &[16]);
    assert_eq!(w.model.num_classes, 4);
    assert_eq!(w.model.timesteps, 4);
    assert_eq!(w.model.layers.len(), 2);
    let correct = w
        .dataset
        .samples
        .iter()
        .zip(&w.dataset.labels)
        .filter(|(x, l)| infer(&w.model, x, &mut ExactMvm).unwrap().prediction == **l as usize)
        .count();
    assert_eq!(correct, w.dataset.len());
}

#[test]
fn noiseless_samples_have_a_positive_margin() {
    for profile in SyntheticProfile::ALL {
        let opts = SyntheticOptions { noise: 0.0, ..profile.default_options() };
        let w = generate_synthetic_workload_with(3, profile, &opts).unwrap();
        for (x, &l) in w.dataset.samples.iter().zip(&w.dataset.labels) {
            let logits = infer(&w.model, x, &mut ExactMvm).unwrap().logits;
            let own = logits[l as usize];
            let rival = logits
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != l as usize)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(own - rival > 0.0);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_workers() {
    let w = generate_synthetic_workload(7, SyntheticProfile::TinyCnn).unwrap();
    let (sc, table) = (SystolicConfig::default(), DigitalEnergyTable::default());
    let digital = |workers| {
        let r = simulate_digital(&w.model, &w.dataset, &sc, &table, &DigitalOptions { dt_snn: None, workers })
            .unwrap();
        (report_to_json(&r).unwrap(), report_to_csv(&r).unwrap())
    };
    assert_eq!(digital(Some(1)), digital(Some(1)));
    assert_eq!(digital(Some(1)), digital(Some(3)));

    let (xc, cost) = (CrossbarConfig::default(), AnalogCostModel::default());
    let analog = |workers| {
        let opts = AnalogOptions { nonideal: true, seed: 7, workers, ..Default::default() };
        report_to_json(&simulate_analog(&w.model, &w.dataset, &xc, &cost, &opts).unwrap()).unwrap()
    };
    assert_eq!(analog(Some(1)), analog(Some(1)));
    assert_eq!(analog(Some(1)), analog(Some(2)));
}

#[test]
fn written_reports_reparse_with_consistent_totals() {
    let w = generate_synthetic_workload(2, SyntheticProfile::TinyMlp).unwrap();
    let r = simulate_digital(
        &w.model,
        &w.dataset,
        &SystolicConfig::default(),
        &DigitalEnergyTable::default(),
        &DigitalOptions::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    write_report(&r, &json, ReportFormat::Json).unwrap();
    write_report(&r, &csv, ReportFormat::Csv).unwrap();
    let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let rows = back["rows"].as_array().unwrap();
    let sum: f64 = rows.iter().map(|r| r["compute_pj"].as_f64().unwrap()).sum();
    let total = back["energy"]["compute_pj"].as_f64().unwrap();
    assert!((sum - total).abs() <= 1e-9 * total);
    // Header plus one line per (layer, timestep).
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 2 * 4);
}

#[test]
fn shipped_configs_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    assert_eq!(load_hardware_config(root.join("digital_default.toml")).unwrap().backend(), Backend::Digital);
    assert_eq!(load_hardware_config(root.join("analog_default.toml")).unwrap().backend(), Backend::Analog);
}
