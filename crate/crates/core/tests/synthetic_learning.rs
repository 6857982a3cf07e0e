use meltpoolnet::data::Dataset;
use meltpoolnet::evaluate::{cross_validate, cross_validate_matrix, learning_curve, rf_feature_importance, CvConfig};
use meltpoolnet::featurize::{assemble, FeatureGroup, FeatureMatrix, FeatureSpec, Target};
use meltpoolnet::learners::{train, Hyperparams, ModelKind};
use meltpoolnet::materials::Registry;
use meltpoolnet::matrix::Matrix;
use meltpoolnet::synthetic::{generate, SyntheticConfig};
use meltpoolnet::tune::{search, Domain, SearchSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn depth_data(n: usize, seed: u64) -> Dataset {
    let cfg = SyntheticConfig {
        n,
        seed,
        noise: 0.01,
        keyhole_threshold: None,
        ..SyntheticConfig::default()
    };
    generate(&cfg, &Registry::bundled()).unwrap()
}

fn hp(kind: ModelKind, trees: usize) -> Hyperparams {
    Hyperparams {
        n_estimators: trees,
        ..Hyperparams::default_for(kind)
    }
}

#[test]
fn forests_learn_rosenthal_depth() {
    let reg = Registry::bundled();
    let ds = depth_data(300, 11);
    let spec = FeatureSpec::baseline(Target::Depth);
    let cv = CvConfig { k: 5, runs: 2, seed: 0 };
    let rf = cross_validate(&ds, &spec, &reg, ModelKind::RandomForest, &hp(ModelKind::RandomForest, 50), &cv).unwrap();
    let ridge = cross_validate(&ds, &spec, &reg, ModelKind::Ridge, &Hyperparams::default(), &cv).unwrap();
    let rf_r2 = rf.mean("r2").unwrap();
    assert!(rf_r2 >= 0.95, "rf r2 {rf_r2}");
    assert!(rf_r2 >= ridge.mean("r2").unwrap() + 0.05, "ridge {}", ridge.mean("r2").unwrap());
}

#[test]
fn more_data_lowers_rf_error() {
    let reg = Registry::bundled();
    let fm = assemble(&depth_data(250, 4), &FeatureSpec::baseline(Target::Depth), &reg).unwrap();
    let cv = CvConfig { k: 5, runs: 5, seed: 2 };
    let points = learning_curve(&fm, ModelKind::RandomForest, &hp(ModelKind::RandomForest, 20), &cv, &[0.2, 1.0]).unwrap();
    assert_eq!(points.len(), 2);
    assert!(points[1].report.mean("mae").unwrap() <= points[0].report.mean("mae").unwrap());
}

#[test]
fn noise_column_gets_least_importance() {
    let reg = Registry::bundled();
    let fm = assemble(&depth_data(300, 8), &FeatureSpec::baseline(Target::Depth), &reg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows: Vec<Vec<f64>> = fm.values.iter_rows().map(|r| r.to_vec()).collect();
    for r in rows.iter_mut() {
        r.push(rng.random::<f64>());
    }
    let mut columns = fm.columns.clone();
    columns.push("noise".into());
    let noisy = FeatureMatrix {
        values: Matrix::from_rows(&rows).unwrap(),
        columns,
        ..fm
    };
    let model = train(ModelKind::RandomForest, &noisy, &hp(ModelKind::RandomForest, 50), 0).unwrap();
    let imp = rf_feature_importance(&model).unwrap();
    assert!((imp.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-9);
    let noise = imp.last().unwrap().1;
    for (name, w) in &imp {
        if ["power_w", "velocity_m_s"].contains(&name.as_str()) {
            assert!(*w > noise, "{name} {w} vs noise {noise}");
        }
    }
}

#[test]
fn tuned_forest_is_no_worse_than_default() {
    let reg = Registry::bundled();
    let fm = assemble(&depth_data(150, 21), &FeatureSpec::baseline(Target::Depth), &reg).unwrap();
    let cv = CvConfig { k: 5, runs: 1, seed: 3 };
    let default = cross_validate_matrix(&fm, ModelKind::RandomForest, &Hyperparams::default(), &cv).unwrap();
    let space = SearchSpace {
        params: SearchSpace::for_kind(ModelKind::RandomForest)
            .params
            .into_iter()
            .map(|(n, d)| match n.as_str() {
                // Keeps the test quick; the full range is covered by the
                // domain tests.
                "n_estimators" => (n, Domain::Int { lo: 1, hi: 100 }),
                _ => (n, d),
            })
            .collect(),
        kind: ModelKind::RandomForest,
    };
    let result = search(&space, &fm, 25, &cv, 0).unwrap();
    let best = result.best_trial().objective.unwrap();
    assert!(best >= default.mean("r2").unwrap() - 0.01, "{best} vs {}", default.mean("r2").unwrap());
}

#[test]
fn forest_classifies_rule_labels() {
    let reg = Registry::bundled();
    let ds = generate(&SyntheticConfig { n: 2000, seed: 5, ..SyntheticConfig::default() }, &reg).unwrap();
    let spec = FeatureSpec::baseline(Target::DefectClass)
        .with(FeatureGroup::LayerThickness)
        .with(FeatureGroup::Absorptivity1);
    let cv = CvConfig { k: 5, runs: 1, seed: 0 };
    let r = cross_validate(&ds, &spec, &reg, ModelKind::RandomForest, &Hyperparams::default(), &cv).unwrap();
    let acc = r.mean("accuracy").unwrap();
    let auc = r.mean("macro_auc").unwrap();
    assert!(acc >= 0.90 && auc >= 0.95, "accuracy {acc}, macro auc {auc}");
    let c = r.pooled_confusion().unwrap();
    let trace: u64 = (0..4).map(|i| c[i][i]).sum();
    let total: u64 = c.iter().flatten().sum();
    assert_eq!(total, 2000);
    let pooled = trace as f64 / total as f64;
    assert!((pooled - acc).abs() < 0.02);
}
