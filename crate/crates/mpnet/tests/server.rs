use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use meltpoolnet::featurize::{FeatureGroup, FeatureSpec, Target};
use meltpoolnet::learners::{Hyperparams, ModelKind};
use meltpoolnet::materials::Registry;
use meltpoolnet::pipeline::{decision_boundary_grid, Pipeline};
use meltpoolnet::synthetic::{generate, SyntheticConfig};
use mpnet::api::ProcessMapRequest;
use mpnet::server::{router, AppState, ModelStore, Models};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fit(target: Target, kind: ModelKind, extra: &[FeatureGroup]) -> Pipeline {
    let reg = Registry::bundled();
    let ds = generate(&SyntheticConfig { n: 150, seed: 1, ..SyntheticConfig::default() }, &reg).unwrap();
    let spec = extra.iter().fold(FeatureSpec::baseline(target), |s, g| s.with(*g));
    let hp = Hyperparams {
        n_estimators: 20,
        ..Hyperparams::default_for(kind)
    };
    Pipeline::fit(&ds, &spec, &reg, kind, &hp, 0).unwrap()
}

fn models() -> Models {
    let mut m = Models::new();
    m.insert("depth_rf".into(), Arc::new(fit(Target::Depth, ModelKind::RandomForest, &[FeatureGroup::Absorptivity1])));
    m.insert("class_rf".into(), Arc::new(fit(Target::DefectClass, ModelKind::RandomForest, &[FeatureGroup::LayerThickness])));
    m
}

fn app(models: Models) -> Router {
    router(AppState {
        registry: Arc::new(Registry::bundled()),
        store: Arc::new(ModelStore::fixed(models)),
    })
}

async fn call(app: Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn lists_materials_and_models() {
    let app = app(models());
    let (s, v) = call(app.clone(), "GET", "/materials", None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"SS316L"));
    let ss = v.as_array().unwrap().iter().find(|m| m["name"] == "SS316L").unwrap();
    assert!(ss["rho"].as_f64().unwrap() > 7000.0);

    let (s, v) = call(app, "GET", "/models", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["name"], "class_rf");
    assert_eq!(v[1]["target"], "depth");
    assert_eq!(v[1]["kind"], "random_forest");
    assert!(v[1]["features"].as_array().unwrap().contains(&json!("absorptivity1")));
}

#[tokio::test]
async fn predict_regression_and_classification() {
    let app = app(models());
    let body = json!({"model": "depth_rf", "process": "LPBF", "material": "SS316L",
                      "power_w": 200.0, "velocity_m_s": 0.8, "beam_diameter_um": 100.0});
    let (s, v) = call(app.clone(), "POST", "/predict", Some(&body.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["depth_um"].as_f64().unwrap() > 0.0);
    assert!(v.get("class_probs").is_none());
    let r = &v["rosenthal"];
    assert_eq!(r["width_um"].as_f64().unwrap(), 2.0 * r["depth_um"].as_f64().unwrap());

    let body = json!({"model": "class_rf", "material": "IN718", "power_w": 300.0, "velocity_m_s": 0.5,
                      "beam_diameter_um": 80.0, "layer_thickness_um": 30.0});
    let (s, v) = call(app, "POST", "/predict", Some(&body.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let p = &v["class_probs"];
    let total: f64 = ["desirable", "keyhole", "lack_of_fusion", "balling"]
        .iter()
        .map(|k| p[k].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[tokio::test]
async fn concurrent_predictions_match_serial() {
    let app = app(models());
    let bodies: Vec<String> = (0..16)
        .map(|i| {
            json!({"model": "depth_rf", "material": "IN625", "power_w": 100.0 + 10.0 * i as f64,
                   "velocity_m_s": 1.0, "beam_diameter_um": 90.0})
            .to_string()
        })
        .collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(call(app.clone(), "POST", "/predict", Some(b)).await.1);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let app = app.clone();
            tokio::spawn(async move { call(app, "POST", "/predict", Some(&b)).await.1 })
        })
        .collect();
    for (h, expect) in handles.into_iter().zip(serial) {
        assert_eq!(h.await.unwrap(), expect);
    }
}

#[tokio::test]
async fn request_errors() {
    let app = app(models());
    let cases = [
        ("{not json", StatusCode::BAD_REQUEST, ""),
        (r#"{"model": "depth_rf", "material": "SS316L", "power_w": "lots", "velocity_m_s": 1}"#, StatusCode::UNPROCESSABLE_ENTITY, "power_w"),
        (r#"{"model": "depth_rf", "material": "SS316L", "power_w": -5, "velocity_m_s": 1, "beam_diameter_um": 90}"#, StatusCode::BAD_REQUEST, "power_w"),
        (r#"{"model": "nope", "material": "SS316L", "power_w": 100, "velocity_m_s": 1}"#, StatusCode::NOT_FOUND, "nope"),
        (r#"{"model": "depth_rf", "material": "Unobtainium", "power_w": 100, "velocity_m_s": 1}"#, StatusCode::NOT_FOUND, "Unobtainium"),
        (r#"{"model": "depth_rf", "material": "SS316L", "power_w": 100, "velocity_m_s": 1}"#, StatusCode::BAD_REQUEST, "beam_diameter"),
    ];
    for (body, status, needle) in cases {
        let (s, v) = call(app.clone(), "POST", "/predict", Some(body)).await;
        assert_eq!(s.as_u16() / 100, 4, "{body}: {s} {v}");
        assert!(s == status || (status == StatusCode::UNPROCESSABLE_ENTITY && s == StatusCode::BAD_REQUEST), "{body}: {s}");
        assert!(v["error"].as_str().unwrap().contains(needle), "{body}: {v}");
    }
}

#[tokio::test]
async fn processmap_matches_library_call() {
    let models = models();
    let pipeline = models["class_rf"].clone();
    let app = app(models);
    let req = json!({"model": "class_rf", "material": "SS316L", "p_range": [50.0, 400.0],
                     "v_range": [0.2, 2.0], "resolution": 9, "fixed": {"layer_thickness_um": 50.0}});
    let (s, v) = call(app.clone(), "POST", "/processmap", Some(&req.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let parsed: ProcessMapRequest = serde_json::from_value(req).unwrap();
    let direct = decision_boundary_grid(&pipeline, &parsed.base_record(), &Registry::bundled(), (50.0, 400.0), (0.2, 2.0), 9).unwrap();
    assert_eq!(v, serde_json::to_value(&direct).unwrap());
    assert_eq!(v["grid"].as_array().unwrap().len(), 9);

    let (s, _) = call(app.clone(), "POST", "/processmap", Some(&json!({"model": "depth_rf", "material": "SS316L",
        "p_range": [50.0, 400.0], "v_range": [0.2, 2.0], "resolution": 4}).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(app, "POST", "/processmap", Some(&json!({"model": "class_rf", "material": "SS316L",
        "p_range": [50.0, 400.0], "v_range": [0.2, 2.0], "resolution": 100000}).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reload_swaps_models_and_refuses_absorptivity2() {
    let dir = tempfile::tempdir().unwrap();
    fit(Target::Depth, ModelKind::Ridge, &[]).save(dir.path().join("first.json")).unwrap();
    let (store, report) = ModelStore::from_dir(dir.path()).unwrap();
    assert_eq!(report.models, vec!["first"]);
    let app = router(AppState {
        registry: Arc::new(Registry::bundled()),
        store: Arc::new(store),
    });

    fit(Target::Depth, ModelKind::Ridge, &[FeatureGroup::Absorptivity2]).save(dir.path().join("leaky.json")).unwrap();
    fit(Target::Length, ModelKind::Ridge, &[]).save(dir.path().join("second.json")).unwrap();
    let (s, v) = call(app.clone(), "POST", "/reload", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["models"], json!(["first", "second"]));
    assert_eq!(v["skipped"][0][0], "leaky");

    let (_, v) = call(app.clone(), "GET", "/models", None).await;
    assert_eq!(v.as_array().unwrap().len(), 2);

    let (s, _) = call(app, "POST", "/predict", Some(r#"{"model": "leaky", "material": "SS316L", "power_w": 100, "velocity_m_s": 1}"#)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn fixed_store_refuses_reload() {
    let (s, v) = call(app(Models::new()), "POST", "/reload", None).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert!(v["error"].as_str().unwrap().contains("model directory"));
}
