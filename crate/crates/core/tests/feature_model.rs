use bss_core::featuremodel::{
    enumerate_products, rank_products, FeatureModel, Measurement, RankWeights,
};
use bss_core::rng::keyed;
use rand::Rng;

fn measured(rng: &mut rand_chacha::ChaCha8Rng) -> FeatureModel {
    let mut m = FeatureModel::status(
        rng.random_range(1.0..200.0),
        rng.random_range(1.0..200.0),
        rng.random_range(1.0..200.0),
    );
    for f in m.features.iter_mut().filter(|f| f.predictive.is_some()) {
        f.measurement = Some(Measurement {
            accuracy: rng.random_range(0.0..1.0),
            mae_seconds: rng.random_range(0.0..3600.0),
            report_id: format!("r-{}", f.name),
        });
    }
    m
}

fn labels(model: &FeatureModel, w: &RankWeights) -> Vec<String> {
    let products = enumerate_products(model).unwrap();
    rank_products(&products, w)
        .unwrap()
        .iter()
        .map(|p| p.label())
        .collect()
}

#[test]
fn ranking_survives_weight_rescaling() {
    let mut rng = keyed(17, &[1]);
    for case in 0..500 {
        let model = measured(&mut rng);
        let w = RankWeights {
            accuracy: rng.random_range(0.0..5.0),
            mae: rng.random_range(0.0..5.0),
            cost: rng.random_range(0.01..5.0),
            mae_horizon: 1800.0,
        };
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = RankWeights {
            accuracy: w.accuracy * c,
            mae: w.mae * c,
            cost: w.cost * c,
            ..w
        };
        assert_eq!(labels(&model, &w), labels(&model, &scaled), "case {case}");
    }
}

#[test]
fn every_product_contains_the_mandatory_feature_once() {
    let mut rng = keyed(18, &[1]);
    let products = enumerate_products(&measured(&mut rng)).unwrap();
    assert_eq!(products.len(), 4);
    for p in &products {
        let n = p
            .selected_features
            .iter()
            .filter(|f| *f == "AllBikesNow")
            .count();
        assert_eq!(n, 1);
    }
}
