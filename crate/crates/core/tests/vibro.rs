use rand::seq::SliceRandom;
use tactile_core::learn::{self, accuracy, Dataset, MlpModel, OutputHead, TrainConfig};
use tactile_core::seed;
use tactile_core::sim::{default_material_profiles, synthesize_shaking, BoxContent, MaterialProfile};
use tactile_core::signal::VibrationTrace;
use tactile_core::vibro::*;
use tactile_core::Error;

fn profile(name: &str, band: usize) -> MaterialProfile {
    let mut gains = [0.0; 8];
    gains[band] = 0.05;
    MaterialProfile {
        name: name.into(),
        band_gains: gains,
        impulse_rate: 0.0,
        impulse_jitter: 0.0,
        impulse_amplitude: 0.0,
    }
}

#[test]
fn orthogonal_band_profiles_are_perfectly_separated() {
    let corpus = material_corpus(&[profile("low", 3), profile("high", 6)], 5, 0.2, 20.0, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..default_material_train_config(1)
    };
    let fit = train_material_classifier(&corpus, &MaterialFeatureConfig::default(), &cfg).unwrap();
    assert_eq!(fit.report.accuracy, 1.0);
}

#[test]
fn random_window_labels_give_chance_accuracy() {
    let features = MaterialFeatureConfig::default();
    let corpus = material_corpus(&default_material_profiles(), 4, 0.4, 20.0, 2).unwrap();
    let mut inputs = Vec::new();
    for traces in &corpus.traces {
        for t in traces {
            for w in extract_material_features(t, &features).unwrap() {
                inputs.extend(w.values);
            }
        }
    }
    let dim = features.feature_dim();
    let n = inputs.len() / dim;
    let mut rng = seed::rng(5);
    let mut labels: Vec<usize> = (0..n).map(|i| i % 7).collect();
    labels.shuffle(&mut rng);
    let data = Dataset::classification(inputs, dim, &labels, 7).unwrap();
    let (train, test) = data.split(0.8, 6).unwrap();
    let init = MlpModel::new(&[dim, 128, 7], OutputHead::Softmax, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 8,
        ..default_material_train_config(8)
    };
    let model = learn::train(&init, &train, &cfg).unwrap().model;
    let acc = accuracy(&model, &test).unwrap();
    assert!((acc - 1.0 / 7.0).abs() <= 0.05, "{acc}");
}

#[test]
fn classifier_needs_two_classes() {
    let corpus = material_corpus(&[profile("only", 4)], 3, 0.1, 20.0, 1).unwrap();
    assert!(matches!(
        train_material_classifier(&corpus, &MaterialFeatureConfig::default(), &default_material_train_config(0)),
        Err(Error::Config(_))
    ));
}

fn small_shake_fit() -> ShakeFit {
    let corpus = shake_corpus(6, 5.6, 0.67, 11).unwrap();
    train_shake_classifier(&corpus, &ShakeFeatureConfig::default(), &default_shake_train_config(11)).unwrap()
}

#[test]
fn shaking_stream_vote_recovers_content() {
    let fit = small_shake_fit();
    assert!(fit.report.accuracy > 0.9, "{:?}", fit.report);
    for c in BoxContent::ALL {
        let trace = synthesize_shaking(c, 5.6, 0.67, 1234 + c.index() as u64).unwrap();
        let vote = classify_stream(&fit.classifier, &trace, DEFAULT_WINDOW_RATE_HZ).unwrap();
        assert_eq!(vote.predictions.len(), 46);
        assert_eq!(vote.counts.iter().sum::<usize>(), 46);
        assert_eq!(vote.final_class, c.index(), "{c:?}: {vote:?}");
    }
}

#[test]
fn stream_rejects_mismatched_model_and_short_trace() {
    let mut clf = small_shake_fit().classifier;
    let short = VibrationTrace::from_f64(&vec![0.0; 10_000], 44_100, 0.0).unwrap();
    assert!(matches!(
        classify_stream(&clf, &short, 10.0),
        Err(Error::InsufficientSamples { .. })
    ));
    clf.model = MlpModel::new(&[10, 3], OutputHead::Softmax, 0).unwrap();
    let trace = synthesize_shaking(BoxContent::Empty, 5.6, 0.67, 1).unwrap();
    assert!(matches!(
        classify_stream(&clf, &trace, 10.0),
        Err(Error::DimensionMismatch { .. })
    ));
}
