mod common;

use flowclass_core::dataset::LabelCodec;
use flowclass_core::model_file::ModelFile;
use flowclass_core::pipeline::{fit_pipeline, ModelConfig, ModelKind};
use flowclass_core::{Error, Matrix};
use rand::Rng;

fn random_inputs(seed: u64) -> Matrix {
    let mut r = common::rng(seed);
    Matrix::from_vec(
        1000,
        12,
        (0..12_000).map(|_| r.random_range(-4.0..10.0)).collect(),
    )
    .unwrap()
}

#[test]
fn round_trip_predicts_bit_identically() {
    let data = common::blob_dataset(40, 4, 5.0, 3);
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let inputs = random_inputs(77);
    for kind in [ModelKind::Dnn, ModelKind::Knn, ModelKind::Svm] {
        let mut config = ModelConfig {
            kind,
            top_k: Some(8),
            ..Default::default()
        };
        config.training.epochs = 3;
        config.training.batch_size = 32;
        config.extra_trees.n_trees = 10;
        let (pipeline, _) = fit_pipeline(&data, &codec, &config).unwrap();
        let file = ModelFile::new(pipeline.clone(), &config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        file.save(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(loaded, file);
        let before = pipeline.predict(&inputs).unwrap();
        let after = loaded.pipeline().predict(&inputs).unwrap();
        assert_eq!(before.classes, after.classes);
        match (before.probabilities, after.probabilities) {
            (Some(a), Some(b)) => {
                let bits =
                    |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&a), bits(&b));
            }
            (None, None) => assert_ne!(kind, ModelKind::Dnn),
            _ => panic!("probability presence changed"),
        }
        // saving the reloaded file reproduces the same bytes
        let again = dir.path().join("again.json");
        loaded.save(&again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }
}

#[test]
fn corrupt_files_report_format_errors() {
    let data = common::blob_dataset(10, 2, 5.0, 3);
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let config = ModelConfig {
        kind: ModelKind::Knn,
        ..Default::default()
    };
    let (pipeline, _) = fit_pipeline(&data, &codec, &config).unwrap();
    let text = ModelFile::new(pipeline, &config).to_text().unwrap();
    let wrong_version = text.replacen("\"format_version\": 1", "\"format_version\": 7", 1);
    assert!(matches!(
        ModelFile::from_text(&wrong_version),
        Err(Error::Format {
            version: Some(7),
            ..
        })
    ));
    let truncated = &text[..text.len() / 2];
    assert!(matches!(
        ModelFile::from_text(truncated),
        Err(Error::Format { .. })
    ));
    let wrong_kind = text.replacen("\"kind\": \"knn\"", "\"kind\": \"svm\"", 1);
    assert!(matches!(
        ModelFile::from_text(&wrong_kind),
        Err(Error::Format { .. })
    ));
}
