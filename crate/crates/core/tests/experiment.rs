use std::fs;
use std::path::Path;

use texgan_core::experiment::*;
use texgan_core::nn::{CriticConfig, GeneratorConfig, PerceptualNetConfig};
use texgan_core::trainer::{NetworkConfig, TrainConfig};
use texgan_core::CoreError;

fn tiny(out: &Path, methods: Vec<Method>, steps: usize) -> ExperimentConfig {
    let desk = ExperimentConfig::desk();
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            n_train: 4,
            n_eval: 2,
            size: 16,
            texture: None,
        },
        acquisition: texgan_core::data::Acquisition {
            n_angles: 30,
            ..desk.acquisition.clone()
        },
        methods,
        networks: NetworkConfig {
            generator: GeneratorConfig {
                depth: 2,
                base_channels: 4,
                ..Default::default()
            },
            critic: CriticConfig {
                depth: 2,
                base_channels: 4,
                ..Default::default()
            },
            perceptual: PerceptualNetConfig {
                layers: 2,
                channels: 4,
                seed: 1,
            },
        },
        mse: TrainConfig {
            steps,
            batch_size: 2,
            ..desk.mse.clone()
        },
        texturewgan: TrainConfig {
            steps,
            batch_size: 2,
            n_critic: 2,
            ..desk.texturewgan.clone()
        },
        output_dir: out.to_path_buf(),
        seed: 4,
        ..desk
    }
}

fn report_methods(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("report.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

#[test]
fn degenerate_config_reports_only_its_methods() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path(), vec![Method::Fbp, Method::Nlm], 0);
    let rows = run_experiment(&config).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(report_methods(dir.path()), ["FBP", "NLM Filter"]);
    assert!(!dir.path().join("train").exists());
    assert!(dir.path().join("eval/fbp/0000.pgm").exists());
    assert!(!dir.path().join("eval/original").exists());
    assert!(!dir.path().join(FAILED_MARKER).exists());
}

#[test]
fn full_method_list_in_config_order() {
    let dir = tempfile::tempdir().unwrap();
    let methods = vec![
        Method::TextureWgan,
        Method::Nlm,
        Method::Original,
        Method::Mse50,
        Method::Fbp,
        Method::Mse100,
    ];
    let config = tiny(dir.path(), methods, 2);
    run_experiment(&config).unwrap();
    assert_eq!(
        report_methods(dir.path()),
        ["TextureWGAN", "NLM Filter", "Original", "MSE 50%", "FBP", "MSE 100%"]
    );
    for model in ["mse", "texturewgan"] {
        let history = fs::read_to_string(dir.path().join("train").join(model).join("history.csv")).unwrap();
        assert!(history.starts_with("step,loss,value\n"));
        assert!(dir.path().join("train").join(model).join("final/state.bin").exists());
    }
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| Original    |   N/A |   N/A |    100.00 |"), "{md}");
}

#[test]
fn stages_run_separately_match_run_all() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let methods = vec![Method::Original, Method::Fbp, Method::Mse100, Method::Mse50];
    run_experiment(&tiny(a.path(), methods.clone(), 2)).unwrap();
    let config = tiny(b.path(), methods, 2);
    simulate_stage(&config).unwrap();
    train_stage(&config, None).unwrap();
    evaluate_stage(&config, None).unwrap();
    report_stage(&config, None).unwrap();
    for file in ["report.csv", "report.md", "eval/metrics.csv", "train/mse/final/state.bin"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = tiny(a.path(), vec![Method::Fbp, Method::Mse100, Method::TextureWgan], 2);
    run_experiment(&config).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), config.sha256());
    assert_eq!(manifest["seed"], 4);
    assert!(manifest["versions"]["texgan"].is_string());
    let mut again = ExperimentConfig::from_path(&a.path().join("manifest.json")).unwrap();
    assert_eq!(again, config);
    again.output_dir = b.path().to_path_buf();
    run_experiment(&again).unwrap();
    for file in [
        "report.csv",
        "eval/metrics.csv",
        "train/mse/history.csv",
        "train/texturewgan/history.csv",
        "train/texturewgan/final/state.bin",
        "train/texturewgan/final/state.manifest",
    ] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn missing_inputs_fail_with_stage_and_marker() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path(), vec![Method::Fbp], 0);
    let err = evaluate_stage(&config, None).unwrap_err();
    assert!(matches!(err, CoreError::Stage { stage: "evaluate", .. }), "{err}");
    let marker = fs::read_to_string(dir.path().join(FAILED_MARKER)).unwrap();
    assert!(marker.contains("evaluate"), "{marker}");
}

#[test]
fn missing_dataset_directory_fails_in_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        dataset: DatasetSource::Directory {
            path: dir.path().join("nowhere"),
        },
        ..tiny(dir.path(), vec![Method::Fbp], 0)
    };
    let err = run_experiment(&config).unwrap_err();
    assert!(matches!(err, CoreError::Stage { stage: "simulate", .. }), "{err}");
    assert!(dir.path().join(FAILED_MARKER).exists());
}

#[test]
fn successful_rerun_clears_the_marker() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(FAILED_MARKER), "stage `train` failed\n").unwrap();
    run_experiment(&tiny(dir.path(), vec![Method::Fbp], 0)).unwrap();
    assert!(!dir.path().join(FAILED_MARKER).exists());
}

#[test]
fn directory_dataset_uses_given_images() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let simulated = tiny(src.path(), vec![Method::Fbp], 0);
    simulate_stage(&simulated).unwrap();
    let config = ExperimentConfig {
        dataset: DatasetSource::Directory {
            path: src.path().join("data"),
        },
        ..tiny(out.path(), vec![Method::Original, Method::Fbp], 0)
    };
    run_experiment(&config).unwrap();
    let a = load_dataset(src.path(), texgan_core::data::Split::Eval).unwrap();
    let b = load_dataset(out.path(), texgan_core::data::Split::Eval).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_method_lists_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny(dir.path(), vec![], 0).validate().is_err());
    assert!(tiny(dir.path(), vec![Method::Fbp, Method::Fbp], 0).validate().is_err());
    assert!("unet".parse::<Method>().is_err());
}

#[test]
fn config_json_round_trips() {
    let config = ExperimentConfig::desk();
    let back: ExperimentConfig = serde_json::from_str(&config.to_json()).unwrap();
    assert_eq!(back, config);
    let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 7, "methods": ["fbp", "nlm"]}"#).unwrap();
    assert_eq!(partial.seed, 7);
    assert_eq!(partial.methods, [Method::Fbp, Method::Nlm]);
}

#[test]
fn warm_start_begins_from_the_mse_generator() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny(dir.path(), vec![Method::Original, Method::TextureWgan], 3);
    config.warm_start = false;
    assert_eq!(config.models(), vec![Model::TextureWgan]);
    config.warm_start = true;
    assert_eq!(config.models(), vec![Model::Mse, Model::TextureWgan]);
    config.texturewgan.steps = 0;
    train_stage(&config, None).unwrap_err();
    let (train, _) = simulate_stage(&config).unwrap();
    train_stage(&config, Some(&train)).unwrap();
    let load = |m: &str| texgan_core::trainer::load_checkpoint(&dir.path().join("train").join(m).join("final")).unwrap().0;
    let (mse, adv) = (load("mse"), load("texturewgan"));
    assert_eq!(mse.generator, adv.generator);
    assert_ne!(mse.seed, adv.seed);
}
