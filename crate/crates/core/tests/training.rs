use twu_core::filterbank::BankMode;
use twu_core::trainer::checkpoint;
use twu_core::trainer::{
    evaluate, run_experiment, to_csv, train, ExperimentSpec, SitePolicy, SyntheticDataset, TrainConfig,
};

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs,
        batch_size: 4,
        alpha: 1.0,
        seed: 3,
        folds: 1,
        channels: 4,
    }
}

fn policies() -> [SitePolicy; 3] {
    [
        SitePolicy::baseline(),
        SitePolicy::wavelet(BankMode::Lattice, 4),
        SitePolicy::wavelet(BankMode::Free, 4),
    ]
}

#[test]
fn sixteen_samples_are_memorized() {
    let data = SyntheticDataset::generate(16, 1).unwrap();
    for policy in policies() {
        let out = train(&small_config(200), &data, None, policy).unwrap();
        let last = out.trace.iter().rev().find(|r| r.split == "train").unwrap();
        assert_eq!(last.epoch, 200);
        assert_eq!(last.accuracy, 1.0, "{policy:?}");
    }
}

#[test]
fn identical_seeds_give_identical_csv() {
    let spec = ExperimentSpec {
        pool_size: 20,
        test_size: 10,
        ..ExperimentSpec::default()
    };
    let mut config = small_config(3);
    config.folds = 2;
    for policy in policies() {
        let a = to_csv(&run_experiment(&config, &spec, policy).unwrap().trace);
        let b = to_csv(&run_experiment(&config, &spec, policy).unwrap().trace);
        assert_eq!(a.as_bytes(), b.as_bytes());
        config.seed += 1;
        let c = to_csv(&run_experiment(&config, &spec, policy).unwrap().trace);
        assert_ne!(a, c);
    }
}

#[test]
fn lattice_units_stay_orthogonal_while_training() {
    let data = SyntheticDataset::generate(20, 4).unwrap();
    let out = train(&small_config(15), &data, None, SitePolicy::wavelet(BankMode::Lattice, 8)).unwrap();
    assert!(!out.trace.is_empty());
    for row in &out.trace {
        assert!(row.pr_loss_sum < 1e-12, "epoch {}: {}", row.epoch, row.pr_loss_sum);
    }
}

#[test]
fn trained_models_survive_a_checkpoint() {
    let data = SyntheticDataset::generate(20, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for policy in policies() {
        let out = train(&small_config(2), &data, None, policy).unwrap();
        let model = &out.folds[0].model;
        let path = dir.path().join("model.twu");
        checkpoint::save(model, &path).unwrap();
        let loaded = checkpoint::load(&path).unwrap();
        assert_eq!(&loaded, model);
        assert_eq!(evaluate(&loaded, &data).unwrap(), evaluate(model, &data).unwrap());
    }
}

#[test]
fn confusion_counts_cover_the_dataset() {
    let data = SyntheticDataset::generate(30, 6).unwrap();
    let out = train(&small_config(1), &data, None, SitePolicy::baseline()).unwrap();
    let report = evaluate(&out.folds[0].model, &data).unwrap();
    let total: usize = report.confusion.iter().flatten().sum();
    assert_eq!(total, 30);
    assert_eq!(report.total, 30);
}
