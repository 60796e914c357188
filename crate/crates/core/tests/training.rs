use drc::augment::AugmentSpec;
use drc::data::{gen_blobs, BlobsSpec, Dataset};
use drc::model::ClusterModel;
use drc::train::{train, TrainConfig};
use drc::Error;

fn blobs() -> Dataset {
    gen_blobs(&BlobsSpec::default()).unwrap().standardized()
}

#[test]
fn loss_decreases_over_first_epochs_without_cr() {
    let data = blobs();
    let mut decreasing = 0;
    for seed in 0..5 {
        let mut model = ClusterModel::init(&[16, 64, 4], seed).unwrap();
        let cfg = TrainConfig {
            lambda: 0.0,
            epochs: 10,
            seed,
            ..Default::default()
        };
        let h = train(&mut model, &data, &cfg, &AugmentSpec::gaussian(0.5, seed)).unwrap();
        let totals: Vec<f64> = h.records.iter().map(|r| r.losses.total).collect();
        if totals.windows(2).all(|w| w[1] < w[0]) {
            decreasing += 1;
        }
    }
    assert!(
        decreasing >= 4,
        "only {decreasing}/5 seeds decreased monotonically"
    );
}

#[test]
fn identical_inputs_give_identical_parameters() {
    let data = gen_blobs(&BlobsSpec {
        n_per: 100,
        ..Default::default()
    })
    .unwrap()
    .standardized();
    let run = || {
        let mut model = ClusterModel::init(&[16, 32, 4], 9).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 64,
            seed: 9,
            ..Default::default()
        };
        train(&mut model, &data, &cfg, &AugmentSpec::gaussian(0.5, 1)).unwrap();
        model
    };
    let (a, b) = (run(), run());
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        let bits = |t: &drc::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&la.weight), bits(&lb.weight));
        assert_eq!(bits(&la.bias), bits(&lb.bias));
    }
}

#[test]
fn non_finite_input_aborts_with_location() {
    let mut data = gen_blobs(&BlobsSpec {
        n_per: 20,
        d: 4,
        ..Default::default()
    })
    .unwrap();
    data.x.data_mut()[5] = f64::NAN;
    let mut model = ClusterModel::init(&[4, 4], 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 80,
        ..Default::default()
    };
    let err = train(&mut model, &data, &cfg, &AugmentSpec::gaussian(0.0, 0)).unwrap_err();
    match err {
        Error::Contract(m) => assert!(m.contains("epoch 1, batch 0"), "{m}"),
        other => panic!("unexpected {other}"),
    }
}
