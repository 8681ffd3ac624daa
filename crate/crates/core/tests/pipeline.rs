use tempfile::TempDir;
use wic_core::data::{load_dataset, median_label, mean_pairwise_disagreement, write_instances, write_usages};
use wic_core::features::{feature_matrix, FeatureKind};
use wic_core::gbdt::{Ensemble, GbdtConfig, GbdtModel};
use wic_core::neural::checkpoint::round_to_f32;
use wic_core::neural::{fit, predict, read_checkpoint, write_checkpoint, Architecture, CheckpointHeader, NetworkSpec, TrainConfig};
use wic_core::store::{join, read_store, write_store};
use wic_core::synthetic::corpus;
use wic_core::Task;

#[test]
fn corpus_survives_disk_and_join() {
    let dir = TempDir::new().unwrap();
    for task in [Task::Ogwic, Task::Diswic] {
        let c = corpus(task, 60, 6, 3).unwrap();
        let (u, i, s) = (dir.path().join("u.tsv"), dir.path().join("i.tsv"), dir.path().join("s.wice"));
        write_usages(&u, &c.usages).unwrap();
        write_instances(&i, &c.instances).unwrap();
        write_store(&c.records, &s).unwrap();

        let dataset = load_dataset(&u, &i).unwrap();
        let store = read_store(&s).unwrap();
        let split = join(&dataset, &store, task).unwrap();
        assert_eq!(split.len(), 60);
        for (k, inst) in c.instances.iter().enumerate() {
            assert_eq!(split.ids[k], inst.instance_id);
            let want = match task {
                Task::Ogwic => median_label(&inst.ratings).unwrap().map(f64::from),
                Task::Diswic => Some(mean_pairwise_disagreement(&inst.ratings).unwrap()),
            };
            assert_eq!(split.targets[k], want);
            let rec = store.get(&inst.instance_id).unwrap();
            assert!(rec.e1.iter().zip(split.e1.row(k)).all(|(&a, &b)| f64::from(a) == b));
        }
    }
}

#[test]
fn checkpoint_predictions_match_rounded_network() {
    let split = wic_core::synthetic::ogwic_split(120, 8, 5).unwrap();
    let config = TrainConfig {
        epochs: 2,
        hidden: vec![16],
        bottleneck: 4,
        seed: 1,
        ..Default::default()
    };
    let spec = NetworkSpec::for_task(Architecture::Adapter, Task::Ogwic, 8, &config);
    let (net, log) = fit(spec.clone(), Task::Ogwic, &split, None, &config).unwrap();
    assert_eq!(log.len(), 2);

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.wicm");
    let header = CheckpointHeader {
        task: Task::Ogwic,
        spec,
        train: config,
    };
    write_checkpoint(&path, &header, &net).unwrap();
    let (back_header, back) = read_checkpoint(&path).unwrap();
    assert_eq!(back_header, header);
    let mut rounded = net.clone();
    round_to_f32(&mut rounded);
    assert_eq!(
        predict(&back, Task::Ogwic, &split.e1, &split.e2).unwrap(),
        predict(&rounded, Task::Ogwic, &split.e1, &split.e2).unwrap()
    );
}

#[test]
fn ensemble_files_round_trip() {
    let split = wic_core::synthetic::diswic_split(80, 4, 2).unwrap();
    let x = feature_matrix(FeatureKind::Enriched, &split.e1, &split.e2).unwrap();
    let y = split.labeled_targets().unwrap();
    let config = GbdtConfig {
        n_rounds: 25,
        max_depth: 3,
        seed: 4,
        ..Default::default()
    };
    let ensemble = Ensemble::fit(&x, &y, Task::Diswic, &config).unwrap();
    let dir = TempDir::new().unwrap();
    let (c, xp) = (dir.path().join("c.wict"), dir.path().join("x.wict"));
    ensemble.c.write(&c).unwrap();
    ensemble.x.write(&xp).unwrap();
    let back = Ensemble {
        c: GbdtModel::read(&c).unwrap(),
        x: GbdtModel::read(&xp).unwrap(),
    };
    assert_eq!(back, ensemble);
    assert_eq!(back.predict(&x).unwrap(), ensemble.predict(&x).unwrap());
}
