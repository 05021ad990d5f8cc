use std::sync::OnceLock;

use infpos::channel::{ClutterConfig, FactoryRealization};
use infpos::config::SimConfig;
use infpos::dataset::{generate_dataset, grid_positions, random_positions, select_bs, split_test, Dataset};
use infpos::eval::{build_report, quantile, summary_csv, ErrorReport, ReportMeta, SummaryRow};
use infpos::experiment::{self, spread_bs, ExperimentKind, ExperimentSpec, Scale};
use infpos::fading::SignalType;
use infpos::Error;
use proptest::prelude::*;

fn pg_dataset(seed: u64, spacing: f64) -> (FactoryRealization, Dataset) {
    let f = FactoryRealization::new(&SimConfig::default().with_seed(seed)).unwrap();
    let d = generate_dataset(&f, &grid_positions(f.topology(), spacing).unwrap(), SignalType::Pg).unwrap();
    (f, d)
}

fn small_pg() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| pg_dataset(7, 12.0).1)
}

#[test]
fn dataset_file_round_trip() {
    let (_, d) = pg_dataset(3, 4.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.infds");
    d.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, d);
    assert_eq!(back.content_hash(), d.content_hash());
    assert_eq!(std::fs::read(&path).unwrap(), d.to_bytes());

    let mut bytes = d.to_bytes();
    bytes.truncate(bytes.len() - 3);
    assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
    assert!(Dataset::load(dir.path().join("missing.infds")).is_err());
}

#[test]
fn cir_dataset_layout() {
    let f = FactoryRealization::new(&SimConfig::default().with_seed(2)).unwrap();
    let positions = random_positions(f.topology(), 5, 1).unwrap();
    let d = generate_dataset(&f, &positions, SignalType::Cir).unwrap();
    assert_eq!(d.header().feature_len(), 2 * 18 * 256);
    assert_eq!(d.features().len(), 5 * 2 * 18 * 256);
    // Power of BS 4's block matches the PG of that link.
    let row = d.feature(2);
    let block = &row[4 * 512..5 * 512];
    let power: f64 = block.iter().map(|&v| (v as f64).powi(2)).sum();
    let pg = f.path_gain_db(4, positions[2]).unwrap();
    assert!((10.0 * power.log10() - pg).abs() < 1e-5);
}

#[test]
fn factories_differ_by_seed_and_clutter() {
    let (_, a) = pg_dataset(1, 6.0);
    let (_, b) = pg_dataset(2, 6.0);
    assert_ne!(a.features(), b.features());
    let f = FactoryRealization::new(&SimConfig::default().with_seed(1).with_clutter(ClutterConfig::SPARSE)).unwrap();
    let c = generate_dataset(&f, &grid_positions(f.topology(), 6.0).unwrap(), SignalType::Pg).unwrap();
    assert_ne!(a.features(), c.features());
    assert_eq!(a.labels(), c.labels());
}

#[test]
fn test_split_is_seeded_and_disjoint() {
    let (f, train) = pg_dataset(5, 2.0);
    let grid = grid_positions(f.topology(), 2.0).unwrap();
    let t1 = split_test(&f, SignalType::Pg, 300, 9, &grid).unwrap();
    let t2 = split_test(&f, SignalType::Pg, 300, 9, &grid).unwrap();
    assert_eq!(t1, t2);
    for l in t1.labels() {
        assert!(train.labels().iter().all(|g| (g[0] - l[0]).hypot(g[1] - l[1]) >= 1e-3 * 0.999));
    }
}

#[test]
fn spec_defaults_and_parsing() {
    let spec = ExperimentSpec::parse("kind=bs_sweep\n").unwrap();
    assert_eq!(spec.scale, Scale::Desk);
    assert_eq!(spec.sizes, vec![1800]);
    assert_eq!(spec.pg_bs_counts, vec![18, 12, 8, 6, 4, 2]);
    assert_eq!(spec.cir_bs_counts, vec![18, 8, 4, 1]);

    let spec = ExperimentSpec::parse("kind=size_sweep\nsizes=100,400\npg_epochs=3\npg_min_steps=0\nseed=4\n").unwrap();
    assert_eq!(spec.sizes, vec![100, 400]);
    assert_eq!(spec.pg_train.epochs, 3);
    assert_eq!(spec.pg_train.min_steps, 0);
    assert_eq!(spec.sim.seed, 4);

    assert!(ExperimentSpec::parse("kind=bs_sweep\nbogus=1\n").is_err());
    assert!(ExperimentSpec::parse("kind=nope\n").is_err());
    assert!(ExperimentSpec::parse("sizes=10\n").is_err());
    assert!(ExperimentSpec::parse("kind=bs_sweep\npg_bs_counts=19\n").is_err());
    assert!(ExperimentSpec::parse("kind=generalization\nseed=2\ntest_seed=2\n").is_err());
    assert!(ExperimentSpec::parse("kind=size_sweep\nsizes=0\n").is_err());
    let full = ExperimentSpec::new(ExperimentKind::SizeSweep, Scale::Full);
    assert_eq!(full.sizes, vec![1700, 7200, 28800, 80000]);
}

#[test]
fn spread_bs_covers_the_deployment() {
    assert_eq!(spread_bs(18, 18), (0..18).collect::<Vec<_>>());
    assert_eq!(spread_bs(18, 4), vec![0, 4, 9, 13]);
    assert_eq!(spread_bs(18, 1), vec![0]);
}

fn tiny_spec(kind: &str) -> ExperimentSpec {
    ExperimentSpec::parse(&format!(
        "kind={kind}\nsizes=200\nn_test=60\nsignals=pg\npg_epochs=3\npg_min_steps=0\nfinetune_epochs=2\nfinetune_size=50\npg_bs_counts=18,4\n"
    ))
    .unwrap()
}

#[test]
fn experiments_are_byte_reproducible() {
    for kind in ["signal_compare", "bs_sweep", "generalization", "finetune"] {
        let spec = tiny_spec(kind);
        let a = experiment::run(&spec).unwrap();
        let b = experiment::run(&spec).unwrap();
        assert_eq!(a.files(), b.files(), "{kind}");
        let names: Vec<String> = a.files().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"summary.csv".to_string()));
        assert_eq!(names.len(), a.legs.len() + 1);
    }
}

#[test]
fn experiment_tables_land_on_disk() {
    let spec = tiny_spec("bs_sweep");
    let r = experiment::run(&spec).unwrap();
    assert!(r.q90("pg_bs18").is_some() && r.q90("pg_bs4").is_some());
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("experiment,param,q90\nbs_sweep,pg_bs18,"));
    let cdf = std::fs::read_to_string(dir.path().join("cdf_pg_bs4.csv")).unwrap();
    assert!(cdf.starts_with("# experiment=bs_sweep\n"));
    assert_eq!(cdf.lines().filter(|l| !l.starts_with('#')).count(), 61);
}

#[test]
fn summary_lists_lineage_then_rows() {
    let meta = ReportMeta { experiment: "x".into(), factory_seed: 3, training_seed: 4, ..Default::default() };
    let r = ErrorReport::from_errors(vec![1.0, 2.0], meta).unwrap();
    let csv = summary_csv(&[SummaryRow::new("a", &r), SummaryRow::new("b", &r)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# x a: factory_seed=3 training_seed=4"));
    assert_eq!(lines[2], "experiment,param,q90");
    assert_eq!(lines[3], "x,a,1.900000");
    assert!(ErrorReport::from_errors(vec![1.0, f64::NAN], ReportMeta::default()).is_err());
}

proptest! {
    #[test]
    fn quantile_is_monotone_and_bounded(
        errors in prop::collection::vec(0.0f64..500.0, 1..200),
        q1 in 0.0f64..=1.0,
        q2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = quantile(&errors, lo).unwrap();
        let b = quantile(&errors, hi).unwrap();
        prop_assert!(a <= b);
        let min = errors.iter().cloned().fold(f64::MAX, f64::min);
        let max = errors.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(a >= min && b <= max);
        prop_assert_eq!(quantile(&errors, 0.0).unwrap(), min);
        prop_assert_eq!(quantile(&errors, 1.0).unwrap(), max);
    }

    #[test]
    fn report_is_permutation_invariant(errors in prop::collection::vec(0.0f64..100.0, 1..100), rot in 0usize..100) {
        let mut shuffled = errors.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let a = ErrorReport::from_errors(errors, ReportMeta::default()).unwrap();
        let b = ErrorReport::from_errors(shuffled, ReportMeta::default()).unwrap();
        prop_assert_eq!(a.q90, b.q90);
        prop_assert_eq!(&a.cdf, &b.cdf);
        // The interpolated q90 sits at or above sorted index floor(0.9 (n - 1)).
        let n = a.sorted.len();
        let at_least = ((0.9 * (n - 1) as f64).floor() + 1.0) / n as f64;
        prop_assert!(a.cdf_at(a.q90) >= at_least - 1e-12);
        prop_assert!(a.cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn errors_follow_the_distance_metric(
        pts in prop::collection::vec((0.0f32..120.0, 0.0f32..60.0, -5.0f64..5.0, -5.0f64..5.0), 1..50),
    ) {
        let labels: Vec<[f32; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let preds: Vec<[f64; 2]> = pts.iter().map(|p| [p.0 as f64 + p.2, p.1 as f64 + p.3]).collect();
        let r = build_report(&preds, &labels, ReportMeta::default()).unwrap();
        for (e, p) in r.errors.iter().zip(&pts) {
            prop_assert!((e - p.2.hypot(p.3)).abs() < 1e-9);
        }
    }

    #[test]
    fn select_bs_picks_columns(ids in prop::sample::subsequence((0..18usize).collect::<Vec<_>>(), 1..18)) {
        let d = small_pg();
        let s = select_bs(&d, &ids).unwrap();
        prop_assert_eq!(s.n_bs(), ids.len());
        prop_assert_eq!(s.header().bs_ids(), ids.clone());
        for i in 0..d.len() {
            let expect: Vec<f32> = ids.iter().map(|&b| d.feature(i)[b]).collect();
            prop_assert_eq!(s.feature(i), &expect[..]);
        }
        prop_assert_eq!(s.labels(), d.labels());
    }
}
