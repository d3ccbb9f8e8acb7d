use extrema_dp::harness::{generate_dataset, ExperimentConfig};
use extrema_dp::{cv_choose_r, substream, BudgetHandling, CvConfig, Dataset, Epsilon, Error};

fn dataset(model: &str, n: usize, truth: &str, seed: u64) -> Dataset {
    let cfg = ExperimentConfig::from_toml(&format!(
        "model = \"{model}\"\nn = {n}\nepsilon = 1.5\nmethods = [\"cv\"]\nseed = {seed}\n[truth]\n{truth}\n"
    ))
    .unwrap();
    generate_dataset(&cfg, &mut substream(seed, &[0]), None).unwrap()
}

fn gaussian(seed: u64) -> Dataset {
    dataset("gaussian", 400, "mean = [0.0, 0.2, 0.1]", seed)
}

#[test]
fn chosen_r_is_in_grid_and_deterministic() {
    let cfg = CvConfig::default();
    for seed in 0..5 {
        let data = gaussian(seed);
        let eps = Epsilon::new(1.5).unwrap();
        let a = cv_choose_r(&data, eps, None, &cfg, &mut substream(seed, &[1])).unwrap();
        let b = cv_choose_r(&data, eps, None, &cfg, &mut substream(seed, &[1])).unwrap();
        assert!(cfg.grid.contains(&a.chosen_r));
        assert_eq!(cfg.grid[a.chosen_index], a.chosen_r);
        assert_eq!(a.chosen_r, b.chosen_r);
        assert_eq!(a.criteria, b.criteria);
        assert_eq!(a.scores.len(), 4);
        assert_eq!(a.scores[0].len(), 5);
        assert_eq!(a.scores[0][0].len(), 3);
        let best = a.criteria.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(a.criteria[a.chosen_index], best);
    }
}

#[test]
fn criterion_is_min_over_coordinates_of_fold_mean() {
    let data = gaussian(9);
    let res = cv_choose_r(&data, Epsilon::new(2.0).unwrap(), None, &CvConfig::default(), &mut substream(9, &[1])).unwrap();
    for (l, per_fold) in res.scores.iter().enumerate() {
        let v = per_fold.len() as f64;
        let want = (0..3).map(|i| per_fold.iter().map(|h| h[i]).sum::<f64>() / v).fold(f64::INFINITY, f64::min);
        assert_eq!(res.criteria[l], want);
        for (j, fold) in res.folds.iter().enumerate() {
            for (i, got) in per_fold[j].iter().enumerate() {
                let h = (fold.reduced[l] - fold.reference_beta[i]).powi(2) - fold.reference_se[i].powi(2);
                assert_eq!(*got, h);
            }
        }
    }
}

#[test]
fn single_grid_value_is_returned() {
    let cfg = CvConfig { grid: vec![0.1], ..CvConfig::default() };
    let res = cv_choose_r(&gaussian(2), Epsilon::new(1.0).unwrap(), None, &cfg, &mut substream(2, &[1])).unwrap();
    assert_eq!(res.chosen_r, 0.1);
    assert_eq!(res.chosen_index, 0);
}

#[test]
fn duplicate_grid_values_tie_to_later_index() {
    let cfg = CvConfig { grid: vec![0.05, 0.1, 0.1], ..CvConfig::default() };
    let res = cv_choose_r(&gaussian(3), Epsilon::new(1.0).unwrap(), None, &cfg, &mut substream(3, &[1])).unwrap();
    assert_eq!(res.criteria[1], res.criteria[2]);
    if res.chosen_r == 0.1 {
        assert_eq!(res.chosen_index, 2);
    }
}

#[test]
fn ledger_reports_both_views() {
    let eps = Epsilon::new(1.5).unwrap();
    let cfg = CvConfig { budget_handling: BudgetHandling::Sequential, ..CvConfig::default() };
    let res = cv_choose_r(&gaussian(4), eps, None, &cfg, &mut substream(4, &[1])).unwrap();
    assert!((res.parallel_total - 1.5).abs() < 1e-12);
    assert!((res.sequential_total - 15.0).abs() < 1e-12);
    assert_eq!(res.reported_total(), res.sequential_total);
    assert_eq!(res.ledger.charges().len(), 20);

    let res = cv_choose_r(&gaussian(4), Epsilon::INFINITE, None, &CvConfig::default(), &mut substream(4, &[1])).unwrap();
    assert_eq!(res.sequential_total, 0.0);
    assert_eq!(res.reported_total(), 0.0);
}

// Reference folds hold n/5 rows, so the Gram noise needs n large enough that
// every fold's noisy Gram matrix stays repairable.
#[test]
fn works_for_regression_models() {
    let eps = Epsilon::new(3.0).unwrap();
    let cfg = CvConfig::default();
    let reg = dataset("regression", 2000, "beta = [0.0, 0.5]", 5);
    let res = cv_choose_r(&reg, eps, None, &cfg, &mut substream(5, &[1])).unwrap();
    assert!(cfg.grid.contains(&res.chosen_r));
    let partial = dataset("partial_regression", 2000, "beta = [0.0, 0.5]\ngamma = [0.3, -0.3, 1.0]", 6);
    let res = cv_choose_r(&partial, eps, None, &cfg, &mut substream(6, &[1])).unwrap();
    assert!(cfg.grid.contains(&res.chosen_r));
    assert!(res.ledger.charges().iter().any(|c| c.statistic_id.ends_with("gram_zz")));
}

#[test]
fn rejects_bad_inputs() {
    let eps = Epsilon::new(1.0).unwrap();
    let data = gaussian(7);
    let bad = CvConfig { folds: 1, ..CvConfig::default() };
    assert!(matches!(cv_choose_r(&data, eps, None, &bad, &mut substream(7, &[])), Err(Error::Parameter(_))));
    let bad = CvConfig { grid: vec![], ..CvConfig::default() };
    assert!(cv_choose_r(&data, eps, None, &bad, &mut substream(7, &[])).is_err());
    let tiny = data.subset(&[0, 1, 2, 3, 4, 5, 6]).unwrap();
    assert!(cv_choose_r(&tiny, eps, None, &CvConfig::default(), &mut substream(7, &[])).is_err());
}
