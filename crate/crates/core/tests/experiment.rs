use std::time::Duration;

use ccsaa::data::synthetic_instance;
use ccsaa::experiment::{
    aggregate, run_experiment, sweep_w, validate, write_aggregate_csv, write_plot_data, write_raw_csv,
    ExperimentConfig, RowStatus, AGGREGATE_COLUMNS,
};
use ccsaa::gaussian::sample_scenarios;
use ccsaa::heuristics::Method;
use ccsaa::saa::{certify, evaluate_outcomes};

fn cfg(methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig { methods, sizes: vec![500, 700], trials: 3, test_set_size: 5000, ..Default::default() }
}

fn without_wall_time(text: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let col = r.headers().unwrap().iter().position(|h| h == "wall_time").unwrap();
    r.records().map(|rec| rec.unwrap().iter().enumerate().filter(|(i, _)| *i != col).map(|(_, v)| v).collect()).collect()
}

#[test]
fn rows_are_certified_and_sorted() {
    let inst = synthetic_instance(5, 3).unwrap();
    let c = cfg(vec![Method::Asm3, Method::Full, Method::GrP, Method::Asm1, Method::Socp]);
    let rows = run_experiment(&inst, &c).unwrap();
    assert_eq!(rows.len(), 5 * 2 * 3);
    let keys: Vec<_> = rows.iter().map(|r| (r.method, r.n_scenarios, r.trial)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let spec = inst.program();
    for r in &rows {
        assert_eq!(r.status, RowStatus::Ok);
        assert_eq!(r.seed, c.train_seed(r.trial));
        let train = sample_scenarios(&inst.model, r.n_scenarios, r.seed).unwrap();
        let count = evaluate_outcomes(&r.x, &train, &spec).unwrap().violation_count;
        assert_eq!(count, r.train_violations);
        if r.method != Method::Socp {
            let budget = ccsaa::experiment::budget_for(&inst, r.n_scenarios).unwrap();
            assert!(certify(&r.x, &train, &budget, &spec).unwrap(), "{:?}", r.method);
        }
        let v = validate(&r.x, &inst, c.test_set_size, c.test_seed(r.trial)).unwrap();
        assert_eq!(v.rate, r.test_violation_rate);
        assert!(v.upper_limit >= v.rate);
    }
    // The same training set is shared, so polishing never loses to its start.
    for a in rows.iter().filter(|r| r.method == Method::Asm1) {
        let b = rows.iter().find(|r| r.method == Method::Asm3 && r.n_scenarios == a.n_scenarios && r.trial == a.trial).unwrap();
        assert!(b.objective >= a.objective - 1e-12);
        assert!(b.lp_solves >= a.lp_solves);
    }
}

#[test]
fn output_is_reproducible_across_workers() {
    let inst = synthetic_instance(5, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for jobs in [1, 2, 1] {
        let c = ExperimentConfig { jobs, ..cfg(vec![Method::Asm1, Method::RaP, Method::Pnd]) };
        let path = dir.path().join(format!("raw{jobs}.csv"));
        write_raw_csv(&run_experiment(&inst, &c).unwrap(), &path).unwrap();
        texts.push(std::fs::read_to_string(path).unwrap());
    }
    assert_eq!(without_wall_time(&texts[0]), without_wall_time(&texts[1]));
    assert_eq!(without_wall_time(&texts[0]), without_wall_time(&texts[2]));
}

#[test]
fn time_limited_rows_are_excluded_from_means() {
    let inst = synthetic_instance(5, 5).unwrap();
    let mut c = cfg(vec![Method::Asm1, Method::Asm2]);
    c.time_limit = Some(Duration::ZERO);
    let rows = run_experiment(&inst, &c).unwrap();
    assert!(rows.iter().all(|r| r.status == RowStatus::TimeLimit && r.objective.is_nan()));
    for a in aggregate(&rows) {
        assert_eq!((a.trials, a.completed, a.time_limited), (3, 0, 3));
        assert!(a.mean_objective.is_nan());
    }
}

#[test]
fn aggregate_matches_hand_means() {
    let inst = synthetic_instance(5, 6).unwrap();
    let rows = run_experiment(&inst, &cfg(vec![Method::Asm1])).unwrap();
    let aggs = aggregate(&rows);
    assert_eq!(aggs.len(), 2);
    for a in &aggs {
        let objs: Vec<f64> = rows.iter().filter(|r| r.n_scenarios == a.n_scenarios).map(|r| r.objective).collect();
        let m = objs.iter().sum::<f64>() / 3.0;
        let var = objs.iter().map(|o| (o - m) * (o - m)).sum::<f64>() / 2.0;
        assert!((a.mean_objective - m).abs() <= 1e-15);
        assert!((a.sd_objective - var.sqrt()).abs() <= 1e-12);
        assert_eq!(a.completed, 3);
    }

    let dir = tempfile::tempdir().unwrap();
    let agg_path = dir.path().join("agg.csv");
    write_aggregate_csv(&aggs, &agg_path).unwrap();
    let mut r = csv::Reader::from_path(&agg_path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), AGGREGATE_COLUMNS);
    assert_eq!(r.records().count(), 2);

    let plot_path = dir.path().join("plot.csv");
    write_plot_data(&aggs, &plot_path).unwrap();
    let mut r = csv::Reader::from_path(&plot_path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["method", "n_scenarios", "metric", "value"]);
    let objective: Vec<f64> = r
        .records()
        .map(|rec| rec.unwrap())
        .filter(|rec| &rec[2] == "objective")
        .map(|rec| rec[3].parse().unwrap())
        .collect();
    assert_eq!(objective, aggs.iter().map(|a| a.mean_objective).collect::<Vec<_>>());
}

#[test]
fn single_weight_sweep_equals_asm1_experiment() {
    let inst = synthetic_instance(5, 7).unwrap();
    let mut c = cfg(vec![Method::Asm1]);
    c.asm.w = 0.25;
    let aggs = aggregate(&run_experiment(&inst, &c).unwrap());
    let sweep = sweep_w(&inst, &cfg(vec![Method::Full]), &[0.25]).unwrap();
    assert_eq!(sweep.len(), aggs.len());
    for (s, a) in sweep.iter().zip(&aggs) {
        assert_eq!(s.n_scenarios, a.n_scenarios);
        assert_eq!(s.mean_objective, a.mean_objective);
        assert_eq!(s.mean_constraints, a.mean_constraints);
        assert_eq!(s.mean_lp_solves, a.mean_lp_solves);
    }
    assert!(sweep_w(&inst, &c, &[]).is_err());
    assert!(sweep_w(&inst, &c, &[1.5]).is_err());
}
