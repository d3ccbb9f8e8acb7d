use extrema_dp::harness::ExperimentConfig;
use extrema_dp::{emit_plot_data, run_experiment, ExperimentReport, PlotAxis};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

const SWEEP: &str = r#"
model = "gaussian"
n = 300
epsilon = [0.1, 0.5, 1.0, 1.5, 2.0]
methods = ["ppb:1/10", "naive", "bonferroni"]
bootstrap_draws = 200
reps = 20
seed = 77
[truth]
mean = [0.0, 1.0]
"#;

#[test]
fn report_independent_of_thread_count() {
    let cfg = config(SWEEP);
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_experiment(&cfg).unwrap())
    };
    assert_eq!(run_with(1), run_with(3));
}

#[test]
fn every_model_runs() {
    let configs = [
        "model = \"gaussian\"\nn = 200\nepsilon = 1\nmethods = [\"ppb:1/10\", \"semi_naive\", \"rppb:1/10\", \"naive_nonprivate\"]\nbootstrap_draws = 100\nreps = 6\nseed = 1\n[truth]\nmean = [0.0, 0.2, 0.4]\n",
        "model = \"regression\"\nn = 600\nepsilon = 2\nmethods = [\"ppb:full\", \"bonferroni_nonprivate\"]\nbootstrap_draws = 100\nreps = 6\nseed = 2\n[truth]\nbeta = [0.0, 1.0]\n",
        "model = \"partial_gaussian\"\nn = 200\nepsilon = 1\nmethods = [\"ppb:1/10\"]\nbootstrap_draws = 100\nreps = 6\nseed = 3\n[truth]\nmean = [0.0, 0.0, 5.0]\ninterest = 2\n",
        "model = \"partial_regression\"\nn = 800\nepsilon = 1.5\nmethods = [\"ppb:1/10\", \"naive\"]\nbootstrap_draws = 100\nreps = 6\nseed = 4\n[truth]\nbeta = [0.0, 1.0]\ngamma = [0.5, -0.5, 1.0]\n",
        "model = \"gaussian\"\nn = 200\nepsilon = 1\nmethods = [\"cv\"]\nbootstrap_draws = 100\nreps = 3\nseed = 5\n[truth]\nmean = [0.0, 1.0]\n[cv]\ninner_draws = 50\n",
    ];
    for text in configs {
        let cfg = config(text);
        let report = run_experiment(&cfg).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(report.rows.len(), cfg.methods.len() * cfg.epsilon.len());
        for row in &report.rows {
            assert_eq!(row.reps + row.errors, cfg.reps, "{text}");
            assert_eq!(row.k, cfg.interest_dim());
            assert!(row.mean_length.is_finite());
        }
    }
}

#[test]
fn cv_rows_carry_chosen_r_and_both_budgets() {
    let cfg = config(
        "model = \"gaussian\"\nn = 200\nepsilon = 1\nmethods = [\"cv\"]\nbootstrap_draws = 100\nreps = 4\nseed = 6\n[truth]\nmean = [0.0, 1.0]\n[cv]\nfolds = 3\ninner_draws = 50\n",
    );
    let row = &run_experiment(&cfg).unwrap().rows[0];
    let r = row.mean_chosen_r.unwrap();
    assert!(cfg.cv.grid.iter().cloned().fold(f64::INFINITY, f64::min) <= r);
    assert!(r <= cfg.cv.grid.iter().cloned().fold(0.0, f64::max));
    assert_eq!(row.budget_parallel, 1.0);
    assert_eq!(row.budget_sequential, 7.0);
}

#[test]
fn report_roundtrips_and_plots_five_points_per_method() {
    let report = run_experiment(&config(SWEEP)).unwrap();
    let text = report.to_csv().unwrap();
    assert_eq!(ExperimentReport::from_csv(&text).unwrap(), report);

    let plot = emit_plot_data(&report, PlotAxis::Epsilon).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("axis_value,method,coverage,mean_length"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 15);
    for method in ["ppb:0.1", "naive_private", "bonferroni_private"] {
        let axis: Vec<f64> = body
            .iter()
            .filter(|l| l.split(',').nth(1) == Some(method))
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(axis, vec![0.1, 0.5, 1.0, 1.5, 2.0], "{method}");
    }
}

#[test]
fn malformed_report_names_the_row() {
    let report = run_experiment(&config(SWEEP)).unwrap();
    let text = report.to_csv().unwrap();
    let broken: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 2 { l.replacen(",2,", ",two,", 1) } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let err = ExperimentReport::from_csv(&broken).unwrap_err().to_string();
    assert!(err.contains("row 3"), "{err}");
}
