use std::collections::BTreeSet;
use std::time::Duration;

use aspbench_core::model_eval::scores_from_counts;
use aspbench_harness::report::{cells_csv, timing_rows};
use aspbench_harness::{aggregate, render, render_figure, CellResult, FigureKind, Report, ReportError, Variant};
use proptest::prelude::*;

fn cell(problem: &str, variant: Variant, run: u32, f1: f64, acc: f64) -> CellResult {
    let mut s = scores_from_counts(1, 1, 0);
    s.f1 = f1;
    let mut c = CellResult {
        problem: problem.into(),
        variant,
        run_index: run,
        syntactic_ok: true,
        model_based: Some(s),
        suite_accuracy: Some(acc),
        failure_tag: None,
        detail: String::new(),
        artifacts: String::new(),
        timings: Default::default(),
    };
    c.timings.model_based = Some(Duration::from_millis(3 + run as u64));
    c.timings.test_suite = Some(Duration::from_micros(1500));
    c
}

fn report(cells: &[CellResult]) -> Report {
    Report {
        model: "m".into(),
        aggregates: aggregate(cells),
        timings: timing_rows(cells),
    }
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn equal_metrics_leave_no_difference() {
    let cells: Vec<_> = (1..=4)
        .map(|r| cell("p", Variant::Original, r, 0.25 * r as f64, 0.25 * r as f64))
        .collect();
    let diff = render_figure(&report(&cells), FigureKind::MetricDiffBars).unwrap();
    let d = column(&diff, "difference");
    assert_eq!(d.len(), 4);
    assert!(d.iter().all(|x| *x == 0.0));
}

#[test]
fn timings_are_positive_milliseconds() {
    let cells: Vec<_> = (1..=3).map(|r| cell("p", Variant::Original, r, 1.0, 1.0)).collect();
    let t = render_figure(&report(&cells), FigureKind::TimingBars).unwrap();
    assert_eq!(
        t,
        "model,problem,metric,mean_ms,n\nm,p,model_based,5.000,3\nm,p,test_suite,1.500,3\n"
    );
    assert!(FigureKind::TimingBars.is_timing());
    assert!(!FigureKind::BarsWithCi.is_timing());
}

#[test]
fn figure_kinds_parse() {
    for k in FigureKind::ALL {
        assert_eq!(k.as_str().parse::<FigureKind>().unwrap(), k);
    }
    assert!(matches!("pie_chart".parse::<FigureKind>(), Err(ReportError::UnknownKind(s)) if s == "pie_chart"));
}

#[test]
fn render_writes_one_file_per_kind() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&[cell("p", Variant::Paraphrase1, 1, 0.5, 1.0)]);
    let kinds: BTreeSet<_> = FigureKind::ALL.into();
    let files = render(&r, &kinds, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    for k in FigureKind::ALL {
        let text = std::fs::read_to_string(dir.path().join(format!("{k}.csv"))).unwrap();
        assert_eq!(text, render_figure(&r, k).unwrap());
    }
    let empty = report(&[]);
    assert!(matches!(render(&empty, &kinds, dir.path()), Err(ReportError::Empty)));
}

#[test]
fn cells_csv_quotes_details() {
    let mut c = cell("p", Variant::Original, 1, 1.0, 0.5);
    c.detail = "line 1, col 2: \"x\"".into();
    let text = cells_csv(&[c]).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let row = r.records().next().unwrap().unwrap();
    assert_eq!(&row[10], "line 1, col 2: \"x\"");
    assert_eq!(&row[7], "0.500000");
}

proptest! {
    #[test]
    fn differences_stay_in_range_and_render_is_pure(
        scores in prop::collection::vec((0usize..3, 0usize..3, 0.0..=1.0f64, 0.0..=1.0f64), 1..30)
    ) {
        let cells: Vec<_> = scores
            .iter()
            .enumerate()
            .map(|(i, &(p, v, f1, acc))| cell(["a", "b", "c"][p], Variant::ALL[v], i as u32 + 1, f1, acc))
            .collect();
        let r = report(&cells);
        let diff = render_figure(&r, FigureKind::MetricDiffBars).unwrap();
        for d in column(&diff, "difference") {
            prop_assert!((-1.0..=1.0).contains(&d));
        }
        for k in FigureKind::ALL {
            prop_assert_eq!(render_figure(&r, k).unwrap(), render_figure(&r.clone(), k).unwrap());
        }
        let mut reversed = cells.clone();
        reversed.reverse();
        for k in FigureKind::ALL.into_iter().filter(|k| !k.is_timing()) {
            prop_assert_eq!(render_figure(&r, k).unwrap(), render_figure(&report(&reversed), k).unwrap());
        }
    }
}
