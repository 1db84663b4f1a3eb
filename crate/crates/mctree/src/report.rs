//! Result exports: Graphviz search trees and progress curves.
//!
//! Both exporters work on log records rather than live search state, so
//! they can be rerun offline on any saved log. Output is byte-stable for
//! a given record list.

use std::fmt::Write;

use crate::search::LogRecord;

/// The search tree as a Graphviz `digraph`: one box per experiment showing
/// its pragmas and outcome, one edge per parent link. The baseline is
/// blue, successful experiments green, failed ones red.
pub fn export_dot(records: &[LogRecord]) -> String {
    let mut out = String::new();
    out.push_str("digraph search {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box, style=filled, fontname=\"monospace\"];\n");
    for record in records {
        let mut lines = vec![if record.number == 0 {
            "baseline".to_string()
        } else {
            format!("experiment {}", record.number)
        }];
        for nest in &record.transformations {
            lines.extend(nest.iter().cloned());
        }
        lines.push(outcome_label(record));
        let label = lines
            .iter()
            .map(|l| escape(l))
            .collect::<Vec<_>>()
            .join("\\n");
        let fillcolor = if record.number == 0 {
            "blue"
        } else if record.status == "ok" {
            "green"
        } else {
            "red"
        };
        writeln!(
            out,
            "  e{} [label=\"{label}\", fillcolor={fillcolor}];",
            record.number
        )
        .expect("writing to a String cannot fail");
    }
    for record in records {
        if let Some(parent) = record.parent {
            writeln!(out, "  e{parent} -> e{};", record.number)
                .expect("writing to a String cannot fail");
        }
    }
    out.push_str("}\n");
    out
}

/// Per-experiment progress as CSV: `experiment,seconds,status,is_new_best`.
/// `is_new_best` is 1 when the row strictly improves on every earlier ok
/// row; plotting `seconds` where it is 1 gives the best-so-far curve.
pub fn export_progress_csv(records: &[LogRecord]) -> String {
    let mut out = String::from("experiment,seconds,status,is_new_best\n");
    let mut best: Option<f64> = None;
    for record in records {
        let is_new_best = match (record.seconds, best) {
            (Some(s), Some(b)) => s < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if is_new_best {
            best = record.seconds;
        }
        let seconds = record.seconds.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{seconds},{},{}",
            record.number,
            record.status,
            if is_new_best { 1 } else { 0 }
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn outcome_label(record: &LogRecord) -> String {
    match record.seconds {
        Some(s) => format!("{s:.4}s"),
        None => record.status.replace('-', " "),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        number: u64,
        parent: Option<u64>,
        pragmas: &[&str],
        status: &str,
        seconds: Option<f64>,
    ) -> LogRecord {
        LogRecord {
            number,
            parent,
            transformations: vec![pragmas.iter().map(|s| s.to_string()).collect()],
            status: status.into(),
            seconds,
        }
    }

    fn sample() -> Vec<LogRecord> {
        vec![
            record(0, None, &[], "ok", Some(2.0)),
            record(
                1,
                Some(0),
                &["#pragma clang loop(i) parallelize_thread"],
                "ok",
                Some(0.5),
            ),
            record(
                2,
                Some(0),
                &["#pragma clang loop(i,j) interchange permutation(j,i)"],
                "compile-failed",
                None,
            ),
            record(
                3,
                Some(1),
                &[
                    "#pragma clang loop(i) parallelize_thread",
                    "#pragma clang loop(j) parallelize_thread",
                ],
                "ok",
                Some(0.5),
            ),
        ]
    }

    #[test]
    fn dot_output_is_frozen_for_a_small_tree() {
        let expected = concat!(
            "digraph search {\n",
            "  rankdir=TB;\n",
            "  node [shape=box, style=filled, fontname=\"monospace\"];\n",
            "  e0 [label=\"baseline\\n2.0000s\", fillcolor=blue];\n",
            "  e1 [label=\"experiment 1\\n#pragma clang loop(i) parallelize_thread\\n0.5000s\", fillcolor=green];\n",
            "  e2 [label=\"experiment 2\\n#pragma clang loop(i,j) interchange permutation(j,i)\\ncompile failed\", fillcolor=red];\n",
            "  e3 [label=\"experiment 3\\n#pragma clang loop(i) parallelize_thread\\n#pragma clang loop(j) parallelize_thread\\n0.5000s\", fillcolor=green];\n",
            "  e0 -> e1;\n",
            "  e0 -> e2;\n",
            "  e1 -> e3;\n",
            "}\n",
        );
        assert_eq!(export_dot(&sample()), expected);
    }

    #[test]
    fn dot_has_one_node_per_experiment_and_one_edge_per_parent() {
        let dot = export_dot(&sample());
        assert_eq!(dot.matches("[label=").count(), 4);
        assert_eq!(dot.matches(" -> ").count(), 3);
    }

    #[test]
    fn dot_escapes_quotes_and_backslashes() {
        let records = vec![record(0, None, &[r#"say "hi" \ bye"#], "ok", Some(1.0))];
        let dot = export_dot(&records);
        assert!(dot.contains(r#"say \"hi\" \\ bye"#));
    }

    #[test]
    fn csv_output_is_frozen_for_a_small_tree() {
        let expected = "experiment,seconds,status,is_new_best\n\
0,2,ok,1\n\
1,0.5,ok,1\n\
2,,compile-failed,0\n\
3,0.5,ok,0\n";
        assert_eq!(export_progress_csv(&sample()), expected);
    }

    #[test]
    fn ties_are_not_new_bests() {
        let records = vec![
            record(0, None, &[], "ok", Some(1.0)),
            record(1, Some(0), &["p"], "ok", Some(1.0)),
            record(2, Some(0), &["q"], "ok", Some(0.9999)),
        ];
        let csv = export_progress_csv(&records);
        let bests: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert_eq!(bests, vec!["1", "0", "1"]);
    }
}
