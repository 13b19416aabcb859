//! Plain-text tables and CSV for the classification and similarity reports.
//! All values are computed in double precision and rounded half-away-from-zero
//! to two decimals here, at render time only.

use super::{ClassificationReport, SimilarityAggregate};

/// Round half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Render a ratio as a whole percent, e.g. 0.8116 -> "81%".
pub fn percent(x: f64) -> String {
    format!("{}%", (x * 100.0).round() as i64)
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

pub(crate) fn aligned(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:w$}", cell, w = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Classification table: Type | Count | #Correct | Precision | Recall |
/// F-Score, followed by the overall accuracy line.
pub fn classification_table(report: &ClassificationReport) -> String {
    let mut rows = vec![vec![
        "Type".to_string(),
        "Count".to_string(),
        "#Correct".to_string(),
        "Precision".to_string(),
        "Recall".to_string(),
        "F-Score".to_string(),
    ]];
    for c in &report.per_class {
        rows.push(vec![
            c.class.to_string(),
            c.count.to_string(),
            c.correct.to_string(),
            fmt2(c.precision),
            fmt2(c.recall),
            fmt2(c.f_score),
        ]);
    }
    let mut out = aligned(&rows);
    out.push_str(&format!("Overall accuracy: {}\n", percent(report.accuracy)));
    out
}

pub fn classification_csv(report: &ClassificationReport) -> String {
    let mut out = String::from("type,count,correct,precision,recall,f_score\n");
    for c in &report.per_class {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            c.class, c.count, c.correct, c.precision, c.recall, c.f_score
        ));
    }
    out.push_str(&format!("accuracy,,,,,{:.6}\n", report.accuracy));
    out
}

/// Similarity table: label | Count | Cosine Similarity | ROUGE1/2/L |
/// Perplexity, with the ROUGE column rendered as F1 values.
pub fn similarity_table(label_header: &str, rows: &[(String, &SimilarityAggregate)]) -> String {
    let mut table = vec![vec![
        label_header.to_string(),
        "Count".to_string(),
        "Cosine Similarity".to_string(),
        "ROUGE1/2/L".to_string(),
        "Perplexity".to_string(),
    ]];
    for (label, agg) in rows {
        table.push(vec![
            label.clone(),
            agg.count.to_string(),
            fmt2(agg.cosine),
            format!(
                "{}/{}/{}",
                fmt2(agg.rouge.rouge1.f1),
                fmt2(agg.rouge.rouge2.f1),
                fmt2(agg.rouge.rouge_l.f1)
            ),
            fmt2(agg.perplexity),
        ]);
    }
    aligned(&table)
}
