//! Plain-text reports.

use std::fmt::Write;

use super::diagnosis::{Diagnosis, Ranked};
use super::session::{Finding, QaPair, SessionState};
use crate::numeric::percent_label;

fn pct(r: &Ranked) -> String {
    percent_label(r.percent / 100.0)
}

pub fn render_fast(d: &Diagnosis) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Primary Diagnosis: {} ({} confidence)",
        d.primary.name,
        pct(&d.primary)
    );
    out.push_str("Differential Diagnosis:\n");
    if d.differential.is_empty() {
        out.push_str("  (none)\n");
    }
    for r in &d.differential {
        let _ = writeln!(out, "  {} ({})", r.name, pct(r));
    }
    out
}

fn conversation(out: &mut String, transcript: &[QaPair]) {
    if transcript.is_empty() {
        return;
    }
    out.push_str("Diagnostic Conversation:\n");
    for (i, qa) in transcript.iter().enumerate() {
        let _ = writeln!(out, "  Q{}: {}", i + 1, qa.question);
        let _ = writeln!(out, "  A{}: {}", i + 1, qa.answer);
    }
}

pub fn render_standard(finding: &Finding, transcript: &[QaPair]) -> String {
    let mut out = String::new();
    match finding {
        Finding::Normal {
            percent,
            certainty,
            path,
        } => {
            let _ = writeln!(out, "Diagnostic Path: {path}");
            let _ = writeln!(
                out,
                "Final Finding: Normal ({} confidence, {certainty} certainty)",
                percent_label(percent / 100.0)
            );
        }
        Finding::Disease(d) => {
            if let Some(path) = &d.path {
                let _ = writeln!(out, "Diagnostic Path: {path}");
            }
            let _ = writeln!(
                out,
                "Final Diagnosis: {} ({} confidence, {} certainty)",
                d.primary.name,
                pct(&d.primary),
                d.certainty
            );
            let items: Vec<String> = d
                .differential
                .iter()
                .enumerate()
                .map(|(i, r)| format!("{}. {} ({})", i + 1, r.name, pct(r)))
                .collect();
            let list = if items.is_empty() {
                "(none)".to_string()
            } else {
                items.join(", ")
            };
            let _ = writeln!(out, "Differential Diagnosis: {list}");
        }
    }
    conversation(&mut out, transcript);
    out
}

/// Session summary: level, path, pending question and dialogue.
pub fn render_transcript(s: &SessionState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Session: {}", s.session_id);
    let _ = writeln!(out, "Status: {:?}", s.status);
    let _ = writeln!(out, "Level: {} / 6", s.current_level);
    let _ = writeln!(out, "Candidates: {}", s.candidates.len());
    if !s.path.is_empty() {
        let _ = writeln!(out, "Path: {}", s.path);
    }
    if let Some(p) = &s.pending {
        let _ = writeln!(
            out,
            "Pending (level {}): {} [{} vs {}, gap {:.4}]",
            p.level, p.question, p.top_two[0].display, p.top_two[1].display, p.gap
        );
    }
    conversation(&mut out, &s.transcript);
    out
}
