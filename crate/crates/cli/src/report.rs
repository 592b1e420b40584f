//! Run reports printed by every subcommand.

use std::fmt::{self, Write as _};

use preduce_core::report::CheckReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Detail {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input: String,
    /// SHA-256 of the input file bytes.
    pub input_digest: String,
    pub seed: u64,
    pub details: Vec<Detail>,
    pub checks: Vec<CheckReport>,
    /// Files written by the command.
    pub artifacts: Vec<String>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunReport {
    pub fn new(command: &str, input: &str, raw: &[u8], seed: u64) -> Self {
        RunReport {
            command: command.to_string(),
            input: input.to_string(),
            input_digest: digest(raw),
            seed,
            details: Vec::new(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            passed: true,
            timing_ms: None,
        }
    }

    pub fn detail(&mut self, label: impl Into<String>, value: impl fmt::Display) {
        self.details.push(Detail {
            label: label.into(),
            value: value.to_string(),
        });
    }

    pub fn check(&mut self, c: CheckReport) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "preduce {} {} (sha256 {}, seed {})",
            self.command,
            self.input,
            &self.input_digest[..16],
            self.seed
        );
        for d in &self.details {
            if d.value.contains('\n') {
                let _ = writeln!(out, "  {}:", d.label);
                for line in d.value.lines() {
                    let _ = writeln!(out, "    {line}");
                }
            } else {
                let _ = writeln!(out, "  {}: {}", d.label, d.value);
            }
        }
        for c in &self.checks {
            let _ = writeln!(out, "{c}");
        }
        for a in &self.artifacts {
            let _ = writeln!(out, "wrote {a}");
        }
        if let Some(ms) = self.timing_ms {
            let _ = writeln!(out, "elapsed: {ms} ms");
        }
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            out,
            "result: {} ({ok}/{} checks)",
            if self.passed { "PASS" } else { "FAIL" },
            self.checks.len()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_summarizes_checks() {
        let mut r = RunReport::new("check", "a.json", b"{}", 42);
        let mut ok = CheckReport::new("fine", 1e-10);
        ok.observe(0.0, &[0.0]);
        let mut bad = CheckReport::new("broken", 1e-10);
        bad.observe(1.0, &[1.0]);
        r.check(ok);
        r.check(bad);
        let text = r.render_text();
        assert!(text.contains("FAIL broken"));
        assert!(text.ends_with("result: FAIL (1/2 checks)\n"));
        assert!(!r.passed);
        assert!(!r.render_json().contains("timing_ms"));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
