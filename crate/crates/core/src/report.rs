//! Worst-residual check reports shared by all verification routines.

use std::fmt;

use serde::Serialize;

/// Outcome of a sampled check: the largest residual seen, where it was seen
/// and whether it stayed within tolerance. Reports describe evidence at
/// samples; a pass means "consistent at every sample", not a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub witness: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckReport {
            name: name.into(),
            passed: true,
            worst_residual: 0.0,
            tolerance,
            samples: 0,
            witness: None,
            notes: Vec::new(),
        }
    }

    /// Records one residual. NaN counts as a failure.
    pub fn observe(&mut self, residual: f64, at: &[f64]) {
        self.samples += 1;
        let residual = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual.abs()
        };
        if self.witness.is_none() || residual > self.worst_residual {
            self.worst_residual = residual;
            self.witness = Some(at.to_vec());
        }
        if residual > self.tolerance {
            self.passed = false;
        }
    }

    /// Marks the check failed without a residual (e.g. an evaluation error).
    pub fn fail(&mut self, note: impl Into<String>, at: Option<&[f64]>) {
        self.passed = false;
        self.notes.push(note.into());
        if let Some(z) = at {
            self.witness = Some(z.to_vec());
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Folds another report into this one, keeping the worse residual.
    pub fn merge(&mut self, other: &CheckReport) {
        self.samples += other.samples;
        self.passed &= other.passed;
        if other.worst_residual > self.worst_residual || self.witness.is_none() {
            self.worst_residual = self.worst_residual.max(other.worst_residual);
            if other.witness.is_some() {
                self.witness.clone_from(&other.witness);
            }
        }
        self.notes.extend(other.notes.iter().cloned());
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {}: worst residual {:.3e} (tolerance {:.1e}, {} samples)",
            self.name, self.worst_residual, self.tolerance, self.samples
        )?;
        if !self.passed {
            if let Some(w) = &self.witness {
                write!(f, " at {}", format_point(w))?;
            }
        }
        for n in &self.notes {
            write!(f, "\n    note: {n}")?;
        }
        Ok(())
    }
}

pub fn format_point(z: &[f64]) -> String {
    let parts: Vec<String> = z.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_worst_residual_and_witness() {
        let mut r = CheckReport::new("demo", 1e-10);
        r.observe(1e-12, &[0.0]);
        r.observe(5e-11, &[1.0]);
        r.observe(2e-12, &[2.0]);
        assert!(r.passed);
        assert_eq!(r.worst_residual, 5e-11);
        assert_eq!(r.witness.as_deref(), Some(&[1.0][..]));
        r.observe(f64::NAN, &[3.0]);
        assert!(!r.passed);
        assert_eq!(r.witness.as_deref(), Some(&[3.0][..]));
    }

    #[test]
    fn merge_is_worst_case() {
        let mut a = CheckReport::new("a", 1e-3);
        a.observe(1e-4, &[0.0]);
        let mut b = CheckReport::new("b", 1e-3);
        b.observe(1e-2, &[9.0]);
        a.merge(&b);
        assert!(!a.passed);
        assert_eq!(a.worst_residual, 1e-2);
        assert_eq!(a.samples, 2);
        assert_eq!(a.witness.as_deref(), Some(&[9.0][..]));
    }
}
