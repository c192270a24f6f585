//! Comparison of two mean A-enstrophy curves.

use crate::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Curve {
    /// Read `t,a_enstrophy_of_mean,stderr[,...]`.
    pub fn from_rows(header: &[String], rows: &[Vec<f64>]) -> Result<Self, Failure> {
        let want = ["t", "a_enstrophy_of_mean", "stderr"];
        if header.len() < 3 || header[..3] != want {
            return Err(Failure::Usage(format!(
                "expected columns {}, got {}",
                want.join(","),
                header.join(",")
            )));
        }
        Ok(Self {
            times: rows.iter().map(|r| r[0]).collect(),
            values: rows.iter().map(|r| r[1]).collect(),
            stderr: rows.iter().map(|r| r[2]).collect(),
        })
    }

    /// Index of the first time the curve has lost `fraction` of its initial
    /// value, if it does.
    pub fn decay_index(&self, fraction: f64) -> Option<usize> {
        let v0 = *self.values.first()?;
        self.values.iter().position(|&v| v <= (1.0 - fraction) * v0)
    }

    /// Largest rise `v[j+1] - v[j]` beyond `2 * sqrt(se_j^2 + se_{j+1}^2)`
    /// among times `>= after` and indices `< end`. `None` when monotone.
    pub fn monotonicity_violation(&self, after: f64, end: usize) -> Option<(f64, f64)> {
        let mut worst: Option<(f64, f64)> = None;
        for j in 0..end.saturating_sub(1) {
            if self.times[j] < after {
                continue;
            }
            let rise = self.values[j + 1] - self.values[j];
            let allowance = 2.0 * self.stderr[j].hypot(self.stderr[j + 1]);
            if rise > allowance && worst.is_none_or(|(_, r)| rise - allowance > r) {
                worst = Some((self.times[j + 1], rise - allowance));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Last time included in the comparison.
    pub t_end: f64,
    /// `max |candidate - reference| / |reference|` over the window.
    pub max_relative_deviation: f64,
    pub at_time: f64,
    pub reference_decay: f64,
    pub candidate_decay: f64,
    /// First rise beyond 2 SE after `monotone_after`, per curve.
    pub reference_rise: Option<(f64, f64)>,
    pub candidate_rise: Option<(f64, f64)>,
    pub tolerance: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.max_relative_deviation < self.tolerance
    }

    pub fn render(&self) -> String {
        let rise = |r: &Option<(f64, f64)>| match r {
            None => "monotone within 2 SE".to_string(),
            Some((t, excess)) => format!("rises by {excess:.3e} beyond 2 SE at t = {t}"),
        };
        format!(
            "window: t <= {}\nmax relative deviation: {:.6} at t = {}\nreference decay fraction: {:.6}\ncandidate decay fraction: {:.6}\nreference: {}\ncandidate: {}\nresult: {} (tolerance {})\n",
            self.t_end,
            self.max_relative_deviation,
            self.at_time,
            self.reference_decay,
            self.candidate_decay,
            rise(&self.reference_rise),
            rise(&self.candidate_rise),
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance,
        )
    }
}

/// Compare `candidate` against `reference` on identical time grids. With
/// `decay`, the window ends at the first time the reference has decayed by
/// that fraction.
pub fn compare_curves(
    reference: &Curve,
    candidate: &Curve,
    tolerance: f64,
    decay: Option<f64>,
    monotone_after: f64,
) -> Result<CompareReport, Failure> {
    if reference.times.is_empty() {
        return Err(Failure::Usage("empty curve".into()));
    }
    let aligned = reference.times.len() == candidate.times.len()
        && reference
            .times
            .iter()
            .zip(&candidate.times)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
    if !aligned {
        return Err(Failure::Usage("time grids of the two curves do not match".into()));
    }
    let end = match decay {
        Some(f) => reference
            .decay_index(f)
            .map_or(reference.times.len(), |j| j + 1),
        None => reference.times.len(),
    };
    let mut dev = 0.0;
    let mut at = reference.times[0];
    for j in 0..end {
        let d = (candidate.values[j] - reference.values[j]).abs() / reference.values[j].abs();
        if d > dev {
            dev = d;
            at = reference.times[j];
        }
    }
    let decay_of = |c: &Curve| 1.0 - c.values[end - 1] / c.values[0];
    Ok(CompareReport {
        t_end: reference.times[end - 1],
        max_relative_deviation: dev,
        at_time: at,
        reference_decay: decay_of(reference),
        candidate_decay: decay_of(candidate),
        reference_rise: reference.monotonicity_violation(monotone_after, end),
        candidate_rise: candidate.monotonicity_violation(monotone_after, end),
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: &[f64]) -> Curve {
        Curve {
            times: (0..values.len()).map(|i| i as f64 * 0.5).collect(),
            values: values.to_vec(),
            stderr: vec![0.01; values.len()],
        }
    }

    #[test]
    fn identical_and_scaled() {
        let a = curve(&[4.0, 3.5, 3.0, 2.0]);
        let r = compare_curves(&a, &a, 0.1, None, 0.5).unwrap();
        assert_eq!(r.max_relative_deviation, 0.0);
        assert!(r.passed());
        let b = Curve {
            values: a.values.iter().map(|v| v * 1.5).collect(),
            ..a.clone()
        };
        let r = compare_curves(&a, &b, 0.1, None, 0.5).unwrap();
        assert!((r.max_relative_deviation - 0.5).abs() < 1e-15);
        assert!(!r.passed());
    }

    #[test]
    fn decay_window_and_monotonicity() {
        let a = curve(&[10.0, 9.0, 7.9, 9.0, 1.0]);
        let r = compare_curves(&a, &a, 0.1, Some(0.2), 0.5).unwrap();
        assert_eq!(r.t_end, 1.0);
        assert!((r.reference_decay - 0.21).abs() < 1e-12);
        assert_eq!(r.reference_rise, None);
        assert!(a.monotonicity_violation(0.5, 5).is_some());
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let a = curve(&[1.0, 2.0]);
        let b = curve(&[1.0, 2.0, 3.0]);
        assert!(compare_curves(&a, &b, 0.1, None, 0.5).is_err());
    }
}
