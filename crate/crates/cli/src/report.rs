use std::fmt::Write;

use broadwell::solver::{CheckMode, SlabRecord, TheoremConstants, Verdict};
use broadwell::verify::{ConservationReport, ConstantsReport, RefinementStudy, Residual};
use broadwell::EdgeViolation;
use serde::Serialize;

use crate::config::{Mode, Run, VerifySpec};

fn pct(m: f64) -> String {
    if m.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:+.2}%", 100.0 * m)
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub mode: CheckMode,
    pub constants: TheoremConstants<f64>,
    pub shifted_bounds_hold: bool,
    pub compatibility: Vec<EdgeViolation<f64>>,
    pub data_min: f64,
    pub verdict: Verdict,
    pub passed: bool,
}

impl CheckReport {
    pub fn text(&self) -> String {
        let k = &self.constants;
        let mut s = String::new();
        let _ = writeln!(s, "constants (slab length {}, R0 = {:e})", k.slab_len, k.r0);
        for (name, v) in [
            ("c", k.c),
            ("S", k.s),
            ("sigma", k.sigma),
            ("mu", k.mu),
            ("lambda", k.lambda),
            ("delta", k.delta),
            ("gamma", k.gamma),
            ("q", k.q),
            ("q_sigma", k.q_sigma),
            ("p", k.p),
            ("p_sigma", k.p_sigma),
            ("f(R0)", k.f_r0),
            ("g(q)", k.g_q),
            ("R0 cap", k.r0_cap),
            ("raw data norm", k.raw_max),
        ] {
            let _ = writeln!(s, "  {name:<14} {v:.6e}");
        }
        let _ = writeln!(s, "conditions ({:?} mode)", self.mode);
        for c in &self.verdict.conditions {
            let op = if c.strict { "<" } else { "<=" };
            let _ = writeln!(
                s,
                "  [{}] {:<24} {:.6e} {op} {:.6e}  margin {}",
                pass(c.passed),
                c.name,
                c.lhs,
                c.rhs,
                pct(c.margin)
            );
        }
        let _ = writeln!(s, "p_sigma q_sigma = {:.6e}", self.verdict.p_sigma_q_sigma);
        match self.verdict.r_interval {
            Some((lo, hi)) => {
                let _ = writeln!(s, "admissible R interval [{lo:.6e}, {hi:.6e}]");
            }
            None => {
                let _ = writeln!(s, "admissible R interval empty");
            }
        }
        let _ = writeln!(s, "shifted data bounds: {}", pass(self.shifted_bounds_hold));
        if self.compatibility.is_empty() {
            let _ = writeln!(s, "compatibility: pass");
        }
        for v in &self.compatibility {
            let _ = writeln!(s, "compatibility: FAIL N{} on {} at {:.6} (gap {:e})", v.direction.index() + 1, v.edge, v.at, v.gap);
        }
        let _ = writeln!(s, "smallest sampled datum: {:e} [{}]", self.data_min, pass(self.data_min >= 0.0));
        let _ = writeln!(s, "verdict: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub certified: bool,
    pub slabs: usize,
    pub t0: f64,
    pub reached: f64,
    pub max_n_script: f64,
    pub total_iterations: usize,
    pub max_final_delta: f64,
    pub capped_slabs: Vec<usize>,
    /// Smallest step among slabs whose step was `g(q)`.
    pub min_uncapped_step: Option<f64>,
    /// `g(gamma R0)` for a march.
    pub step_floor: Option<f64>,
    pub r0: f64,
}

impl Summary {
    pub fn new(run: &Run, checked: bool, reached: f64, step_floor: Option<f64>, records: &[SlabRecord]) -> Self {
        Self {
            mode: run.config.mode,
            certified: checked && records.iter().all(|r| r.certified),
            slabs: records.len(),
            t0: run.data.t0,
            reached,
            max_n_script: records.iter().fold(0.0, |a, r| a.max(r.n_script)),
            total_iterations: records.iter().map(|r| r.iterations).sum(),
            max_final_delta: records.iter().fold(0.0, |a, r| a.max(r.final_delta)),
            capped_slabs: records.iter().filter(|r| r.capped).map(|r| r.n).collect(),
            min_uncapped_step: records
                .iter()
                .filter(|r| !r.capped)
                .map(|r| r.step)
                .reduce(f64::min),
            step_floor,
            r0: run.config.r0,
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} slab(s), reached t = {}", self.slabs, self.reached);
        let _ = writeln!(s, "max N = {:.6e}, iterations = {}", self.max_n_script, self.total_iterations);
        let _ = writeln!(s, "capped slabs: {}", self.capped_slabs.len());
        if let Some(f) = self.step_floor {
            let _ = writeln!(s, "step floor g(gamma R0) = {f:.6e}");
        }
        let _ = writeln!(s, "{}", if self.certified { "certified" } else { "uncertified" });
        s
    }
}

#[derive(Debug, Serialize)]
pub struct SlabVerification {
    pub n: usize,
    pub residual: [f64; 4],
    pub residual_skipped: usize,
    pub mass_gap: f64,
    pub momentum_x_gap: f64,
    pub momentum_y_gap: f64,
    pub oracle_gap: f64,
}

impl SlabVerification {
    pub fn new(n: usize, r: &Residual<f64>, b: &ConservationReport<f64>, oracle_gap: f64) -> Self {
        Self {
            n,
            residual: r.sup,
            residual_skipped: r.skipped,
            mass_gap: b.mass.max_cumulative_gap,
            momentum_x_gap: b.momentum_x.max_cumulative_gap,
            momentum_y_gap: b.momentum_y.max_cumulative_gap,
            oracle_gap,
        }
    }

    fn residual_max(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, &b| a.max(b))
    }

    fn balance_max(&self) -> f64 {
        self.mass_gap.max(self.momentum_x_gap).max(self.momentum_y_gap)
    }
}

/// Refinement ratios are accepted within this relative band around 2.
pub const REFINEMENT_BAND: f64 = 0.3;

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub thresholds: VerifySpec,
    pub slabs: Vec<SlabVerification>,
    pub residual_max: f64,
    pub balance_max: f64,
    pub oracle_max: f64,
    pub constants: Option<ConstantsReport>,
    pub refinement: Option<RefinementStudy>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn new(
        thresholds: VerifySpec,
        slabs: Vec<SlabVerification>,
        constants: Option<ConstantsReport>,
        refinement: Option<RefinementStudy>,
    ) -> Self {
        let fold = |f: fn(&SlabVerification) -> f64| slabs.iter().map(f).fold(0.0, f64::max);
        let residual_max = fold(SlabVerification::residual_max);
        let balance_max = fold(SlabVerification::balance_max);
        let oracle_max = fold(|s| s.oracle_gap);
        let finite = slabs.iter().all(|s| s.residual_max().is_finite() && s.balance_max().is_finite() && s.oracle_gap.is_finite());
        let refinement_ok = refinement
            .as_ref()
            .map_or(true, |r| r.ratios.iter().all(|x| (x - 2.0).abs() <= 2.0 * REFINEMENT_BAND));
        let passed = finite
            && residual_max <= thresholds.residual
            && balance_max <= thresholds.balance
            && oracle_max <= thresholds.oracle
            && constants.as_ref().map_or(true, |c| c.within_bounds)
            && refinement_ok;
        Self {
            thresholds,
            slabs,
            residual_max,
            balance_max,
            oracle_max,
            constants,
            refinement,
            passed,
        }
    }

    pub fn text(&self) -> String {
        let t = &self.thresholds;
        let mut s = String::new();
        let _ = writeln!(s, "{} slab(s) checked", self.slabs.len());
        let _ = writeln!(s, "  [{}] PDE residual      {:.3e} <= {:.1e}", pass(self.residual_max <= t.residual), self.residual_max, t.residual);
        let _ = writeln!(s, "  [{}] balance gap       {:.3e} <= {:.1e}", pass(self.balance_max <= t.balance), self.balance_max, t.balance);
        let _ = writeln!(s, "  [{}] upwind oracle gap {:.3e} <= {:.1e}", pass(self.oracle_max <= t.oracle), self.oracle_max, t.oracle);
        if let Some(c) = &self.constants {
            let _ = writeln!(
                s,
                "  [{}] {} trials: contraction {:.4e} (bound {:.4e}), growth {:.4e} (p = {:.4e})",
                pass(c.within_bounds),
                c.trials,
                c.contraction,
                c.contraction_bound,
                c.growth,
                c.p
            );
        }
        if let Some(r) = &self.refinement {
            for (i, ratio) in r.ratios.iter().enumerate() {
                let ok = (ratio - 2.0).abs() <= 2.0 * REFINEMENT_BAND;
                let _ = writeln!(
                    s,
                    "  [{}] refinement {} -> {} points: gap {:.3e} -> {:.3e}, ratio {:.3}",
                    pass(ok),
                    r.points[i],
                    r.points[i + 1],
                    r.gaps[i],
                    r.gaps[i + 1],
                    ratio
                );
            }
        }
        let _ = writeln!(s, "verdict: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}
