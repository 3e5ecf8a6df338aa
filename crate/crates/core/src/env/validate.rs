use std::collections::HashSet;

use super::types::{ArmProfile, EventAction, Mixture, QueryType, Scenario};
use crate::error::{Error, Result};

const MIXTURE_TOLERANCE: f64 = 1e-6;

fn check_profile(prefix: &str, arm: &ArmProfile, out: &mut Vec<String>) {
    for t in QueryType::ALL {
        let p = arm.p_hit.get(t);
        if !(0.0..=1.0).contains(&p) {
            out.push(format!("{prefix}.p_hit.{}: {p} outside [0, 1]", t.name()));
        }
        let beta = arm.recall.get(t);
        if !(beta.a.is_finite() && beta.a > 0.0 && beta.b.is_finite() && beta.b > 0.0) {
            out.push(format!(
                "{prefix}.recall.{}: beta parameters must be positive, got a={} b={}",
                t.name(),
                beta.a,
                beta.b
            ));
        }
    }
    if !arm.delay.mu.is_finite() {
        out.push(format!("{prefix}.delay.mu: must be finite, got {}", arm.delay.mu));
    }
    if !(arm.delay.sigma_ln.is_finite() && arm.delay.sigma_ln > 0.0) {
        out.push(format!(
            "{prefix}.delay.sigma_ln: must be positive, got {}",
            arm.delay.sigma_ln
        ));
    }
}

fn check_mixture(prefix: &str, mixture: &Mixture, out: &mut Vec<String>) {
    let mut total = 0.0;
    for t in QueryType::ALL {
        let w = mixture.get(t);
        if !(w.is_finite() && w >= 0.0) {
            out.push(format!("{prefix}.{}: weight must be >= 0, got {w}", t.name()));
        }
        total += w;
    }
    if (total - 1.0).abs() > MIXTURE_TOLERANCE {
        out.push(format!("{prefix}: weights sum to {total}, expected 1"));
    }
}

/// Every invariant violation in `scenario`, as human-readable messages.
pub fn scenario_violations(scenario: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    if scenario.arms.len() < 2 {
        out.push(format!("arms: need at least 2 arms, got {}", scenario.arms.len()));
    }
    for (i, arm) in scenario.arms.iter().enumerate() {
        check_profile(&format!("arms[{i}]"), arm, &mut out);
    }
    check_mixture("mixture", &scenario.mixture, &mut out);
    if scenario.horizon == 0 {
        out.push("horizon: must be >= 1".to_string());
    }

    let mut seen = HashSet::new();
    for (i, ev) in scenario.schedule.iter().enumerate() {
        let prefix = format!("schedule[{i}]");
        if i > 0 && ev.step < scenario.schedule[i - 1].step {
            out.push(format!(
                "{prefix}: events not sorted by step ({} after {})",
                ev.step,
                scenario.schedule[i - 1].step
            ));
        }
        if ev.step >= scenario.horizon {
            out.push(format!(
                "{prefix}: step {} is beyond horizon {}",
                ev.step, scenario.horizon
            ));
        }
        if !seen.insert((ev.step, ev.action.kind_name(), ev.action.target())) {
            out.push(format!(
                "{prefix}: duplicate {} event at step {}",
                ev.action.kind_name(),
                ev.step
            ));
        }
        if let Some(arm) = ev.action.target() {
            if arm >= scenario.arms.len() {
                out.push(format!(
                    "{prefix}.arm: index {arm} out of range for {} arms",
                    scenario.arms.len()
                ));
            }
        }
        match &ev.action {
            EventAction::SwapArmProfile { profile, .. } => {
                check_profile(&format!("{prefix}.profile"), profile, &mut out)
            }
            EventAction::ShiftQueryMixture { mixture } => {
                check_mixture(&format!("{prefix}.mixture"), mixture, &mut out)
            }
            EventAction::KillArm { .. } | EventAction::ReviveArm { .. } => {}
        }
    }
    out
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let violations = scenario_violations(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "scenario '{}' is invalid: {}",
                self.name,
                violations.join("; ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::builtin::builtin_scenario;
    use crate::env::types::ScheduleEvent;

    #[test]
    fn builtins_are_valid() {
        for name in crate::env::builtin::BUILTIN_SCENARIOS {
            let s = builtin_scenario(name).unwrap();
            assert_eq!(scenario_violations(&s), Vec::<String>::new(), "{name}");
        }
    }

    #[test]
    fn reports_out_of_range_probability() {
        let mut s = builtin_scenario("stationary_webqsp").unwrap();
        s.arms[1].p_hit.multi_hop = 1.3;
        let v = scenario_violations(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("arms[1].p_hit.multi_hop"), "{v:?}");
    }

    #[test]
    fn reports_unsorted_schedule_and_all_violations() {
        let mut s = builtin_scenario("retriever_upgrade").unwrap();
        s.schedule.push(ScheduleEvent {
            step: 10,
            action: EventAction::KillArm { arm: 7 },
        });
        s.mixture.simple_1hop += 0.5;
        let v = scenario_violations(&s);
        assert!(v.iter().any(|m| m.contains("not sorted")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("out of range")), "{v:?}");
        assert!(v.iter().any(|m| m.starts_with("mixture")), "{v:?}");
    }

    #[test]
    fn rejects_duplicate_events() {
        let mut s = builtin_scenario("arm_failure").unwrap();
        let ev = s.schedule[0].clone();
        s.schedule.push(ev);
        assert!(scenario_violations(&s).iter().any(|m| m.contains("duplicate")));
        assert!(s.validate().is_err());
    }
}
