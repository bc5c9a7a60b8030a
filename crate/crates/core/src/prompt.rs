//! Prompt composition and score parsing for language-model experts.
//!
//! A prompt has up to four regions: the task instruction, the trajectory so
//! far, an optional exemplar taken from the expert's success memory, and a
//! directive. The exemplar sits between its own delimiters with a note that
//! it is a past reference and not something to continue.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{serialize_trajectory, DecisionContext, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    Act,
    Evaluate,
}

/// Wording of every fixed piece of text. Loaded from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub system: String,
    pub exemplar_open: String,
    pub exemplar_note: String,
    pub exemplar_close: String,
    pub trajectory_header: String,
    pub act_directive: String,
    pub evaluate_directive: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: "You are an agent solving a task step by step. Lines starting with OBS: are what the \
                     environment showed, lines starting with ACT: are actions taken."
                .into(),
            exemplar_open: "<<<PAST SUCCESSFUL TRAJECTORY".into(),
            exemplar_note: "This is a previous successful trajectory on a similar task, given only as a \
                            reference. Do not continue it."
                .into(),
            exemplar_close: "PAST SUCCESSFUL TRAJECTORY>>>".into(),
            trajectory_header: "Current trajectory:".into(),
            act_directive: "Reply with the next action only, on a single line, in the form the task expects. \
                            Do not add explanations."
                .into(),
            evaluate_directive: "How likely is the current trajectory to lead to solving the task? Reply with \
                                 a single score from 0 (hopeless) to 10 (certain)."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub trajectory: String,
    pub exemplar: Option<String>,
    pub directive: String,
}

impl PromptBundle {
    /// The user message: instruction, exemplar block, trajectory, directive.
    pub fn render(&self, templates: &PromptTemplates) -> String {
        let mut out = format!("Task: {}\n\n", self.instruction);
        if let Some(ex) = &self.exemplar {
            out.push_str(ex);
            out.push_str("\n\n");
        }
        out.push_str(&templates.trajectory_header);
        out.push('\n');
        out.push_str(&self.trajectory);
        out.push('\n');
        out.push_str(&self.directive);
        out
    }
}

pub fn compose_prompt(
    context: &DecisionContext,
    exemplar: Option<&Trajectory>,
    mode: PromptMode,
    templates: &PromptTemplates,
) -> PromptBundle {
    let exemplar = exemplar.map(|t| {
        format!(
            "{}\n{}\n{}{}",
            templates.exemplar_open,
            templates.exemplar_note,
            serialize_trajectory(t),
            templates.exemplar_close
        )
    });
    let directive = match mode {
        PromptMode::Act => templates.act_directive.clone(),
        PromptMode::Evaluate => templates.evaluate_directive.clone(),
    };
    PromptBundle {
        instruction: String::from(context.instruction().as_str()),
        trajectory: context.serialize(),
        exemplar,
        directive,
    }
}

/// First number in `text`, mapped to `[0, 1]`: a decimal already in `[0, 1]`
/// is kept, anything else is read on the 0–10 scale. Clamped.
pub fn parse_score(text: &str) -> Result<f64> {
    let bytes = text.as_bytes();
    let start = bytes
        .iter()
        .position(u8::is_ascii_digit)
        .ok_or_else(|| Error::Provider(format!("no score in reply {:?}", truncate(text))))?;
    let mut end = start;
    let mut seen_dot = false;
    while end < bytes.len() {
        match bytes[end] {
            b'0'..=b'9' => end += 1,
            b'.' if !seen_dot && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) => {
                seen_dot = true;
                end += 1;
            }
            _ => break,
        }
    }
    let negative = start > 0 && bytes[start - 1] == b'-';
    let value: f64 = text[start..end]
        .parse()
        .map_err(|_| Error::Provider("unreadable score".into()))?;
    if negative {
        return Ok(0.0);
    }
    let score = if seen_dot && value <= 1.0 {
        value
    } else {
        value / 10.0
    };
    Ok(score.clamp(0.0, 1.0))
}

fn truncate(text: &str) -> &str {
    match text.char_indices().nth(80) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Action, Observation, Step};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ctx() -> DecisionContext {
        let step = Step::new(
            Observation::new("Numbers: 4 4 10 10").unwrap(),
            Action::new("10*10=100").unwrap(),
        );
        DecisionContext::new(
            Trajectory::from_steps(alloc::vec![step]),
            Observation::new("Remaining numbers: 4 4 100").unwrap(),
        )
    }

    fn exemplar() -> Trajectory {
        let s = |o: &str, a: &str| Step::new(Observation::new(o).unwrap(), Action::new(a).unwrap());
        Trajectory::from_steps(alloc::vec![
            s("Numbers: 1 2 3 4", "1+2=3"),
            s("Remaining numbers: 3 3 4", "3*4=12")
        ])
    }

    #[test]
    fn score_examples() {
        assert_abs_diff_eq!(parse_score("Score: 7").unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(parse_score("0.85").unwrap(), 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(
            parse_score("I think this plan is strong. 9/10.").unwrap(),
            0.9,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(parse_score("7.5 out of 10").unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(parse_score("42").unwrap(), 1.0);
        assert_eq!(parse_score("-3").unwrap(), 0.0);
        assert!(parse_score("no idea").is_err());
    }

    #[test]
    fn exemplar_is_optional_and_delimited() {
        let t = PromptTemplates::default();
        let plain = compose_prompt(&ctx(), None, PromptMode::Act, &t);
        assert!(plain.exemplar.is_none());
        let with = compose_prompt(&ctx(), Some(&exemplar()), PromptMode::Act, &t);
        assert_eq!(with.trajectory, plain.trajectory);
        let region = with.exemplar.clone().unwrap();
        assert!(region.starts_with(&t.exemplar_open) && region.ends_with(&t.exemplar_close));
        assert_eq!(region.lines().filter(|l| l.starts_with("ACT: ")).count(), 2);
        let text = with.render(&t);
        let close = text.find(&t.exemplar_close).unwrap();
        assert!(text.find(plain.trajectory.as_str()).unwrap() > close);
        assert_eq!(
            with,
            compose_prompt(&ctx(), Some(&exemplar()), PromptMode::Act, &t)
        );
    }

    #[test]
    fn evaluate_mode_asks_for_a_score() {
        let t = PromptTemplates::default();
        let b = compose_prompt(&ctx(), None, PromptMode::Evaluate, &t);
        assert_eq!(b.directive, t.evaluate_directive);
        assert_eq!(b.instruction, "Numbers: 4 4 10 10");
    }

    proptest! {
        #[test]
        fn scores_land_in_unit_interval(prefix in "[a-z :]{0,12}", n in 0u32..1000, frac in 0u32..100) {
            let text = format!("{prefix}{n}.{frac}");
            let s = parse_score(&text).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
