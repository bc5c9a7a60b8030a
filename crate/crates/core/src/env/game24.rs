//! Game of 24: combine four numbers with `+ - * /` to reach 24.
//!
//! Each action combines two remaining numbers and is written `a op b = c`.
//! `*`/`x`/`×` and `/`/`÷` are accepted as operator spellings, as is the
//! Unicode minus sign. The result replaces both operands; the game ends when
//! one number remains.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{check_env, Environment, Payload, Replay, StepOutcome, TaskSpec};
use crate::error::{Error, Result};
use crate::trajectory::{Action, Observation};
use crate::util::keyed_rng;

pub const NAME: &str = "game24";
pub const TARGET: f64 = 24.0;
/// Distance from 24 that still counts as reaching it.
pub const TARGET_TOLERANCE: f64 = 1e-6;
/// Divisors smaller than this in magnitude are refused.
pub const MIN_DIVISOR: f64 = 1e-9;
/// How far a number written in an action may be from the value it names.
const OPERAND_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn from_char(c: char) -> Option<Op> {
        match c {
            '+' => Some(Op::Add),
            '-' | '\u{2212}' => Some(Op::Sub),
            '*' | 'x' | 'X' | '\u{d7}' => Some(Op::Mul),
            '/' | '\u{f7}' => Some(Op::Div),
            _ => None,
        }
    }

    pub fn apply(self, a: f64, b: f64) -> Option<f64> {
        match self {
            Op::Add => Some(a + b),
            Op::Sub => Some(a - b),
            Op::Mul => Some(a * b),
            Op::Div if b.abs() < MIN_DIVISOR => None,
            Op::Div => Some(a / b),
        }
    }

    fn commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }
}

/// Renders integers without a fractional part and other values with up to
/// six decimals.
pub fn format_number(v: f64) -> String {
    let rounded = libm::round(v);
    if (v - rounded).abs() < 1e-9 {
        return format!("{}", rounded as i64);
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn format_step(a: f64, op: Op, b: f64, c: f64) -> String {
    format!(
        "{}{}{}={}",
        format_number(a),
        op.symbol(),
        format_number(b),
        format_number(c)
    )
}

/// A parsed `a op b = c` action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedStep {
    pub a: f64,
    pub op: Op,
    pub b: f64,
    pub c: f64,
}

pub fn parse_step(text: &str) -> Option<ParsedStep> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (lhs, rhs) = compact.split_once('=')?;
    let c = parse_number(rhs)?;
    // the operator is the first operator character that follows a digit,
    // which leaves room for signed operands
    let mut prev: Option<char> = None;
    for (i, ch) in lhs.char_indices() {
        if prev.is_some_and(|p| p.is_ascii_digit() || p == '.') {
            if let Some(op) = Op::from_char(ch) {
                let a = parse_number(&lhs[..i])?;
                let b = parse_number(&lhs[i + ch.len_utf8()..])?;
                return Some(ParsedStep { a, op, b, c });
            }
        }
        prev = Some(ch);
    }
    None
}

fn parse_number(text: &str) -> Option<f64> {
    let normalized = text.replace('\u{2212}', "-");
    let v: f64 = normalized.parse().ok()?;
    v.is_finite().then_some(v)
}

/// The multiset of remaining numbers, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Game24State {
    numbers: Vec<f64>,
}

impl Game24State {
    pub fn new(mut numbers: Vec<f64>) -> Self {
        numbers.sort_by(f64::total_cmp);
        Self { numbers }
    }

    pub fn from_ints(numbers: &[i64]) -> Self {
        Self::new(numbers.iter().map(|&n| n as f64).collect())
    }

    pub fn numbers(&self) -> &[f64] {
        &self.numbers
    }

    pub fn is_terminal(&self) -> bool {
        self.numbers.len() <= 1
    }

    pub fn reward(&self) -> f64 {
        match self.numbers.as_slice() {
            [x] if (x - TARGET).abs() <= TARGET_TOLERANCE => 1.0,
            _ => 0.0,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.numbers.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format_number(*n));
        }
        out
    }

    fn observation(&self) -> Observation {
        let text = if self.is_terminal() {
            if self.reward() == 1.0 {
                format!("Remaining numbers: {}. Reached 24.", self.render())
            } else {
                format!("Remaining numbers: {}. Did not reach 24.", self.render())
            }
        } else {
            format!("Remaining numbers: {}", self.render())
        };
        Observation::new(text).expect("non-empty observation")
    }

    /// Outcome of the current state viewed on its own.
    pub fn outcome(&self) -> StepOutcome {
        if self.is_terminal() {
            StepOutcome::finished(self.observation(), self.reward())
        } else {
            StepOutcome::running(self.observation())
        }
    }

    fn position_of(&self, value: f64, skip: Option<usize>) -> Option<usize> {
        self.numbers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .find(|(_, n)| (*n - value).abs() <= OPERAND_TOLERANCE)
            .map(|(i, _)| i)
    }

    /// Applies one action. Malformed actions, unavailable operands and wrong
    /// results leave the state unchanged and are reported as invalid.
    pub fn step(&self, action: &Action) -> (Game24State, StepOutcome) {
        let reject = |reason: &str| {
            let text = format!(
                "Invalid step '{}': {}. Remaining numbers: {}",
                action,
                reason,
                self.render()
            );
            (
                self.clone(),
                StepOutcome::rejected(Observation::new(text).expect("non-empty")),
            )
        };
        if self.is_terminal() {
            return reject("the game is over");
        }
        let Some(p) = parse_step(action.as_str()) else {
            return reject("expected the form a op b = c");
        };
        let Some(i) = self.position_of(p.a, None) else {
            return reject("first operand is not available");
        };
        let Some(j) = self.position_of(p.b, Some(i)) else {
            return reject("second operand is not available");
        };
        let Some(value) = p.op.apply(self.numbers[i], self.numbers[j]) else {
            return reject("division by zero");
        };
        if (value - p.c).abs() > OPERAND_TOLERANCE * value.abs().max(1.0) {
            return reject("the stated result is wrong");
        }
        let mut rest: Vec<f64> = self
            .numbers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i && *k != j)
            .map(|(_, n)| *n)
            .collect();
        rest.push(value);
        let next = Game24State::new(rest);
        let outcome = next.outcome();
        (next, outcome)
    }

    /// Every distinct move `(a, op, b)` with its result, in a fixed order.
    fn moves(&self) -> Vec<(usize, usize, Op, f64)> {
        let n = self.numbers.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for op in Op::ALL {
                    if op.commutative() && i > j {
                        continue;
                    }
                    if let Some(v) = op.apply(self.numbers[i], self.numbers[j]) {
                        out.push((i, j, op, v));
                    }
                }
            }
        }
        out
    }

    fn apply_move(&self, i: usize, j: usize, value: f64) -> Game24State {
        let mut rest: Vec<f64> = self
            .numbers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i && *k != j)
            .map(|(_, n)| *n)
            .collect();
        rest.push(value);
        Game24State::new(rest)
    }

    pub fn is_solvable(&self) -> bool {
        self.solve().is_some()
    }

    /// A sequence of actions reaching 24, if one exists.
    pub fn solve(&self) -> Option<Vec<Action>> {
        if self.is_terminal() {
            return (self.reward() == 1.0).then(Vec::new);
        }
        for (i, j, op, v) in self.moves() {
            if let Some(mut rest) = self.apply_move(i, j, v).solve() {
                let action = format_step(self.numbers[i], op, self.numbers[j], v);
                rest.insert(0, Action::new(action).expect("non-empty"));
                return Some(rest);
            }
        }
        None
    }

    /// Distinct first moves after which 24 is still reachable.
    pub fn solving_moves(&self, limit: usize) -> Vec<Action> {
        let mut out: Vec<Action> = Vec::new();
        for (i, j, op, v) in self.moves() {
            if out.len() >= limit {
                break;
            }
            if self.apply_move(i, j, v).is_solvable() {
                let action = Action::new(format_step(self.numbers[i], op, self.numbers[j], v))
                    .expect("non-empty");
                if !out.contains(&action) {
                    out.push(action);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub solvable: bool,
    /// Replayable steps reaching 24.
    pub witness: Option<Vec<Action>>,
    /// The same solution as a single infix expression.
    pub expression: Option<String>,
}

/// Exhaustive solvability check for a four-number task.
pub fn game24_oracle(numbers: &[i64]) -> Result<OracleResult> {
    if numbers.len() != 4 {
        return Err(Error::input(format!(
            "the oracle expects 4 numbers, got {}",
            numbers.len()
        )));
    }
    let items: Vec<(f64, String)> = numbers
        .iter()
        .map(|&n| (n as f64, format!("{n}")))
        .collect();
    let mut steps = Vec::new();
    let expression = search_expression(&items, &mut steps);
    let witness = expression.as_ref().map(|_| {
        steps
            .into_iter()
            .map(|s| Action::new(s).expect("non-empty"))
            .collect()
    });
    Ok(OracleResult {
        solvable: expression.is_some(),
        witness,
        expression,
    })
}

fn search_expression(items: &[(f64, String)], steps: &mut Vec<String>) -> Option<String> {
    if items.len() == 1 {
        return ((items[0].0 - TARGET).abs() <= TARGET_TOLERANCE).then(|| items[0].1.clone());
    }
    for i in 0..items.len() {
        for j in 0..items.len() {
            if i == j {
                continue;
            }
            for op in Op::ALL {
                if op.commutative() && i > j {
                    continue;
                }
                let (a, b) = (&items[i], &items[j]);
                let Some(v) = op.apply(a.0, b.0) else {
                    continue;
                };
                let mut next: Vec<(f64, String)> = items
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, x)| x.clone())
                    .collect();
                next.push((v, format!("({} {} {})", a.1, op.symbol(), b.1)));
                steps.push(format_step(a.0, op, b.0, v));
                if let Some(expr) = search_expression(&next, steps) {
                    return Some(expr);
                }
                steps.pop();
            }
        }
    }
    None
}

/// The Game of 24 environment. Payload: four integers.
#[derive(Debug, Clone, Copy, Default)]
pub struct Game24;

impl Game24 {
    fn numbers<'a>(&self, task: &'a TaskSpec) -> Result<&'a [i64]> {
        check_env(self, task)?;
        match &task.payload {
            Payload::Numbers(n) if n.len() == 4 => Ok(n),
            _ => Err(Error::input(format!(
                "task {}: game24 payload must be four integers",
                task.task_id
            ))),
        }
    }

    /// `count` tasks of four numbers in `1..=13` drawn from `seed`, keeping
    /// only solvable draws when `solvable_only` is set.
    pub fn generate_tasks(&self, count: usize, seed: u64, solvable_only: bool) -> Vec<TaskSpec> {
        let mut rng = keyed_rng(seed, "game24-tasks");
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let mut numbers: Vec<i64> = (0..4).map(|_| rng.random_range(1..=13)).collect();
            numbers.sort_unstable();
            if solvable_only && !Game24State::from_ints(&numbers).is_solvable() {
                continue;
            }
            out.push(TaskSpec {
                task_id: format!("g24-{:04}", out.len()),
                environment: NAME.to_string(),
                payload: Payload::Numbers(numbers),
            });
        }
        out
    }

    fn state_after(&self, task: &TaskSpec, actions: &[Action]) -> Result<Game24State> {
        let mut state = Game24State::from_ints(self.numbers(task)?);
        for (k, action) in actions.iter().enumerate() {
            if state.is_terminal() {
                return Err(Error::state(format!(
                    "action {k} comes after the game ended"
                )));
            }
            state = state.step(action).0;
        }
        Ok(state)
    }
}

impl Environment for Game24 {
    fn name(&self) -> &str {
        NAME
    }

    fn success_threshold(&self) -> f64 {
        1.0
    }

    fn instruction(&self, task: &TaskSpec) -> Result<Observation> {
        let state = Game24State::from_ints(self.numbers(task)?);
        Observation::new(format!(
            "Use the numbers {} and basic arithmetic (+ - * /) to obtain 24. \
             Each step combines two remaining numbers, written as a op b = c.",
            state.render()
        ))
    }

    fn replay(&self, task: &TaskSpec, actions: &[Action]) -> Result<Replay> {
        let mut state = Game24State::from_ints(self.numbers(task)?);
        let mut outcomes = Vec::with_capacity(actions.len());
        for (k, action) in actions.iter().enumerate() {
            if outcomes.last().is_some_and(|o: &StepOutcome| o.terminal) {
                return Err(Error::state(format!(
                    "action {k} comes after a terminal outcome"
                )));
            }
            let (next, outcome) = state.step(action);
            state = next;
            outcomes.push(outcome);
        }
        Ok(Replay {
            initial: self.instruction(task)?,
            outcomes,
        })
    }

    fn oracle_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        limit: usize,
    ) -> Result<Vec<Action>> {
        Ok(self.state_after(task, actions)?.solving_moves(limit))
    }

    fn random_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        rng: &mut dyn RngCore,
        n: usize,
    ) -> Result<Vec<Action>> {
        let state = self.state_after(task, actions)?;
        let moves = state.moves();
        let mut out: Vec<Action> = Vec::new();
        if moves.is_empty() {
            return Ok(out);
        }
        for _ in 0..n * 4 {
            if out.len() >= n {
                break;
            }
            let (i, j, op, v) = moves[rng.random_range(0..moves.len())];
            let action = Action::new(format_step(state.numbers[i], op, state.numbers[j], v))
                .expect("non-empty");
            if !out.contains(&action) {
                out.push(action);
            }
        }
        Ok(out)
    }

    /// 1 while 24 is still reachable (or reached), else 0.
    fn progress(&self, task: &TaskSpec, actions: &[Action]) -> Result<f64> {
        let state = self.state_after(task, actions)?;
        Ok(if state.is_solvable() { 1.0 } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn act(s: &str) -> Action {
        Action::new(s).unwrap()
    }

    fn task(n: [i64; 4]) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            environment: NAME.into(),
            payload: Payload::Numbers(n.to_vec()),
        }
    }

    #[test]
    fn parse_variants() {
        assert_eq!(
            parse_step("10*10=100"),
            Some(ParsedStep {
                a: 10.0,
                op: Op::Mul,
                b: 10.0,
                c: 100.0
            })
        );
        assert_eq!(parse_step(" 4 - 10 = -6 ").unwrap().c, -6.0);
        assert_eq!(
            parse_step("-6*-4=24").unwrap(),
            ParsedStep {
                a: -6.0,
                op: Op::Mul,
                b: -4.0,
                c: 24.0
            }
        );
        assert_eq!(parse_step("8 ÷ 3 = 2.666667").unwrap().op, Op::Div);
        assert_eq!(parse_step("3 × 8 = 24").unwrap().op, Op::Mul);
        assert!(parse_step("hello").is_none());
        assert!(parse_step("3+=4").is_none());
    }

    #[test]
    fn single_number_states() {
        let s = Game24State::new(vec![24.0]);
        assert!(s.is_terminal());
        assert_eq!(s.outcome().reward, Some(1.0));
        let (next, out) = Game24State::new(vec![1.0, 1.0]).step(&act("1+1=2"));
        assert_eq!(next.numbers(), &[2.0]);
        assert!(out.terminal);
        assert_eq!(out.reward, Some(0.0));
    }

    #[test]
    fn multiset_replacement() {
        let (next, out) = Game24State::from_ints(&[4, 4, 10, 10]).step(&act("10*10=100"));
        assert_eq!(next.render(), "4 4 100");
        assert!(!out.terminal && !out.invalid);
        assert_eq!(out.observation.as_str(), "Remaining numbers: 4 4 100");
    }

    #[test]
    fn invalid_steps_leave_state_unchanged() {
        let s = Game24State::from_ints(&[1, 2, 3, 4]);
        for bad in ["5+1=6", "1+1=2", "1+2=4", "nonsense", "4/0=1"] {
            let (next, out) = s.step(&act(bad));
            assert_eq!(next, s, "{bad}");
            assert!(
                out.invalid && !out.terminal && out.reward.is_none(),
                "{bad}"
            );
        }
    }

    #[test]
    fn fractional_intermediate_values() {
        let s = Game24State::from_ints(&[3, 3, 8, 8]);
        let (s, out) = s.step(&act("8/3=2.666667"));
        assert!(!out.invalid);
        let (s, out) = s.step(&act("3-2.666667=0.333333"));
        assert!(!out.invalid, "{}", out.observation);
        let (_, out) = s.step(&act("8/0.333333=24"));
        assert_eq!(out.reward, Some(1.0));
    }

    #[test]
    fn replay_solves_four_four_ten_ten() {
        let t = task([4, 4, 10, 10]);
        let actions = [act("10*10=100"), act("100-4=96"), act("96/4=24")];
        let r = Game24.replay(&t, &actions).unwrap();
        assert!(r.is_terminal());
        assert_eq!(r.reward(), Some(1.0));
        assert_eq!(Game24.replay(&t, &actions).unwrap(), r);
        let r0 = Game24.replay(&t, &[]).unwrap();
        assert!(r0.outcomes.is_empty());
        assert!(r0
            .current_observation()
            .as_str()
            .starts_with("Use the numbers 4 4 10 10"));
    }

    #[test]
    fn acting_after_terminal_is_an_error() {
        let t = task([4, 4, 10, 10]);
        let actions = [
            act("10*10=100"),
            act("100-4=96"),
            act("96/4=24"),
            act("24+0=24"),
        ];
        assert!(matches!(
            Game24.replay(&t, &actions),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let r = game24_oracle(&[4, 4, 10, 10]).unwrap();
        assert!(r.solvable);
        let replay = Game24
            .replay(&task([4, 4, 10, 10]), r.witness.as_ref().unwrap())
            .unwrap();
        assert_eq!(replay.reward(), Some(1.0));
        assert!(!game24_oracle(&[1, 1, 1, 1]).unwrap().solvable);
        assert!(game24_oracle(&[24, 1, 1, 1]).unwrap().solvable);
        assert!(game24_oracle(&[1, 2, 3]).is_err());
    }

    #[test]
    fn oracle_actions_keep_solvable() {
        let t = task([4, 4, 10, 10]);
        let moves = Game24.oracle_actions(&t, &[], 8).unwrap();
        assert!(!moves.is_empty());
        for m in &moves {
            assert_eq!(Game24.progress(&t, core::slice::from_ref(m)).unwrap(), 1.0);
        }
    }

    #[test]
    fn generated_tasks_are_seeded_and_solvable() {
        let a = Game24.generate_tasks(20, 3, true);
        assert_eq!(a, Game24.generate_tasks(20, 3, true));
        for t in &a {
            let Payload::Numbers(n) = &t.payload else {
                panic!()
            };
            assert!(game24_oracle(n).unwrap().solvable);
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(100.0), "100");
        assert_eq!(format_number(-6.0), "-6");
        assert_eq!(format_number(8.0 / 3.0), "2.666667");
        assert_eq!(format_number(0.5), "0.5");
    }
}
