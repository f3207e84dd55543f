//! Feedback sources that map a sampled response to a scalar reward.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{ensure_index, Error, Result};
use crate::target::{check_distribution, RewardSignal};

/// One task: a context, its response space and the correct response.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub task_id: usize,
    pub context: usize,
    pub response_count: usize,
    pub ground_truth: usize,
    /// Reference user policy for theory checks.
    pub user_policy: Option<Vec<f64>>,
}

impl TaskInstance {
    pub fn new(task_id: usize, context: usize, response_count: usize, ground_truth: usize) -> Result<Self> {
        ensure_index("ground truth", ground_truth, response_count)?;
        Ok(TaskInstance {
            task_id,
            context,
            response_count,
            ground_truth,
            user_policy: None,
        })
    }

    pub fn with_user_policy(mut self, user: Vec<f64>) -> Result<Self> {
        if user.len() != self.response_count {
            return Err(Error::LengthMismatch {
                expected: self.response_count,
                got: user.len(),
            });
        }
        check_distribution(&user)?;
        self.user_policy = Some(user);
        Ok(self)
    }
}

/// Exact-match reward: +1 iff `y` is the ground truth.
pub fn rule_reward(y: usize, task: &TaskInstance) -> Result<RewardSignal> {
    ensure_index("response", y, task.response_count)?;
    Ok(RewardSignal::sparse(y == task.ground_truth))
}

/// Default spread `|Y| / 8`.
pub fn default_spread(task: &TaskInstance) -> f64 {
    task.response_count as f64 / 8.0
}

/// Synthetic dense score `2·exp(−dist²/(2σ²)) − 1` with index distance to the ground truth.
pub fn dense_reward(y: usize, task: &TaskInstance, sigma: f64) -> Result<RewardSignal> {
    ensure_index("response", y, task.response_count)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("spread must be positive, got {sigma}")));
    }
    let dist = y.abs_diff(task.ground_truth) as f64;
    let value = 2.0 * (-(dist * dist) / (2.0 * sigma * sigma)).exp() - 1.0;
    RewardSignal::dense(value.clamp(-1.0, 1.0))
}

/// Produces per-turn feedback for a sampled response.
pub trait FeedbackOracle {
    fn feedback(&mut self, task: &TaskInstance, turn: usize, response: usize) -> Result<RewardSignal>;
}

impl<F> FeedbackOracle for F
where
    F: FnMut(&TaskInstance, usize, usize) -> Result<RewardSignal>,
{
    fn feedback(&mut self, task: &TaskInstance, turn: usize, response: usize) -> Result<RewardSignal> {
        self(task, turn, response)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleOracle;

impl FeedbackOracle for RuleOracle {
    fn feedback(&mut self, task: &TaskInstance, _turn: usize, response: usize) -> Result<RewardSignal> {
        rule_reward(response, task)
    }
}

/// Dense scorer; `sigma = None` uses [`default_spread`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseOracle {
    pub sigma: Option<f64>,
}

impl FeedbackOracle for DenseOracle {
    fn feedback(&mut self, task: &TaskInstance, _turn: usize, response: usize) -> Result<RewardSignal> {
        let sigma = self.sigma.unwrap_or_else(|| default_spread(task));
        dense_reward(response, task, sigma)
    }
}

/// Replays a recorded reward sequence.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    rewards: VecDeque<RewardSignal>,
}

impl ScriptedOracle {
    pub fn new(rewards: impl IntoIterator<Item = RewardSignal>) -> Self {
        ScriptedOracle {
            rewards: rewards.into_iter().collect(),
        }
    }
}

impl FeedbackOracle for ScriptedOracle {
    fn feedback(&mut self, _task: &TaskInstance, turn: usize, _response: usize) -> Result<RewardSignal> {
        self.rewards
            .pop_front()
            .ok_or_else(|| Error::Aborted(format!("script exhausted at turn {turn}")))
    }
}

/// Human-in-the-loop feedback over a line-oriented terminal.
///
/// Prompts `task=<id> turn=<k> response=<y> correct?[+/-/q]` and reads one
/// line per answer; anything other than `+`, `-` or `q` re-prompts.
pub struct InteractiveOracle<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveOracle<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractiveOracle { input, output }
    }

    pub fn into_output(self) -> W {
        self.output
    }
}

impl<R: BufRead, W: Write> FeedbackOracle for InteractiveOracle<R, W> {
    fn feedback(&mut self, task: &TaskInstance, turn: usize, response: usize) -> Result<RewardSignal> {
        let io_err = |e: std::io::Error| Error::Aborted(format!("terminal error: {e}"));
        loop {
            writeln!(
                self.output,
                "task={} turn={} response={} correct?[+/-/q]",
                task.task_id, turn, response
            )
            .map_err(io_err)?;
            self.output.flush().map_err(io_err)?;
            let mut line = String::new();
            if self.input.read_line(&mut line).map_err(io_err)? == 0 {
                return Err(Error::Aborted("end of input".into()));
            }
            match line.trim() {
                "+" => return Ok(RewardSignal::SUCCESS),
                "-" => return Ok(RewardSignal::FAILURE),
                "q" => return Err(Error::Aborted("user quit".into())),
                _ => continue,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn task(n: usize, truth: usize) -> TaskInstance {
        TaskInstance::new(3, 0, n, truth).unwrap()
    }

    #[test]
    fn rule_examples() {
        let t = task(5, 2);
        assert_eq!(rule_reward(2, &t).unwrap().value(), 1.0);
        assert_eq!(rule_reward(4, &t).unwrap().value(), -1.0);
        assert_eq!(rule_reward(0, &task(1, 0)).unwrap(), RewardSignal::SUCCESS);
        assert!(rule_reward(5, &t).is_err());
    }

    #[test]
    fn dense_examples() {
        let t = task(64, 10);
        assert_eq!(dense_reward(10, &t, 2.0).unwrap().value(), 1.0);
        assert!(dense_reward(10, &t, 2.0).unwrap().is_success());
        assert_abs_diff_eq!(dense_reward(12, &t, 2.0).unwrap().value(), 0.2130613, epsilon = 1e-7);
        assert_abs_diff_eq!(dense_reward(63, &t, 2.0).unwrap().value(), -1.0, epsilon = 1e-12);
        assert!(dense_reward(1, &t, 0.0).is_err());
    }

    #[test]
    fn dense_unique_max() {
        let t = task(16, 7);
        let sigma = default_spread(&t);
        for y in 0..16 {
            let v = dense_reward(y, &t, sigma).unwrap().value();
            assert!((-1.0..=1.0).contains(&v));
            if y != 7 {
                assert!(v < 1.0);
            }
        }
    }

    #[test]
    fn interactive_keys() {
        let t = task(4, 1);
        let mut o = InteractiveOracle::new(Cursor::new("x\n+\n-\nq\n"), Vec::new());
        assert_eq!(o.feedback(&t, 1, 0).unwrap(), RewardSignal::SUCCESS);
        assert_eq!(o.feedback(&t, 2, 0).unwrap(), RewardSignal::FAILURE);
        assert!(matches!(o.feedback(&t, 3, 0), Err(Error::Aborted(_))));
        assert!(matches!(o.feedback(&t, 4, 0), Err(Error::Aborted(_))));
        let out = String::from_utf8(o.into_output()).unwrap();
        let lines: Vec<_> = out.lines().collect();
        // invalid key re-prompts turn 1
        assert_eq!(lines[0], "task=3 turn=1 response=0 correct?[+/-/q]");
        assert_eq!(lines[1], lines[0]);
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn scripted_exhaustion() {
        let t = task(2, 0);
        let mut o = ScriptedOracle::new([RewardSignal::FAILURE]);
        assert_eq!(o.feedback(&t, 1, 1).unwrap(), RewardSignal::FAILURE);
        assert!(o.feedback(&t, 2, 1).is_err());
    }

    #[test]
    fn user_policy_validated() {
        assert!(task(3, 0).with_user_policy(vec![0.5, 0.5, 0.0]).is_ok());
        assert!(task(3, 0).with_user_policy(vec![0.5, 0.6, 0.0]).is_err());
        assert!(task(3, 0).with_user_policy(vec![1.0]).is_err());
    }
}
