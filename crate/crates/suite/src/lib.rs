//! Pass/fail reporting for the acceptance criteria in `tests/acceptance.rs`.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Result of one criterion: `Ok(detail)` or `Err(reason)`.
pub type Verdict = Result<String, String>;

#[derive(Default)]
pub struct Report {
    failed: Vec<&'static str>,
    total: usize,
}

impl Report {
    /// Runs `criterion`, enforcing `budget` on its wall-clock time, and
    /// prints one line. A panic counts as a failure.
    pub fn run(&mut self, name: &'static str, budget: Option<Duration>, criterion: impl FnOnce() -> Verdict) {
        self.total += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|payload| Err(format!("panicked: {}", panic_message(&payload))));
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, budget {limit:?}")),
            (other, _) => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({elapsed:.2?}): {detail}"),
            Err(reason) => {
                println!("[FAIL] {name} ({elapsed:.2?}): {reason}");
                self.failed.push(name);
            }
        }
    }

    /// Prints the tally; true when every criterion passed.
    pub fn finish(self) -> bool {
        println!(
            "\nacceptance: {} passed, {} failed of {}",
            self.total - self.failed.len(),
            self.failed.len(),
            self.total
        );
        if !self.failed.is_empty() {
            println!("failed: {}", self.failed.join(", "));
        }
        self.failed.is_empty()
    }
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "non-string panic".into())
}
