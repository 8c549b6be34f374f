//! Deterministic single-threaded executor.
//!
//! Activities are futures that yield at every channel and lock operation. At
//! each step the scheduler polls one ready activity chosen by a seeded RNG, so
//! a seed fixes the whole interleaving.

use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::task::{Context, Poll, Waker};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Task<'a> = Pin<Box<dyn Future<Output = ()> + 'a>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("no activity can make progress; blocked: {0:?}")]
    Deadlock(Vec<usize>),
    #[error("step budget exceeded")]
    BudgetExceeded,
}

/// Resolves on its second poll, handing control back to the scheduler once.
#[derive(Debug)]
pub struct YieldNow(bool);

impl Future for YieldNow {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _: &mut Context<'_>) -> Poll<()> {
        if self.0 {
            Poll::Ready(())
        } else {
            self.0 = true;
            Poll::Pending
        }
    }
}

pub fn yield_now() -> YieldNow {
    YieldNow(false)
}

/// Runs `tasks` to completion. `ready(i)` says whether task `i` may be polled;
/// `over_budget()` is checked after every poll.
pub fn run(
    mut tasks: Vec<Task<'_>>,
    rng: &RefCell<ChaCha8Rng>,
    ready: impl Fn(usize) -> bool,
    on_done: impl Fn(usize),
    over_budget: impl Fn() -> bool,
) -> Result<u64, SchedulerError> {
    let mut done = vec![false; tasks.len()];
    let mut cx = Context::from_waker(Waker::noop());
    let mut polls = 0;
    loop {
        let runnable: Vec<usize> = (0..tasks.len()).filter(|&i| !done[i] && ready(i)).collect();
        if runnable.is_empty() {
            let blocked: Vec<usize> = (0..tasks.len()).filter(|&i| !done[i]).collect();
            return if blocked.is_empty() { Ok(polls) } else { Err(SchedulerError::Deadlock(blocked)) };
        }
        let pick = if runnable.len() == 1 { runnable[0] } else { runnable[rng.borrow_mut().gen_range(0..runnable.len())] };
        polls += 1;
        if tasks[pick].as_mut().poll(&mut cx).is_ready() {
            done[pick] = true;
            on_done(pick);
        }
        if over_budget() {
            return Err(SchedulerError::BudgetExceeded);
        }
    }
}
