//! Iteration shapes.
//!
//! | combinator                  | loop shape                                  |
//! |-----------------------------|---------------------------------------------|
//! | `iter_parallel`             | `for i { A(i); B(i) }`, everything parallel |
//! | `iter_seq_iterations`       | `for i barrier { A(i); B(i) }`              |
//! | `iter_parallel_iterations`  | `for i { A(i); barrier { B(i) } }` per child activity |
//! | `iter_sequential`           | `for i { barrier { A(i) } barrier { B(i) } }` |

use super::{Ctx, ExecMode, RemoteError};
use crate::runtime::pool::block_on;
use std::thread;

impl Ctx {
    /// Issues every iteration's statements without waiting; they stay
    /// pending in the enclosing scope.
    pub fn iter_parallel(&self, n: usize, body: impl Fn(&Ctx, usize)) {
        self.scope(|c| {
            for i in 0..n {
                body(c, i);
            }
        })
    }

    /// Each iteration is a barrier: iteration `i` completes before `i + 1`
    /// starts, while the statements inside one iteration may overlap.
    pub fn iter_seq_iterations(&self, n: usize, body: impl Fn(&Ctx, usize)) -> Result<(), RemoteError> {
        for i in 0..n {
            self.barrier(|c| body(c, i))?;
        }
        Ok(())
    }

    /// Iterations run as parallel child activities; inside each, `a(i)`
    /// completes before `b(i)` starts. Returns after every child finished.
    pub fn iter_parallel_iterations<A, B>(&self, n: usize, a: A, b: B) -> Result<(), RemoteError>
    where
        A: Fn(&Ctx, usize) + Sync,
        B: Fn(&Ctx, usize) + Sync,
    {
        if self.mode() == ExecMode::DistributedSequential {
            for i in 0..n {
                a(self, i);
                self.barrier(|c| b(c, i))?;
            }
            return Ok(());
        }
        let results: Vec<Result<(), RemoteError>> = block_on(|| {
            thread::scope(|s| {
                let handles: Vec<_> = (0..n)
                    .map(|i| {
                        let (a, b) = (&a, &b);
                        let core = self.core.clone();
                        s.spawn(move || {
                            let child = Ctx::new(core);
                            a(&child, i);
                            let r = child.barrier(|c| b(c, i));
                            child.drain().and(r)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(RemoteError::Usage("iteration panicked".into()))))
                    .collect()
            })
        });
        results.into_iter().collect()
    }

    /// Total order: `A(0), B(0), A(1), B(1), ...`.
    pub fn iter_sequential(
        &self,
        n: usize,
        a: impl Fn(&Ctx, usize),
        b: impl Fn(&Ctx, usize),
    ) -> Result<(), RemoteError> {
        for i in 0..n {
            self.barrier(|c| a(c, i))?;
            self.barrier(|c| b(c, i))?;
        }
        Ok(())
    }
}
