//! Executable model of an asynchronous-write file system specification,
//! together with a concrete buffered simulator and a refinement checker that
//! tests every simulator behaviour against the model's outcome sets.
//!
//! * [`nondet`]: nondeterministic computations as sets of outcomes
//! * [`model`]: abstract state, update records and the global invariant
//! * [`update`]: nondeterministic flushing and the generic update step
//! * [`ops`]: top-level operations (create, fsync, lookup, unlink)
//! * [`sim`]: the deterministic buffered implementation and its abstraction
//! * [`harness`]: trace checking, fuzzing and bounded exploration

pub mod harness;
pub mod model;
pub mod nondet;
pub mod ops;
pub mod sim;
pub mod update;
