//! Partitioning of annotated object-oriented programs into a trusted and an
//! untrusted image, and a dual-isolate runtime that executes the result.
//!
//! The pipeline is `dsl` (parse and validate) → `partitioner` (proxies,
//! relays, reachability, images) → `runtime` (two isolates joined by a
//! costed transition channel). `bench` drives synthetic workloads through it.

pub mod bench;
pub mod codec;
pub mod dsl;
pub mod partitioner;
pub mod runtime;
