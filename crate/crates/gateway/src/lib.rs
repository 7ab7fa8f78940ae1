//! Judge gateway: accepts judge requests over HTTP, fans them into a
//! [`codeverif_broker::Broker`], and assembles verdicts and rewards from the
//! results pushed by sandbox workers.
//!
//! Workers run [`run_worker`] against the same broker. A request becomes one
//! broker job by default, or one job per test case with
//! [`Granularity::Case`].

mod http;
mod judge;
mod schema;
mod service;
mod worker;

pub use http::{router, runtime, serve, RunningGateway};
pub use judge::{assemble, judge, judge_locally};
pub use schema::{
    CaseResults, Granularity, JudgeRequest, JudgeResponse, Mode, ResolvedRequest, SolutionInput, SubmitBody,
    SubmitReply, SuiteCase, WorkItem, WorkResult,
};
pub use service::{read_audit_log, AuditRecord, Gateway, GatewayConfig, GatewayError, ItemError, WorkersReply};
pub use worker::{execute, run_worker, WorkerOptions, WorkerStats};
