//! Process boundaries over a built index: the JSON-RPC tool server and the
//! HTTP session API with its server-sent event stream.

pub mod http;
pub mod rpc;

pub use http::{router, serve, ApiError, AppState, HttpOptions, SessionSummary};
pub use rpc::ToolServer;
