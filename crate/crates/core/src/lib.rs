//! Decision traceability over a message bus.
//!
//! Every message published on the [`bus`] carries a [`schema::MessageHeader`]
//! naming its producer and the messages and external sources it consumed. The
//! bus journals every envelope; the [`store`] folds the journal into a lineage
//! graph that the [`engine`] queries backwards (where did this decision come
//! from?) and forwards (what did this input influence?).

pub mod bus;
pub mod cli;
pub mod engine;
pub mod json;
pub mod scenario;
pub mod schema;
pub mod service;
pub mod store;
