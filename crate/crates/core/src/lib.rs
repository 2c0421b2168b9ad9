//! Citizen and authority emergency coordination: verified registration, SOS
//! and incident intake, geofenced alert fan-out with an exactly-once delivery
//! ledger, moderated area-scoped chat and operator map content.
//!
//! [`Service`] is the entry point. Storage and third-party integrations sit
//! behind the [`store::Store`] and [`providers`] traits.

pub mod alerting;
pub mod catalog;
pub mod chat;
pub mod config;
mod dispatch;
pub mod error;
pub mod events;
pub mod geo;
pub mod identity;
pub mod ids;
pub mod intake;
pub mod model;
pub mod ops;
pub mod providers;
pub mod service;
pub mod store;
pub mod time;

pub use config::Config;
pub use error::{Error, ErrorClass, Result};
pub use service::{LocationUpdate, Principal, Providers, Service};
