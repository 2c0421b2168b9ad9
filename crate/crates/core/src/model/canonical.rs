//! Canonical serialized form shared by the gateway, the store and the harness.
//!
//! Compact JSON with fields in declaration order. Every entity uses ordered
//! collections, so equal values always encode to identical bytes.

use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Entity types have string keys and no fallible custom serializers.
    serde_json::to_vec(value).expect("entity serialization is infallible")
}

pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}
