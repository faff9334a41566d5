//! Name-keyed factories for interchangeable algorithm variants.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn(&serde_json::Value) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, factories: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F)
    where
        F: Fn(&serde_json::Value) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, params: &serde_json::Value) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(f) => f(params),
            None => Err(Error::Config(format!(
                "unknown {} '{}' (known: {})",
                self.kind,
                name,
                self.names().join(", ")
            ))),
        }
    }
}

pub(crate) fn param_f64(params: &serde_json::Value, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::Config(format!("missing numeric parameter '{key}'")))
}

pub(crate) fn param_f64_or(params: &serde_json::Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::Config(format!("parameter '{key}' must be a number"))),
    }
}

pub(crate) fn param_usize_or(params: &serde_json::Value, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::Config(format!("parameter '{key}' must be a non-negative integer"))),
    }
}
