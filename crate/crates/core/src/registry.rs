//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family (trust policies, parameter samplers, greedy selection
//! rules) is a trait object built by a factory function. The factories are
//! registered under a stable name so configs and the CLI can pick them at
//! runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Registry<F: Copy> {
    kind: &'static str,
    entries: BTreeMap<&'static str, F>,
}

impl<F: Copy> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &'static str, factory: F) -> Self {
        self.register(name, factory);
        self
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: F) {
        self.entries.insert(name, factory);
    }

    pub fn get(&self, name: &str) -> Result<F> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> u32 {
        1
    }

    fn two() -> u32 {
        2
    }

    #[test]
    fn lookup_and_listing() {
        let reg = Registry::<fn() -> u32>::new("number")
            .with("two", two)
            .with("one", one);
        assert_eq!(reg.names(), vec!["one", "two"]);
        assert_eq!(reg.get("two").unwrap()(), 2);
        let err = reg.get("three").unwrap_err().to_string();
        assert!(err.contains("unknown number 'three'"), "{err}");
        assert!(err.contains("one, two"));
    }
}
