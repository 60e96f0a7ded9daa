//! System description shared by the analytic engine and the simulator.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::ConfigError;

/// Per-queue buffer size `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueueCap {
    Finite(usize),
    Unbounded,
}

impl QueueCap {
    pub fn finite(self) -> Option<usize> {
        match self {
            QueueCap::Finite(l) => Some(l),
            QueueCap::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, QueueCap::Unbounded)
    }
}

impl fmt::Display for QueueCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueCap::Finite(l) => write!(f, "{l}"),
            QueueCap::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for QueueCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            QueueCap::Finite(l) => s.serialize_u64(*l as u64),
            QueueCap::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for QueueCap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct CapVisitor;

        impl Visitor<'_> for CapVisitor {
            type Value = QueueCap;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or \"inf\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<QueueCap, E> {
                Ok(QueueCap::Finite(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<QueueCap, E> {
                if v < 0 {
                    return Err(E::custom("queue capacity cannot be negative"));
                }
                Ok(QueueCap::Finite(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<QueueCap, E> {
                match v {
                    "inf" | "infinity" | "unbounded" => Ok(QueueCap::Unbounded),
                    other => other
                        .parse::<usize>()
                        .map(QueueCap::Finite)
                        .map_err(|_| E::custom(format!("invalid queue capacity {other:?}"))),
                }
            }
        }

        d.deserialize_any(CapVisitor)
    }
}

/// A `D/M/(K,N)/L` instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_paths: usize,
    pub k_data: usize,
    pub queue_cap: QueueCap,
    /// Block period τ in seconds.
    pub inter_arrival: f64,
    /// Per-path service rate μ_j (1/s).
    pub service_rates: Vec<f64>,
    /// Per-path packet erasure probability ε_j.
    pub erasure_probs: Vec<f64>,
}

impl SystemConfig {
    /// Builds and validates a configuration.
    pub fn new(
        n_paths: usize,
        k_data: usize,
        queue_cap: QueueCap,
        inter_arrival: f64,
        service_rates: Vec<f64>,
        erasure_probs: Vec<f64>,
    ) -> Result<Self, ConfigError> {
        validate_config(SystemConfig {
            n_paths,
            k_data,
            queue_cap,
            inter_arrival,
            service_rates,
            erasure_probs,
        })
    }

    /// All paths share the same service rate and erasure probability.
    pub fn balanced(
        n_paths: usize,
        k_data: usize,
        queue_cap: QueueCap,
        inter_arrival: f64,
        mu: f64,
        eps: f64,
    ) -> Result<Self, ConfigError> {
        Self::new(
            n_paths,
            k_data,
            queue_cap,
            inter_arrival,
            vec![mu; n_paths],
            vec![eps; n_paths],
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_paths == 0 {
            return Err(ConfigError::NoPaths);
        }
        if self.k_data == 0 {
            return Err(ConfigError::ZeroData);
        }
        if self.k_data > self.n_paths {
            return Err(ConfigError::CodeExceedsPaths {
                k: self.k_data,
                n: self.n_paths,
            });
        }
        if self.queue_cap == QueueCap::Finite(0) {
            return Err(ConfigError::ZeroCapacity);
        }
        if self.service_rates.len() != self.n_paths {
            return Err(ConfigError::LengthMismatch {
                field: "service_rates",
                expected: self.n_paths,
                found: self.service_rates.len(),
            });
        }
        if self.erasure_probs.len() != self.n_paths {
            return Err(ConfigError::LengthMismatch {
                field: "erasure_probs",
                expected: self.n_paths,
                found: self.erasure_probs.len(),
            });
        }
        if !(self.inter_arrival > 0.0 && self.inter_arrival.is_finite()) {
            return Err(ConfigError::NonPositivePeriod(self.inter_arrival));
        }
        for (path, &value) in self.service_rates.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NonPositiveRate { path, value });
            }
        }
        for (path, &value) in self.erasure_probs.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(ConfigError::ErasureOutOfRange { path, value });
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.inter_arrival
    }

    /// True when every queue satisfies μ_j τ > 1, i.e. arrivals are slower than service.
    pub fn is_stable(&self) -> bool {
        self.service_rates
            .iter()
            .all(|&mu| mu * self.inter_arrival > 1.0)
    }

    /// Copy with a different buffer size.
    pub fn with_queue_cap(&self, queue_cap: QueueCap) -> Self {
        SystemConfig {
            queue_cap,
            ..self.clone()
        }
    }
}

/// Returns `cfg` unchanged when all invariants hold.
pub fn validate_config(cfg: SystemConfig) -> Result<SystemConfig, ConfigError> {
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SystemConfig {
        SystemConfig {
            n_paths: 5,
            k_data: 4,
            queue_cap: QueueCap::Finite(1),
            inter_arrival: 2.0,
            service_rates: vec![1.0; 5],
            erasure_probs: vec![0.1; 5],
        }
    }

    #[test]
    fn accepts_reference_configuration() {
        let cfg = base();
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn rejects_k_above_n() {
        let cfg = SystemConfig {
            n_paths: 2,
            k_data: 3,
            service_rates: vec![1.0; 2],
            erasure_probs: vec![0.1; 2],
            ..base()
        };
        assert_eq!(
            validate_config(cfg).unwrap_err(),
            ConfigError::CodeExceedsPaths { k: 3, n: 2 }
        );
    }

    #[test]
    fn rejects_zero_period() {
        let cfg = SystemConfig {
            inter_arrival: 0.0,
            ..base()
        };
        assert_eq!(
            validate_config(cfg).unwrap_err(),
            ConfigError::NonPositivePeriod(0.0)
        );
    }

    #[test]
    fn rejects_length_mismatch_and_bad_values() {
        let cfg = SystemConfig {
            service_rates: vec![1.0; 4],
            ..base()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(ConfigError::LengthMismatch {
                field: "service_rates",
                ..
            })
        ));

        let mut cfg = base();
        cfg.service_rates[2] = -1.0;
        assert_eq!(
            validate_config(cfg).unwrap_err(),
            ConfigError::NonPositiveRate {
                path: 2,
                value: -1.0
            }
        );

        let mut cfg = base();
        cfg.erasure_probs[4] = 1.0;
        assert_eq!(
            validate_config(cfg).unwrap_err().kind(),
            "erasure_out_of_range"
        );
    }

    #[test]
    fn queue_cap_json_forms() {
        let l: QueueCap = serde_json::from_str("3").unwrap();
        assert_eq!(l, QueueCap::Finite(3));
        let l: QueueCap = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(l, QueueCap::Unbounded);
        assert_eq!(serde_json::to_string(&QueueCap::Unbounded).unwrap(), "\"inf\"");
        assert!(serde_json::from_str::<QueueCap>("\"many\"").is_err());
    }
}
