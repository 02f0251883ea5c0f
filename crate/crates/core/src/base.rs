//! Logarithm base for information quantities.
//!
//! Every entropy / mutual-information routine takes the base explicitly; all
//! quantities within one computation use the same base. Rates, exponents and
//! codebook sizes are interpreted in the same unit.

use std::fmt;

/// Unit of information: base-2 logs (bits) or natural logs (nats).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    /// `log(x)` in this base. Callers must guard `x > 0`.
    #[inline]
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x.log2(),
            LogBase::Nats => x.ln(),
        }
    }

    /// Inverse of [`LogBase::log`]: `base^x`.
    #[inline]
    pub fn exp(self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x.exp2(),
            LogBase::Nats => x.exp(),
        }
    }

    /// Conversion factor from this base into bits.
    #[inline]
    pub fn to_bits_factor(self) -> f64 {
        match self {
            LogBase::Bits => 1.0,
            LogBase::Nats => std::f64::consts::LOG2_E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogBase::Bits => "bits",
            LogBase::Nats => "nats",
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_exp_roundtrip() {
        for base in [LogBase::Bits, LogBase::Nats] {
            for x in [0.1, 1.0, 2.0, 17.5] {
                assert!((base.exp(base.log(x)) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bits_nats_factor() {
        let x: f64 = 3.7;
        assert!((LogBase::Nats.log(x) * LogBase::Nats.to_bits_factor() - x.log2()).abs() < 1e-12);
    }
}
