//! Target and flow specifications given on the command line.

use pdmp_core::potential::{make_product_potential, GaussianPotential, Potential, PowerPotential};
use pdmp_core::rhmc::FlowSpec;
use pdmp_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Isotropic Gaussian with precision `scale * I`.
    Gaussian { scale: f64 },
    /// Product of `|x_i|^b / 2`.
    Power { b: f64 },
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let number = |v: &str| v.parse::<f64>().map_err(|e| format!("'{s}': {e}"));
        match s.split_once(':') {
            None if s == "gaussian" => Ok(Target::Gaussian { scale: 1.0 }),
            Some(("gaussian", v)) => Ok(Target::Gaussian { scale: number(v)? }),
            Some(("power", v)) => Ok(Target::Power { b: number(v)? }),
            _ => Err(format!("unknown target '{s}' (gaussian, gaussian:<scale>, power:<b>)")),
        }
    }
}

impl Target {
    pub fn build(&self, d: usize) -> Result<Box<dyn Potential>> {
        if d == 0 {
            return Err(Error::Domain("dimension must be >= 1".into()));
        }
        Ok(match *self {
            Target::Gaussian { scale } => Box::new(GaussianPotential::isotropic(d, scale)?),
            Target::Power { b } => Box::new(make_product_potential(PowerPotential::new(b)?, d)?),
        })
    }
}

/// `exact`, `leapfrog:<h>` or `auto` (exact when available, else leapfrog
/// with step 1e-3).
pub fn flow_for(spec: &str, p: &dyn Potential) -> Result<FlowSpec> {
    match spec {
        "auto" => Ok(FlowSpec::exact_for(p).unwrap_or(FlowSpec::Leapfrog { step: 1e-3 })),
        "exact" => FlowSpec::exact_for(p).ok_or_else(|| Error::Domain("exact flow needs a Gaussian target".into())),
        other => match other.strip_prefix("leapfrog:") {
            Some(h) => Ok(FlowSpec::Leapfrog {
                step: h.parse().map_err(|e| Error::Parse(format!("leapfrog step '{h}': {e}")))?,
            }),
            None => Err(Error::Parse(format!("unknown flow '{other}' (auto, exact, leapfrog:<h>)"))),
        },
    }
}
