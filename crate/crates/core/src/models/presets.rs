use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::Error;
use crate::nonlocal::InteractionKernel;
use crate::problem::{ModelSpec, RunningCost, Selective, TerminalCost};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetName {
    Sznajd,
    HegselmannKrause,
    CrowdExit,
    MassTransfer,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Sznajd,
        PresetName::HegselmannKrause,
        PresetName::CrowdExit,
        PresetName::MassTransfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Sznajd => "sznajd",
            PresetName::HegselmannKrause => "hegselmann_krause",
            PresetName::CrowdExit => "crowd_exit",
            PresetName::MassTransfer => "mass_transfer",
        }
    }

    /// Grid size and step count of the reference experiments.
    pub fn default_resolution(self) -> (usize, usize) {
        match self {
            PresetName::Sznajd => (1000, 200),
            PresetName::HegselmannKrause => (1000, 100),
            PresetName::CrowdExit => (1000, 250),
            PresetName::MassTransfer => (1000, 200),
        }
    }

    /// Horizon used for the temporal convergence studies.
    pub fn study_horizon(self) -> f64 {
        match self {
            PresetName::Sznajd => 4.0,
            PresetName::CrowdExit => 2.0,
            PresetName::HegselmannKrause => 10.0,
            PresetName::MassTransfer => 3.0,
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == key)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// `max(-(x/b)^2 + a, 0)`.
fn bump(x: f64, a: f64, b: f64) -> f64 {
    (a - (x / b) * (x / b)).max(0.0)
}

fn gaussian(x: f64, mu: f64, s: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * s * s)).exp()
}

/// Control penalty of the crowd-exit preset. Not stated for this model in the
/// source; 1 makes the default descent stabilize at the published J.
pub const CROWD_GAMMA: f64 = 1.0;

pub fn make_preset(name: PresetName) -> ModelSpec {
    match name {
        PresetName::Sznajd => ModelSpec {
            name: name.to_string(),
            a: -1.0,
            b: 1.0,
            kernel: InteractionKernel::Sznajd { scale: 1.0 },
            selective: Selective::Constant(1.0),
            running: RunningCost::TargetPoint { x_d: -0.5 },
            terminal: TerminalCost::Zero,
            sigma: 0.02f64.sqrt(),
            gamma: 0.5,
            beta_a: 0.0,
            beta_b: 0.0,
            horizon: 8.0,
            initial: Arc::new(|x| bump(x + 0.75, 0.05, 0.5) + bump(x - 0.5, 0.15, 1.0)),
            normalize_initial: true,
            target: None,
        },
        PresetName::HegselmannKrause => ModelSpec {
            name: name.to_string(),
            a: -1.0,
            b: 1.0,
            kernel: InteractionKernel::BoundedConfidence { radius: 0.15 },
            selective: Selective::Constant(1.0),
            running: RunningCost::TargetPoint { x_d: 0.0 },
            terminal: TerminalCost::Zero,
            sigma: 0.002f64.sqrt(),
            gamma: 2.5,
            beta_a: 0.0,
            beta_b: 0.0,
            horizon: 10.0,
            initial: Arc::new(|x| 0.5 + 0.01 * (1.0 - x * x)),
            normalize_initial: true,
            target: None,
        },
        PresetName::CrowdExit => ModelSpec {
            name: name.to_string(),
            a: -1.0,
            b: 1.0,
            kernel: InteractionKernel::Zero,
            selective: Selective::Mobility,
            running: RunningCost::Mass { weight: 1.0 },
            terminal: TerminalCost::Zero,
            sigma: 0.04f64.sqrt(),
            gamma: CROWD_GAMMA,
            beta_a: -10.0,
            beta_b: 10.0,
            horizon: 3.0,
            initial: Arc::new(|x| {
                0.9 * (-100.0 * (x + 0.4) * (x + 0.4)).exp() + 0.65 * (-150.0 * x * x).exp()
            }),
            // the two groups are given in absolute units
            normalize_initial: false,
            target: None,
        },
        PresetName::MassTransfer => ModelSpec {
            name: name.to_string(),
            a: -1.0,
            b: 1.0,
            kernel: InteractionKernel::Sznajd { scale: 0.05 },
            selective: Selective::Constant(1.0),
            running: RunningCost::TargetDensity,
            terminal: TerminalCost::TargetDensity,
            sigma: 0.02f64.sqrt(),
            gamma: 0.1,
            beta_a: 0.0,
            beta_b: 0.0,
            horizon: 3.0,
            initial: Arc::new(|x| gaussian(x, 0.0, 0.1)),
            normalize_initial: true,
            target: Some(Arc::new(|x| {
                gaussian(x, 0.5, 0.1) + gaussian(x, -0.3, 0.15)
            })),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use approx::assert_abs_diff_eq;

    #[test]
    fn names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert_eq!(
            "Crowd-Exit".parse::<PresetName>().unwrap(),
            PresetName::CrowdExit
        );
        assert!(matches!(
            "voter".parse::<PresetName>(),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn parameters() {
        let s = make_preset(PresetName::Sznajd);
        assert_eq!(s.gamma, 0.5);
        assert_abs_diff_eq!(s.sigma * s.sigma, 0.02, epsilon = 1e-15);
        assert!(matches!(s.running, RunningCost::TargetPoint { x_d } if x_d == -0.5));
        let c = make_preset(PresetName::CrowdExit);
        assert!(matches!(c.selective, Selective::Mobility));
        assert_eq!((c.beta_a, c.beta_b), (-10.0, 10.0));
        let h = make_preset(PresetName::HegselmannKrause);
        assert_eq!(h.gamma, 2.5);
        assert!(h.kernel.eval(0.0, 0.15) == 1.0);
    }

    #[test]
    fn densities_normalize() {
        for name in PresetName::ALL {
            let p = Problem::new(make_preset(name), 201).unwrap();
            assert!(p.rho0().iter().all(|&v| v >= 0.0));
            if p.model.normalize_initial {
                assert_abs_diff_eq!(p.mass(p.rho0().view()), 1.0, epsilon = 1e-10);
            }
        }
        let mt = Problem::new(make_preset(PresetName::MassTransfer), 1000).unwrap();
        assert_abs_diff_eq!(mt.mass(mt.rho0().view()), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mt.mass(mt.target().unwrap().view()), 1.0, epsilon = 1e-10);
        // the crowd groups keep their absolute size: 0.9 sqrt(pi/100) + 0.65 sqrt(pi/150)
        let crowd = Problem::new(make_preset(PresetName::CrowdExit), 1000).unwrap();
        let exact = 0.9 * (std::f64::consts::PI / 100.0).sqrt()
            + 0.65 * (std::f64::consts::PI / 150.0).sqrt();
        assert_abs_diff_eq!(crowd.mass(crowd.rho0().view()), exact, epsilon = 1e-6);
    }
}
