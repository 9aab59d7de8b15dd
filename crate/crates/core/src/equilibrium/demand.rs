use crate::error::{Error, Result};
use crate::measure::{CumulativeFlow, Horizon};
use crate::network::Network;

/// Departure-rate curve of one origin-destination pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OdDemand {
    pub origin: String,
    pub destination: String,
    pub flow: CumulativeFlow,
}

/// Departure rates per origin-destination pair on the horizon `[0, H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTable {
    horizon: Horizon,
    entries: Vec<OdDemand>,
}

fn check_departures(label: &str, flow: &CumulativeFlow, horizon: Horizon) -> Result<()> {
    for k in flow.knots() {
        if flow.atom_at(k.time) > 0.0 {
            return Err(Error::Validation(format!("{label}: departures must have a density (atom at t={})", k.time)));
        }
    }
    if let Some((a, b)) = flow.support() {
        let tol = 1e-9 * (1.0 + horizon.end());
        if a < -tol || b > horizon.end() + tol {
            return Err(Error::Validation(format!(
                "{label}: departures on [{a}, {b}] leave the horizon [0, {}]",
                horizon.end()
            )));
        }
    }
    Ok(())
}

impl DemandTable {
    pub fn new(horizon: Horizon, entries: Vec<OdDemand>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            let label = format!("demand {} -> {}", e.origin, e.destination);
            check_departures(&label, &e.flow, horizon)?;
            if entries[..i].iter().any(|p| p.origin == e.origin && p.destination == e.destination) {
                return Err(Error::Validation(format!("{label} is listed twice")));
            }
        }
        Ok(Self { horizon, entries })
    }

    /// Piecewise-constant rates: `(origin, destination, [(start, end, rate)])`.
    pub fn from_rates(horizon: Horizon, rows: &[(&str, &str, Vec<(f64, f64, f64)>)]) -> Result<Self> {
        let entries = rows
            .iter()
            .map(|(o, d, segs)| {
                if let Some(s) = segs.iter().find(|s| s.2 < 0.0) {
                    return Err(Error::Validation(format!("negative rate {} in demand {o} -> {d}", s.2)));
                }
                Ok(OdDemand {
                    origin: o.to_string(),
                    destination: d.to_string(),
                    flow: CumulativeFlow::from_rates(segs)
                        .map_err(|e| Error::Validation(format!("demand {o} -> {d}: {e}")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(horizon, entries)
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn entries(&self) -> &[OdDemand] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.flow.total()).sum()
    }

    /// Checks that every pair with positive demand has a route.
    pub fn check_routes(&self, network: &Network) -> Result<()> {
        for e in &self.entries {
            if e.flow.total() > 0.0 && network.routes_between(&e.origin, &e.destination).is_empty() {
                return Err(Error::NoRoute { origin: e.origin.clone(), destination: e.destination.clone() });
            }
        }
        Ok(())
    }
}

/// How the users of a class choose.
#[derive(Debug, Clone, PartialEq)]
pub enum ChoiceMode {
    /// Departure times are given; users only pick a route.
    FixedDeparture { departures: CumulativeFlow },
    /// Users pick a route and a departure time maximising
    /// `-alpha t - beta (h* - arrival)^+ - gamma (arrival - h*)^+`.
    DepartureChoice { preferred_arrival: f64, alpha: f64, beta: f64, gamma: f64 },
}

/// A group of identical users between one origin and destination.
#[derive(Debug, Clone, PartialEq)]
pub struct UserClass {
    pub origin: String,
    pub destination: String,
    pub mass: f64,
    pub mode: ChoiceMode,
}

impl UserClass {
    pub fn departure_choice(
        origin: &str,
        destination: &str,
        mass: f64,
        preferred_arrival: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
    ) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
            mass,
            mode: ChoiceMode::DepartureChoice { preferred_arrival, alpha, beta, gamma },
        }
    }

    pub fn fixed(origin: &str, destination: &str, departures: CumulativeFlow) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
            mass: departures.total(),
            mode: ChoiceMode::FixedDeparture { departures },
        }
    }

    pub fn validate(&self, horizon: Horizon) -> Result<()> {
        let label = format!("class {} -> {}", self.origin, self.destination);
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::Validation(format!("{label}: mass must be positive")));
        }
        match &self.mode {
            ChoiceMode::FixedDeparture { departures } => {
                check_departures(&label, departures, horizon)?;
                if (departures.total() - self.mass).abs() > 1e-9 * self.mass {
                    return Err(Error::Validation(format!(
                        "{label}: mass {} differs from its departures' total {}",
                        self.mass,
                        departures.total()
                    )));
                }
            }
            ChoiceMode::DepartureChoice { preferred_arrival, alpha, beta, gamma } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::Validation(format!("{label}: alpha must be positive")));
                }
                if !(*beta >= 0.0 && *gamma >= 0.0 && beta.is_finite() && gamma.is_finite()) {
                    return Err(Error::Validation(format!("{label}: beta and gamma must be nonnegative")));
                }
                if !preferred_arrival.is_finite() {
                    return Err(Error::Validation(format!("{label}: preferred arrival must be finite")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_atoms_and_negative_rates() {
        let h = Horizon::new(4.0).unwrap();
        let atom = OdDemand { origin: "o".into(), destination: "d".into(), flow: CumulativeFlow::atom(1.0, 1.0) };
        assert!(DemandTable::new(h, vec![atom]).is_err());
        let err = DemandTable::from_rates(h, &[("o", "d", vec![(0.0, 1.0, -1.0)])]).unwrap_err();
        assert!(err.to_string().contains("negative rate"));
        let err = DemandTable::from_rates(h, &[("o", "d", vec![(3.0, 5.0, 1.0)])]).unwrap_err();
        assert!(err.to_string().contains("horizon"));
    }

    #[test]
    fn class_validation() {
        let h = Horizon::new(4.0).unwrap();
        assert!(UserClass::departure_choice("o", "d", 1.0, 2.0, 1.0, 0.5, 2.0).validate(h).is_ok());
        assert!(UserClass::departure_choice("o", "d", 0.0, 2.0, 1.0, 0.5, 2.0).validate(h).is_err());
        assert!(UserClass::departure_choice("o", "d", 1.0, 2.0, 0.0, 0.5, 2.0).validate(h).is_err());
        assert!(UserClass::fixed("o", "d", CumulativeFlow::uniform(0.0, 1.0, 1.0)).validate(h).is_ok());
    }
}
