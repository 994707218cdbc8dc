//! Synthetic panels for tests, examples and `export-fixtures`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::panel::{apply_inclusion_filter, Adoption, Panel, StudyFrame, TreatmentSchedule};

/// A panel, its treatment table and the settings it is meant to be run with.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub panel: Panel,
    pub schedule: TreatmentSchedule,
    pub post_horizon: usize,
    pub min_pre_periods: usize,
    /// Effect added to every treated post-adoption outcome.
    pub effect: f64,
}

impl Fixture {
    pub fn frame(&self) -> Result<StudyFrame> {
        apply_inclusion_filter(
            self.panel.clone(),
            self.schedule.clone(),
            self.post_horizon,
            self.min_pre_periods,
        )
    }
}

/// Right-to-carry adoption years for the 50 states over a 1977–2014 panel.
///
/// Five states adopted before 1977, eight never adopted, Indiana adopted in
/// 1980 and the remaining 36 adopted between 1985 and 2014.
pub fn rtc_schedule() -> TreatmentSchedule {
    const YEARS: &[(&str, i64)] = &[
        ("NH", 1959),
        ("WA", 1961),
        ("CT", 1970),
        ("VT", 1970),
        ("AL", 1975),
        ("IN", 1980),
        ("ME", 1985),
        ("ND", 1985),
        ("SD", 1985),
        ("FL", 1987),
        ("VA", 1988),
        ("GA", 1989),
        ("PA", 1989),
        ("WV", 1989),
        ("ID", 1990),
        ("MS", 1990),
        ("OR", 1990),
        ("MT", 1991),
        ("AK", 1994),
        ("AZ", 1994),
        ("TN", 1994),
        ("WY", 1994),
        ("AR", 1995),
        ("NV", 1995),
        ("NC", 1995),
        ("OK", 1995),
        ("TX", 1995),
        ("UT", 1995),
        ("KY", 1996),
        ("LA", 1996),
        ("SC", 1996),
        ("MI", 2001),
        ("CO", 2003),
        ("MN", 2003),
        ("MO", 2004),
        ("NM", 2004),
        ("OH", 2004),
        ("KS", 2007),
        ("NE", 2007),
        ("IA", 2011),
        ("WI", 2011),
        ("IL", 2014),
    ];
    const NEVER: &[&str] = &["CA", "DE", "HI", "MD", "MA", "NJ", "NY", "RI"];
    YEARS
        .iter()
        .map(|&(s, y)| (s, Adoption::At(y)))
        .chain(NEVER.iter().map(|&s| (s, Adoption::Never)))
        .collect()
}

pub const RTC_FIRST_YEAR: i64 = 1977;
pub const RTC_LAST_YEAR: i64 = 2014;

/// Synthetic crime-rate-like outcomes for the 50 states over 1977–2014 with
/// the right-to-carry schedule: a common hump-shaped trend, unit levels,
/// loadings on a second factor, and noise. All outcomes are positive.
pub fn rtc_like(seed: u64, effect: f64) -> Fixture {
    let schedule = rtc_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 12.0).expect("valid");
    let n_times = (RTC_LAST_YEAR - RTC_FIRST_YEAR + 1) as usize;
    let factor: Vec<f64> = (0..n_times).map(|t| ((t as f64) / 6.0).sin() * 40.0).collect();
    let mut units = Vec::new();
    let mut rows = Vec::new();
    for (unit, adoption) in schedule.iter() {
        let level = rng.random_range(250.0..650.0);
        let loading = rng.random_range(-1.0..1.0);
        let row = (0..n_times)
            .map(|t| {
                let year = RTC_FIRST_YEAR + t as i64;
                let x = t as f64 / (n_times - 1) as f64;
                let common = 180.0 * (std::f64::consts::PI * x).sin() - 60.0 * x;
                let treated = adoption.period().is_some_and(|a| year >= a);
                (level + common + loading * factor[t] + noise.sample(&mut rng) + if treated { effect } else { 0.0 })
                    .max(20.0)
            })
            .collect();
        units.push(unit.to_string());
        rows.push(row);
    }
    Fixture {
        name: "rtc_like",
        panel: Panel::new(units, RTC_FIRST_YEAR, rows).expect("rectangular"),
        schedule,
        post_horizon: 10,
        min_pre_periods: 4,
        effect,
    }
}

/// Six units over twelve periods: three adopters (two at 6, one at 8) and
/// three never-treated units, effect 5.
pub fn toy() -> Fixture {
    let names = ["A", "B", "C", "D", "E", "F"];
    let adoptions = [
        Adoption::At(6),
        Adoption::At(6),
        Adoption::At(8),
        Adoption::Never,
        Adoption::Never,
        Adoption::Never,
    ];
    let effect = 5.0;
    let rows = (0..6)
        .map(|i| {
            (1..=12)
                .map(|t: i64| {
                    let base = 20.0 + 3.0 * i as f64 + 0.5 * t as f64 + ((i as i64 * 3 + t * 5) % 7) as f64 * 0.4;
                    let treated = adoptions[i].period().is_some_and(|a| t >= a);
                    base + if treated { effect } else { 0.0 }
                })
                .collect()
        })
        .collect();
    Fixture {
        name: "toy",
        panel: Panel::new(names.iter().map(|s| s.to_string()).collect(), 1, rows).expect("rectangular"),
        schedule: names.iter().copied().zip(adoptions).collect(),
        post_horizon: 2,
        min_pre_periods: 4,
        effect,
    }
}

/// Settings of [`factor_trends`] and [`null_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n_donors: usize,
    /// Adoption period of every treated unit.
    pub adoptions: Vec<i64>,
    pub n_times: usize,
    pub post_horizon: usize,
    pub noise_sd: f64,
    pub effect: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_donors: 20,
            adoptions: vec![14, 14, 14, 16, 16, 16, 18, 18, 18, 18],
            n_times: 22,
            post_horizon: 3,
            noise_sd: 0.5,
            effect: 0.0,
        }
    }
}

fn simulate(
    seed: u64,
    name: &'static str,
    spec: &SimulationSpec,
    trend: impl Fn(&mut ChaCha8Rng, bool) -> f64,
) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sd).expect("valid sd");
    let common: Vec<f64> = {
        let mut level = 0.0;
        (0..spec.n_times)
            .map(|_| {
                level += rng.random_range(-1.0..1.0);
                level
            })
            .collect()
    };
    let mut units = Vec::new();
    let mut rows = Vec::new();
    let mut schedule = TreatmentSchedule::new();
    let all = spec
        .adoptions
        .iter()
        .map(|&a| Adoption::At(a))
        .chain(std::iter::repeat_n(Adoption::Never, spec.n_donors));
    for (i, adoption) in all.enumerate() {
        let treated = !adoption.is_never();
        let level = rng.random_range(5.0..15.0);
        let slope = trend(&mut rng, treated);
        let row = (1..=spec.n_times as i64)
            .map(|t| {
                let on = adoption.period().is_some_and(|a| t >= a);
                level
                    + slope * t as f64
                    + common[(t - 1) as usize]
                    + noise.sample(&mut rng)
                    + if on { spec.effect } else { 0.0 }
            })
            .collect();
        let unit = format!("{}{i:02}", if treated { "T" } else { "D" });
        schedule.insert(unit.clone(), adoption);
        units.push(unit);
        rows.push(row);
    }
    Fixture {
        name,
        panel: Panel::new(units, 1, rows).expect("rectangular"),
        schedule,
        post_horizon: spec.post_horizon,
        min_pre_periods: 4,
        effect: spec.effect,
    }
}

/// Units with their own linear trends; treated units draw steeper trends
/// than donors on average, so parallel trends fail by construction while
/// the treated trends stay inside the donors' range.
pub fn factor_trends(seed: u64, spec: &SimulationSpec) -> Fixture {
    simulate(seed, "factor_trends", spec, |rng, treated| {
        if treated {
            rng.random_range(0.2..0.6)
        } else {
            rng.random_range(-0.6..0.8)
        }
    })
}

/// Unit levels, a common random-walk shock and independent noise; no trends
/// and (with the default spec) no effect.
pub fn null_panel(seed: u64, spec: &SimulationSpec) -> Fixture {
    simulate(seed, "null", spec, |_, _| 0.0)
}

/// One focal unit whose outcome is exactly `0.3·D0 + 0.7·D1` before adoption
/// and that plus `effect` afterwards, with four further donors.
pub fn exact_convex(seed: u64, effect: f64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_times = 15usize;
    let adoption = 11i64;
    let donors: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..n_times).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    let focal: Vec<f64> = (0..n_times)
        .map(|t| {
            let post = t as i64 + 1 >= adoption;
            0.3 * donors[0][t] + 0.7 * donors[1][t] + if post { effect } else { 0.0 }
        })
        .collect();
    let mut units = vec!["focal".to_string()];
    units.extend((0..6).map(|i| format!("D{i}")));
    let mut rows = vec![focal];
    rows.extend(donors);
    let schedule = units
        .iter()
        .map(|u| {
            let a = if u == "focal" { Adoption::At(adoption) } else { Adoption::Never };
            (u.clone(), a)
        })
        .collect();
    Fixture {
        name: "exact_convex",
        panel: Panel::new(units, 1, rows).expect("rectangular"),
        schedule,
        post_horizon: 4,
        min_pre_periods: 4,
        effect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtc_schedule_has_fifty_states() {
        let s = rtc_schedule();
        assert_eq!(s.len(), 50);
        assert_eq!(s.iter().filter(|(_, a)| a.is_never()).count(), 8);
        assert_eq!(s.get("OH"), Some(Adoption::At(2004)));
    }

    #[test]
    fn rtc_frame_has_36_focal_units() {
        let f = rtc_like(1, 0.0).frame().unwrap();
        assert_eq!(f.treated_units.len(), 36);
        assert!(!f.is_treated("IN"));
        assert!(f.panel.unit_index("NH").is_none());
        assert_eq!(f.panel.n_times(), 38);
    }

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(rtc_like(3, 0.0), rtc_like(3, 0.0));
        assert_eq!(null_panel(3, &SimulationSpec::default()), null_panel(3, &SimulationSpec::default()));
        assert_ne!(null_panel(3, &SimulationSpec::default()), null_panel(4, &SimulationSpec::default()));
    }

    #[test]
    fn toy_frame() {
        let f = toy().frame().unwrap();
        assert_eq!(f.treated_units, ["A", "B", "C"]);
    }
}
